import json
import subprocess
import sys

import pytest

from vadblab.cli import load_config, main, parse_and_validate
from vadblab.vadb import CSV_COLUMNS

FAST = ["--h", "0.08", "--kappa", "3", "--landmarks", "4", "--pairs", "200", "--sources", "4",
        "--comparison-samples", "500"]


def test_parse_fills_defaults():
    cmd, cfg, _ = parse_and_validate(["run", "--family", "disk_blowup", "--n", "2",
                                      "--alpha", "0.25", "--j", "4,16,64"])
    assert cmd == "run"
    assert tuple(cfg.j_list) == (4, 16, 64)
    assert cfg.family.alpha == 0.25
    assert cfg.run.h == 0.02 and cfg.run.kappa == 4.0 and cfg.run.seed == 0


def test_alpha_constraint_exit_2(capsys):
    code = main(["run", "--family", "disk_blowup", "--n", "2", "--alpha", "0.6", "--j", "4"])
    assert code == 2
    assert "0 < alpha < 1/n" in capsys.readouterr().err


def test_empty_args_exit_2(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_flag_exit_2():
    assert main(["run", "--bogus", "1"]) == 2


def test_run_help_lists_columns():
    out = subprocess.run([sys.executable, "-m", "vadblab.cli", "run", "--help"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    for col in CSV_COLUMNS:
        assert col in out.stdout


def test_flat_bound_command(capsys):
    assert main(["flat-bound", "--D", "2", "--V", "3.141592653589793", "--A",
                 "6.283185307179586", "--Vj", "0.01", "--delta", "0.005"]) == 0
    assert "bound = 1.3536976" in capsys.readouterr().out


def test_flat_bound_negative(capsys):
    assert main(["flat-bound", "--D", "-2", "--V", "1", "--A", "1", "--Vj", "0",
                 "--delta", "0"]) == 2


def test_run_writes_reports(tmp_path):
    prefix = str(tmp_path / "disk")
    code = main(["run", "--family", "disk_blowup", "--alpha", "0.25", "--j", "4,16,64,256",
                 "--out", prefix, "--format", "both", "--plots", "true", *FAST])
    assert code == 0
    lines = (tmp_path / "disk.csv").read_text().splitlines()
    assert len(lines) == 5
    col = lines[0].split(",").index("flat_bound")
    bounds = [float(line.split(",")[col]) for line in lines[1:]]
    assert all(b < a for a, b in zip(bounds, bounds[1:]))
    doc = json.loads((tmp_path / "disk.json").read_text())
    assert len(doc["rows"]) == 4
    assert any((tmp_path / "disk_plots").iterdir())


def test_config_roundtrip_is_byte_identical(tmp_path):
    cfg_path = tmp_path / "saved.cfg"
    a, b = str(tmp_path / "a"), str(tmp_path / "b")
    args = ["run", "--family", "torus_bubble", "--j", "8,16", *FAST]
    assert main([*args, "--out", a, "--save-config", str(cfg_path)]) == 0
    assert tuple(load_config(cfg_path).j_list) == (8, 16)
    assert main(["run", "--config", str(cfg_path), "--out", b]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_config_rejects_unknown_key(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("family=constant\nj=4\nwat=1\n")
    assert main(["run", "--config", str(p)]) == 2


def test_unwritable_output_exit_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code = main(["run", "--family", "constant", "--j", "4", "--out",
                 str(blocker / "sub" / "r"), *FAST])
    assert code == 3


def test_check_hypotheses_cinch(capsys):
    assert main(["check-hypotheses", "--family", "cinched_sphere", "--h0", "0.1", "--j", "64",
                 "--h", "0.1", "--kappa", "3", "--landmarks", "4"]) == 0
    out = capsys.readouterr().out
    below = [ln for ln in out.splitlines() if "[4 below]" in ln]
    assert below and "FAIL" in below[0] and "0.99" in below[0]


def test_convexify_demo(capsys):
    assert main(["convexify-demo", "--manifold", "annulus"]) == 0
    out = capsys.readouterr().out
    assert "before" in out and "after" in out


def test_zspace_probe_export(tmp_path, capsys):
    path = tmp_path / "z.npz"
    assert main(["zspace-probe", "--family", "disk_blowup", "--alpha", "0.25", "--j", "16",
                 "--h", "0.15", "--kappa", "3", "--sources", "6", "--export", str(path)]) == 0
    assert path.exists()
    assert "<= h_j: True" in capsys.readouterr().out


@pytest.mark.parametrize("suffix", [".json", ".npz"])
def test_mesh_export(tmp_path, suffix):
    path = tmp_path / f"m{suffix}"
    assert main(["mesh-export", "--manifold", "disk", "--h", "0.2", "--out", str(path),
                 "--family", "disk_blowup", "--alpha", "0.25", "--j", "8"]) == 0
    assert path.stat().st_size > 0


def test_mesh_export_family_mismatch(tmp_path):
    assert main(["mesh-export", "--manifold", "disk", "--out", str(tmp_path / "m.json"),
                 "--family", "torus_bubble", "--j", "8"]) == 2
