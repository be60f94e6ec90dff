"""Command-line front end.

Exit codes: 0 success (a diagnosed hypothesis failure counts as success),
1 a report row ended in an error status, 2 usage or validation error,
3 an output path could not be written.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import VadbError
from .families import FAMILIES, FamilySpec
from .vadb import CSV_COLUMNS, CSV_HELP, RunConfig

EXIT_OK, EXIT_ROW_ERROR, EXIT_USAGE, EXIT_WRITE = 0, 1, 2, 3

PLOT_METRICS = ("vol", "area", "diam_lo", "diam_hi", "C_j", "sup_excess", "frac_excess",
                "delta_hat", "V_j_hat", "h_j", "flat_bound")


class CliUsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# experiment config


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a ``run`` needs; round-trips through flat key=value files."""

    family: FamilySpec
    j_list: tuple
    run: RunConfig = field(default_factory=RunConfig)
    out: str = "vadb_report"
    fmt: str = "both"  # csv | json | both
    plots: bool = True

    def to_flat(self) -> dict:
        d = {"family": self.family.family, "n": self.family.n, "alpha": self.family.alpha,
             "h0": self.family.h0, "manifold": self.family.manifold,
             "j": ",".join(str(j) for j in self.j_list),
             "out": self.out, "format": self.fmt, "plots": self.plots}
        for f in fields(RunConfig):
            v = getattr(self.run, f.name)
            d[f.name] = ",".join(f"{t:g}" for t in v) if f.name == "t_ladder" else v
        return d

    def dumps(self, as_json: bool = False) -> str:
        flat = self.to_flat()
        if as_json:
            return json.dumps(flat, indent=2, sort_keys=True) + "\n"
        return "".join(f"{k}={'' if v is None else v}\n" for k, v in flat.items())


_RUN_TYPES = {f.name: f for f in fields(RunConfig)}


def _coerce(key: str, value):
    """Parse a flat config value for ``key``; raises CliUsageError naming it."""
    if value is None or value == "":
        return None
    try:
        if key in ("n", "seed", "level", "landmarks", "pairs", "sources", "comparison_samples"):
            return int(value)
        if key in ("h", "kappa", "epsilon", "delta", "volume_tol", "below_tol", "alpha", "h0",
                   "diameter_bound", "area_bound"):
            return float(value)
        if key in ("closure", "plots"):
            if isinstance(value, bool):
                return value
            s = str(value).strip().lower()
            if s not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return s in ("true", "1", "yes")
        if key == "t_ladder":
            return tuple(_float_list(value))
        if key == "j":
            return tuple(_int_list(value))
        return str(value)
    except (TypeError, ValueError) as exc:
        raise CliUsageError(f"config key {key!r}: cannot parse {value!r}") from exc


def _int_list(v):
    if isinstance(v, (list, tuple)):
        return [int(x) for x in v]
    return [int(x) for x in str(v).split(",") if x.strip()]


def _float_list(v):
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    return [float(x) for x in str(v).split(",") if x.strip()]


KNOWN_KEYS = {"family", "n", "alpha", "h0", "manifold", "j", "out", "format", "plots",
              *_RUN_TYPES}


def read_config_file(path) -> dict:
    """Flat ``key=value`` lines (``#`` comments) or a JSON object."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        raw = json.loads(text)
    else:
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliUsageError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            raw[k.strip()] = v.strip()
    unknown = set(raw) - KNOWN_KEYS
    if unknown:
        raise CliUsageError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    return {k: _coerce(k, v) for k, v in raw.items()}


def build_config(values: dict) -> ExperimentConfig:
    """Validate merged values; errors name the key and its constraint."""
    if values.get("family") is None:
        raise CliUsageError("missing required key 'family'")
    if values["family"] not in FAMILIES:
        raise CliUsageError(f"family={values['family']!r}: choose from {', '.join(FAMILIES)}")
    if not values.get("j"):
        raise CliUsageError("missing required key 'j' (comma-separated list)")
    j_list = tuple(values["j"])
    if any(b <= a for a, b in zip(j_list, j_list[1:])):
        raise CliUsageError(f"j={','.join(map(str, j_list))}: must be strictly increasing")
    fam_kw = {k: values[k] for k in ("n", "alpha", "h0", "manifold") if values.get(k) is not None}
    try:
        family = FamilySpec(values["family"], j=j_list[0], **fam_kw)
        run_kw = {k: values[k] for k in _RUN_TYPES if values.get(k) is not None}
        run = RunConfig(**run_kw)
    except VadbError as exc:
        raise CliUsageError(str(exc)) from exc
    fmt = values.get("format") or "both"
    if fmt not in ("csv", "json", "both"):
        raise CliUsageError(f"format={fmt!r}: choose csv, json or both")
    plots = values.get("plots")
    return ExperimentConfig(family, j_list, run, values.get("out") or "vadb_report", fmt,
                            True if plots is None else plots)


def load_config(path) -> ExperimentConfig:
    return build_config(read_config_file(path))


# ---------------------------------------------------------------------------
# argument parsing


def _family_args(p: argparse.ArgumentParser, j_required_help="sequence index list, e.g. 4,16,64"):
    g = p.add_argument_group("family")
    g.add_argument("--family", choices=FAMILIES, default=None)
    g.add_argument("--n", type=int, default=None, help="dimension (default 2)")
    g.add_argument("--alpha", type=float, default=None, help="disk blow-up exponent, 0 < alpha < 1/n")
    g.add_argument("--h0", type=float, default=None, help="cinched sphere depth, 0 < h0 < 1")
    g.add_argument("--manifold", default=None, help="base for the constant family")
    g.add_argument("--j", default=None, help=j_required_help)


def _run_args(p: argparse.ArgumentParser):
    g = p.add_argument_group("numerics")
    g.add_argument("--h", type=float, default=None, help="mesh spacing (default 0.02)")
    g.add_argument("--kappa", type=float, default=None, help="stencil multiplier (default 4)")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--level", type=int, default=None, help="quadrature level (default 6)")
    g.add_argument("--landmarks", type=int, default=None)
    g.add_argument("--pairs", type=int, default=None, help="sampled vertex pairs")
    g.add_argument("--sources", type=int, default=None, help="shortest-path sources")
    g.add_argument("--epsilon", type=float, default=None, help="excess threshold (default 0.05)")
    g.add_argument("--t-ladder", dest="t_ladder", default=None, help="collar widths, e.g. 0.05,0.1,0.2")
    g.add_argument("--delta", type=float, default=None, help="good-set threshold")
    g.add_argument("--diameter-bound", dest="diameter_bound", type=float, default=None)
    g.add_argument("--area-bound", dest="area_bound", type=float, default=None)
    g.add_argument("--volume-tol", dest="volume_tol", type=float, default=None)
    g.add_argument("--below-tol", dest="below_tol", type=float, default=None)
    g.add_argument("--comparison-samples", dest="comparison_samples", type=int, default=None)
    g.add_argument("--closure", default=None, help="glue the one-ring of W_j (true/false)")
    p.add_argument("--config", default=None, help="key=value or JSON config file")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vadblab",
        description="Conformal metric sequences: hypotheses, distances and flat-distance bounds.",
        epilog="exit codes: 0 ok, 1 row error, 2 usage, 3 unwritable output; "
               "VADB_THREADS sets the shortest-path worker count",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    cols = "\n".join(f"  {c:12s} {CSV_HELP[c]}" for c in CSV_COLUMNS)
    p = sub.add_parser("run", help="run a family over a j-list and write reports",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       epilog="CSV columns:\n" + cols)
    _family_args(p)
    _run_args(p)
    p.add_argument("--out", default=None, help="output prefix (writes PREFIX.csv, PREFIX.json)")
    p.add_argument("--format", default=None, choices=("csv", "json", "both"))
    p.add_argument("--plots", default=None, help="write PREFIX_plots/*.dat (true/false)")
    p.add_argument("--save-config", dest="save_config", default=None,
                   help="write the resolved config to this path and continue")

    p = sub.add_parser("check-hypotheses", help="print the four hypothesis lines for each j")
    _family_args(p)
    _run_args(p)

    p = sub.add_parser("flat-bound", help="evaluate 2 V_j + h_j V + h_j A")
    for name in ("D", "V", "A", "Vj", "delta"):
        p.add_argument(f"--{name}", type=float, required=True)

    p = sub.add_parser("convexify-demo", help="boundary curvature before and after convexifying")
    p.add_argument("--manifold", default="annulus", choices=("annulus", "disk"))
    p.add_argument("--r-in", dest="r_in", type=float, default=1.0)
    p.add_argument("--r-out", dest="r_out", type=float, default=2.0)
    p.add_argument("--t1", type=float, default=0.2)
    p.add_argument("--paths", type=int, default=0, help="also test N sampled shortest paths")
    p.add_argument("--h", type=float, default=0.04)
    p.add_argument("--kappa", type=float, default=4.0)

    p = sub.add_parser("zspace-probe", help="build the glued space and probe distances")
    _family_args(p)
    _run_args(p)
    p.add_argument("--export", default=None, help="write the Z graph (.json or .npz)")

    p = sub.add_parser("mesh-export", help="build a mesh and write it")
    p.add_argument("--manifold", default="disk", choices=("disk", "annulus", "sphere", "torus"))
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--h", type=float, default=0.1)
    p.add_argument("--kappa", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help=".json or .npz path")
    p.add_argument("--family", choices=FAMILIES, default=None,
                   help="add a factor column for this family")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--h0", type=float, default=None)
    p.add_argument("--j", type=int, default=None)
    return parser


def merged_values(args: argparse.Namespace) -> dict:
    """Config file values overridden by explicitly given flags."""
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for key in KNOWN_KEYS:
        flag = {"format": "format"}.get(key, key)
        v = getattr(args, flag, None)
        if v is not None:
            values[key] = _coerce(key, v)
    return values


def parse_and_validate(argv) -> tuple[str, ExperimentConfig | None, argparse.Namespace]:
    """``(command, config, args)``; config is None for the formula and export commands."""
    parser = make_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)
    if args.command in ("run", "check-hypotheses", "zspace-probe"):
        return args.command, build_config(merged_values(args)), args
    return args.command, None, args


# ---------------------------------------------------------------------------
# commands


def _writable(path: Path) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "a"):
            pass
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_plot_data(report, prefix: str) -> list[Path]:
    """Two-column ``j value`` files, one per report metric."""
    d = Path(f"{prefix}_plots")
    d.mkdir(parents=True, exist_ok=True)
    out = []
    for metric in PLOT_METRICS:
        lines = [f"# j {metric}"]
        for row in report.rows:
            v = row.csv_values()[metric]
            lines.append(f"{row.j} {float(v):.10g}")
        p = d / f"{metric}.dat"
        p.write_text("\n".join(lines) + "\n")
        out.append(p)
    return out


def cmd_run(cfg: ExperimentConfig, save_config: str | None = None) -> int:
    from .vadb import run_experiment

    prefix = cfg.out
    targets = []
    if cfg.fmt in ("csv", "both"):
        targets.append(Path(prefix + ".csv"))
    if cfg.fmt in ("json", "both"):
        targets.append(Path(prefix + ".json"))
    try:
        for t in targets:
            _writable(t)
        if save_config:
            Path(save_config).write_text(cfg.dumps(save_config.endswith(".json")))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_WRITE

    def progress(row):
        v = row.csv_values()
        print(f"j={row.j:<5d} vol={v['vol']:.6g} area={v['area']:.6g} diam<={v['diam_hi']:.4g} "
              f"C_j={v['C_j']:.4g} frac={v['frac_excess']:.4g} bound={v['flat_bound']:.6g} "
              f"status={row.status} ({row.seconds:.1f}s)", flush=True)

    report = run_experiment(cfg.family, cfg.j_list, cfg.run, progress=progress)
    try:
        for t in targets:
            t.write_text(report.to_csv() if t.suffix == ".csv" else report.to_json() + "\n")
        if cfg.plots:
            write_plot_data(report, prefix)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_WRITE
    tr = report.trend
    print(f"trend: flat bound decreasing={tr['flat_bound_decreasing']}, "
          f"volume gap decreasing={tr['volume_gap_decreasing']}, "
          f"below constant shrinking={tr['below_shrinking']}")
    return EXIT_ROW_ERROR if any(r.is_error for r in report.rows) else EXIT_OK


def cmd_check(cfg: ExperimentConfig) -> int:
    from .vadb import hypothesis_report

    for j in cfg.j_list:
        fam = cfg.family.with_j(j)
        verdict = hypothesis_report(fam, cfg.run)
        print(f"{fam.family} n={fam.n} {fam.params_label()} j={j}")
        for line in verdict.lines():
            print("  " + line)
        fails = verdict.failures()
        print("  verdict: " + ("all hypotheses hold" if not fails
                               else "failing: " + ", ".join(fails)))
    return EXIT_OK


def cmd_flat_bound(args) -> int:
    from .vadb import flat_bound

    b = flat_bound(args.D, args.V, args.A, args.Vj, args.delta)
    print(f"h_j = {b.h_j:.12g}")
    print(f"2 V_j = {b.volume_term:.12g}  h_j V = {b.V_term:.12g}  h_j A = {b.A_term:.12g}")
    print(f"bound = {b.value:.12g}")
    return EXIT_OK


def cmd_convexify(args) -> int:
    from . import collar
    from .metric_core import ConformalMetric, ModelManifold

    base = (ModelManifold.annulus(args.r_in, args.r_out) if args.manifold == "annulus"
            else ModelManifold.disk(2))
    chart = collar.build_collar(base)
    cv = collar.build_convexifier(chart, args.t1)
    g0 = ConformalMetric.flat(base)
    before = collar.sff_min_eigen(g0, chart)
    after = collar.sff_min_eigen(cv.apply(g0), chart)
    print(f"collar width t0 = {chart.t0:g}, t1 = {args.t1:g}, measured |A| = {cv.tau.a_norm:.6g}")
    print(f"tau(0) = {float(cv.tau.value(0.0)):.6g}, tau'(0) = {float(cv.tau.derivative(0.0)):.6g}")
    print(f"sff_min_eigen before = {before.value:.6f} (step {before.step:g})")
    print(f"sff_min_eigen after  = {after.value:.6f}")
    if args.paths > 0:
        from .meshgeo import build_mesh
        res = path_clearance(build_mesh(base, args.h, args.kappa), cv, args.paths)
        print(f"paths: {res['paths']} sampled, min vertex boundary distance = "
              f"{res['min_depth']:.4f} (threshold t1/2 = {args.t1 / 2:g})")
    return EXIT_OK


def path_clearance(mesh, convexifier, count: int, seed: int = 0) -> dict:
    """Smallest boundary distance of any vertex on sampled shortest paths
    between vertices outside ``M_{t1}`` under the convexified metric."""
    from scipy.sparse import csgraph

    g = convexifier.apply(_flat(mesh.manifold))
    depth = mesh.boundary_distance()
    pool = np.flatnonzero(depth >= convexifier.t1)
    rng = np.random.default_rng(seed)
    src = rng.choice(pool, size=count)
    dst = rng.choice(pool, size=count)
    G = mesh.adjacency(g)
    worst = math.inf
    uniq, inv = np.unique(src, return_inverse=True)
    _, pred = csgraph.dijkstra(G, directed=False, indices=uniq, return_predecessors=True)
    for k in range(count):
        row, v = pred[inv[k]], dst[k]
        while v >= 0:
            worst = min(worst, float(depth[v]))
            v = row[v]
    return {"paths": count, "min_depth": worst}


def _flat(base):
    from .metric_core import ConformalMetric
    return ConformalMetric.flat(base)


def cmd_zspace(cfg: ExperimentConfig, export: str | None) -> int:
    from .meshgeo import build_mesh, diameter_estimate
    from .vadb import flat_bound, select_good_set
    from .zspace import build_zspace, save_zspace, z_distances_from

    fam = cfg.family.with_j(cfg.j_list[0])
    rc = cfg.run
    mesh = build_mesh(fam.base(), rc.h, rc.kappa, rc.seed)
    g0, gj = fam.g0(), fam.metric()
    gs = select_good_set(mesh, gj, g0, rc.delta, rc.sources, rc.seed, rc.level)
    D = rc.diameter_bound or diameter_estimate(mesh, gj, rc.landmarks, rc.seed).upper
    hj = flat_bound(D, 0.0, 0.0, 0.0, gs.delta_hat).h_j
    z = build_zspace(mesh, g0, gj, gs.mask, hj, closure=rc.closure)
    x = np.flatnonzero(gs.mask)
    rng = np.random.default_rng(rc.seed)
    probe = rng.choice(x, size=min(len(x), 16), replace=False) if len(x) else x
    vert = 0.0
    if len(probe):
        Dz = z_distances_from(z, z.phi0(probe))
        vert = float(np.max(Dz[np.arange(len(probe)), z.phij(probe)]))
    print(f"mesh: {mesh.n_vertices} vertices; good set {gs.size} vertices ({gs.descriptor})")
    print(f"delta_hat = {gs.delta_hat:.6g}, h_j = {hj:.6g}, neck levels = {z.levels}, "
          f"Z nodes = {z.n_nodes}, status = {z.status}")
    print(f"max d_Z(phi_0(x), phi_j(x)) over {len(probe)} probes = {vert:.6g} (<= h_j: "
          f"{vert <= hj + 1e-9})")
    if export:
        try:
            save_zspace(z, export)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_WRITE
        print(f"wrote {export}")
    return EXIT_OK


def cmd_mesh_export(args) -> int:
    from .meshgeo import build_mesh, save_mesh
    from .metric_core import ModelManifold

    makers = {"disk": ModelManifold.disk, "sphere": ModelManifold.sphere,
              "torus": ModelManifold.torus}
    base = (ModelManifold.annulus(n=args.n) if args.manifold == "annulus"
            else makers[args.manifold](args.n))
    mesh = build_mesh(base, args.h, args.kappa, args.seed)
    cols = None
    if args.family:
        fam = FamilySpec(args.family, args.n, args.j or 16, args.alpha, args.h0, args.manifold)
        if fam.base() != base:
            raise CliUsageError(f"family {args.family} does not live on the {args.manifold}")
        cols = {"factor": fam.metric().factor(mesh.vertices)}
    try:
        save_mesh(mesh, args.out, cols)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_WRITE
    print(f"wrote {args.out}: {mesh.n_vertices} vertices, {mesh.n_edges} edges")
    return EXIT_OK


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        command, cfg, args = parse_and_validate(argv)
        if command == "run":
            return cmd_run(cfg, args.save_config)
        if command == "check-hypotheses":
            return cmd_check(cfg)
        if command == "zspace-probe":
            return cmd_zspace(cfg, args.export)
        if command == "flat-bound":
            return cmd_flat_bound(args)
        if command == "convexify-demo":
            return cmd_convexify(args)
        return cmd_mesh_export(args)
    except CliUsageError as exc:
        print(f"vadblab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VadbError as exc:
        print(f"vadblab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"vadblab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
