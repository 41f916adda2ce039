"""Command-line entry point ``evoctl``.

Exit codes: 0 when every check passes, 1 when a check fails, 2 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .boundary_data import BDConsistencyError, bd_spaces
from .control_system import wellposedness_report
from .discrete_ops import (
    BOUNDARY_WEIGHT,
    build_grid_ops_2d,
    build_interval_ops,
    build_sym_elasticity_ops,
    load_bundle,
    save_bundle,
    verify_duality,
)
from .evo_solver import EvolutionarySystem, IllPosedSystemError, residual, solve_frequency
from .material_law import PreconditionError, law_from_config, parse_matrix, positivity_report
from .viscoelastic import ConfigurationError, assemble_visco_system, config_from_dict, run_demo, smooth_pulse
from .weighted_time import TimeGrid, TimeSignal, read_signal_csv, write_signal_csv

SCHEMA_VERSION = "1"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

_TOP_KEYS = {"schema_version", "grid", "system", "checks", "output"}
_GRID_KEYS = {"n", "dt", "t0", "nu"}
_SYSTEM_KEYS = {"law", "A", "quartet"}
_QUARTET_KEYS = {"kind", "n_cells", "nx", "ny", "dim", "sizes", "h", "boundary_weight", "bundle"}
_OUTPUT_KEYS = {"dir", "formats"}
CHECKS = ("positivity", "wellposedness", "duality", "bd")


class ConfigError(ValueError):
    """The run configuration does not match the schema."""


def _reject_unknown(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")


def validate_run_config(cfg: dict) -> dict:
    """Check the schema before any computation; returns the config unchanged."""
    _reject_unknown(cfg, _TOP_KEYS, "config")
    if str(cfg.get("schema_version", "")) != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION!r}")
    if "grid" in cfg:
        _reject_unknown(cfg["grid"], _GRID_KEYS, "grid")
    system = cfg.get("system")
    if system is None:
        raise ConfigError("config: 'system' is required")
    _reject_unknown(system, _SYSTEM_KEYS, "system")
    if "quartet" in system:
        _reject_unknown(system["quartet"], _QUARTET_KEYS, "system.quartet")
    checks = cfg.get("checks", [])
    if not isinstance(checks, list) or any(c not in CHECKS for c in checks):
        raise ConfigError(f"checks must be a list drawn from {list(CHECKS)}")
    if "output" in cfg:
        _reject_unknown(cfg["output"], _OUTPUT_KEYS, "output")
    return cfg


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON ({exc})") from exc
    return validate_run_config(cfg)


def _grid(cfg: dict, nu_override: float | None) -> TimeGrid:
    g = cfg.get("grid", {})
    n, dt = int(g.get("n", 2048)), float(g.get("dt", 1.0 / 256))
    nu = float(nu_override if nu_override is not None else g.get("nu", 1.0))
    if "t0" in g:
        return TimeGrid(float(g["t0"]), dt, n, nu)
    return TimeGrid.centered(n, dt, nu)


def _law(cfg: dict):
    law_cfg = cfg["system"].get("law")
    if law_cfg is None:
        raise ConfigError("system.law is required")
    return law_from_config(law_cfg)


def _quartet(cfg: dict):
    qc = cfg["system"].get("quartet")
    law_cfg = cfg["system"].get("law", {})
    if qc is None:
        if law_cfg.get("family") == "viscoelastic":
            return config_from_dict(law_cfg).quartet()
        return None
    if "bundle" in qc:
        return load_bundle(qc["bundle"])
    kind = qc.get("kind", "interval")
    bw = float(qc.get("boundary_weight", BOUNDARY_WEIGHT))
    if kind == "interval":
        n = int(qc.get("n_cells", 16))
        return build_interval_ops(n, float(qc.get("h", 1.0 / n)), bw)
    if kind == "grid2d":
        nx, ny = int(qc.get("nx", 8)), int(qc.get("ny", 8))
        return build_grid_ops_2d(nx, ny, float(qc.get("h", 1.0 / nx)), bw)
    if kind == "sym":
        dim = int(qc.get("dim", 1))
        sizes = qc.get("sizes", 8)
        first = sizes if isinstance(sizes, int) else sizes[0]
        return build_sym_elasticity_ops(dim, sizes, float(qc.get("h", 1.0 / first)), bw)
    raise ConfigError(f"unknown quartet kind {kind!r}")


def _dump(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


# ---------------------------------------------------------------------------
# subcommands


def cmd_check(args) -> int:
    cfg = load_config(args.config)
    grid = _grid(cfg, args.nu)
    law = _law(cfg)
    checks = cfg.get("checks") or ["positivity", "wellposedness"]
    report = {"seed": args.seed, "samples": args.samples, "nu": grid.nu, "checks": {}}
    ok = True
    for name in checks:
        if name == "positivity":
            rep = positivity_report(law, grid.nu, args.samples)
            rep["pass"] = rep["margin"] > 0
        elif name == "wellposedness":
            rep = wellposedness_report(law, grid.nu, args.samples)
            gap = rep["theorem_gap"]
            rep["pass"] = bool(rep["certified"]) and gap is not None and gap >= -1e-8
            rep["margin"] = rep["predicted_margin"]
        elif name == "duality":
            q = _quartet(cfg)
            if q is None:
                raise ConfigError("check 'duality' needs system.quartet")
            rep = verify_duality(q, seed=args.seed)
            rep["pass"] = rep["ok"]
        else:
            q = _quartet(cfg)
            if q is None:
                raise ConfigError("check 'bd' needs system.quartet")
            try:
                rep = dict(bd_spaces(q).report)
                rep["pass"] = max(rep["angle_BD_G"], rep["angle_BD_D"]) <= 1e-9 and \
                    rep["trace_isometry_defect"] <= 1e-8 and rep["dtn_unitarity"] <= 1e-9
            except BDConsistencyError as exc:
                rep = {"pass": False, "error": str(exc)}
        report["checks"][name] = rep
        ok &= bool(rep["pass"])
        print(f"{name}: {'pass' if rep['pass'] else 'FAIL'}")
    report["pass"] = ok
    out = Path(args.out) if args.out else Path(cfg.get("output", {}).get("dir", ".")) / "report.json"
    _dump(out, report)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    law = _law(cfg)
    A = cfg["system"].get("A")
    A = parse_matrix(A) if A is not None else np.zeros((law.dim, law.dim))
    nu = args.nu if args.nu is not None else float(cfg.get("grid", {}).get("nu", 1.0))
    path = Path(args.input)
    if not path.is_file():
        raise ConfigError(f"input file {path} not found")
    f = read_signal_csv(path, nu)
    sys_ = EvolutionarySystem(law, A, nu)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        u = solve_frequency(sys_, f)
    out = Path(args.out or cfg.get("output", {}).get("dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    write_signal_csv(out / "u.csv", u)
    rep = {"residual": residual(sys_, u, f), "nu": nu, "n": f.grid.n, "dt": f.grid.dt,
           "margin": positivity_report(law, nu, args.samples)["margin"]}
    _dump(out / "report.json", rep)
    print(f"solved {f.grid.n} samples, residual {rep['residual']:.2e}")
    return EXIT_OK


def cmd_bdspace(args) -> int:
    path = Path(args.ops)
    if not path.is_file():
        raise ConfigError(f"operator bundle {path} not found")
    q = load_bundle(path)
    duality = verify_duality(q, seed=args.seed)
    try:
        S = bd_spaces(q)
        rep = dict(S.report)
        passed = duality["ok"]
    except BDConsistencyError as exc:
        rep, passed = {"error": str(exc)}, False
    rep["duality"] = duality
    rep["pass"] = passed
    _dump(Path(args.report), rep)
    print(f"bdspace: {'pass' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_FAIL


def cmd_ops(args) -> int:
    bw = args.boundary_weight
    if args.kind == "interval":
        q = build_interval_ops(args.n, args.h or 1.0 / args.n, bw)
    elif args.kind == "grid2d":
        q = build_grid_ops_2d(args.n, args.n, args.h or 1.0 / args.n, bw)
    else:
        q = build_sym_elasticity_ops(args.dim, args.n, args.h or 1.0 / args.n, bw)
    save_bundle(q, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_demo_visco(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        law_cfg = cfg["system"].get("law", {})
        if law_cfg.get("family") != "viscoelastic":
            raise ConfigError("demo visco needs system.law.family = 'viscoelastic'")
        vcfg = config_from_dict(law_cfg)
    else:
        cfg, vcfg = {"grid": {"n": 2048, "dt": 1.0 / 256}}, config_from_dict({})
    if args.nu is not None:
        vcfg = config_from_dict({**vcfg.as_dict(), "nu": args.nu})
    system = assemble_visco_system(vcfg, seed=args.seed)
    nU = system.spec.dim_U
    if args.control:
        path = Path(args.control)
        if not path.is_file():
            raise ConfigError(f"control file {path} not found")
        u = read_signal_csv(path, vcfg.nu)
    else:
        grid = _grid(cfg, vcfg.nu)
        u = smooth_pulse(grid, nU, amplitude=[1.0] + [0.5] * (nU - 1))
    result = run_demo(vcfg, u, system=system)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("u", "v", "T", "w", "y"):
        write_signal_csv(out / f"{name}.csv", result["fields"][name])
    rep = result["report"]
    rep["seed"] = args.seed
    rep["config"] = vcfg.as_dict()
    _dump(out / "report.json", rep)
    ok = bool(rep["consistency"]["all"])
    for k, v in rep["consistency"].items():
        print(f"{k}: {'pass' if v else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evoctl", description="Evolutionary equations with boundary control.")
    p.add_argument("--version", action="version", version=f"evoctl {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="seed for randomized suites (default 0)")
    common.add_argument("--samples", type=int, default=200, help="contour samples for positivity checks")
    common.add_argument("--nu", type=float, default=None, help="override the exponential weight")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", parents=[common], help="run check suites from a config")
    c.add_argument("--config", required=True)
    c.add_argument("--out", help="report path (default <output.dir>/report.json)")
    c.set_defaults(func=cmd_check)

    s = sub.add_parser("solve", parents=[common], help="solve for u given f.csv")
    s.add_argument("--config", required=True)
    s.add_argument("--input", required=True, help="forcing CSV (t,re_0,im_0,...)")
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bdspace", parents=[common], help="boundary data report for an operator bundle")
    b.add_argument("--ops", required=True, help="quartet bundle (.json with .bin payload)")
    b.add_argument("--report", required=True)
    b.set_defaults(func=cmd_bdspace)

    o = sub.add_parser("ops", help="build and export an operator quartet bundle")
    o.add_argument("--kind", choices=("interval", "grid2d", "sym"), default="interval")
    o.add_argument("--n", type=int, default=16)
    o.add_argument("--dim", type=int, default=1)
    o.add_argument("--h", type=float, default=None)
    o.add_argument("--boundary-weight", type=float, default=BOUNDARY_WEIGHT)
    o.add_argument("--out", required=True)
    o.set_defaults(func=cmd_ops)

    d = sub.add_parser("demo", help="demonstrations")
    dsub = d.add_subparsers(dest="demo", required=True)
    v = dsub.add_parser("visco", parents=[common], help="boundary-controlled visco-elastic rod")
    v.add_argument("--config")
    v.add_argument("--control", help="control CSV with one column pair per U coordinate")
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_demo_visco)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ConfigurationError, PreconditionError, KeyError, ValueError, OSError) as exc:
        print(f"evoctl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IllPosedSystemError as exc:
        print(f"evoctl: ill-posed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
