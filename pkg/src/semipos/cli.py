"""Command-line front door.

Verbs: ``certify`` (quasi-positivity report), ``simulate`` (windowed
solve), ``convergence`` (refinement ladder against the reduction
benchmarks) and ``plot`` (CSV to static SVG).  TOML in, JSON reports and
CSV trajectories out.

Exit codes: 0 success, 1 usage/parse errors, 2 uncertifiable
nonlinearity, 3 blow-up flagged (outputs still written), 4 solver errors
(structured error JSON written).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import benchmarks as bench
from .certify import quasi_positivity_report
from .errors import (
    CertificationError,
    DomainError,
    ParameterError,
    SemiposError,
)
from .lattice import norm
from .models import (
    EpidemicParams,
    OncologyParams,
    PredatorPreyParams,
    build_epidemic,
    build_oncology,
    build_predator_prey,
    epidemic_initial,
    negative_source_problem,
    oncology_initial,
    predator_initial,
    scalar_blowup_problem,
)
from .plots import render_svg
from .solver import SolverConfig, solve

__all__ = ["main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _load_toml(path: Path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise _UsageError(f"config not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise _UsageError(f"invalid TOML in {path}: {exc}") from None


def _rate(value, base_dir: Path):
    """Rate spec from TOML: number, inline array, or CSV path (one value per cell)."""
    if value is None or isinstance(value, (int, float)):
        return value
    if isinstance(value, str):
        path = base_dir / value
        if not path.exists():
            raise _UsageError(f"rate table not found: {path}")
        return np.loadtxt(path, ndmin=1)
    if isinstance(value, list):
        return [float(x) for x in value]
    raise _UsageError(f"cannot interpret rate spec {value!r}")


def _control(value, base_dir: Path):
    if value is None or isinstance(value, (int, float)):
        return value
    if isinstance(value, str):
        path = base_dir / value
        if not path.exists():
            raise _UsageError(f"control table not found: {path}")
        table = np.loadtxt(path, delimiter=",", ndmin=2)
        return (table[:, 0], table[:, 1:])  # first column: time knots
    if isinstance(value, dict):
        return (np.asarray(value["times"], float), np.asarray(value["values"], float))
    if isinstance(value, list):
        return [float(x) for x in value]
    raise _UsageError(f"cannot interpret control spec {value!r}")


def _build(cfg: dict, base_dir: Path):
    """Assemble (problem, y0) from a parsed config."""
    model = cfg.get("model", {})
    kind = model.get("kind")
    if kind is None:
        raise _UsageError("config needs [model] kind")
    initial = cfg.get("initial", {})

    if kind == "epidemic":
        table = dict(cfg.get("epidemic", {}))
        for key in ("mu", "phi"):
            if key in table:
                table[key] = _rate(table[key], base_dir)
        p = EpidemicParams(**table)
        n = int(model.get("n_cells", 100))
        problem = build_epidemic(p, n)
        y0 = epidemic_initial(
            p, n, S0=float(initial.get("S0", 1.0)), I0=_rate(initial.get("I0", 0.6), base_dir)
        )
    elif kind == "predator_prey":
        table = dict(cfg.get("predator_prey", {}))
        for key in ("mu", "gamma_pred", "beta"):
            if key in table:
                table[key] = _rate(table[key], base_dir)
        p = PredatorPreyParams(**table)
        n = int(model.get("n_cells", 100))
        problem = build_predator_prey(p, n)
        y0 = predator_initial(
            p, n, x0=_rate(initial.get("x0", 1.2), base_dir), y0=float(initial.get("y0", 0.8))
        )
    elif kind == "oncology":
        table = dict(cfg.get("oncology", {}))
        for key in ("d", "a", "k"):
            if key in table:
                table[key] = tuple(float(x) for x in table[key])
        if "domain" in table and isinstance(table["domain"], list):
            table["domain"] = tuple(float(x) for x in table["domain"])
        if "u" in table:
            table["u"] = _control(table["u"], base_dir)
        p = OncologyParams(**table)
        grid = model.get("grid", model.get("n_cells", 50))
        if isinstance(grid, list):
            grid = (int(grid[0]), int(grid[1]))
        problem = build_oncology(p, grid)
        y0 = oncology_initial(
            p,
            grid,
            y1=_rate(initial.get("y1", 0.4), base_dir),
            y2=_rate(initial.get("y2", 0.36), base_dir),
            y3=_rate(initial.get("y3", 0.05), base_dir),
        )
    elif kind == "scalar_blowup":
        problem, y0 = scalar_blowup_problem(float(initial.get("y0", model.get("y0", 1.0))))
    elif kind == "negative_source":
        problem, y0 = negative_source_problem()
    else:
        raise _UsageError(f"unknown model kind {kind!r}")
    return problem, y0


_SOLVE_KEYS = (
    "picard_tol",
    "max_picard_iters",
    "quadrature_nodes_per_window",
    "window_cap",
    "blow_up_norm_threshold",
    "horizon",
    "max_node_spacing",
    "quantize_windows",
    "dense_cutoff",
    "certify_samples",
    "pair_samples",
    "seed",
    "picard_initial",
)


def _solver_config(cfg: dict, seed_override=None) -> SolverConfig:
    table = {k: v for k, v in cfg.get("solve", {}).items() if k in _SOLVE_KEYS}
    if seed_override is not None:
        table["seed"] = int(seed_override)
    try:
        return SolverConfig(**table)
    except (TypeError, ValueError) as exc:
        raise _UsageError(f"bad [solve] table: {exc}") from None


def _out_path(out_dir: Path, name: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir / name


def cmd_certify(args) -> int:
    cfg = _load_toml(Path(args.config))
    base = Path(args.config).resolve().parent
    problem, y0 = _build(cfg, base)
    cert = cfg.get("certify", {})
    m = float(cert.get("m", 2.0 * norm(problem.space, y0)))
    seed = int(args.seed if args.seed is not None else cert.get("seed", 20260810))
    report = quasi_positivity_report(
        problem.f,
        problem.space,
        m,
        samples=int(cert.get("samples", 4096)),
        pair_samples=int(cert.get("pair_samples", 256)),
        seed=seed,
        notes=problem.notes,
    )
    out = _out_path(Path(args.out), cfg.get("output", {}).get("report", "certification.json"))
    report.write_json(out)
    if not args.quiet:
        state = "certified" if report.certified else "UNCERTIFIABLE"
        print(f"{state}: lambda_hat={report.lambda_hat:.6g} k_hat={report.k_hat:.6g} -> {out}")
    return 0 if report.certified else 2


def cmd_simulate(args) -> int:
    cfg = _load_toml(Path(args.config))
    base = Path(args.config).resolve().parent
    problem, y0 = _build(cfg, base)
    config = _solver_config(cfg, seed_override=args.seed)
    out_cfg = cfg.get("output", {})
    traj_path = _out_path(Path(args.out), out_cfg.get("trajectory", "trajectory.csv"))
    meta_path = _out_path(Path(args.out), out_cfg.get("metadata", "run.json"))
    try:
        traj = solve(problem, y0, config)
    except SemiposError as exc:
        with open(meta_path, "w", encoding="utf-8") as fh:
            json.dump({"error": {"type": type(exc).__name__, "message": str(exc)}}, fh, indent=2)
            fh.write("\n")
        if not args.quiet:
            print(f"solver error: {exc}", file=sys.stderr)
        return 4
    save_mode = cfg.get("solve", {}).get("save", "full")
    stride = int(cfg.get("solve", {}).get("stride", 1))
    traj.write_csv(traj_path, mode=save_mode, stride=stride)
    traj.write_metadata(meta_path)
    if not args.quiet:
        tail = "" if traj.blow_up is None else (
            f" [blow-up near t = {traj.blow_up.time_estimate:.6g}]"
        )
        print(
            f"t_end={float(traj.times[-1]):.6g} min_component={traj.min_component_overall:.3e}"
            f" -> {traj_path}{tail}"
        )
    return 3 if traj.blow_up is not None else 0


def cmd_convergence(args) -> int:
    cfg = _load_toml(Path(args.config))
    table = cfg.get("convergence", {})
    name = table.get("benchmark")
    if name not in bench.BENCHMARKS:
        raise _UsageError(
            f"unknown benchmark {name!r}; choose from {sorted(bench.BENCHMARKS)}"
        )
    ladder = [int(n) for n in table.get("ladder", [50, 100, 200, 400])]
    if not ladder:
        raise _UsageError("empty convergence ladder")
    kwargs = {}
    if "horizon" in table:
        kwargs["horizon"] = float(table["horizon"])
    if "dt_scale" in table:
        kwargs["dt_scale"] = float(table["dt_scale"])
    rows = [bench.BENCHMARKS[name](n, **kwargs) for n in ladder]
    out = _out_path(Path(args.out), cfg.get("output", {}).get("csv", "convergence.csv"))
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("resolution,error\n")
        for r in rows:
            fh.write(f"{r.resolution},{repr(float(r.error))}\n")
    if not args.quiet:
        for r in rows:
            print(f"{name} n={r.resolution}: error={r.error:.6e}")
    return 0


def cmd_plot(args) -> int:
    try:
        render_svg(args.csv, args.svg)
    except (FileNotFoundError, DomainError) as exc:
        print(f"plot failed: {exc}", file=sys.stderr)
        return 1
    if not args.quiet:
        print(f"wrote {args.svg}")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="semipos", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="TOML configuration file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override sampling seed")
        p.add_argument("--quiet", action="store_true")

    common(sub.add_parser("certify", help="run quasi-positivity certification"))
    common(sub.add_parser("simulate", help="run the windowed solver"))
    conv = sub.add_parser("convergence", help="run a refinement ladder")
    conv.add_argument("--config", required=True)
    conv.add_argument("--out", default=".")
    conv.add_argument("--quiet", action="store_true")
    plot = sub.add_parser("plot", help="render a trajectory CSV to SVG")
    plot.add_argument("csv", help="trajectory CSV from `semipos simulate`")
    plot.add_argument("svg", help="output SVG path")
    plot.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "certify":
            return cmd_certify(args)
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "convergence":
            return cmd_convergence(args)
        return cmd_plot(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ParameterError, CertificationError) as exc:
        # parameter violations -> usage error; boundary violations during a
        # solve-side certification -> uncertifiable
        if isinstance(exc, CertificationError):
            print(f"uncertifiable: {exc}", file=sys.stderr)
            return 2
        print(f"invalid model parameters: {exc}", file=sys.stderr)
        return 1
    except (TypeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
