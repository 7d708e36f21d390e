"""Command-line front end.

Subcommands wire TOML configurations to the solvers, simulator,
validation harness, and optimizers, writing CSV/JSON outputs plus a run
manifest that records the resolved configuration, grid, seeds, tool
version, and a content hash of every output file.  Re-running the same
command reproduces the hashes; the manifest's timestamp is informational
and excluded from hashing.

Exit codes: 0 success, 2 configuration/parse errors, 3 numerical
errors, 4 infeasibility (including invalid optimizer brackets),
5 I/O errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .errors import (
    BracketError,
    ConfigError,
    DomainError,
    InfeasibleError,
    LossFluidError,
    NumericalError,
)
from .model import Grid, SystemConfig, load_config
from .optimize import optimize_joint, optimize_staffing_zero
from .simulator import ensemble_summary, run_replications
from .validate import convergence_report, write_figure_data
from .vie_finite import solve_finite_buffer
from .vie_zero import solve_zero_buffer

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INFEASIBLE = 4
EXIT_IO = 5

_DEFAULT_GRID_POINTS = 10_000


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _make_grid(cfg: SystemConfig, dt: float | None) -> Grid:
    if dt is not None:
        if dt <= 0:
            raise ConfigError("--dt must be positive")
        return Grid.from_step(cfg.horizon, dt)
    return Grid.from_count(cfg.horizon, _DEFAULT_GRID_POINTS)


def _write_manifest(
    manifest_path: Path,
    command: str,
    argv: list[str],
    config_path: str,
    grid: Grid | None,
    seed: int | None,
    workers: int,
    outputs: list[Path],
) -> None:
    config_text = Path(config_path).read_text()
    manifest = {
        "command": command,
        "argv": argv,
        "config_path": str(config_path),
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "config_text": config_text,
        "grid": None
        if grid is None
        else {"step": grid.step, "count": grid.count, "horizon": grid.horizon},
        "seed": seed,
        "workers": workers,
        "version": __version__,
        "outputs": [
            {"path": str(p), "sha256": _sha256(p)} for p in sorted(outputs)
        ],
        # informational only; excluded from any hashing
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _cmd_solve_zero(args, argv) -> int:
    cfg = load_config(args.config)
    grid = _make_grid(cfg, args.dt)
    traj = solve_zero_buffer(cfg, grid)
    out = Path(args.out)
    traj.to_csv(out)
    _write_manifest(
        out.with_suffix(out.suffix + ".manifest.json"),
        "solve-zero", argv, args.config, grid, None, args.workers, [out],
    )
    return EXIT_OK


def _cmd_solve_finite(args, argv) -> int:
    cfg = load_config(args.config)
    grid = _make_grid(cfg, args.dt)
    traj = solve_finite_buffer(cfg, grid)
    out = Path(args.out)
    traj.to_csv(out)
    _write_manifest(
        out.with_suffix(out.suffix + ".manifest.json"),
        "solve-finite", argv, args.config, grid, None, args.workers, [out],
    )
    return EXIT_OK


def _cmd_simulate(args, argv) -> int:
    cfg = load_config(args.config)
    grid = _make_grid(cfg, args.dt)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reps = run_replications(
        cfg,
        args.n,
        args.reps,
        args.seed,
        grid,
        b=args.buffer,
        workers=args.workers,
        keep_paths=True,
    )
    outputs: list[Path] = []
    for r, path in enumerate(reps.paths):
        p = out_dir / f"eventlog_r{r:03d}.csv"
        path.to_csv(p)
        outputs.append(p)
    summary_path = out_dir / "ensemble.json"
    with open(summary_path, "w") as fh:
        json.dump(ensemble_summary(reps), fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append(summary_path)
    _write_manifest(
        out_dir / "manifest.json",
        "simulate", argv, args.config, grid, args.seed, args.workers, outputs,
    )
    return EXIT_OK


def _cmd_validate(args, argv) -> int:
    cfg = load_config(args.config)
    grid = _make_grid(cfg, args.dt)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = convergence_report(
        cfg, sorted(args.n), args.reps, args.seed, grid, workers=args.workers
    )
    report_path = out_dir / "convergence_report.json"
    report.to_json(report_path)
    stem = Path(args.config).stem
    outputs = [report_path] + write_figure_data(report, out_dir, stem)
    _write_manifest(
        out_dir / "manifest.json",
        "validate", argv, args.config, grid, args.seed, args.workers, outputs,
    )
    return EXIT_OK


def _cmd_optimize_staffing(args, argv) -> int:
    cfg = load_config(args.config)
    grid = _make_grid(cfg, args.dt)
    plan = optimize_staffing_zero(
        cfg, args.alpha, (args.c_lo, args.c_hi), tol_c=args.tol_c, grid=grid
    )
    out = Path(args.out)
    plan.to_json(out)
    outputs = [out]
    acc_csv = out.with_suffix(".acceptance.csv")
    traj = solve_zero_buffer(cfg.with_thresholds(capacity=plan.c_star), grid)
    traj.to_csv(acc_csv)
    outputs.append(acc_csv)
    _write_manifest(
        out.with_suffix(out.suffix + ".manifest.json"),
        "optimize-staffing", argv, args.config, grid, None, args.workers, outputs,
    )
    return EXIT_OK


def _cmd_optimize_joint(args, argv) -> int:
    cfg = load_config(args.config)
    grid = _make_grid(cfg, args.dt)
    c_grid = [float(x) for x in args.c_grid.split(",") if x.strip()]
    beta_bracket = None
    if args.beta_hi is not None:
        beta_bracket = (0.0, args.beta_hi)
    plan = optimize_joint(
        cfg,
        args.alpha,
        args.v,
        c_grid,
        tol_beta=args.tol_beta,
        beta_bracket=beta_bracket,
        grid=grid,
    )
    out = Path(args.out)
    plan.to_json(out)
    outputs = [out]
    acc_csv = out.with_suffix(".acceptance.csv")
    traj = solve_finite_buffer(
        cfg.with_thresholds(capacity=plan.c_star, buffer_ratio=plan.beta_star), grid
    )
    traj.to_csv(acc_csv)
    outputs.append(acc_csv)
    _write_manifest(
        out.with_suffix(out.suffix + ".manifest.json"),
        "optimize-joint", argv, args.config, grid, None, args.workers, outputs,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lossfluid",
        description="Fluid limits, simulation, and capacity planning for "
        "time-varying many-server loss queues",
    )
    parser.add_argument("--version", action="version", version=f"lossfluid {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=False):
        p.add_argument("--config", required=True, help="TOML system configuration")
        p.add_argument("--dt", type=float, default=None,
                       help="grid step (default horizon/10000)")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                       help="worker threads for replication-parallel steps "
                            "(default: hardware parallelism; results are "
                            "independent of this)")
        if seed:
            p.add_argument("--seed", type=int, required=True, help="master seed")

    p = sub.add_parser("solve-zero", help="solve the zero-buffer fluid system")
    common(p)
    p.add_argument("--out", required=True, help="trajectory CSV path")
    p.set_defaults(func=_cmd_solve_zero)

    p = sub.add_parser("solve-finite", help="solve the finite-buffer fluid system")
    common(p)
    p.add_argument("--out", required=True, help="trajectory CSV path")
    p.set_defaults(func=_cmd_solve_finite)

    p = sub.add_parser("simulate", help="run seeded replications, write event logs")
    common(p, seed=True)
    p.add_argument("--n", type=int, required=True, help="system size")
    p.add_argument("--reps", type=int, required=True, help="replication count")
    p.add_argument("--buffer", type=int, default=None,
                   help="buffer spaces (default floor(n*buffer_ratio))")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("validate", help="compare simulation ensembles to the fluid solution")
    common(p, seed=True)
    p.add_argument("--n", type=int, action="append", required=True,
                   help="system size (repeatable)")
    p.add_argument("--reps", type=int, required=True, help="replications per n")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("optimize-staffing", help="minimal capacity under a blocking constraint")
    common(p)
    p.add_argument("--alpha", type=float, required=True,
                   help="max allowable instantaneous blocking probability")
    p.add_argument("--c-lo", type=float, required=True, help="capacity bracket low end")
    p.add_argument("--c-hi", type=float, required=True, help="capacity bracket high end")
    p.add_argument("--tol-c", type=float, default=1e-3, help="bisection width tolerance")
    p.add_argument("--out", required=True, help="plan JSON path")
    p.set_defaults(func=_cmd_optimize_staffing)

    p = sub.add_parser("optimize-joint", help="joint capacity/buffer optimization")
    common(p)
    p.add_argument("--alpha", type=float, required=True,
                   help="max allowable instantaneous blocking probability")
    p.add_argument("--v", type=float, required=True,
                   help="server-cost weight in [0, 1]")
    p.add_argument("--c-grid", required=True,
                   help="comma-separated ascending capacity candidates")
    p.add_argument("--tol-beta", type=float, default=1e-3, help="beta bisection tolerance")
    p.add_argument("--beta-hi", type=float, default=None,
                   help="upper end of the beta bracket (default 10*c)")
    p.add_argument("--out", required=True, help="plan JSON path")
    p.set_defaults(func=_cmd_optimize_joint)

    return parser


def rerun_from_manifest(manifest_path: str | Path) -> int:
    """Re-execute the run recorded in a manifest.

    The manifest embeds the resolved config text; if the original config
    file is gone it is restored next to the manifest before re-running.
    """
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    config_path = Path(manifest["config_path"])
    if not config_path.exists():
        config_path = Path(manifest_path).parent / config_path.name
        config_path.write_text(manifest["config_text"])
    argv = list(manifest["argv"])
    try:
        i = argv.index("--config")
        argv[i + 1] = str(config_path)
    except ValueError:
        pass
    return main(argv)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, argv)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (BracketError, InfeasibleError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except LossFluidError as exc:  # fallback for future categories
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
