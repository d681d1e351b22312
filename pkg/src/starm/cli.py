"""Command-line entry point: factorizations, optimization and experiments.

Every command writes its artifacts and a ``report.json`` into ``--output``
and prints the report path on stdout. Failures print a JSON error document
on stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
from collections.abc import Callable
from pathlib import Path
from typing import Any

import numpy as np
import structlog

from starm.config import REPORT_NAME, Settings
from starm.errors import ConfigError, StarmError
from starm.experiments.angle import (
    LANDSCAPE_COLUMNS,
    TRAJECTORY_COLUMNS,
    contraction_ratio,
    landscape,
    nearest_minimizer,
    trajectory,
)
from starm.experiments.compress import run_compression
from starm.experiments.data import (
    lowrank_tensor,
    random_tensor,
    synthetic_regression,
    wave_snapshots,
)
from starm.experiments.regression import oracle_objective, run_regression
from starm.experiments.rom import run_rom
from starm.fileio import read_tensor, write_csv, write_json, write_matrix, write_tensor
from starm.log import configure_logging
from starm.optim import (
    TRACE_COLUMNS,
    LowRankObjective,
    ObjectiveKind,
    RegressionObjective,
    optimize,
    parse_step,
)
from starm.schemas import (
    ExperimentConfig,
    ExperimentKind,
    GenerateKind,
    build_config,
    load_config,
)
from starm.tensor import Tensor3, frobenius_norm
from starm.tsvdm import (
    energy_profile,
    implicit_rank,
    operator_norm,
    reconstruct,
    t_rank,
    truncate,
    tsvdm,
)

logger = structlog.get_logger()

Handler = Callable[[ExperimentConfig], Path]


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _dims(text: str) -> tuple[int, int, int]:
    parts = [p for p in re.split(r"[,x ]+", text.strip()) if p]
    if len(parts) != 3:
        msg = f"expected three dimensions like 8,6,5, got {text!r}"
        raise argparse.ArgumentTypeError(msg)
    try:
        n1, n2, n3 = (int(p) for p in parts)
    except ValueError:
        msg = f"dimensions must be integers, got {text!r}"
        raise argparse.ArgumentTypeError(msg) from None
    return n1, n2, n3


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", type=Path, help="Input tensor file")
    common.add_argument("--output", type=Path, help="Output directory")
    common.add_argument(
        "--transform",
        help="identity | dct | random:SEED | data | perm:I,J,... | file:PATH",
    )
    common.add_argument("--k", type=int, help="Truncation rank")
    common.add_argument("--iters", type=int, help="Maximum iterations")
    common.add_argument("--tol", type=float, help="Gradient-norm tolerance")
    common.add_argument("--step", help="fixed:ALPHA | backtrack[:ALPHA0]")
    common.add_argument("--seed", type=int, help="Random seed")
    common.add_argument(
        "--lambda", dest="reg", type=float, help="Tikhonov regularization"
    )
    common.add_argument("--noise", type=float, help="Noise level")
    common.add_argument(
        "--config", type=Path, help="YAML/JSON config; its values override flags"
    )
    common.add_argument("--debug", action="store_true", help="Debug logging")
    common.add_argument("--log-file", type=Path, help="Mirror logs to this file")
    return common


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse command-line arguments."""
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="starm",
        description="Tensor star-M products, t-SVDM and learned transforms",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("tsvdm", parents=[common], help="Truncated t-SVDM of a tensor")

    opt = sub.add_parser("optimize", parents=[common], help="Learn a transform")
    opt.add_argument(
        "--objective", choices=[str(o) for o in ObjectiveKind], help="Inner problem"
    )
    opt.add_argument("--target", type=Path, help="Observations for regression")

    angle = sub.add_parser("angle", parents=[common], help="Rotation example")
    angle.add_argument(
        "--theta0", type=float, nargs="+", help="Starting angles in radians"
    )
    angle.add_argument("--alpha", type=float, help="Fixed step size")

    reg = sub.add_parser("regression", parents=[common], help="Synthetic regression")
    reg.add_argument("--d", type=int, help="Tube length is 2**d")
    reg.add_argument("--method", choices=["varpro", "altdesc", "both"])
    reg.add_argument("--points", type=int, help="Samples per line")

    rom = sub.add_parser("rom", parents=[common], help="Wave-equation reduced bases")
    rom.add_argument("--n-space", type=int)
    rom.add_argument("--n-time", type=int)
    rom.add_argument("--n-params", type=int)
    rom.add_argument("--init", action="append", help="Transform spec (repeatable)")
    rom.add_argument("--no-random", action="store_true", help="Skip random Q")

    comp = sub.add_parser("compress", parents=[common], help="Low-t-rank compression")
    comp.add_argument("--transfer", type=Path, help="Second tensor, same n3")

    tr = sub.add_parser("transform", parents=[common], help="Write a transform matrix")
    tr.add_argument("--n3", type=int, help="Tube length when no input is given")

    gen = sub.add_parser("generate", parents=[common], help="Write a synthetic tensor")
    gen.add_argument("--kind", choices=[str(g) for g in GenerateKind])
    gen.add_argument("--dims", type=_dims, help="n1,n2,n3")
    gen.add_argument("--rank", type=int, help="Slice rank for lowrank")
    return parser.parse_args(argv)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_SECTION_FLAGS: dict[str, dict[str, str]] = {
    "angle": {"theta0": "theta0", "alpha": "alpha", "iters": "iters"},
    "regression": {"d": "d", "method": "method", "points": "n_points"},
    "rom": {
        "n_space": "n_space",
        "n_time": "n_time",
        "n_params": "n_params",
        "init": "inits",
    },
    "compress": {"transfer": "transfer"},
    "generate": {"kind": "kind", "rank": "rank"},
}


def _flag_values(args: argparse.Namespace, settings: Settings) -> dict[str, Any]:
    """Explicitly given flags as a configuration document."""
    values: dict[str, Any] = {
        "experiment": args.command,
        "output": args.output or settings.resolved_output_dir,
    }
    for key in ("input", "transform", "k", "seed", "reg", "noise"):
        if getattr(args, key) is not None:
            values[key] = getattr(args, key)
    for key in ("objective", "target", "n3", "dims"):
        if getattr(args, key, None) is not None:
            values[key] = getattr(args, key)

    optim: dict[str, Any] = {}
    if args.iters is not None:
        optim["max_iters"] = args.iters
    if args.tol is not None:
        optim["grad_tol"] = args.tol
    if args.seed is not None:
        optim["seed"] = args.seed
    if args.step is not None:
        try:
            optim["step"] = parse_step(args.step).model_dump()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if optim:
        values["optim"] = optim

    section = {
        field: getattr(args, flag)
        for flag, field in _SECTION_FLAGS.get(args.command, {}).items()
        if getattr(args, flag, None) is not None
    }
    if getattr(args, "no_random", False):
        section["random_baseline"] = False
    if section:
        values[args.command] = section
    return values


def resolve_config(args: argparse.Namespace, settings: Settings) -> ExperimentConfig:
    """Validate flags, overlaid with ``--config`` when given.

    Raises:
        ConfigError: If validation fails or the file names another command.
    """
    values = _flag_values(args, settings)
    if args.config is None:
        return build_config(values)
    cfg = load_config(args.config, defaults=values)
    if cfg.experiment != args.command:
        msg = f"config describes {cfg.experiment!s}, command is {args.command}"
        raise ConfigError(msg, path=str(args.config))
    return cfg


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _require_input(cfg: ExperimentConfig) -> Path:
    if cfg.input is None:
        msg = f"{cfg.experiment} needs --input"
        raise ConfigError(msg)
    return cfg.input


def _require_k(cfg: ExperimentConfig) -> int:
    if cfg.k is None:
        msg = f"{cfg.experiment} needs --k"
        raise ConfigError(msg)
    return cfg.k


def _finite(value: float) -> float | None:
    return value if math.isfinite(value) else None


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", name).strip("-")


def _finish(cfg: ExperimentConfig, report: dict[str, Any]) -> Path:
    path = cfg.output / REPORT_NAME
    write_json(path, {"command": str(cfg.experiment), **report})
    logger.info("report_written", path=str(path))
    return path


def run_tsvdm(cfg: ExperimentConfig) -> Path:
    """Truncated factorization with error and energy report."""
    a = read_tensor(_require_input(cfg)).data
    spec = cfg.transform_spec()
    transform = spec.materialize(a.shape[2], data=a)
    factors = tsvdm(a, transform)
    k = cfg.k or factors.max_rank
    uk, sk, vk = truncate(factors, k)
    approx = reconstruct(uk, sk, vk, transform)
    total = frobenius_norm(a)
    error = frobenius_norm(a - approx) / total if total > 0 else 0.0

    meta = {"transform": str(spec), "k": k}
    out = cfg.output
    write_tensor(out / "U.stm", uk, meta)
    write_tensor(out / "S.stm", sk, meta)
    write_tensor(out / "V.stm", vk, meta)
    write_matrix(out / "M.stmm", transform.matrix, {"transform": str(spec)})
    profile = energy_profile(a, transform)
    return _finish(
        cfg,
        {
            "dims": list(a.shape),
            "k": k,
            "transform": str(spec),
            "relative_error": error,
            "t_rank": t_rank(a, transform),
            "implicit_rank": implicit_rank(a, transform),
            "operator_norm": operator_norm(a, transform),
            "singular_values": factors.sigma,
            "energy_percent": profile.percent,
            "energy_captured_at_k": profile.captured(k),
            "artifacts": ["U.stm", "S.stm", "V.stm", "M.stmm"],
        },
    )


def run_optimize(cfg: ExperimentConfig) -> Path:
    """Learn a transform for a low-rank or regression objective."""
    a = read_tensor(_require_input(cfg)).data
    spec = cfg.transform_spec()
    m0 = spec.materialize(a.shape[2], data=a)
    obj: LowRankObjective | RegressionObjective
    if cfg.objective is ObjectiveKind.REGRESSION:
        if cfg.target is None:
            msg = "regression objective needs --target"
            raise ConfigError(msg)
        obj = RegressionObjective(a, read_tensor(cfg.target).data, reg=cfg.reg)
    else:
        obj = LowRankObjective(a, _require_k(cfg))

    trace = optimize(obj, m0.matrix, cfg.optim)
    assert trace.final_m is not None
    out = cfg.output
    write_matrix(
        out / "M.stmm",
        trace.final_m,
        {"init": str(spec), "objective": str(cfg.objective)},
    )
    write_csv(out / "trace.csv", TRACE_COLUMNS, trace.to_rows())
    report: dict[str, Any] = {
        "objective_kind": str(cfg.objective),
        "init": str(spec),
        "initial_objective": trace.records[0].objective,
        **trace.summary(),
        "artifacts": ["M.stmm", "trace.csv"],
    }
    if isinstance(obj, LowRankObjective):
        report["relative_error"] = obj.relative_error(obj.evaluate(trace.final_m))
    elif trace.final_x is not None:
        write_tensor(out / "X.stm", trace.final_x)
        report["artifacts"].append("X.stm")
    return _finish(cfg, report)


def run_angle(cfg: ExperimentConfig) -> Path:
    """Angle trajectories plus the sampled objective landscape."""
    section = cfg.angle
    rows = []
    runs = []
    for theta0 in section.theta0:
        points = trajectory(
            theta0,
            alpha=section.alpha,
            iters=section.iters,
            grad_tol=cfg.optim.grad_tol,
        )
        rows.extend(p.as_row() for p in points)
        target = nearest_minimizer(theta0)
        runs.append(
            {
                "theta0": theta0,
                "final_theta": points[-1].theta,
                "nearest_minimizer": target,
                "distance": abs(points[-1].theta - target),
                "iterations": points[-1].iter,
                "final_objective": points[-1].objective,
                "contraction_ratio": _finite(contraction_ratio(points)),
            }
        )
    grid = landscape(section.grid)
    out = cfg.output
    write_csv(out / "angle_trajectories.csv", TRAJECTORY_COLUMNS, rows)
    write_csv(out / "angle_landscape.csv", LANDSCAPE_COLUMNS, grid)
    return _finish(
        cfg,
        {
            "alpha": section.alpha,
            "runs": runs,
            "landscape_max_abs_error": max(abs(v - c) for _, v, c in grid),
            "artifacts": ["angle_trajectories.csv", "angle_landscape.csv"],
        },
    )


def run_regression_experiment(cfg: ExperimentConfig) -> Path:
    """Synthetic regression with variable projection and/or alternating descent."""
    section = cfg.regression
    n3 = 2**section.d
    problem = synthetic_regression(
        n3, n_points=section.n_points, noise=cfg.noise, seed=cfg.seed
    )
    spec = cfg.transform_spec(default=f"random:{cfg.seed}")
    runs = run_regression(problem, section.method, cfg.optim, init=spec, reg=cfg.reg)

    out = cfg.output
    meta = {"n3": n3, "noise": cfg.noise, "seed": cfg.seed}
    write_tensor(out / "A.stm", problem.a, meta)
    write_tensor(out / "B.stm", problem.b, meta)
    write_matrix(out / "M_true.stmm", problem.m_true)
    artifacts = ["A.stm", "B.stm", "M_true.stmm"]
    for run in runs:
        assert run.trace.final_m is not None
        write_csv(out / f"trace_{run.method}.csv", TRACE_COLUMNS, run.trace.to_rows())
        write_matrix(out / f"M_{run.method}.stmm", run.trace.final_m)
        artifacts += [f"trace_{run.method}.csv", f"M_{run.method}.stmm"]
    return _finish(
        cfg,
        {
            "n3": n3,
            "noise": cfg.noise,
            "lambda": cfg.reg,
            "init": str(spec),
            "oracle_objective": oracle_objective(problem, cfg.reg),
            "runs": [run.summary() for run in runs],
            "artifacts": artifacts,
        },
    )


def _wave_kwargs(cfg: ExperimentConfig) -> dict[str, Any]:
    return cfg.rom.model_dump(exclude={"inits", "random_baseline"})


def run_rom_experiment(cfg: ExperimentConfig) -> Path:
    """Reduced bases of the wave snapshots (or any ``--input`` tensor)."""
    section = cfg.rom
    out = cfg.output
    artifacts: list[str] = []
    if cfg.input is not None:
        loaded = read_tensor(cfg.input)
        x, meta = loaded.data, loaded.metadata
    else:
        snapshots = wave_snapshots(**_wave_kwargs(cfg))
        x, meta = snapshots.data, snapshots.metadata()
        write_tensor(out / "snapshots.stm", x, meta)
        artifacts.append("snapshots.stm")
    n3 = x.shape[2]
    params = meta.get("speeds", list(range(n3)))
    k = cfg.k or 2

    result = run_rom(
        x,
        k,
        cfg.rom_optim(),
        inits=section.inits,
        random_baseline=section.random_baseline,
    )
    error_rows = []
    energy_rows = []
    for basis in result.bases:
        name = _safe_name(basis.name)
        write_matrix(out / f"M_{name}.stmm", basis.transform.matrix)
        artifacts.append(f"M_{name}.stmm")
        error_rows += [
            (basis.name, idx, float(params[idx]), float(err))
            for idx, err in enumerate(basis.per_param)
        ]
        energy_rows += [
            (basis.name, s, i, float(pct), float(cum))
            for s, (pct_row, cum_row) in enumerate(
                zip(basis.energy.percent, basis.energy.cumulative, strict=True)
            )
            for i, (pct, cum) in enumerate(zip(pct_row, cum_row, strict=True))
        ]
    write_csv(
        out / "rom_errors.csv",
        ("basis", "param", "speed", "relative_error"),
        error_rows,
    )
    write_csv(
        out / "rom_energy.csv",
        ("basis", "slice", "index", "percent", "cumulative"),
        energy_rows,
    )
    artifacts += ["rom_errors.csv", "rom_energy.csv"]
    best = result.best_learned
    return _finish(
        cfg,
        {
            "dims": list(x.shape),
            "k": k,
            "generator": {
                key: meta[key] for key in ("dt", "cfl", "substeps") if key in meta
            },
            "bases": [basis.summary(k) for basis in result.bases],
            "best_learned": {"name": best.name, "global_error": best.global_error},
            "best_heuristic_error": min(b.global_error for b in result.heuristics),
            "artifacts": artifacts,
        },
    )


def run_compress(cfg: ExperimentConfig) -> Path:
    """Compression of a tensor file against matrix baselines."""
    a = read_tensor(_require_input(cfg)).data
    k = _require_k(cfg)
    spec = cfg.transform_spec()
    m0 = spec.materialize(a.shape[2], data=a)
    transfer_path = cfg.compress.transfer
    transfer = read_tensor(transfer_path).data if transfer_path is not None else None
    result = run_compression(a, k, m0, cfg.optim, transfer=transfer)

    out = cfg.output
    rows: list[tuple[str, str, int, float, int]] = [
        ("data", e.name, e.rank, e.relative_error, e.storage) for e in result.entries
    ]
    rows += [
        ("transfer", e.name, e.rank, e.relative_error, e.storage)
        for e in result.transfer or []
    ]
    write_csv(
        out / "compression.csv",
        ("dataset", "name", "rank", "relative_error", "storage"),
        rows,
    )
    write_csv(out / "trace.csv", TRACE_COLUMNS, result.trace.to_rows())
    write_matrix(out / "M.stmm", result.learned.matrix, {"init": str(spec)})
    return _finish(
        cfg,
        {
            "dims": list(a.shape),
            "k": k,
            "init": str(spec),
            **result.summary(),
            "artifacts": ["compression.csv", "trace.csv", "M.stmm"],
        },
    )


def run_transform(cfg: ExperimentConfig) -> Path:
    """Materialize a transform spec as a matrix file."""
    data: Tensor3 | None = read_tensor(cfg.input).data if cfg.input else None
    n3 = data.shape[2] if data is not None else cfg.n3
    if n3 is None:
        msg = "transform needs --n3 or --input"
        raise ConfigError(msg)
    spec = cfg.transform_spec()
    transform = spec.materialize(n3, data=data)
    write_matrix(cfg.output / "M.stmm", transform.matrix, {"transform": str(spec)})
    print(f"orthogonality_residual={transform.residual:.3e}")
    return _finish(
        cfg,
        {
            "transform": str(spec),
            "kind": str(transform.kind),
            "n3": n3,
            "orthogonality_residual": transform.residual,
            "artifacts": ["M.stmm"],
        },
    )


def run_generate(cfg: ExperimentConfig) -> Path:
    """Write a seeded synthetic tensor."""
    section = cfg.generate
    meta: dict[str, Any] = {"generator": str(section.kind), "seed": cfg.seed}
    if section.kind is GenerateKind.WAVE:
        snapshots = wave_snapshots(**_wave_kwargs(cfg))
        data, meta = snapshots.data, snapshots.metadata()
    else:
        if cfg.dims is None:
            msg = f"generate {section.kind} needs --dims"
            raise ConfigError(msg)
        if section.kind is GenerateKind.LOWRANK:
            data = lowrank_tensor(
                cfg.dims, section.rank, noise=cfg.noise, seed=cfg.seed
            )
            meta |= {"rank": section.rank, "noise": cfg.noise}
        else:
            data = random_tensor(cfg.dims, seed=cfg.seed)
    name = f"{section.kind}.stm"
    write_tensor(cfg.output / name, data, meta)
    return _finish(
        cfg,
        {
            "kind": str(section.kind),
            "dims": list(data.shape),
            "seed": cfg.seed,
            "norm": float(np.linalg.norm(data)),
            "artifacts": [name],
        },
    )


COMMANDS: dict[ExperimentKind, Handler] = {
    ExperimentKind.TSVDM: run_tsvdm,
    ExperimentKind.OPTIMIZE: run_optimize,
    ExperimentKind.ANGLE: run_angle,
    ExperimentKind.REGRESSION: run_regression_experiment,
    ExperimentKind.ROM: run_rom_experiment,
    ExperimentKind.COMPRESS: run_compress,
    ExperimentKind.TRANSFORM: run_transform,
    ExperimentKind.GENERATE: run_generate,
}


def main(argv: list[str] | None = None) -> int:
    """Run one command; returns the process exit code."""
    args = parse_args(argv)
    settings = Settings()
    configure_logging(
        log_file=args.log_file or settings.log_file,
        debug=args.debug or settings.debug,
    )
    structlog.contextvars.bind_contextvars(command=args.command)
    try:
        cfg = resolve_config(args, settings)
        report = COMMANDS[cfg.experiment](cfg)
    except StarmError as exc:
        logger.error("command_failed", error=exc.code, message=str(exc))
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return 2 if isinstance(exc, ConfigError) else 1
    except ValueError as exc:
        logger.error("command_failed", error="invalid_argument", message=str(exc))
        print(
            json.dumps({"error": "invalid_argument", "message": str(exc)}),
            file=sys.stderr,
        )
        return 1
    finally:
        structlog.contextvars.unbind_contextvars("command")
    logger.info("command_complete", report=str(report))
    print(report)
    return 0
