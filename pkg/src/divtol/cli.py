"""Command-line front end: flag parsing, dispatch, and result serialization.

Commands (selected with ``--command``):

* ``estimate``      fit the tolerance parameter from experiment files
* ``curves``        sample group-mean rewards along a theta grid
* ``simulate-mc``   run the Monte-Carlo study
* ``consistency``   sweep the estimate's spread across sample sizes
* ``ingest-check``  parse and validate inputs without estimating

Outputs are JSON or CSV, carry the seed and the full effective
configuration, never include timestamps, and are written only to ``--out``.
Floats are serialized at full (shortest round-trip) precision so both
formats carry identical numeric values.

Exit codes: 0 success, 1 validation or data error, 2 configuration error.
Failures emit a machine-readable ``{"error": {"class", "message"}}`` object
on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from .core import DivergenceSpec, Norm, validate_dataset
from .errors import (
    ConfigurationError,
    DegenerateObjectiveError,
    DivtolError,
    InputError,
    LinkageError,
)
from .estimator import (
    DEFAULT_GRID_STEP,
    Method,
    bootstrap_ci,
    estimate_theta,
    reward_curves,
)
from .ingest import (
    StudyLayout,
    assemble_dataset,
    average_sessions,
    bin_events,
    parse_binned_counts,
    parse_events,
    parse_exposures,
)
from .simulation import McConfig, PolicyConfig, consistency_sweep, run_monte_carlo

__all__ = ["RunConfig", "build_parser", "main", "entrypoint"]

COMMANDS = ("estimate", "curves", "simulate-mc", "consistency", "ingest-check")

CURVES_DEFAULT_GRID_STEP = 0.005  # 201 grid points


@dataclass(frozen=True)
class RunConfig:
    """Effective configuration of one CLI run (defaults resolved per command)."""

    command: str
    exposures: str | None
    bins: str | None
    events: str | None
    optimal: tuple[float, ...] | None
    norm: str
    weights: str
    method: str
    grid_step: float
    bootstrap: int | None
    level: float
    seed: int
    n: tuple[int, ...]
    datasets: int
    p_exposed: float
    out: str
    fmt: str


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="divtol",
        description="Estimate a group's tolerance for divergence from optimality "
        "in fixed-interval experiments.",
    )
    p.add_argument("--command", required=True, choices=COMMANDS)
    p.add_argument("--exposures", help="exposures CSV (mouse_id,exposed)")
    p.add_argument("--bins", help="binned counts CSV (mouse_id,session,b0,...)")
    p.add_argument("--events", help="raw press events CSV (mouse_id,session,press_time_s)")
    p.add_argument("--optimal", help="optimal action: scalar or comma-separated vector")
    p.add_argument("--norm", choices=("l2", "l1"), default="l2")
    p.add_argument(
        "--weights",
        choices=("none", "sixty-minus-midpoint"),
        default="none",
        help="per-bin weights: none, or interval length minus bin midpoints",
    )
    p.add_argument("--method", choices=("closed-form", "grid"), default="closed-form")
    p.add_argument(
        "--grid-step",
        type=float,
        default=None,
        help="theta grid step (default 1e-6 for the grid estimator, 0.005 for curves)",
    )
    p.add_argument("--bootstrap", type=int, default=None, metavar="N")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", default=None, help="sample size, or comma list for consistency")
    p.add_argument("--datasets", type=int, default=None)
    p.add_argument("--p-exposed", type=float, default=0.5, dest="p_exposed")
    p.add_argument("--out", help="output file path")
    p.add_argument("--format", choices=("json", "csv"), default="json", dest="fmt")
    return p


def _parse_optimal(raw: str | None) -> tuple[float, ...] | None:
    if raw is None:
        return None
    try:
        return tuple(float(part) for part in raw.split(","))
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse --optimal {raw!r}: {exc}") from exc


def _parse_n_list(raw: str | None, default: tuple[int, ...]) -> tuple[int, ...]:
    if raw is None:
        return default
    try:
        return tuple(int(part) for part in raw.split(","))
    except ValueError as exc:
        raise ConfigurationError(f"cannot parse --n {raw!r}: {exc}") from exc


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    command = args.command
    if args.out is None:
        raise ConfigurationError("--out is required")
    if args.seed < 0:
        raise ConfigurationError("--seed must be nonnegative")
    if not 0.0 < args.level < 1.0:
        raise ConfigurationError("--level must lie in (0, 1)")
    if args.bootstrap is not None and args.bootstrap < 100:
        raise ConfigurationError("--bootstrap must be >= 100")
    if not 0.0 < args.p_exposed < 1.0:
        raise ConfigurationError("--p-exposed must lie in (0, 1)")

    if command in ("estimate", "curves", "ingest-check"):
        if args.exposures is None:
            raise ConfigurationError(f"--exposures is required for {command}")
        if (args.bins is None) == (args.events is None):
            raise ConfigurationError(f"exactly one of --bins/--events is required for {command}")

    optimal = _parse_optimal(args.optimal)
    if command in ("estimate", "curves") and optimal is None:
        raise ConfigurationError(f"--optimal is required for {command}")
    if command in ("simulate-mc", "consistency"):
        if optimal is None:
            optimal = (0.0,)
        if len(optimal) != 1:
            raise ConfigurationError(f"--optimal must be scalar for {command}")

    max_step = 1.0 if command == "curves" else 0.5
    if args.grid_step is not None and not 0.0 < args.grid_step <= max_step:
        raise ConfigurationError(f"--grid-step must lie in (0, {max_step}]")
    grid_step = args.grid_step
    if grid_step is None:
        grid_step = CURVES_DEFAULT_GRID_STEP if command == "curves" else DEFAULT_GRID_STEP

    if command == "consistency":
        ns = _parse_n_list(args.n, default=(50, 200, 800))
        datasets = args.datasets if args.datasets is not None else 200
    else:
        ns = _parse_n_list(args.n, default=(50,))
        if len(ns) != 1:
            raise ConfigurationError(f"--n must be a single integer for {command}")
        datasets = args.datasets if args.datasets is not None else 2000
    if any(n < 2 for n in ns):
        raise ConfigurationError("--n values must be >= 2")
    if datasets < 1:
        raise ConfigurationError("--datasets must be >= 1")

    return RunConfig(
        command=command,
        exposures=args.exposures,
        bins=args.bins,
        events=args.events,
        optimal=optimal,
        norm=args.norm,
        weights=args.weights,
        method=args.method,
        grid_step=grid_step,
        bootstrap=args.bootstrap,
        level=args.level,
        seed=args.seed,
        n=ns,
        datasets=datasets,
        p_exposed=args.p_exposed,
        out=args.out,
        fmt=args.fmt,
    )


def _policy_echo(policy: PolicyConfig) -> dict:
    return {
        "mu1": policy.mu1,
        "sigma1_sq": policy.sigma1_sq,
        "mu2": policy.mu2,
        "sigma2_sq": policy.sigma2_sq,
        "shape_multiplier_exposed": policy.shape_multiplier_exposed,
        "rate": policy.rate,
        "positivity": policy.positivity.value,
    }


def _config_echo(cfg: RunConfig) -> dict:
    return {
        "command": cfg.command,
        "exposures": cfg.exposures,
        "bins": cfg.bins,
        "events": cfg.events,
        "optimal": list(cfg.optimal) if cfg.optimal is not None else None,
        "norm": cfg.norm,
        "weights": cfg.weights,
        "method": cfg.method,
        "grid_step": cfg.grid_step,
        "bootstrap": cfg.bootstrap,
        "level": cfg.level,
        "seed": cfg.seed,
        "n": list(cfg.n),
        "datasets": cfg.datasets,
        "p_exposed": cfg.p_exposed,
        "format": cfg.fmt,
    }


def _load_dataset(cfg: RunConfig):
    if not os.path.exists(cfg.exposures):
        raise LinkageError(f"exposures file not found: {cfg.exposures}")
    exposures = parse_exposures(cfg.exposures)
    if cfg.bins is not None:
        layout = _layout_from_bins_header(cfg.bins)
        sessions = parse_binned_counts(cfg.bins, layout)
    else:
        layout = StudyLayout()
        sessions = bin_events(parse_events(cfg.events), layout)
    actions = average_sessions(sessions, layout)
    return assemble_dataset(exposures, actions, layout), layout


def _layout_from_bins_header(path) -> StudyLayout:
    """Infer the bin count from the file header, assuming a 60 s interval."""
    try:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    d = len(header.strip().split(",")) - 2
    if d < 1:
        raise InputError(f"cannot infer bin count from header of {path}")
    return StudyLayout(interval_length_s=60.0, bin_width_s=60.0 / d)


def _build_spec(cfg: RunConfig, layout: StudyLayout) -> DivergenceSpec:
    optimal = np.array(cfg.optimal, dtype=float)
    if optimal.shape[0] != layout.n_bins:
        raise InputError(
            f"--optimal has length {optimal.shape[0]} but the data has {layout.n_bins} bins"
        )
    weights = None
    if cfg.weights == "sixty-minus-midpoint":
        weights = layout.interval_length_s - layout.midpoints
    norm = Norm.L2_SQUARED if cfg.norm == "l2" else Norm.L1
    return DivergenceSpec(optimal=optimal, norm=norm, weights=weights)


def _interpretation(theta_e: float) -> str:
    if theta_e < 0.5:
        return "theta_e < 0.5: exposed group tolerates divergence from optimality more than controls"
    if theta_e > 0.5:
        return "theta_e > 0.5: exposed group tolerates divergence from optimality less than controls"
    return "theta_e = 0.5: both groups tolerate divergence from optimality equally"


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "null"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: str, scalars: dict, table: tuple[list[str], list[list]] | None) -> None:
    """Scalar values as '# key=value' comments, then an optional table."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for key, value in _flatten(scalars):
            fh.write(f"# {key}={_fmt_value(value)}\n")
        if table is not None:
            columns, rows = table
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow(_fmt_value(cell) for cell in row)


def _flatten(obj: dict, prefix: str = "") -> list[tuple[str, object]]:
    items: list[tuple[str, object]] = []
    for key in sorted(obj):
        value = obj[key]
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            items.extend(_flatten(value, prefix=f"{name}."))
        elif isinstance(value, (list, tuple)):
            items.append((name, ",".join(_fmt_value(v) for v in value)))
        else:
            items.append((name, value))
    return items


def cmd_estimate(cfg: RunConfig) -> int:
    ds, layout = _load_dataset(cfg)
    spec = _build_spec(cfg, layout)
    method = Method.CLOSED_FORM if cfg.method == "closed-form" else Method.GRID
    result = estimate_theta(ds, spec, method=method, grid_step=cfg.grid_step)
    interval = None
    if cfg.bootstrap is not None:
        lo, hi = bootstrap_ci(ds, spec, replicates=cfg.bootstrap, seed=cfg.seed, level=cfg.level)
        interval = {"lo": lo, "hi": hi, "replicates": cfg.bootstrap, "level": cfg.level}
    payload = {
        "config": _config_echo(cfg),
        "result": {
            "theta_e": result.theta_e,
            "objective_at_min": result.objective_at_min,
            "method": result.method.name,
            "clamped": result.clamped,
            "quadratic": {
                "var_u": result.quadratic[0],
                "cov_uv": result.quadratic[1],
                "var_v": result.quadratic[2],
            },
            "bootstrap": interval,
        },
    }
    if cfg.fmt == "json":
        _write_json(cfg.out, payload)
    else:
        _write_csv(cfg.out, payload, table=None)
    print(f"theta_e = {result.theta_e!r} ({_interpretation(result.theta_e)})")
    return 0


def cmd_curves(cfg: RunConfig) -> int:
    ds, layout = _load_dataset(cfg)
    spec = _build_spec(cfg, layout)
    n_intervals = int(round(1.0 / cfg.grid_step))
    grid = np.linspace(0.0, 1.0, n_intervals + 1)
    curves = reward_curves(ds, spec, grid)
    try:
        theta_hat = estimate_theta(ds, spec).theta_e
    except DegenerateObjectiveError:
        theta_hat = None
    gap = None
    if theta_hat is not None and curves.crossing_theta is not None:
        gap = abs(curves.crossing_theta - theta_hat)
    metadata = {
        "crossing_theta": curves.crossing_theta,
        "theta_e": theta_hat,
        "crossing_gap": gap,
    }
    if cfg.fmt == "json":
        _write_json(
            cfg.out,
            {
                "config": _config_echo(cfg),
                "metadata": metadata,
                "samples": {
                    "theta": curves.thetas.tolist(),
                    "mean_reward_exposed": curves.mean_reward_exposed.tolist(),
                    "mean_reward_control": curves.mean_reward_control.tolist(),
                },
            },
        )
    else:
        rows = [
            [float(t), float(e), float(c)]
            for t, e, c in zip(curves.thetas, curves.mean_reward_exposed, curves.mean_reward_control)
        ]
        _write_csv(
            cfg.out,
            {"config": _config_echo(cfg), "metadata": metadata},
            table=(["theta", "mean_reward_exposed", "mean_reward_control"], rows),
        )
    print(f"crossing_theta = {curves.crossing_theta!r}, theta_e = {theta_hat!r}")
    return 0


def cmd_simulate_mc(cfg: RunConfig) -> int:
    mc = McConfig(
        n_per_dataset=cfg.n[0],
        num_datasets=cfg.datasets,
        p_exposed=cfg.p_exposed,
        seed=cfg.seed,
        optimal_action=cfg.optimal[0],
    )
    policy = PolicyConfig()
    result = run_monte_carlo(mc, policy)
    summary = {
        "frac_theta_below_half": result.frac_theta_below_half,
        "frac_b1_above_zero": result.frac_b1_above_zero,
        "degenerate_count": result.degenerate_count,
        "replicates_used": len(result.theta_estimates),
    }
    if cfg.fmt == "json":
        _write_json(
            cfg.out,
            {
                "config": _config_echo(cfg),
                "policy": _policy_echo(policy),
                "summary": summary,
                "estimates": {
                    "theta": list(result.theta_estimates),
                    "b1": list(result.b1_estimates),
                },
            },
        )
    else:
        rows = [[t, b] for t, b in zip(result.theta_estimates, result.b1_estimates)]
        _write_csv(
            cfg.out,
            {"config": _config_echo(cfg), "policy": _policy_echo(policy), "summary": summary},
            table=(["theta", "b1"], rows),
        )
    print(
        f"frac(theta < 0.5) = {result.frac_theta_below_half:.4f}, "
        f"frac(b1 > 0) = {result.frac_b1_above_zero:.4f} "
        f"over {len(result.theta_estimates)} datasets"
    )
    return 0


def cmd_consistency(cfg: RunConfig) -> int:
    policy = PolicyConfig()
    rows = consistency_sweep(
        policy,
        ns=list(cfg.n),
        replicates=cfg.datasets,
        seed=cfg.seed,
        optimal_action=cfg.optimal[0],
    )
    table_rows = [[r.n, r.mean_theta, r.sd_theta] for r in rows]
    if cfg.fmt == "json":
        _write_json(
            cfg.out,
            {
                "config": _config_echo(cfg),
                "policy": _policy_echo(policy),
                "rows": [
                    {"n": r.n, "mean_theta": r.mean_theta, "sd_theta": r.sd_theta} for r in rows
                ],
            },
        )
    else:
        _write_csv(
            cfg.out,
            {"config": _config_echo(cfg), "policy": _policy_echo(policy)},
            table=(["n", "mean_theta", "sd_theta"], table_rows),
        )
    print("; ".join(f"n={r.n}: sd={r.sd_theta:.5f}" for r in rows))
    return 0


def cmd_ingest_check(cfg: RunConfig) -> int:
    violations: list[str] = []
    n = None
    dimension = None
    try:
        ds, _ = _load_dataset(cfg)
    except DivtolError as exc:
        violations.append(f"{type(exc).__name__}: {exc}")
    else:
        n = len(ds)
        dimension = ds.dimension
        violations.extend(validate_dataset(ds).violations)
    payload = {
        "config": _config_echo(cfg),
        "report": {"violations": violations, "n": n, "dimension": dimension},
    }
    if cfg.fmt == "json":
        _write_json(cfg.out, payload)
    else:
        rows = [[v] for v in violations]
        _write_csv(
            cfg.out,
            {"config": _config_echo(cfg), "n": n, "dimension": dimension},
            table=(["violation"], rows),
        )
    if violations:
        print(f"{len(violations)} violation(s) found")
        return 1
    print("clean")
    return 0


_DISPATCH = {
    "estimate": cmd_estimate,
    "curves": cmd_curves,
    "simulate-mc": cmd_simulate_mc,
    "consistency": cmd_consistency,
    "ingest-check": cmd_ingest_check,
}


def _emit_error(exc: Exception) -> None:
    obj = {"error": {"class": type(exc).__name__, "message": str(exc)}}
    print(json.dumps(obj, sort_keys=True), file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
        return _DISPATCH[cfg.command](cfg)
    except ConfigurationError as exc:
        _emit_error(exc)
        return 2
    except DivtolError as exc:
        _emit_error(exc)
        return 1


def entrypoint() -> None:
    sys.exit(main())
