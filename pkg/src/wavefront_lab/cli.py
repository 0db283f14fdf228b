"""Batch entry point: config ingestion, experiment dispatch, persistence.

Usage: ``wavefront-lab <subcommand> --config <path> --out <dir>`` with
subcommands simulate, speed, scaling, rescale, compare, contain, dual,
constants, kernels; ``plot`` renders a CSV table to a deterministic SVG.

Exit codes: 0 success, 2 config/validation error, 3 runtime error,
4 an assertion-style check failed (a bound violated, CIs disjoint, ...).
"""

from __future__ import annotations

import argparse
import datetime
import json
import math
import os
import sys

import numpy as np

from . import dual as dual_mod
from . import front as front_mod
from . import kernels as kernels_mod
from . import model as model_mod
from . import plots as plots_mod
from . import rng as rng_mod
from . import scaling as scaling_mod
from . import spde as spde_mod
from .errors import (
    ConfigurationError,
    DomainError,
    EstimationError,
    PreconditionError,
    SearchExhaustedError,
)
from .manifest import RunManifest

EXPERIMENTS = (
    "simulate",
    "speed",
    "scaling",
    "rescale",
    "compare",
    "contain",
    "dual",
    "constants",
    "kernels",
)

_VALIDATION_ERRORS = (
    ConfigurationError,
    DomainError,
    PreconditionError,
    SearchExhaustedError,
)


class CheckFailure(Exception):
    """An experiment ran but its certified property does not hold."""


def _require(cfg: dict, key: str, path: str = ""):
    if key not in cfg:
        raise ConfigurationError(f"missing required field {path}{key}")
    return cfg[key]


def _number(cfg: dict, key: str, path: str = "", default=None):
    if key not in cfg:
        if default is None:
            raise ConfigurationError(f"missing required field {path}{key}")
        return default
    value = cfg[key]
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigurationError(f"{path}{key} must be a number, got {value!r}")
    return value


def _scheme_from(cfg: dict, path: str = "scheme", seed_override=None) -> spde_mod.SchemeConfig:
    raw = _require(cfg, "scheme")
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path} must be a mapping")
    kwargs = {
        "dx": _number(raw, "dx", f"{path}."),
        "dt": _number(raw, "dt", f"{path}."),
        "window_cells": int(_number(raw, "window_cells", f"{path}.", 400)),
        "shift_trigger_margin": int(_number(raw, "shift_trigger_margin", f"{path}.", 20)),
        "zero_snap": _number(raw, "zero_snap", f"{path}.", 1e-12),
        "seed": int(_number(raw, "seed", f"{path}.", 0)),
    }
    if seed_override is not None:
        kwargs["seed"] = int(seed_override)
    try:
        return spde_mod.SchemeConfig(**kwargs)
    except ConfigurationError:
        raise


def _budget_from(cfg: dict, threads: int, seed_override=None) -> scaling_mod.ExperimentBudget:
    raw = _require(cfg, "budget")
    if not isinstance(raw, dict):
        raise ConfigurationError("budget must be a mapping")
    scheme = _scheme_from(raw, "budget.scheme")
    seed = int(_number(raw, "seed", "budget.", 0))
    if seed_override is not None:
        seed = int(seed_override)
    return scaling_mod.ExperimentBudget(
        n_realizations=int(_number(raw, "n_realizations", "budget.")),
        horizon=_number(raw, "horizon", "budget."),
        scheme=scheme,
        seed=seed,
        burn_in_fraction=_number(raw, "burn_in_fraction", "budget.", 0.3),
        record_dt=_number(raw, "record_dt", "budget.", 0.1),
        noise_snap_factor=_number(raw, "noise_snap_factor", "budget.", 0.5),
        threads=threads,
    )


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _run_simulate(cfg, out_dir, threads, seed, warnings):
    drift = model_mod.drift_from_dict(_require(cfg, "drift"))
    scheme = _scheme_from(cfg, seed_override=seed)
    epsilon = _number(cfg, "epsilon", default=0.0)
    horizon = _number(cfg, "horizon")
    record_dt = _number(cfg, "record_dt", default=scheme.dt)
    gen = rng_mod.stream(scheme.seed, "spde/0") if epsilon else None
    state = spde_mod.heaviside_state(scheme)
    traj = spde_mod.evolve(state, drift, epsilon, horizon, scheme, gen, record_dt=record_dt)
    spde_mod.front_series_to_csv(traj, os.path.join(out_dir, "front_series.csv"))
    spde_mod.snapshot_to_csv(traj.final_state, os.path.join(out_dir, "final_snapshot.csv"))
    if traj.n_shifts:
        warnings.append(f"window shifted {traj.n_shifts} times")


def _run_speed(cfg, out_dir, threads, seed, warnings):
    drift = model_mod.drift_from_dict(_require(cfg, "drift"))
    scheme = _scheme_from(cfg, seed_override=seed)
    epsilon = _number(cfg, "epsilon", default=0.0)
    n_real = int(_number(cfg, "n_realizations", default=1))
    run_scheme = spde_mod.noise_snapped_scheme(
        scheme, epsilon, _number(cfg, "noise_snap_factor", default=0.5)
    )
    ens = spde_mod.run_ensemble(
        drift,
        epsilon,
        _number(cfg, "horizon"),
        run_scheme,
        n_real,
        record_dt=_number(cfg, "record_dt", default=0.1),
        threads=threads,
    )
    for idx, exc in ens.errors.items():
        warnings.append(f"realization {idx} failed: {exc}")
    est = front_mod.estimate_speed(
        ens.front_series,
        burn_in_fraction=_number(cfg, "burn_in_fraction", default=0.3),
        seed=run_scheme.seed,
    )
    _write_json(os.path.join(out_dir, "speed.json"), est.to_json_dict())
    first = next((t for t in ens.trajectories if t is not None), None)
    if first is not None:
        spde_mod.front_series_to_csv(first, os.path.join(out_dir, "front_series.csv"))


def _run_scaling(cfg, out_dir, threads, seed, warnings):
    drift = model_mod.drift_from_dict(_require(cfg, "drift"))
    scheme = _scheme_from(cfg, seed_override=None)
    grid = _require(cfg, "epsilon_grid")
    plan = scaling_mod.ScalingPlan(
        drift=drift,
        epsilon_grid=grid,
        realizations_per_point=int(_number(cfg, "realizations_per_point")),
        horizon=_number(cfg, "horizon"),
        scheme=scheme,
        seed=int(seed if seed is not None else _number(cfg, "seed", default=0)),
        burn_in_fraction=_number(cfg, "burn_in_fraction", default=0.3),
        record_dt=_number(cfg, "record_dt", default=0.1),
        noise_snap_factor=_number(cfg, "noise_snap_factor", default=0.5),
        threads=threads,
    )
    table = scaling_mod.speed_vs_epsilon(plan)
    for row in table.rows:
        if row.error is not None:
            warnings.append(f"epsilon {row.epsilon}: {row.error}")
    table_path = os.path.join(out_dir, "scaling.csv")
    table.to_csv(table_path)
    p = drift.p if drift.p is not None else 0.5
    fit = scaling_mod.fit_exponent(table, p=p, seed=plan.seed)
    _write_json(os.path.join(out_dir, "exponent.json"), fit.to_json_dict())
    plots_mod.emit_plot(table_path, "loglog_scaling", os.path.join(out_dir, "scaling.svg"), p=p)


def _run_rescale(cfg, out_dir, threads, seed, warnings):
    drift = model_mod.drift_from_dict(_require(cfg, "drift"))
    budget = _budget_from(cfg, threads, seed_override=seed)
    report = scaling_mod.rescaling_check(
        drift, _number(cfg, "c"), _number(cfg, "epsilon"), budget
    )
    _write_json(os.path.join(out_dir, "rescale.json"), report.to_json_dict())
    if not report.compatible:
        raise CheckFailure(
            f"rescaling CIs disjoint: V_lhs in [{report.lhs.ci_low:.4g}, {report.lhs.ci_high:.4g}], "
            f"scaled V_rhs in [{report.rhs_scaled.ci_low:.4g}, {report.rhs_scaled.ci_high:.4g}]"
        )


def _run_compare(cfg, out_dir, threads, seed, warnings):
    drift_low = model_mod.drift_from_dict(_require(cfg, "drift_low"), "drift_low")
    drift_high = model_mod.drift_from_dict(_require(cfg, "drift_high"), "drift_high")
    budget = _budget_from(cfg, threads, seed_override=seed)
    report = scaling_mod.comparison_check(drift_low, drift_high, _number(cfg, "epsilon"), budget)
    _write_json(os.path.join(out_dir, "compare.json"), report.to_json_dict())
    if not report.ordered:
        raise CheckFailure(
            f"speed ordering violated: V_low {report.lhs.slope:.4g} > V_high {report.rhs.slope:.4g} + slack"
        )


def _ledger_from(cfg) -> model_mod.ParameterLedger:
    raw = _require(cfg, "ledger")
    if not isinstance(raw, dict):
        raise ConfigurationError("ledger must be a mapping")
    if "epsilon" in raw:
        return model_mod.derive_constants(
            _number(raw, "p", "ledger."),
            _number(raw, "theta", "ledger."),
            _number(raw, "epsilon", "ledger."),
        )
    return model_mod.ledger_from_wave_speed(
        _number(raw, "p", "ledger."),
        _number(raw, "theta", "ledger."),
        _number(raw, "v", "ledger."),
        gamma=raw.get("gamma"),
    )


def _run_contain(cfg, out_dir, threads, seed, warnings):
    ledger = _ledger_from(cfg)
    budget = _budget_from(cfg, threads, seed_override=seed)
    drift = (
        model_mod.drift_from_dict(cfg["drift"]) if "drift" in cfg else None
    )
    report = scaling_mod.containment_experiment(
        ledger, budget, drift=drift, d=cfg.get("d")
    )
    _write_json(os.path.join(out_dir, "contain.json"), report.to_json_dict())


def _run_dual(cfg, out_dir, threads, seed, warnings):
    scheme = _scheme_from(cfg)
    raw = _require(cfg, "budget")
    budget = dual_mod.DualityBudget(
        n_spde=int(_number(raw, "n_spde", "budget.", 200)),
        n_dual=int(_number(raw, "n_dual", "budget.", 4000)),
        dual_dt=_number(raw, "dual_dt", "budget.", 0.002),
        delta=_number(raw, "delta", "budget.", 0.05),
        seed=int(seed if seed is not None else _number(raw, "seed", "budget.", 0)),
    )
    rows = dual_mod.duality_gap(
        _number(cfg, "t"),
        _require(cfg, "x_list"),
        _number(cfg, "epsilon"),
        budget,
        scheme,
    )
    payload = [
        {
            "x": r.x,
            "lhs": r.lhs,
            "rhs": r.rhs,
            "gap": r.gap,
            "combined_se": r.combined_se,
            "holds": r.holds(),
        }
        for r in rows
    ]
    _write_json(os.path.join(out_dir, "dual.json"), payload)
    bad = [r for r in rows if not r.holds()]
    if bad:
        raise CheckFailure(
            "duality gap beyond 3 standard errors at x = "
            + ", ".join(f"{r.x} (gap {r.gap:.4g}, se {r.combined_se:.4g})" for r in bad)
        )


def _run_constants(cfg, out_dir, threads, seed, warnings):
    ledger = model_mod.derive_constants(
        _number(cfg, "p"), _number(cfg, "theta"), _number(cfg, "epsilon")
    )
    _write_json(os.path.join(out_dir, "ledger.json"), ledger.to_json_dict())
    for name, ok in ledger.certificates.items():
        if not ok:
            warnings.append(f"certificate {name} is false at this epsilon")


def _run_kernels(cfg, out_dir, threads, seed, warnings):
    v_list = cfg.get("v_list", [0.5, 1.0, 2.0])
    n_pairs = int(_number(cfg, "n_pairs", default=20))
    pair_seed = int(seed if seed is not None else _number(cfg, "seed", default=0))
    quad = kernels_mod.QuadratureSpec(n_nodes=int(_number(cfg, "quad_nodes", default=200)))
    out = {"moving": [], "static": []}
    failures = []
    for v in v_list:
        gen = rng_mod.stream(pair_seed, f"kernel-pairs/moving/{v!r}")
        rep = kernels_mod.verify_difference_bound_moving(
            v, kernels_mod.random_admissible_pairs_moving(v, n_pairs, gen), quad
        )
        out["moving"].append(rep.to_json_dict())
        if not rep.all_hold:
            failures.append(f"moving bound violated at v={v} (max ratio {rep.max_ratio:.4g})")
        gen = rng_mod.stream(pair_seed, f"kernel-pairs/static/{v!r}")
        rep = kernels_mod.verify_difference_bound_static(
            v, kernels_mod.random_admissible_pairs_static(v, n_pairs, gen), quad
        )
        out["static"].append(rep.to_json_dict())
        if not rep.all_hold:
            failures.append(f"static bound violated at v={v} (max ratio {rep.max_ratio:.4g})")
    if "mc" in cfg:
        mc = cfg["mc"]
        rep = kernels_mod.killed_kernel_mc(
            v=_number(mc, "v", "mc.", 1.0),
            s=_number(mc, "s", "mc.", 0.0),
            y=_number(mc, "y", "mc.", -1.0),
            t=_number(mc, "t", "mc.", 0.5),
            bin_centers=tuple(mc.get("bin_centers", (-0.5,))),
            bin_width=_number(mc, "bin_width", "mc.", 0.1),
            n_paths=int(_number(mc, "n_paths", "mc.", 10**7)),
            dt=_number(mc, "dt", "mc.", 0.01),
            seed=pair_seed,
        )
        out["mc"] = rep.to_json_dict()
        if rep.max_rel_error > 0.02:
            failures.append(
                f"killed kernel Monte Carlo mismatch {rep.max_rel_error:.4f} exceeds 2%"
            )
    _write_json(os.path.join(out_dir, "kernels.json"), out)
    if failures:
        raise CheckFailure("; ".join(failures))


_RUNNERS = {
    "simulate": _run_simulate,
    "speed": _run_speed,
    "scaling": _run_scaling,
    "rescale": _run_rescale,
    "compare": _run_compare,
    "contain": _run_contain,
    "dual": _run_dual,
    "constants": _run_constants,
    "kernels": _run_kernels,
}


def run(config_path, out_dir, threads=None, seed=None, subcommand=None) -> int:
    """Execute the experiment named by the config; returns the exit code."""
    warnings: list = []
    try:
        try:
            with open(config_path) as fh:
                cfg = json.load(fh)
        except FileNotFoundError:
            print(f"config file not found: {config_path}", file=sys.stderr)
            return 2
        except json.JSONDecodeError as exc:
            print(f"config is not valid JSON: {exc}", file=sys.stderr)
            return 2
        if not isinstance(cfg, dict):
            raise ConfigurationError("config must be a JSON object")
        experiment = cfg.get("experiment", subcommand)
        if experiment is None:
            raise ConfigurationError("missing required field experiment")
        if subcommand is not None and experiment != subcommand:
            raise ConfigurationError(
                f"experiment field {experiment!r} does not match subcommand {subcommand!r}"
            )
        if experiment not in _RUNNERS:
            raise ConfigurationError(
                f"experiment must be one of {sorted(_RUNNERS)}, got {experiment!r}"
            )
        if threads is None:
            env = os.environ.get("WAVEFRONT_LAB_THREADS")
            threads = int(env) if env else (os.cpu_count() or 1)
        os.makedirs(out_dir, exist_ok=True)

        manifest = RunManifest(
            experiment=experiment,
            config=cfg,
            master_seed=int(seed if seed is not None else cfg.get("seed", 0)),
            started=datetime.datetime.now(datetime.timezone.utc).isoformat(),
        )
        try:
            _RUNNERS[experiment](cfg, out_dir, threads, seed, warnings)
            code = 0
        except CheckFailure as exc:
            print(f"check failed: {exc}", file=sys.stderr)
            warnings.append(str(exc))
            code = 4
        manifest.warnings = warnings
        manifest.finished = datetime.datetime.now(datetime.timezone.utc).isoformat()
        manifest.write(os.path.join(out_dir, "manifest.json"))
        return code
    except _VALIDATION_ERRORS as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wavefront-lab",
        description="Desk-scale lab for noisy front propagation experiments.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
    p = sub.add_parser("plot", help="render a CSV table to a deterministic SVG")
    p.add_argument("--table", required=True)
    p.add_argument("--kind", required=True, choices=plots_mod.PLOT_KINDS)
    p.add_argument("--out", required=True)
    p.add_argument("--p", type=float, default=0.5)

    args = parser.parse_args(argv)
    if args.subcommand == "plot":
        try:
            plots_mod.emit_plot(args.table, args.kind, args.out, p=args.p)
            return 0
        except _VALIDATION_ERRORS as exc:
            print(f"invalid plot request: {exc}", file=sys.stderr)
            return 2
        except FileNotFoundError as exc:
            print(f"table not found: {exc}", file=sys.stderr)
            return 2
        except Exception as exc:
            print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 3
    return run(args.config, args.out, threads=args.threads, seed=args.seed, subcommand=args.subcommand)


if __name__ == "__main__":
    sys.exit(main())
