"""Desk-scale experiments: noise scaling, rescaling, comparison, containment.

Each experiment runs seeded ensembles through the lattice integrator and
reduces them to speed estimates or empirical probabilities with explicit
uncertainty.  Stochastic runs use the noise-variance-scaled snap threshold
(see :func:`wavefront_lab.spde.noise_snapped_scheme`) so the measured fronts
are noise-limited.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import front as front_mod
from . import rng as rng_mod
from . import spde as spde_mod
from .errors import DomainError, EstimationError, PreconditionError
from .front import SpeedEstimate
from .model import DriftSpec, ParameterLedger, eval_drift, profile_F
from .spde import SchemeConfig


@dataclass(frozen=True)
class ExperimentBudget:
    """Ensemble size and integration window for one experiment."""

    n_realizations: int
    horizon: float
    scheme: SchemeConfig
    seed: int = 0
    burn_in_fraction: float = 0.3
    record_dt: float = 0.1
    noise_snap_factor: float = 0.5
    threads: int = 1


@dataclass(frozen=True)
class ScalingPlan:
    """Grid of noise strengths for the speed-vs-noise study."""

    drift: DriftSpec
    epsilon_grid: Sequence[float]
    realizations_per_point: int
    horizon: float
    scheme: SchemeConfig
    seed: int = 0
    burn_in_fraction: float = 0.3
    record_dt: float = 0.1
    noise_snap_factor: float = 0.5
    threads: int = 1

    def __post_init__(self):
        grid = tuple(float(e) for e in self.epsilon_grid)
        if len(grid) < 3:
            raise PreconditionError("epsilon grid needs at least 3 points")
        if any(e <= 0 for e in grid):
            raise PreconditionError("epsilon grid must be positive (stochastic study only)")
        if any(a <= b for a, b in zip(grid, grid[1:])):
            raise PreconditionError("epsilon grid must be strictly decreasing")
        object.__setattr__(self, "epsilon_grid", grid)


@dataclass
class ScalingRow:
    epsilon: float
    estimate: Optional[SpeedEstimate]
    manifest: dict
    error: Optional[Exception] = None


@dataclass
class ScalingTable:
    rows: list

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epsilon", "V", "ci_low", "ci_high", "n"])
            for row in self.rows:
                if row.estimate is None:
                    continue
                e = row.estimate
                w.writerow(
                    [repr(row.epsilon), repr(e.slope), repr(e.ci_low), repr(e.ci_high), e.n_realizations]
                )


def _ensemble_speed(
    drift: DriftSpec,
    epsilon: float,
    horizon: float,
    scheme: SchemeConfig,
    n_realizations: int,
    seed: int,
    stream_prefix: str,
    burn_in_fraction: float,
    record_dt: float,
    noise_snap_factor: float,
    threads: int = 1,
    initial=None,
) -> SpeedEstimate:
    run_scheme = spde_mod.noise_snapped_scheme(scheme, epsilon, noise_snap_factor)
    ens = spde_mod.run_ensemble(
        drift,
        epsilon,
        horizon,
        run_scheme,
        n_realizations,
        master_seed=seed,
        record_dt=record_dt,
        initial=initial,
        stream_prefix=stream_prefix,
        threads=threads,
    )
    if ens.errors:
        idx, exc = next(iter(ens.errors.items()))
        raise EstimationError(f"realization {idx} failed: {exc}") from exc
    return front_mod.estimate_speed(
        ens.front_series, burn_in_fraction=burn_in_fraction, seed=seed
    )


def speed_vs_epsilon(plan: ScalingPlan) -> ScalingTable:
    """One ensemble speed estimate per grid noise strength.

    Row errors are attached to the row, not raised; each row's manifest
    records everything needed to reproduce it.
    """
    rows = []
    for epsilon in plan.epsilon_grid:
        manifest = {
            "drift": plan.drift.to_dict(),
            "epsilon": epsilon,
            "horizon": plan.horizon,
            "scheme": spde_mod.noise_snapped_scheme(
                plan.scheme, epsilon, plan.noise_snap_factor
            ).to_dict(),
            "n_realizations": plan.realizations_per_point,
            "seed": plan.seed,
            "burn_in_fraction": plan.burn_in_fraction,
            "record_dt": plan.record_dt,
            "stream_prefix": f"scaling/{epsilon!r}",
        }
        try:
            est = _ensemble_speed(
                plan.drift,
                epsilon,
                plan.horizon,
                plan.scheme,
                plan.realizations_per_point,
                plan.seed,
                f"scaling/{epsilon!r}",
                plan.burn_in_fraction,
                plan.record_dt,
                plan.noise_snap_factor,
                plan.threads,
            )
            rows.append(ScalingRow(epsilon=epsilon, estimate=est, manifest=manifest))
        except Exception as exc:
            rows.append(ScalingRow(epsilon=epsilon, estimate=None, manifest=manifest, error=exc))
    return ScalingTable(rows=rows)


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    reference: float

    def to_json_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "reference": self.reference,
        }


def fit_exponent(table: ScalingTable, p: float = 0.5, n_boot: int = 1000, seed: int = 0) -> ExponentFit:
    """Log-log slope of speed against noise strength with a bootstrap CI.

    Per-row speed uncertainty (the bootstrap CI of each ensemble estimate)
    is propagated by resampling each row's speed from a normal approximation
    of its CI and refitting.
    """
    rows = [r for r in table.rows if r.estimate is not None]
    if len(rows) < 3:
        raise EstimationError("exponent fit needs at least 3 successful rows")
    V = np.array([r.estimate.slope for r in rows])
    if np.any(V <= 0):
        raise EstimationError("exponent fit needs strictly positive speeds")
    le = np.log(np.array([r.epsilon for r in rows]))
    lv = np.log(V)
    slope, intercept = np.polyfit(le, lv, 1)

    sd = np.array(
        [max((r.estimate.ci_high - r.estimate.ci_low) / 3.92, 0.0) for r in rows]
    )
    gen = rng_mod.stream(seed, "exponent-bootstrap")
    slopes = np.empty(n_boot)
    for b in range(n_boot):
        Vb = V + sd * gen.standard_normal(V.size)
        Vb = np.maximum(Vb, 1e-12)
        slopes[b] = np.polyfit(le, np.log(Vb), 1)[0]
    ci_low, ci_high = np.percentile(slopes, [2.5, 97.5])
    return ExponentFit(
        slope=float(slope),
        intercept=float(intercept),
        ci_low=min(float(ci_low), float(slope)),
        ci_high=max(float(ci_high), float(slope)),
        reference=-2.0 * (1.0 - p) / (1.0 + p),
    )


@dataclass(frozen=True)
class RescaleReport:
    c: float
    lhs: SpeedEstimate
    rhs_scaled: SpeedEstimate
    compatible: bool

    def to_json_dict(self) -> dict:
        return {
            "c": self.c,
            "V_lhs": self.lhs.to_json_dict(),
            "V_rhs_scaled": self.rhs_scaled.to_json_dict(),
            "compatible": self.compatible,
        }


def rescaling_check(
    drift: DriftSpec, c: float, epsilon: float, budget: ExperimentBudget
) -> RescaleReport:
    """Test V_{f,eps} = sqrt(c) * V_{f/c, eps*c^{-1/4}} at ensemble level.

    Realization r of either side draws from the stream keyed by r alone, so
    c=1 reproduces the left side bit-for-bit on the right.
    """
    if c <= 0:
        raise DomainError("rescaling factor must be positive")
    if epsilon <= 0:
        raise DomainError("rescaling check needs positive noise strength")

    lhs = _ensemble_speed(
        drift,
        epsilon,
        budget.horizon,
        budget.scheme,
        budget.n_realizations,
        budget.seed,
        "rescale",
        budget.burn_in_fraction,
        budget.record_dt,
        budget.noise_snap_factor,
        budget.threads,
    )
    rhs_raw = _ensemble_speed(
        drift.scaled(1.0 / c),
        epsilon * c**-0.25,
        budget.horizon * math.sqrt(c),
        budget.scheme,
        budget.n_realizations,
        budget.seed,
        "rescale",
        budget.burn_in_fraction,
        budget.record_dt,
        budget.noise_snap_factor,
        budget.threads,
    )
    root_c = math.sqrt(c)
    rhs = SpeedEstimate(
        slope=rhs_raw.slope * root_c,
        intercept=rhs_raw.intercept * root_c,
        ci_low=rhs_raw.ci_low * root_c,
        ci_high=rhs_raw.ci_high * root_c,
        burn_in_fraction=rhs_raw.burn_in_fraction,
        n_realizations=rhs_raw.n_realizations,
    )
    compatible = lhs.ci_low <= rhs.ci_high and rhs.ci_low <= lhs.ci_high
    return RescaleReport(c=c, lhs=lhs, rhs_scaled=rhs, compatible=compatible)


def tent_minorant(epsilon: float, p: float, delta: float = 1.0) -> tuple:
    """Tent minorant of the clipped power drift at noise strength epsilon.

    Returns ``(DriftSpec, q)`` with width ``2*eps^q`` and height ``eps^{q p}``
    where ``q = 4/(1+p)``; requires the tent to fit under the clip level.
    """
    if epsilon <= 0:
        raise DomainError("tent construction needs positive epsilon")
    q = 4.0 / (1.0 + p)
    l = 2.0 * epsilon**q
    h = epsilon ** (q * p)
    if l > delta:
        raise PreconditionError(
            f"tent width {l} exceeds clip level {delta}; epsilon too large for the construction"
        )
    return DriftSpec.tent(l=l, h=h), q


@dataclass(frozen=True)
class ComparisonReport:
    lhs: SpeedEstimate
    rhs: SpeedEstimate
    ordered: bool
    max_violation: float  # largest f_low - f_high on the domination grid

    def to_json_dict(self) -> dict:
        return {
            "V_low": self.lhs.to_json_dict(),
            "V_high": self.rhs.to_json_dict(),
            "ordered": self.ordered,
            "max_violation": self.max_violation,
        }


def comparison_check(
    drift_low: DriftSpec,
    drift_high: DriftSpec,
    epsilon: float,
    budget: ExperimentBudget,
    grid_points: int = 10_000,
) -> ComparisonReport:
    """Ensemble speed ordering for pointwise-ordered drifts.

    Domination is verified on a dense grid first; the speed ordering is then
    tested with independent ensembles and a CI-width slack (the discrete
    scheme is not provably pathwise monotone, so the check is statistical).
    """
    z = np.linspace(0.0, 1.0, grid_points)
    gap = np.asarray(eval_drift(drift_low, z)) - np.asarray(eval_drift(drift_high, z))
    max_violation = float(gap.max())
    if max_violation > 1e-9:
        i = int(np.argmax(gap))
        raise PreconditionError(
            f"drift domination fails on the grid: f_low({z[i]:.4f}) exceeds f_high by {gap[i]:.3g}"
        )

    lhs = _ensemble_speed(
        drift_low,
        epsilon,
        budget.horizon,
        budget.scheme,
        budget.n_realizations,
        budget.seed,
        "compare/low",
        budget.burn_in_fraction,
        budget.record_dt,
        budget.noise_snap_factor,
        budget.threads,
    )
    rhs = _ensemble_speed(
        drift_high,
        epsilon,
        budget.horizon,
        budget.scheme,
        budget.n_realizations,
        budget.seed,
        "compare/high",
        budget.burn_in_fraction,
        budget.record_dt,
        budget.noise_snap_factor,
        budget.threads,
    )
    slack = (lhs.ci_high - lhs.ci_low + rhs.ci_high - rhs.ci_low) / 2.0
    ordered = lhs.slope <= rhs.slope + slack
    return ComparisonReport(lhs=lhs, rhs=rhs, ordered=ordered, max_violation=max_violation)


@dataclass(frozen=True)
class ContainmentReport:
    probability: float
    wilson_low: float
    wilson_high: float
    n_realizations: int
    n_contained: int

    def to_json_dict(self) -> dict:
        return {
            "probability": self.probability,
            "wilson_low": self.wilson_low,
            "wilson_high": self.wilson_high,
            "n_realizations": self.n_realizations,
            "n_contained": self.n_contained,
        }


def _wilson(k: int, n: int, z: float = 1.96) -> tuple:
    if n == 0:
        return 0.0, 1.0
    phat = k / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def containment_experiment(
    ledger: ParameterLedger,
    budget: ExperimentBudget,
    drift: Optional[DriftSpec] = None,
    d: Optional[float] = None,
) -> ContainmentReport:
    """Fraction of realizations staying below the shifted profile envelope.

    Starts from 1 ^ F and checks ``u_{t,x} <= 1 ^ F(x - d*v*T)`` at every
    recorded step over [0, T].  The bound from the construction is only
    asserted in the paper regime; here the probability is reported with a
    Wilson interval.
    """
    ledger.require_consistent()
    if abs(math.log10(ledger.v)) > 3:
        raise DomainError(
            f"wave speed {ledger.v} outside simulatable magnitude (|log10 v| > 3)"
        )
    shift_d = d if d is not None else ledger.d
    if shift_d is None:
        raise PreconditionError("containment needs the envelope shift constant d")
    if budget.n_realizations == 0:
        return ContainmentReport(0.0, 0.0, 1.0, 0, 0)
    drift = drift if drift is not None else DriftSpec.power_clipped(ledger.p, 1.0)
    epsilon = ledger.epsilon if ledger.epsilon is not None else 0.0

    scheme = spde_mod.noise_snapped_scheme(budget.scheme, epsilon, budget.noise_snap_factor)
    initial = spde_mod.profile_state(ledger, scheme)
    T = min(ledger.T, budget.horizon)
    offset = shift_d * ledger.v * ledger.T
    n_contained = 0
    for r in range(budget.n_realizations):
        gen = rng_mod.stream(budget.seed, f"contain/{r}") if epsilon > 0 else None
        state = initial.copy()
        n_steps = max(1, int(round(T / scheme.dt)))
        stride = max(1, int(round(budget.record_dt / scheme.dt)))
        contained = True
        for k in range(1, n_steps + 1):
            state = spde_mod.step(state, drift, epsilon, scheme, gen)
            if k % stride == 0 or k == n_steps:
                envelope = np.minimum(1.0, profile_F(state.positions - offset, ledger))
                if np.any(state.values > envelope + 1e-12):
                    contained = False
                    break
        if contained:
            n_contained += 1
        if epsilon == 0:
            # deterministic run: every realization is identical
            n_contained *= budget.n_realizations
            break
    lo, hi = _wilson(n_contained, budget.n_realizations)
    return ContainmentReport(
        probability=n_contained / budget.n_realizations,
        wilson_low=lo,
        wilson_high=hi,
        n_realizations=budget.n_realizations,
        n_contained=n_contained,
    )
