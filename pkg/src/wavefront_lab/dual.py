"""Branching-coalescing Brownian motion and its duality with the SPDE.

The offspring law is the heavy-tailed family with generating function
``g(s) = s - s(1-s)**p``: all mass on n >= 2, tail ~ n**(-1-p), infinite
mean.  Particles move as Brownian motions with generator d^2/dx^2 (variance
2t), branch at rate 1, and pairwise coalesce at rate eps**2 per unit
intersection local time, approximated by an occupation window of width
``delta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import CapacityError, DomainError, EmptySystemError

_TABLE_MAX = 128


def offspring_pmf(p: float, n: int) -> float:
    """Probability of n offspring under the heavy-tailed law, n >= 2."""
    if not (0 < p < 1):
        raise DomainError(f"offspring exponent must lie in (0,1), got {p}")
    if n < 2 or int(n) != n:
        raise DomainError(f"offspring count must be an integer >= 2, got {n}")
    # q_n = p * Gamma(n-1-p) / (Gamma(1-p) * Gamma(n)), evaluated in log space
    return math.exp(
        math.log(p) + gammaln(n - 1 - p) - gammaln(1 - p) - gammaln(n)
    )


def offspring_pmf_array(p: float, n_max: int) -> np.ndarray:
    """Vector q[0..n_max] of offspring probabilities (q0 = q1 = 0)."""
    if not (0 < p < 1):
        raise DomainError(f"offspring exponent must lie in (0,1), got {p}")
    q = np.zeros(n_max + 1)
    n = np.arange(2, n_max + 1)
    q[2:] = np.exp(math.log(p) + gammaln(n - 1 - p) - gammaln(1 - p) - gammaln(n))
    return q


def offspring_tail(p: float, n: int) -> float:
    """Tail mass sum_{m > n} q_m, evaluated exactly in log space."""
    if n < 1:
        return 1.0
    return math.exp(gammaln(n - p) - gammaln(n) - gammaln(1 - p))


def _sibuya_survival(p: float, m: np.ndarray) -> np.ndarray:
    """P(S > m) for the Sibuya variable S with P(S=n | S>=n) = p/n."""
    m = np.asarray(m, dtype=float)
    return np.exp(gammaln(m + 1 - p) - gammaln(m + 1) - gammaln(1 - p))


@dataclass
class OffspringSampler:
    """Sampler for the heavy-tailed offspring law with a hard cap.

    The law has infinite mean, so a single draw can be astronomically
    large; draws above ``n_max`` are truncated to ``n_max`` and counted in
    ``cap_hits`` rather than silently clipped.
    """

    p: float
    n_max: int = 10**6
    cap_hits: int = 0
    _table: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not (0 < self.p < 1):
            raise DomainError(f"offspring exponent must lie in (0,1), got {self.p}")
        self._table = _sibuya_survival(self.p, np.arange(_TABLE_MAX + 1))

    def tail_beyond_cap(self) -> float:
        """Analytic probability that a raw draw exceeds the cap."""
        return float(_sibuya_survival(self.p, np.array([self.n_max - 1.0]))[0])


def sample_offspring(sampler: OffspringSampler, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw offspring counts; returns a scalar when ``size`` is None.

    Uses exact inversion of the Sibuya survival function: a precomputed
    table covers small values, the algebraic tail is inverted through its
    asymptotic form and corrected locally with exact log-gamma evaluations.
    """
    scalar = size is None
    n_draw = 1 if scalar else int(size)
    u = rng.random(n_draw)
    s = np.empty(n_draw, dtype=np.int64)

    table = sampler._table
    small = u > table[_TABLE_MAX]
    if small.any():
        # S = m iff Q(m) < u <= Q(m-1); table is descending in m
        idx = np.searchsorted(table[::-1], u[small], side="left")
        s[small] = _TABLE_MAX + 1 - idx
    big = ~small
    if big.any():
        ub = u[big]
        guess = np.floor((ub * math.gamma(1 - sampler.p)) ** (-1.0 / sampler.p)).astype(np.int64)
        guess = np.clip(guess, _TABLE_MAX, None)
        # walk the exact survival function to the smallest m with Q(m) < u
        while True:
            bad = _sibuya_survival(sampler.p, guess) >= ub
            if not bad.any():
                break
            guess[bad] += 1
        while True:
            down = (guess > 1) & (_sibuya_survival(sampler.p, guess - 1) < ub)
            if not down.any():
                break
            guess[down] -= 1
        s[big] = guess

    n = 1 + s
    over = n > sampler.n_max
    sampler.cap_hits += int(over.sum())
    n = np.minimum(n, sampler.n_max)
    return int(n[0]) if scalar else n


def drift_from_pgf(p: float, z, n_terms: int = 10**5):
    """Truncated-series drift 1 - z - g(1-z); converges to z**p (1-z)."""
    if n_terms < 2:
        raise DomainError("series truncation must keep at least the n=2 term")
    arr = np.asarray(z, dtype=float)
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise DomainError("drift argument must lie in [0,1]")
    q = offspring_pmf_array(p, n_terms)[2:]
    n = np.arange(2, n_terms + 1, dtype=float)

    def _scalar(zz: float) -> float:
        s = 1.0 - zz
        if s <= 0.0:
            return 0.0
        g = float(np.dot(q, np.exp(n * math.log(s)))) if s > 0 else 0.0
        return 1.0 - zz - g

    if arr.ndim == 0:
        return _scalar(float(arr))
    return np.array([_scalar(zz) for zz in arr.ravel()]).reshape(arr.shape)


@dataclass
class ParticleSystem:
    """State of a branching-coalescing particle system."""

    positions: np.ndarray
    time: float = 0.0
    p: Optional[float] = None  # None selects binary branching (q2 = 1)
    branch_rate: float = 1.0
    coalescence_strength: float = 1.0  # eps**2, per unit intersection local time
    particle_cap: int = 10**6
    cap_hits: int = 0
    sampler: Optional[OffspringSampler] = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.p is not None and self.sampler is None:
            self.sampler = OffspringSampler(self.p)

    @classmethod
    def single(cls, x: float = 0.0, **kwargs) -> "ParticleSystem":
        return cls(positions=np.array([x]), **kwargs)

    @property
    def count(self) -> int:
        return self.positions.size


def rightmost(system: ParticleSystem) -> float:
    if system.count == 0:
        raise EmptySystemError("no particles")
    return float(system.positions.max())


def step_system(
    system: ParticleSystem, dt: float, delta: float, rng: np.random.Generator
) -> ParticleSystem:
    """Advance the system by dt: move, branch, then coalesce.

    Motion has variance 2*dt per particle.  Branching replaces a particle
    by n copies at its position with per-step probability 1 - exp(-rate*dt).
    Every unordered pair closer than ``delta`` coalesces (drops the
    right-hand member) with probability 1 - exp(-eps^2 dt / (2 delta)).
    """
    if dt < 0 or delta <= 0:
        raise DomainError("need dt >= 0 and delta > 0")
    if dt == 0:
        return system

    x = system.positions + rng.normal(0.0, math.sqrt(2.0 * dt), size=system.count)

    p_branch = 1.0 - math.exp(-system.branch_rate * dt)
    branching = rng.random(x.size) < p_branch
    if branching.any():
        idx = np.flatnonzero(branching)
        if system.p is None:
            extra_counts = np.ones(idx.size, dtype=np.int64)  # binary: one extra copy
        else:
            extra_counts = sample_offspring(system.sampler, rng, size=idx.size) - 1
        x = np.concatenate([x, np.repeat(x[idx], extra_counts)])

    if system.coalescence_strength > 0.0 and x.size > 1:
        p_coal = 1.0 - math.exp(-system.coalescence_strength * dt / (2.0 * delta))
        order = np.argsort(x, kind="stable")
        xs = x[order]
        alive = np.ones(xs.size, dtype=bool)
        for i in range(xs.size - 1):
            if not alive[i]:
                continue
            j = i + 1
            while j < xs.size and xs[j] - xs[i] < delta:
                if alive[j] and rng.random() < p_coal:
                    alive[j] = False
                j += 1
        x = xs[alive]

    if x.size > system.particle_cap:
        partial = ParticleSystem(
            positions=x,
            time=system.time + dt,
            p=system.p,
            branch_rate=system.branch_rate,
            coalescence_strength=system.coalescence_strength,
            particle_cap=system.particle_cap,
            cap_hits=system.cap_hits,
            sampler=system.sampler,
        )
        raise CapacityError(
            f"particle count {x.size} exceeds cap {system.particle_cap}", partial_state=partial
        )

    return ParticleSystem(
        positions=x,
        time=system.time + dt,
        p=system.p,
        branch_rate=system.branch_rate,
        coalescence_strength=system.coalescence_strength,
        particle_cap=system.particle_cap,
        cap_hits=system.sampler.cap_hits if system.sampler else system.cap_hits,
        sampler=system.sampler,
    )


@dataclass(frozen=True)
class DualityBudget:
    n_spde: int = 200
    n_dual: int = 4000
    dual_dt: float = 0.002
    delta: float = 0.05
    seed: int = 0


@dataclass(frozen=True)
class DualityRow:
    x: float
    lhs: float  # P(rightmost dual particle > x)
    rhs: float  # mean SPDE field value at x
    gap: float
    combined_se: float

    def holds(self, n_se: float = 3.0) -> bool:
        return abs(self.gap) <= n_se * self.combined_se


def duality_gap(t, x_list, epsilon, budget, scheme) -> list:
    """Monte Carlo check of P(R_dual(t) > x) = E[u_{t,x}] for binary branching.

    The SPDE side runs the KPP drift from Heaviside data; the dual side runs
    binary branching-coalescing Brownian motion from one particle at 0.
    """
    from . import front as front_mod
    from . import rng as rng_mod
    from . import spde as spde_mod
    from .model import DriftSpec

    if epsilon <= 0:
        raise DomainError("duality test needs positive noise strength")
    x_arr = np.asarray(x_list, dtype=float)

    # SPDE side
    drift = DriftSpec.kpp()
    sums = np.zeros(x_arr.size)
    sqsums = np.zeros(x_arr.size)
    for r in range(budget.n_spde):
        gen = rng_mod.stream(budget.seed, f"duality/spde/{r}")
        state = spde_mod.heaviside_state(scheme)
        traj = spde_mod.evolve(state, drift, epsilon, t, scheme, gen, record_dt=t)
        vals = spde_mod.values_at(traj.final_state, x_arr)
        sums += vals
        sqsums += vals**2
    n = budget.n_spde
    rhs = sums / n
    rhs_se = np.sqrt(np.maximum(sqsums / n - rhs**2, 0.0) / n)

    # dual side
    exceed = np.zeros(x_arr.size)
    n_steps = max(1, round(t / budget.dual_dt))
    dt = t / n_steps
    for r in range(budget.n_dual):
        gen = rng_mod.stream(budget.seed, f"duality/dual/{r}")
        system = ParticleSystem.single(0.0, coalescence_strength=epsilon**2)
        for _ in range(n_steps):
            system = step_system(system, dt, budget.delta, gen)
        right = rightmost(system)
        exceed += right > x_arr
    lhs = exceed / budget.n_dual
    lhs_se = np.sqrt(lhs * (1.0 - lhs) / budget.n_dual)

    rows = []
    for i, xv in enumerate(x_arr):
        se = float(math.hypot(lhs_se[i], rhs_se[i]))
        rows.append(
            DualityRow(
                x=float(xv),
                lhs=float(lhs[i]),
                rhs=float(rhs[i]),
                gap=float(lhs[i] - rhs[i]),
                combined_se=se,
            )
        )
    return rows
