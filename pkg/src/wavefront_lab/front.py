"""Front functionals and speed estimation.

The right front R is the rightmost point where the field is nonzero, the
left front L the leftmost point where it departs from 1.  Both are reported
at cell edges so that a sampled Heaviside profile has R = L = 0 exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from . import rng as rng_mod
from .errors import EstimationError


def right_front(state) -> float:
    """Absolute position of the right edge of the last positive cell.

    Returns -inf when the field is identically zero.
    """
    values = np.asarray(state.values)
    idx = np.flatnonzero(values > 0.0)
    if idx.size == 0:
        return -math.inf
    return state.frame_offset + idx[-1] * state.dx + state.dx / 2.0


def left_front(state) -> float:
    """Absolute position of the left edge of the first cell below 1.

    Returns +inf when the field is identically one.
    """
    values = np.asarray(state.values)
    idx = np.flatnonzero(values < 1.0)
    if idx.size == 0:
        return math.inf
    return state.frame_offset + idx[0] * state.dx - state.dx / 2.0


def interface_width(state) -> float:
    """R - L; infinite when either front is a sentinel."""
    r = right_front(state)
    l = left_front(state)
    if not (math.isfinite(r) and math.isfinite(l)):
        return math.inf
    return r - l


@dataclass(frozen=True)
class SpeedEstimate:
    """OLS front speed with a 95% bootstrap confidence interval."""

    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    burn_in_fraction: float
    n_realizations: int

    def to_json_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "burn_in_fraction": self.burn_in_fraction,
            "n_realizations": self.n_realizations,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def _as_series_list(data) -> list:
    """Normalize input to a list of (times, fronts) float arrays."""
    if hasattr(data, "times") and hasattr(data, "fronts"):
        data = [(data.times, data.fronts)]
    elif isinstance(data, tuple) and len(data) == 2 and np.ndim(data[0]) == 1:
        data = [data]
    out = []
    for item in data:
        if hasattr(item, "times") and hasattr(item, "fronts"):
            t, r = item.times, item.fronts
        else:
            t, r = item
        out.append((np.asarray(t, dtype=float), np.asarray(r, dtype=float)))
    return out


def _ols(t: np.ndarray, r: np.ndarray) -> tuple:
    tm = t.mean()
    rm = r.mean()
    denom = float(np.sum((t - tm) ** 2))
    if denom == 0.0:
        raise EstimationError("cannot fit a speed to a single instant")
    slope = float(np.sum((t - tm) * (r - rm)) / denom)
    return slope, rm - slope * tm


def estimate_speed(
    data,
    burn_in_fraction: float = 0.2,
    n_boot: int = 1000,
    seed: int = 0,
) -> SpeedEstimate:
    """Least-squares front speed over the post-burn-in window.

    ``data`` is a single front series (object with ``times``/``fronts`` or a
    ``(times, fronts)`` pair) or a sequence of them.  The confidence interval
    comes from resampling realizations when several series are given, and
    from a moving-block bootstrap with block length ~ sqrt(n) for a single
    series.
    """
    if not (0.0 <= burn_in_fraction < 1.0):
        raise EstimationError(f"burn-in fraction must lie in [0,1), got {burn_in_fraction}")
    series = _as_series_list(data)
    if not series:
        raise EstimationError("no front series given")

    trimmed = []
    for t, r in series:
        if t.size == 0:
            raise EstimationError("empty front series")
        cut = t[-1] * burn_in_fraction
        keep = t >= cut
        t, r = t[keep], r[keep]
        if t.size < 10:
            raise EstimationError(
                f"need at least 10 points after burn-in, got {t.size}"
            )
        if not np.all(np.isfinite(r)):
            raise EstimationError("front series contains sentinel values")
        trimmed.append((t, r))

    t_all = np.concatenate([t for t, _ in trimmed])
    r_all = np.concatenate([r for _, r in trimmed])
    slope, intercept = _ols(t_all, r_all)

    gen = rng_mod.stream(seed, "bootstrap")
    slopes = np.empty(n_boot)
    if len(trimmed) > 1:
        # resample whole realizations with replacement
        m = len(trimmed)
        for b in range(n_boot):
            pick = gen.integers(0, m, size=m)
            tb = np.concatenate([trimmed[i][0] for i in pick])
            rb = np.concatenate([trimmed[i][1] for i in pick])
            slopes[b], _ = _ols(tb, rb)
    else:
        t, r = trimmed[0]
        fitted = intercept + slope * t
        resid = r - fitted
        n = t.size
        block = max(1, int(round(math.sqrt(n))))
        n_blocks = int(math.ceil(n / block))
        for b in range(n_boot):
            starts = gen.integers(0, n, size=n_blocks)
            idx = (starts[:, None] + np.arange(block)[None, :]).ravel() % n
            rb = fitted + resid[idx[:n]]
            slopes[b], _ = _ols(t, rb)

    ci_low, ci_high = np.percentile(slopes, [2.5, 97.5])
    ci_low = min(float(ci_low), slope)
    ci_high = max(float(ci_high), slope)
    return SpeedEstimate(
        slope=slope,
        intercept=intercept,
        ci_low=ci_low,
        ci_high=ci_high,
        burn_in_fraction=burn_in_fraction,
        n_realizations=len(trimmed),
    )
