"""Drift catalog, wave profile, and the derived-constants ledger.

The drift variants cover the reaction terms used throughout the lab: the
power-law drift clipped at a level ``delta``, its square-root-capped version,
piecewise-linear tent minorants, the classical KPP nonlinearity, the linear
majorant tangent to ``z**p``, and the drift induced by a heavy-tailed
offspring generating function.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Optional, Union

import numpy as np

from .errors import ConfigurationError, DomainError, PreconditionError, SearchExhaustedError

ArrayLike = Union[float, np.ndarray]

_POW2_MIN_EXP = -60
_POW2_MAX_EXP = 60
_SERIES_TERM_CUTOFF = 1e-30


def tent(z: ArrayLike, l: float, h: float) -> ArrayLike:
    """Piecewise-linear bump of width ``l`` and height ``h``, peak at ``l/2``."""
    if l <= 0 or l > 1:
        raise DomainError(f"tent width must lie in (0,1], got {l}")
    if h <= 0:
        raise DomainError(f"tent height must be positive, got {h}")
    z = np.asarray(z, dtype=float)
    up = 2.0 * z * h / l
    down = 2.0 * h - 2.0 * z * h / l
    out = np.where(z < l / 2, up, down)
    out = np.where((z <= 0) | (z >= l), 0.0, out)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DriftSpec:
    """Tagged description of a drift function on [0,1].

    ``scale`` multiplies the drift pointwise; it is used by the rescaling
    experiment which needs ``f/c`` for arbitrary positive ``c``.
    """

    kind: str
    p: Optional[float] = None
    delta: Optional[float] = None
    l: Optional[float] = None
    h: Optional[float] = None
    theta: Optional[float] = None
    v: Optional[float] = None
    eps_small: Optional[float] = None
    n_terms: Optional[int] = None
    scale: float = 1.0

    @classmethod
    def power_clipped(cls, p: float, delta: float = 1.0) -> "DriftSpec":
        if not (0.5 <= p < 1):
            raise DomainError(f"exponent p must lie in [1/2,1), got {p}")
        if not (0 < delta <= 1):
            raise DomainError(f"clip level delta must lie in (0,1], got {delta}")
        return cls(kind="power_clipped", p=p, delta=delta)

    @classmethod
    def capped_power(cls, p: float) -> "DriftSpec":
        if not (0.5 <= p < 1):
            raise DomainError(f"exponent p must lie in [1/2,1), got {p}")
        return cls(kind="capped_power", p=p)

    @classmethod
    def tent(cls, l: float, h: float) -> "DriftSpec":
        if l <= 0 or l > 1:
            raise DomainError(f"tent width must lie in (0,1], got {l}")
        if h <= 0:
            raise DomainError(f"tent height must be positive, got {h}")
        return cls(kind="tent", l=l, h=h)

    @classmethod
    def kpp(cls) -> "DriftSpec":
        return cls(kind="kpp")

    @classmethod
    def linear_majorant(cls, theta: float, v: float, eps_small: float) -> "DriftSpec":
        return cls(kind="linear_majorant", theta=theta, v=v, eps_small=eps_small)

    @classmethod
    def pgf_derived(cls, p: float, n_terms: int = 10**5) -> "DriftSpec":
        if not (0 < p < 1):
            raise DomainError(f"offspring exponent p must lie in (0,1), got {p}")
        if n_terms < 2:
            raise DomainError("series truncation must keep at least the n=2 term")
        return cls(kind="pgf_derived", p=p, n_terms=n_terms)

    @classmethod
    def zero(cls) -> "DriftSpec":
        return cls(kind="zero")

    def scaled(self, factor: float) -> "DriftSpec":
        if factor <= 0:
            raise DomainError("scale factor must be positive")
        return DriftSpec(**{**asdict(self), "scale": self.scale * factor})

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    def __call__(self, z: ArrayLike) -> ArrayLike:
        return eval_drift(self, z)


_DRIFT_FIELDS = {
    "power_clipped": ("p", "delta"),
    "capped_power": ("p",),
    "tent": ("l", "h"),
    "kpp": (),
    "linear_majorant": ("theta", "v", "eps_small"),
    "pgf_derived": ("p", "n_terms"),
    "zero": (),
}


def drift_from_dict(d: dict, path: str = "drift") -> DriftSpec:
    """Build a DriftSpec from a config mapping, naming bad fields."""
    if not isinstance(d, dict) or "kind" not in d:
        raise ConfigurationError(f"{path}.kind is required")
    kind = d["kind"]
    if kind not in _DRIFT_FIELDS:
        raise ConfigurationError(
            f"{path}.kind must be one of {sorted(_DRIFT_FIELDS)}, got {kind!r}"
        )
    allowed = set(_DRIFT_FIELDS[kind]) | {"kind", "scale"}
    for key in d:
        if key not in allowed:
            raise ConfigurationError(f"{path}.{key} is not a field of drift kind {kind!r}")
    builder = getattr(DriftSpec, kind)
    kwargs = {k: d[k] for k in _DRIFT_FIELDS[kind] if k in d}
    try:
        spec = builder(**kwargs)
    except DomainError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc
    except TypeError as exc:
        missing = [k for k in _DRIFT_FIELDS[kind] if k not in d]
        raise ConfigurationError(
            f"{path}: drift kind {kind!r} needs fields {missing}"
        ) from exc
    if "scale" in d:
        try:
            spec = spec.scaled(float(d["scale"]))
        except DomainError as exc:
            raise ConfigurationError(f"{path}.scale: {exc}") from exc
    return spec


def _eval_pgf_drift(p: float, z: np.ndarray, n_terms: int) -> np.ndarray:
    from .dual import offspring_pmf_array

    q = offspring_pmf_array(p, n_terms)  # q[n] for n = 0..n_terms
    s = 1.0 - z
    # Horner evaluation of sum_{n=2}^{N} q_n s^n
    acc = np.zeros_like(s)
    for n in range(n_terms, 1, -1):
        acc = acc * s + q[n]
    g = acc * s * s
    return 1.0 - z - g


def eval_drift(spec: DriftSpec, z: ArrayLike) -> ArrayLike:
    """Evaluate the drift described by ``spec`` at ``z`` in [0,1]."""
    arr = np.asarray(z, dtype=float)
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise DomainError("drift argument must lie in [0,1]")

    if spec.kind == "power_clipped":
        # f(1) := 0 so that the saturated state stays an equilibrium even
        # when delta = 1; elsewhere this is z**p on [0, delta].
        out = np.where((arr <= spec.delta) & (arr < 1.0), arr**spec.p, 0.0)
    elif spec.kind == "capped_power":
        out = np.minimum(arr**spec.p, np.sqrt(1.0 - arr))
    elif spec.kind == "tent":
        out = np.asarray(tent(arr, spec.l, spec.h), dtype=float)
    elif spec.kind == "kpp":
        out = arr * (1.0 - arr)
    elif spec.kind == "linear_majorant":
        th, v, eps = spec.theta, spec.v, spec.eps_small
        out = (1.0 - th) * th * v * v * arr + (1.0 - th) * v * eps
    elif spec.kind == "pgf_derived":
        out = _eval_pgf_drift(spec.p, arr, spec.n_terms)
    elif spec.kind == "zero":
        out = np.zeros_like(arr)
    else:
        raise DomainError(f"unknown drift kind {spec.kind!r}")

    out = out * spec.scale
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class DominationReport:
    """Result of the noise-domination scan sup |f| / sqrt(z(1-z))."""

    max_ratio: float
    argmax: float
    divergent: bool


def sqrt_domination_ratio(
    spec: Union[DriftSpec, Callable[[np.ndarray], np.ndarray]],
    grid_points: int = 4001,
) -> DominationReport:
    """Scan |f(z)| / sqrt(z(1-z)) on an interior grid.

    The endpoint behaviour is classified by monotonicity of the ratio at the
    two grid cells nearest each endpoint: a ratio that does not decrease
    toward the endpoint is flagged as divergent.
    """
    if grid_points < 3:
        raise DomainError("need at least 3 grid points")
    f = spec if callable(spec) and not isinstance(spec, DriftSpec) else (lambda x: eval_drift(spec, x))
    z = np.linspace(0.0, 1.0, grid_points + 2)[1:-1]
    ratio = np.abs(np.asarray(f(z), dtype=float)) / np.sqrt(z * (1.0 - z))
    divergent = bool(ratio[0] >= ratio[1] or ratio[-1] >= ratio[-2])
    i = int(np.argmax(ratio))
    return DominationReport(max_ratio=float(ratio[i]), argmax=float(z[i]), divergent=divergent)


@dataclass(frozen=True)
class ParameterLedger:
    """Chained constants of the upper-bound construction with certificates.

    ``eps_small`` is the profile slope parameter, ``epsilon`` the raw noise
    strength; they are tied by ``eps_small = gamma * epsilon**2`` when both
    are present.  Fields derived from the power-of-two searches
    (``K_cal``, ``gamma``, ``nu``, ``k``, ``d``, ``eps0``) may be ``None``
    on ledgers built directly from a wave speed.
    """

    p: float
    theta: float
    epsilon: Optional[float]
    eps_small: float
    v: float
    T: float
    L: float
    kappa: float
    gamma: Optional[float] = None
    K_cal: Optional[float] = None
    nu: Optional[float] = None
    k: Optional[float] = None
    d: Optional[float] = None
    eps0: Optional[float] = None
    certificates: dict = field(default_factory=dict)

    @property
    def exponent(self) -> float:
        """Speed-scaling exponent 2(1-p)/(1+p)."""
        return 2.0 * (1.0 - self.p) / (1.0 + self.p)

    def is_consistent(self, rtol: float = 1e-9) -> bool:
        ok = math.isclose(self.eps_small, self.kappa * self.v ** ((self.p + 1) / (self.p - 1)), rel_tol=rtol)
        ok = ok and math.isclose(self.T, self.v**-2, rel_tol=rtol)
        ok = ok and math.isclose(self.L, 1.0 / self.v, rel_tol=rtol)
        if self.gamma is not None and self.epsilon is not None:
            ok = ok and math.isclose(self.eps_small, self.gamma * self.epsilon**2, rel_tol=rtol)
        return ok

    def require_consistent(self) -> None:
        if not self.is_consistent():
            raise PreconditionError("parameter ledger is internally inconsistent")

    def to_json_dict(self) -> dict:
        out = {
            "p": self.p,
            "theta": self.theta,
            "epsilon": self.epsilon,
            "kappa": self.kappa,
            "K_cal": self.K_cal,
            "gamma": self.gamma,
            "nu": self.nu,
            "k": self.k,
            "d": self.d,
            "eps_small": self.eps_small,
            "v": self.v,
            "T": self.T,
            "L": self.L,
            "eps0": self.eps0,
            "exponent": self.exponent,
        }
        out.update(self.certificates)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def kappa_constant(p: float, theta: float) -> float:
    """Tangency constant tying the profile slope to the wave speed."""
    return (p ** (p / (1 - p)) - p ** (1 / (1 - p))) * theta ** (p / (p - 1)) * (1 - theta) ** (
        1 / (p - 1)
    )


def ledger_from_wave_speed(
    p: float, theta: float, v: float, gamma: Optional[float] = None
) -> ParameterLedger:
    """Ledger built directly from a wave speed, skipping the constant searches.

    Useful for desk-scale profile and majorant checks where the boundary
    speed is chosen by hand.
    """
    _check_domains(p, theta)
    if v <= 0:
        raise DomainError("wave speed must be positive")
    kappa = kappa_constant(p, theta)
    eps_small = kappa * v ** ((p + 1) / (p - 1))
    epsilon = math.sqrt(eps_small / gamma) if gamma is not None else None
    return ParameterLedger(
        p=p,
        theta=theta,
        epsilon=epsilon,
        eps_small=eps_small,
        v=v,
        T=v**-2,
        L=1.0 / v,
        kappa=kappa,
        gamma=gamma,
    )


def _check_domains(p: float, theta: float) -> None:
    if not (0.5 <= p < 1):
        raise PreconditionError(f"p must lie in [1/2,1), got {p}")
    if not (0.5 < theta < 1):
        raise PreconditionError(f"theta must lie in (1/2,1), got {theta}")


def _series_bound(K: float, theta: float) -> float:
    """Value of the double-exponential series condition for a candidate K.

    Terms are truncated once below 1e-30 and a geometric tail majorant is
    added, so the returned value is an upper bound on the true series.
    """
    lam = 2.0 * theta - 1.0
    b = 2.0**-22 * math.exp(-2.0 * theta * (2.0 - theta)) * K
    total = 0.0
    n = 1
    while True:
        a = math.exp(-b * math.exp(lam * n))
        total += a
        if a < _SERIES_TERM_CUTOFF:
            ratio = math.exp(-b * math.exp(lam * (n + 1)) * (1.0 - math.exp(-lam)))
            if ratio < 1.0:
                total += a * ratio / (1.0 - ratio)
            else:
                return math.inf
            break
        if total > 2.0**-5 / 8.0 or n > 10_000:
            break  # already inadmissible, no need to keep summing
        n += 1
    return 2.0**5 * total


def _nu_of(K: float, gamma: float) -> float:
    return 2.0**4 + (2.0**5 * K + 2.0**14 * math.sqrt(K)) / gamma


def _log_item_iii_lhs(gamma: float, nu: float) -> float:
    """log of 2^7 sqrt(gamma) exp(3 gamma nu), evaluated without overflow."""
    return 7.0 * math.log(2.0) + 0.5 * math.log(gamma) + 3.0 * gamma * nu


def _item_vi_holds(epsilon: float, p: float, kappa: float, gamma: float, nu: float) -> bool:
    eps_small = gamma * epsilon**2
    v = (eps_small / kappa) ** ((p - 1) / (p + 1))
    L = 1.0 / v
    return nu * eps_small * L <= 0.25 and 2.0**13 * math.sqrt(epsilon**2 * L) <= 0.25


def derive_constants(p: float, theta: float, epsilon: float) -> ParameterLedger:
    """Derive the full constants ledger for noise strength ``epsilon``.

    The two free constants are searched over powers of two in
    [2^-60, 2^60]: the smallest admissible series constant, then the largest
    slack constant ``gamma`` satisfying the exponential smallness condition
    (evaluated in log space), the moment condition ``nu**p <= nu/4`` and
    ``K/gamma >= 2``.  If no ``gamma`` in range satisfies the exponential
    condition, the candidate minimizing its left-hand side is kept and the
    failure is recorded in the ``cert_iii`` certificate instead of being
    hidden; if no candidate satisfies even the structural conditions, a
    :class:`SearchExhaustedError` is raised.
    """
    _check_domains(p, theta)
    if epsilon <= 0:
        raise PreconditionError(f"noise strength must be positive, got {epsilon}")

    kappa = kappa_constant(p, theta)

    K_cal = None
    for j in range(_POW2_MIN_EXP, _POW2_MAX_EXP + 1):
        if _series_bound(2.0**j, theta) <= 0.125:
            K_cal = 2.0**j
            break
    if K_cal is None:
        raise SearchExhaustedError("no admissible series constant in [2^-60, 2^60]")
    cert_ii = _series_bound(K_cal, theta) <= 0.125

    log_bound = math.log(0.125)
    best_gamma = None
    best_log_lhs = math.inf
    gamma = None
    for j in range(_POW2_MAX_EXP, _POW2_MIN_EXP - 1, -1):  # largest candidate first
        cand = 2.0**j
        nu_c = _nu_of(K_cal, cand)
        structural = (p - 1.0) * math.log(nu_c) <= math.log(0.25) and K_cal / cand >= 2.0
        if not structural:
            continue
        log_lhs = _log_item_iii_lhs(cand, nu_c)
        if log_lhs <= log_bound:
            gamma = cand
            break
        if log_lhs < best_log_lhs:
            best_log_lhs = log_lhs
            best_gamma = cand
    if gamma is None:
        if best_gamma is None:
            raise SearchExhaustedError("no admissible gamma in [2^-60, 2^60]")
        gamma = best_gamma
    nu = _nu_of(K_cal, gamma)
    cert_iii = (
        _log_item_iii_lhs(gamma, nu) <= log_bound
        and (p - 1.0) * math.log(nu) <= math.log(0.25)
        and K_cal / gamma >= 2.0
    )

    k = K_cal / gamma
    d = k + nu + 1.0

    eps_small = gamma * epsilon**2
    v = (eps_small / kappa) ** ((p - 1) / (p + 1))

    # Largest admissible noise strength under the smallness condition (vi);
    # the condition is monotone, so bracket then bisect to 1e-12 relative.
    holds = lambda e: _item_vi_holds(e, p, kappa, gamma, nu)
    lo, hi = 1.0, 2.0
    if holds(1.0):
        while holds(hi) and hi < 1e30:
            lo, hi = hi, hi * 2.0
    else:
        lo, hi = 0.5, 1.0
        while not holds(lo) and lo > 1e-300:
            lo, hi = lo / 2.0, lo
    if hi >= 1e30:
        eps0 = math.inf
    elif lo <= 1e-300:
        eps0 = 0.0
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if holds(mid):
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-12 * lo:
                break
        eps0 = lo

    cert_vi = _item_vi_holds(epsilon, p, kappa, gamma, nu)

    return ParameterLedger(
        p=p,
        theta=theta,
        epsilon=epsilon,
        eps_small=eps_small,
        v=v,
        T=v**-2,
        L=1.0 / v,
        kappa=kappa,
        gamma=gamma,
        K_cal=K_cal,
        nu=nu,
        k=k,
        d=d,
        eps0=eps0,
        certificates={"cert_ii": cert_ii, "cert_iii": cert_iii, "cert_vi": cert_vi},
    )


def profile_F(x: ArrayLike, ledger: ParameterLedger) -> ArrayLike:
    """Exponential wave profile: positive on x<0, identically 0 on x>=0."""
    arr = np.asarray(x, dtype=float)
    th_v = ledger.theta * ledger.v
    out = np.where(arr <= 0.0, ledger.eps_small / th_v * (np.exp(-th_v * arr) - 1.0), 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MajorantReport:
    min_gap: float
    argmin: float
    tangency_point: float


def check_majorant(
    ledger: ParameterLedger, drift: DriftSpec, grid_points: int = 10_001
) -> MajorantReport:
    """Scan the gap between the linear majorant and a power-law drift.

    For an exactly consistent ledger the gap is non-negative everywhere and
    vanishes at the tangency point of the line with ``z**p``.
    """
    ledger.require_consistent()
    if drift.kind not in ("power_clipped", "capped_power") or drift.p != ledger.p:
        raise PreconditionError("majorant check needs a power-law drift matching the ledger's p")
    p, th, v, eps = ledger.p, ledger.theta, ledger.v, ledger.eps_small
    z0 = ((1.0 - th) * th * v * v / p) ** (1.0 / (p - 1.0))
    z = np.linspace(0.0, 1.0, grid_points)
    fbar = (1.0 - th) * th * v * v * z + (1.0 - th) * v * eps
    gap = fbar - eval_drift(drift, z)
    i = int(np.argmin(gap))
    return MajorantReport(min_gap=float(gap[i]), argmin=float(z[i]), tangency_point=float(z0))


@dataclass(frozen=True)
class SpeedBoundPair:
    """Coefficients of the small-noise speed bounds for a ledger's epsilon."""

    lower_coeff: float
    upper_value: float


def speed_bounds(ledger: ParameterLedger) -> SpeedBoundPair:
    """Evaluate both speed-bound formulas at the ledger's constants.

    Purely a formula evaluation: the bounds themselves hold only below the
    admissible noise threshold and with the construction's own constants.
    """
    ledger.require_consistent()
    if ledger.gamma is None:
        raise PreconditionError("speed bounds need a ledger with gamma set")
    expo = ledger.exponent
    lower_coeff = (math.sqrt(2.0) * ledger.gamma) ** expo
    if ledger.d is None or ledger.epsilon is None:
        raise PreconditionError("upper bound needs d and epsilon from derive_constants")
    upper_value = 2.0 * ledger.d * (ledger.gamma * ledger.epsilon**2 / ledger.kappa) ** (-expo / 2.0)
    return SpeedBoundPair(lower_coeff=lower_coeff, upper_value=upper_value)
