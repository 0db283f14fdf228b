"""Closed-form kernels and numerical certification of kernel inequalities.

The heat kernel here has diffusion constant 1 in the 4t normalization
(generator d^2/dx^2, variance 2t).  The killed kernel is the transition
density of that motion absorbed on the moving line x = v*t, written as an
image-charge formula with an exponential tilt.

For the squared-difference bounds, the inner y-integral of products of
(tilted) Gaussians against the exponential weight has a closed form in
terms of the normal CDF, so only the s-integral is quadratured; the
endpoint square-root singularities are removed by substitution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr

from . import rng as rng_mod
from .errors import DomainError, PreconditionError
from .model import ParameterLedger, profile_F


@dataclass(frozen=True)
class KernelPoint:
    """Space-time source and target for a kernel evaluation."""

    s: float
    y: float
    t: float
    x: float
    v: float = 0.0

    def __post_init__(self):
        if not self.s < self.t:
            raise DomainError(f"kernel needs s < t, got s={self.s}, t={self.t}")


def heat_kernel(s: float, y: float, t: float, x: float):
    """Gaussian transition density with variance 2(t-s)."""
    if not np.all(s < t):
        raise DomainError("heat kernel needs s < t")
    delta = t - s
    return np.exp(-((x - y) ** 2) / (4.0 * delta)) / np.sqrt(4.0 * math.pi * delta)


def killed_kernel(s: float, y: float, t: float, x: float, v: float):
    """Density of the motion started at (s,y), absorbed on the line x = v*t.

    Image-charge formula in the frame moving with the boundary, with the
    exponential tilt from removing the drift; identically 0 when either
    endpoint is on or beyond the boundary.
    """
    if not np.all(s < t):
        raise DomainError("killed kernel needs s < t")
    X = np.asarray(x - v * t, dtype=float)
    Y = np.asarray(y - v * s, dtype=float)
    delta = t - s
    # tilt folded into each Gaussian: the direct term becomes the free heat
    # kernel and the image term picks up the factor e^{vY}, which keeps the
    # expression finite for large v
    direct = heat_kernel(s, np.asarray(y, dtype=float), t, np.asarray(x, dtype=float))
    image = np.exp(v * Y) * heat_kernel(0.0, -(X + Y + v * delta), delta, 0.0)
    out = np.where((X < 0) & (Y < 0), direct - image, 0.0)
    return float(out) if out.ndim == 0 else out


def zeta(theta: float, s: float, y: float) -> float:
    """Mass-escape bound: 0 at y = +inf, +inf for y <= 0, the formula between."""
    if theta <= 0:
        raise DomainError(f"zeta needs a positive parameter, got {theta}")
    if s < 0:
        raise DomainError(f"zeta needs s >= 0, got {s}")
    if y == math.inf:
        return 0.0
    if y <= 0:
        return math.inf
    return 2.0**8 * math.sqrt(s) / (theta**2 * y**3) * math.exp(-(y**2) / (2.0**4 * s))


@dataclass(frozen=True)
class QuadratureSpec:
    """Gauss-Legendre node count per s-segment (refined once for an error bound)."""

    n_nodes: int = 200


@dataclass(frozen=True)
class PairReport:
    point: tuple  # (t, x)
    point_prime: tuple
    lhs: float  # integral plus its quadrature-error allowance
    rhs: float
    ratio: float
    quad_error: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs

    def to_json_dict(self) -> dict:
        return {
            "t": self.point[0],
            "x": self.point[1],
            "t_prime": self.point_prime[0],
            "x_prime": self.point_prime[1],
            "lhs": self.lhs,
            "rhs": self.rhs,
            "ratio": self.ratio,
            "quad_error": self.quad_error,
        }


@dataclass(frozen=True)
class BoundReport:
    v: float
    pairs: tuple
    max_ratio: float
    all_hold: bool

    def to_json_dict(self) -> dict:
        return {
            "v": self.v,
            "max_ratio": self.max_ratio,
            "all_hold": self.all_hold,
            "pairs": [p.to_json_dict() for p in self.pairs],
        }


def _half_line_gaussian_product(a, da, b, db):
    """Integral over Y < 0 of phi(Y-a; da) * phi(Y-b; db).

    phi(z; d) = exp(-z^2/(4d)) / sqrt(4 pi d); closed form via the normal CDF.
    """
    dsum = da + db
    dstar = da * db / dsum
    mu = (a * db + b * da) / dsum
    pref = np.exp(-((a - b) ** 2) / (4.0 * dsum)) / (4.0 * math.pi * np.sqrt(da * db))
    return pref * np.sqrt(4.0 * math.pi * dstar) * ndtr(-mu / np.sqrt(2.0 * dstar))


def _moving_cross_term(s, t1, x1, t2, x2, v):
    """Integral over y of G^(v)(s,y;t1,x1) G^(v)(s,y;t2,x2) e^{-v(y-vs)}.

    The Y-dependence of the two tilts cancels the weight exactly, leaving
    four signed half-line Gaussian products.
    """
    d1 = t1 - s
    d2 = t2 - s
    X1 = x1 - v * t1
    X2 = x2 - v * t2
    pref = np.exp(-(v / 2.0) * (X1 + X2) - (v**2 / 4.0) * (d1 + d2))
    total = 0.0
    for s1 in (1.0, -1.0):
        for s2 in (1.0, -1.0):
            total = total + s1 * s2 * _half_line_gaussian_product(s1 * X1, d1, s2 * X2, d2)
    return pref * total


def _static_cross_term(s, t1, x1, t2, x2, v):
    """Integral over all y of G(s,y;t1,x1) G(s,y;t2,x2) e^{-v y}."""
    d1 = t1 - s
    d2 = t2 - s
    dsum = d1 + d2
    dstar = d1 * d2 / dsum
    mu = (x1 * d2 + x2 * d1) / dsum
    pref = np.exp(-((x1 - x2) ** 2) / (4.0 * dsum)) / np.sqrt(4.0 * math.pi * dsum)
    return pref * np.exp(-v * mu + v**2 * dstar)


def _sq_difference_integral(t1, x1, t2, x2, v, cross, n_nodes: int) -> float:
    """s-integral of the squared kernel difference against the weight.

    ``cross(s, ta, xa, tb, xb, v)`` must return the closed-form y-integral
    of the product of the two kernels at source time s.  Endpoint
    singularities ~ (t_i - s)^{-1/2} are removed by the substitution
    s = t_end - u^2 on each segment.
    """
    tmin, tmax = min(t1, t2), max(t1, t2)
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)

    def seg(a: float, b: float, f) -> float:
        # integral over s in [a, b] of f(s), singular at s = b
        if b <= a:
            return 0.0
        umax = math.sqrt(b - a)
        u = 0.5 * umax * (nodes + 1.0)
        w = 0.5 * umax * weights
        s = b - u**2
        return float(np.sum(w * 2.0 * u * f(s)))

    def both(s):
        return (
            cross(s, t1, x1, t1, x1, v)
            - 2.0 * cross(s, t1, x1, t2, x2, v)
            + cross(s, t2, x2, t2, x2, v)
        )

    total = seg(0.0, tmin, both)
    if tmax > tmin:
        tl, xl = (t1, x1) if t1 > t2 else (t2, x2)
        total += seg(tmin, tmax, lambda s: cross(s, tl, xl, tl, xl, v))
    return total


def _check_moving_pair(v: float, t: float, x: float, label: str) -> None:
    if not (0.0 <= t <= v**-2):
        raise PreconditionError(f"{label}: time {t} outside [0, v^-2] = [0, {v**-2}]")
    if x - v * t > 0.0:
        raise PreconditionError(f"{label}: x - v*t = {x - v * t} must be <= 0")


def verify_difference_bound_moving(
    v: float,
    point_pairs: Sequence[tuple],
    quad: QuadratureSpec = QuadratureSpec(),
) -> BoundReport:
    """Certify the weighted L2 difference bound for the killed kernel.

    Each pair is ``((t, x), (t', x'))``; the inequality checked is
    lhs <= 2^9 * exp(-v(x - vt)) * (|dz| + |dt|^{1/2}) with
    dz = (x' - vt') - (x - vt).  The quadrature is run at the base and the
    doubled node count; the difference is added to the lhs so a reported
    "holds" is conservative.
    """
    if v <= 0:
        raise DomainError("boundary speed must be positive")
    reports = []
    for (t, x), (tp, xp) in point_pairs:
        _check_moving_pair(v, t, x, "(t,x)")
        _check_moving_pair(v, tp, xp, "(t',x')")
        dz = (xp - v * tp) - (x - v * t)
        if abs(dz) > 1.0 / v + 1e-12:
            raise PreconditionError(f"|z' - z| = {abs(dz)} exceeds v^-1 = {1.0 / v}")
        lhs = _sq_difference_integral(t, x, tp, xp, v, _moving_cross_term, quad.n_nodes)
        lhs_fine = _sq_difference_integral(
            t, x, tp, xp, v, _moving_cross_term, 2 * quad.n_nodes
        )
        err = abs(lhs_fine - lhs)
        lhs = lhs_fine + err
        rhs = 2.0**9 * math.exp(-v * (x - v * t)) * (abs(dz) + math.sqrt(abs(tp - t)))
        ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
        reports.append(
            PairReport(
                point=(t, x), point_prime=(tp, xp), lhs=lhs, rhs=rhs, ratio=ratio, quad_error=err
            )
        )
    max_ratio = max((r.ratio for r in reports), default=0.0)
    return BoundReport(
        v=v, pairs=tuple(reports), max_ratio=max_ratio, all_hold=all(r.holds for r in reports)
    )


def verify_difference_bound_static(
    v: float,
    point_pairs: Sequence[tuple],
    quad: QuadratureSpec = QuadratureSpec(),
) -> BoundReport:
    """Certify the plain heat kernel difference bound with weight e^{-v y}.

    Inequality: lhs <= 2^7 (|x' - x| + |t' - t|^{1/2}) for times in
    [0, v^-2] and positions in [-2/v, 2/v]; the bound constant does not
    depend on v.
    """
    if v <= 0:
        raise DomainError("weight speed must be positive")
    reports = []
    for (t, x), (tp, xp) in point_pairs:
        for tt, label in ((t, "t"), (tp, "t'")):
            if not (0.0 <= tt <= v**-2):
                raise PreconditionError(f"{label} = {tt} outside [0, v^-2] = [0, {v**-2}]")
        for xx, label in ((x, "x"), (xp, "x'")):
            if abs(xx) > 2.0 / v:
                raise PreconditionError(f"{label} = {xx} outside [-2/v, 2/v]")
        lhs = _sq_difference_integral(t, x, tp, xp, v, _static_cross_term, quad.n_nodes)
        lhs_fine = _sq_difference_integral(
            t, x, tp, xp, v, _static_cross_term, 2 * quad.n_nodes
        )
        err = abs(lhs_fine - lhs)
        lhs = lhs_fine + err
        rhs = 2.0**7 * (abs(xp - x) + math.sqrt(abs(tp - t)))
        ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
        reports.append(
            PairReport(
                point=(t, x), point_prime=(tp, xp), lhs=lhs, rhs=rhs, ratio=ratio, quad_error=err
            )
        )
    max_ratio = max((r.ratio for r in reports), default=0.0)
    return BoundReport(
        v=v, pairs=tuple(reports), max_ratio=max_ratio, all_hold=all(r.holds for r in reports)
    )


def random_admissible_pairs_moving(v: float, n: int, rng: np.random.Generator) -> list:
    """Random point pairs satisfying the moving-bound hypotheses."""
    pairs = []
    tmax = v**-2
    for _ in range(n):
        t = rng.uniform(0.0, tmax)
        tp = rng.uniform(0.0, tmax)
        z = rng.uniform(-2.0 / v, 0.0)
        zp = z + rng.uniform(-1.0 / v, 1.0 / v)
        zp = min(zp, 0.0)
        pairs.append(((t, z + v * t), (tp, zp + v * tp)))
    return pairs


def random_admissible_pairs_static(v: float, n: int, rng: np.random.Generator) -> list:
    """Random point pairs satisfying the static-bound hypotheses."""
    pairs = []
    tmax = v**-2
    lim = 2.0 / v
    for _ in range(n):
        t = rng.uniform(0.0, tmax)
        tp = rng.uniform(0.0, tmax)
        x = rng.uniform(-lim, lim)
        xp = rng.uniform(-lim, lim)
        pairs.append(((t, x), (tp, xp)))
    return pairs


@dataclass(frozen=True)
class ProfileResidualReport:
    max_residual: float
    dx: float
    dt: float
    boundary_slope: float
    slope_target: float

    @property
    def slope_rel_error(self) -> float:
        return abs(self.boundary_slope - self.slope_target) / abs(self.slope_target)

    def to_json_dict(self) -> dict:
        return {
            "max_residual": self.max_residual,
            "dx": self.dx,
            "dt": self.dt,
            "boundary_slope": self.boundary_slope,
            "slope_target": self.slope_target,
            "slope_rel_error": self.slope_rel_error,
        }


def verify_profile_pde(
    ledger: ParameterLedger,
    dx: float = 0.01,
    x_width: float = 3.0,
    t_lo: float = 0.5,
    t_hi: float = 1.5,
    n_t: int = 20,
) -> ProfileResidualReport:
    """Residual of rho(t,x) = F(x - vt) in the majorant heat equation.

    Central differences in t and x with dt = dx give an O(dx^2) residual on
    a grid strictly left of the boundary x = v t.  The one-sided boundary
    slope is extracted by Richardson extrapolation and compared to the
    exact value -eps.
    """
    ledger.require_consistent()
    v = ledger.v
    th = ledger.theta
    eps = ledger.eps_small
    dt = dx

    def rho(t, x):
        return profile_F(x - v * t, ledger)

    def fbar(z):
        return (1.0 - th) * th * v * v * z + (1.0 - th) * v * eps

    max_res = 0.0
    for t in np.linspace(t_lo, t_hi, n_t):
        # keep the whole 5-point stencil strictly left of the boundary
        x_right = v * (t - dt) - 2.0 * dx
        x = np.linspace(x_right - x_width, x_right, 200)
        dt_term = (rho(t + dt, x) - rho(t - dt, x)) / (2.0 * dt)
        dxx = (rho(t, x + dx) - 2.0 * rho(t, x) + rho(t, x - dx)) / dx**2
        res = dt_term - dxx - fbar(rho(t, x))
        max_res = max(max_res, float(np.abs(res).max()))

    h = 1e-4
    slope_h = -profile_F(-h, ledger) / h
    slope_h2 = -profile_F(-h / 2.0, ledger) / (h / 2.0)
    boundary_slope = 2.0 * slope_h2 - slope_h
    return ProfileResidualReport(
        max_residual=max_res,
        dx=dx,
        dt=dt,
        boundary_slope=float(boundary_slope),
        slope_target=-eps,
    )


@dataclass(frozen=True)
class KilledKernelMCReport:
    v: float
    s: float
    y: float
    t: float
    bin_centers: tuple
    mc_density: tuple
    kernel_density: tuple
    rel_errors: tuple
    max_rel_error: float
    survival_mc: float
    survival_kernel: float
    n_paths: int

    def to_json_dict(self) -> dict:
        return {
            "v": self.v,
            "s": self.s,
            "y": self.y,
            "t": self.t,
            "bin_centers": list(self.bin_centers),
            "mc_density": list(self.mc_density),
            "kernel_density": list(self.kernel_density),
            "rel_errors": list(self.rel_errors),
            "max_rel_error": self.max_rel_error,
            "survival_mc": self.survival_mc,
            "survival_kernel": self.survival_kernel,
            "n_paths": self.n_paths,
        }


def killed_kernel_mc(
    v: float,
    s: float,
    y: float,
    t: float,
    bin_centers: Sequence[float] = (-0.5,),
    bin_width: float = 0.1,
    n_paths: int = 10**7,
    dt: float = 0.01,
    seed: int = 0,
    chunk: int = 10**6,
) -> KilledKernelMCReport:
    """Monte Carlo validation of the killed kernel's closed form.

    Paths take N(0, 2 dt) increments from (s, y); a path dies when it
    touches the moving barrier x = v * time, including in-step crossings via
    the exact Brownian-bridge probability exp(-a*b/dt) for a linear barrier
    (a, b the distances below the barrier at the step ends, diffusion
    constant 2).  Survivor positions are binned and compared to the kernel
    averaged over each bin.
    """
    if not s < t:
        raise DomainError("need s < t")
    if y >= v * s:
        raise DomainError("source must start strictly below the barrier")
    n_steps = max(1, int(round((t - s) / dt)))
    dt_eff = (t - s) / n_steps
    centers = np.asarray(bin_centers, dtype=float)
    counts = np.zeros(centers.size)
    survived_total = 0

    gen = rng_mod.stream(seed, "killed-kernel-mc")
    remaining = n_paths
    while remaining > 0:
        m = min(chunk, remaining)
        remaining -= m
        pos = np.full(m, y)
        alive = np.ones(m, dtype=bool)
        tau = s
        gap_prev = v * tau - pos
        for _ in range(n_steps):
            tau += dt_eff
            pos = pos + gen.normal(0.0, math.sqrt(2.0 * dt_eff), size=m)
            gap = v * tau - pos
            crossed = gap <= 0.0
            # in-step crossing for paths below the barrier at both ends
            u = gen.random(m)
            bridge = u < np.exp(-np.maximum(gap_prev, 0.0) * np.maximum(gap, 0.0) / dt_eff)
            alive &= ~(crossed | bridge)
            gap_prev = gap
        survived_total += int(alive.sum())
        fin = pos[alive]
        for i, c in enumerate(centers):
            counts[i] += np.count_nonzero((fin >= c - bin_width / 2) & (fin < c + bin_width / 2))

    mc_density = counts / (n_paths * bin_width)
    kernel_density = []
    for c in centers:
        xs = np.linspace(c - bin_width / 2, c + bin_width / 2, 21)
        vals = killed_kernel(s, y, t, xs, v)
        kernel_density.append(float(np.trapezoid(vals, xs) / bin_width))
    kernel_density = np.asarray(kernel_density)
    rel = np.abs(mc_density - kernel_density) / kernel_density

    xs = np.linspace(min(y, centers.min()) - 20.0 * math.sqrt(t - s), v * t, 4001)
    survival_kernel = float(np.trapezoid(killed_kernel(s, y, t, xs, v), xs))
    return KilledKernelMCReport(
        v=v,
        s=s,
        y=y,
        t=t,
        bin_centers=tuple(float(c) for c in centers),
        mc_density=tuple(float(d) for d in mc_density),
        kernel_density=tuple(float(d) for d in kernel_density),
        rel_errors=tuple(float(r) for r in rel),
        max_rel_error=float(rel.max()),
        survival_mc=survived_total / n_paths,
        survival_kernel=survival_kernel,
        n_paths=n_paths,
    )
