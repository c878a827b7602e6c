"""Limit density problem: minimise the integral of f^2 g(mu) at unit mass.

The optimality condition is the pointwise inclusion c/f(x)^2 in -dg(mu(x))
for a multiplier c > 0, so the minimiser is recovered by inverting the
(monotone, multivalued) negative subdifferential of the convex profile g and
bisecting on c until the selected density carries unit mass.  Flat segments
of g produce interval-valued selections; the residual mass is placed there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainMismatchError, InfeasibleError
from .grids import Domain, ScalarField, trapezoid_weights
from .theta import GFunction, cube_circumradius, unit_ball_volume

SNAP_REL = 1e-9  # queries this close to a segment slope count as on it


def oned_theta_exact(alpha: float) -> float:
    """Exact 1-d cell constant: (1-2a)^3/12 up to a=1/2, then zero."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if alpha >= 0.5:
        return 0.0
    return (1.0 - 2.0 * alpha) ** 3 / 12.0


def exact_oned_gfunction(
    alpha: float, x_grid: np.ndarray | None = None
) -> GFunction:
    """Piecewise-linear sampling of the exact 1-d profile g(x) = theta(a x)/x^2.

    For alpha = 0 the profile is 1/(12 x^2), never zero; for alpha > 0 it
    cuts off at 1/(2 alpha).
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if x_grid is None:
        x_grid = default_g_grid(alpha)
    x = np.asarray(x_grid, dtype=float)
    g = np.array([oned_theta_exact(alpha * xi) / xi**2 for xi in x])
    if alpha > 0:
        t_alpha = 0.5 / alpha
        g[x >= t_alpha] = 0.0
        if x[-1] <= t_alpha:
            x = np.append(x, 2.0 * t_alpha)
            g = np.append(g, 0.0)
    else:
        t_alpha = math.inf
    # PL sampling of a smooth convex function; a hull pass removes fp dents
    from .theta import lower_convex_hull

    hx, hy = lower_convex_hull(x, g)
    return GFunction(hx, hy, alpha, 1, t_alpha)


def default_g_grid(
    alpha: float, x_lo: float = 1e-3, dense: tuple[float, float] = (0.25, 4.0),
    dense_step: float = 2e-5,
) -> np.ndarray:
    """Breakpoint grid: geometric tails around a finely sampled core.

    The core resolution bounds the density quantisation of the selection, so
    keep dense_step at or below the pointwise tolerance you are after.
    """
    hi = 2.0 / alpha if alpha > 0 else 16.0
    lo_part = np.geomspace(x_lo, dense[0], 200, endpoint=False)
    core = np.arange(dense[0], dense[1], dense_step)
    hi_part = (
        np.geomspace(dense[1], hi, 400) if hi > dense[1] else np.array([dense[1]])
    )
    return np.unique(np.concatenate([lo_part, core, hi_part]))


@dataclass
class DensityMeasure:
    """Nonnegative density on a Domain grid with (approximately) unit mass."""

    field: ScalarField

    def __post_init__(self):
        if np.any(self.field.values < 0):
            raise ValueError("density values must be nonnegative")

    @property
    def mass(self) -> float:
        w = trapezoid_weights(self.field.shape)
        return float(np.sum(w * self.field.values) * np.prod(self.field.h))

    @property
    def values(self) -> np.ndarray:
        return self.field.values


@dataclass
class LimitSolution:
    density: DensityMeasure
    c: float
    objective: float
    residuals: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)


def evaluate_F(mu: DensityMeasure, f: ScalarField, g: GFunction) -> float:
    """Quadrature of f^2 g(mu) over the box."""
    if not mu.field.same_grid(f):
        raise DomainMismatchError("density and f live on different grids")
    w = trapezoid_weights(f.shape)
    vals = f.values**2 * g(mu.values)
    return float(np.sum(w * vals) * np.prod(f.h))


def _slope_magnitudes(g: GFunction) -> np.ndarray:
    return -g.slopes()  # nonincreasing, >= 0


def subdiff_inverse(g: GFunction, t: float) -> tuple[float, float]:
    """The set {x : t in -dg(x)} as an interval [x_lo, x_hi].

    Beyond the steepest slope the selection pins to the first breakpoint
    (t = +inf returns [0, x_0]); t <= 0 clamps to the cutoff t_alpha.
    """
    lo, hi = _subdiff_inverse_arrays(g, np.array([float(t)]))
    return float(lo[0]), float(hi[0])


def _subdiff_inverse_arrays(g: GFunction, t: np.ndarray):
    x = g.x
    mags = _slope_magnitudes(g)  # length m-1, strictly decreasing (hull), >= 0
    m = x.size
    t = np.asarray(t, dtype=float)
    right_edge = g.t_alpha if np.isfinite(g.t_alpha) else x[-1]
    # number of magnitudes strictly greater than t, via the ascending reverse
    count_le = np.searchsorted(mags[::-1], t, side="right")
    jl = (m - 1 - count_le) - 1  # last segment steeper than t; in [-1, m-2]
    snap = SNAP_REL * (1.0 + np.abs(t))
    # default: the breakpoint whose adjacent slopes bracket t
    lo = x[np.clip(jl + 1, 0, m - 1)].copy()
    hi = lo.copy()
    # flatter than every segment: cutoff / right grid edge
    flat = jl >= m - 2
    lo[flat] = hi[flat] = right_edge
    # on a slope value: the whole segment is the preimage
    jc = np.clip(jl, 0, m - 2)
    snap_up = (jl >= 0) & (np.abs(mags[jc] - t) <= snap)
    lo[snap_up] = x[jc[snap_up]]
    hi[snap_up] = x[jc[snap_up] + 1]
    jn = np.clip(jl + 1, 0, m - 2)
    snap_dn = (~snap_up) & (jl + 1 <= m - 2) & (np.abs(mags[jn] - t) <= snap)
    lo[snap_dn] = x[jn[snap_dn]]
    hi[snap_dn] = x[jn[snap_dn] + 1]
    neg = t <= 0.0
    lo[neg] = hi[neg] = right_edge
    unbounded = np.isinf(t) & (t > 0)
    lo[unbounded] = 0.0
    hi[unbounded] = x[0]
    return lo, hi


def _subdiff_interval_at(g: GFunction, q: np.ndarray):
    """[t_low, t_high] of -dg at given densities (breakpoints give kinks)."""
    x = g.x
    mags = _slope_magnitudes(g)
    q = np.asarray(q, dtype=float)
    pos = np.searchsorted(x, q, side="left")
    lo_t = np.empty_like(q)
    hi_t = np.empty_like(q)
    eps = 1e-12 * (1.0 + np.abs(q))
    for i, qi in enumerate(q):
        p = int(pos[i])
        at_break = p < x.size and abs(x[p] - qi) <= eps[i]
        if not at_break and p > 0 and abs(x[p - 1] - qi) <= eps[i]:
            p, at_break = p - 1, True
        if at_break:
            left = mags[p - 1] if p - 1 >= 0 else math.inf
            right = mags[p] if p < mags.size else 0.0
            lo_t[i], hi_t[i] = right, left
        elif p == 0:
            lo_t[i], hi_t[i] = mags[0], math.inf  # below the grid: domain edge
        elif p >= x.size:
            lo_t[i], hi_t[i] = 0.0, mags[-1]
        else:
            lo_t[i] = hi_t[i] = mags[p - 1]
    return lo_t, hi_t


def feasibility_checks(g: GFunction, domain: Domain) -> dict:
    """Implemented smallness condition and the literal one, both reported."""
    d = domain.d
    alpha = g.alpha
    vol = domain.volume
    if np.isfinite(g.t_alpha):
        t1 = alpha * g.t_alpha ** (1.0 / d)
    else:
        t1 = cube_circumradius(d)
    covering = unit_ball_volume(d) * alpha**d < vol * t1**d
    literal = alpha < vol * t1
    return {"covering_impossible": bool(covering), "literal": bool(literal),
            "t1_effective": float(t1)}


def solve_limit(
    f: ScalarField,
    g: GFunction,
    domain: Domain | None = None,
    mass_tol: float = 1e-6,
    bisect_iters: int = 200,
) -> LimitSolution:
    """Unit-mass minimiser of the limit functional via multiplier bisection.

    Density is zero wherever f vanishes; elsewhere the selection inverts
    -dg at c/f^2, with residual mass spread uniformly (in the selection
    parameter) over the flat kink-level set.
    """
    if domain is None:
        domain = f.domain
    if np.any(f.values < 0):
        raise ValueError("f must be nonnegative")
    checks = feasibility_checks(g, domain)
    if not checks["covering_impossible"]:
        raise InfeasibleError(
            "alpha too large for the domain: covering is possible in the limit"
        )
    w = trapezoid_weights(f.shape) * float(np.prod(f.h))
    fpos = f.values > 0
    if not np.any(fpos):
        raise ValueError("f vanishes a.e.; the limit problem is degenerate")
    f2 = f.values[fpos] ** 2
    wp = w[fpos]

    def masses(c: float):
        lo, hi = _subdiff_inverse_arrays(g, c / f2)
        return lo, hi, float(np.sum(wp * lo)), float(np.sum(wp * hi))

    mags = _slope_magnitudes(g)
    c_hi = float(np.max(mags) * np.max(f2)) * 2.0 + 1.0
    c_lo = 1e-12 * c_hi
    # expand until the bracket straddles unit mass (mid-selection)
    for _ in range(80):
        _, _, mlo, mhi = masses(c_lo)
        if 0.5 * (mlo + mhi) >= 1.0:
            break
        c_lo *= 0.25
        if c_lo < 1e-300:
            raise InfeasibleError(
                "selection mass stays below 1 even as c -> 0; the g grid "
                "cannot carry unit mass on this domain"
            )
    else:
        raise InfeasibleError("bracket expansion failed on the low side")
    for _ in range(80):
        _, _, mlo, mhi = masses(c_hi)
        if 0.5 * (mlo + mhi) <= 1.0:
            break
        c_hi *= 4.0
        if not math.isfinite(c_hi):
            raise InfeasibleError("bracket expansion failed on the high side")
    else:
        raise InfeasibleError("bracket expansion failed on the high side")
    for _ in range(bisect_iters):
        c_mid = 0.5 * (c_lo + c_hi)
        if c_mid in (c_lo, c_hi):
            break
        _, _, mlo, mhi = masses(c_mid)
        if 0.5 * (mlo + mhi) >= 1.0:
            c_lo = c_mid
        else:
            c_hi = c_mid
    # pick an endpoint whose interval selection straddles unit mass
    c_star, lam = None, 0.0
    best = None
    for cand in (c_lo, c_hi, 0.5 * (c_lo + c_hi)):
        lo, hi, mlo, mhi = masses(cand)
        if mlo - 1e-15 <= 1.0 <= mhi + 1e-15:
            lam = 0.0 if mhi == mlo else (1.0 - mlo) / (mhi - mlo)
            c_star, sel = cand, (lo, hi)
            break
        gap = min(abs(mlo - 1.0), abs(mhi - 1.0))
        if best is None or gap < best[0]:
            best = (gap, cand, (lo, hi), mlo, mhi)
    if c_star is None:
        _, cand, (lo, hi), mlo, mhi = best
        lam = 0.0 if mhi == mlo else min(1.0, max(0.0, (1.0 - mlo) / (mhi - mlo)))
        c_star, sel = cand, (lo, hi)
    lo, hi = sel
    mu_pos = lo + lam * (hi - lo)
    mu = np.zeros(f.shape)
    mu[fpos] = mu_pos
    dens = DensityMeasure(ScalarField(domain, mu))
    mass_err = abs(dens.mass - 1.0)
    # optimality certificate: distance of c/f^2 to -dg(mu) per node
    tlo, thi = _subdiff_interval_at(g, mu_pos)
    q = c_star / f2
    viol = np.maximum(0.0, np.maximum(tlo - q, q - thi))
    t_excess = (
        max(0.0, float(np.max(mu)) - g.t_alpha) if np.isfinite(g.t_alpha) else 0.0
    )
    residuals = {
        "mass_error": mass_err,
        "inclusion_violation": float(np.max(viol, initial=0.0)),
        "t_alpha_excess": t_excess,
    }
    if mass_err > mass_tol:
        raise InfeasibleError(
            f"bisection left a mass error of {mass_err:.3e} (tol {mass_tol:.1e})"
        )
    obj = evaluate_F(dens, f, g)
    return LimitSolution(dens, float(c_star), obj, residuals, checks)


def oned_limit_exact(f: ScalarField) -> tuple[DensityMeasure, float]:
    """Exact 1-d point-obstacle limit: density proportional to f^(2/3).

    Returns the unit-mass density c f^(2/3) and the objective
    (1/12) (integral of f^(2/3))^3.
    """
    if f.domain.d != 1:
        raise ValueError("exact limit density is 1-d")
    if np.any(f.values < 0):
        raise ValueError("f must be nonnegative")
    w = trapezoid_weights(f.shape) * float(np.prod(f.h))
    pow23 = f.values ** (2.0 / 3.0)
    total = float(np.sum(w * pow23))
    if total <= 0:
        raise ValueError("f is degenerate: integral of f^(2/3) vanishes")
    density = DensityMeasure(ScalarField(f.domain, pow23 / total))
    objective = total**3 / 12.0
    return density, objective
