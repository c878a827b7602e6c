"""Estimation of the scaled-compliance cell constant and its closed-form bounds.

theta(alpha) is sampled on the unit cube by evaluating configuration families
(regular lattices, lattices with a small optimisation budget, homogenised
boundary-covered cells) at increasing k with n = k^d balls, taking the scaled
compliance n**(2/d) F.  The sampled table is post-processed into monotone
envelopes and the rescaled convex profile g_alpha(x) = x**(-2/d)
theta(alpha x**(1/d)) used by the limit problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .balls import BallConfig, boundary_cover, homogenize, hex_config, lattice_config
from .errors import ResolutionError
from .grids import NEUMANN, Domain, ScalarField
from .placement import OptimizerSettings, optimize
from .poisson import compliance, rasterize, solve_poisson

ALL_FAMILIES = ("lattice", "lattice+optimize", "homogenized-best", "hex")


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def cube_circumradius(d: int) -> float:
    return math.sqrt(d) / 2.0


# ---------------------------------------------------------------------------
# closed-form bounds


def upper_bound_neumann(alpha: float, d: int) -> float:
    """Integral over B(x0, r0) of the explicit radial Neumann supersolution.

    The annulus solution w vanishes at radius alpha, has zero normal
    derivative at r0 = sqrt(d)/2 and dominates the unit-cube cell solution,
    so its ball integral upper-bounds theta(alpha).
    """
    r0 = cube_circumradius(d)
    if not 0.0 < alpha < r0:
        raise ValueError(f"need 0 < alpha < sqrt(d)/2 = {r0:.4f}")
    if d == 1:
        raise ValueError("1-d theta is known exactly; no Neumann bound needed")
    if d == 2:
        k = r0**2 / 2.0
        t1 = 2.0 * math.pi * k * (
            (r0**2 / 2.0) * math.log(r0 / alpha) - r0**2 / 4.0 + alpha**2 / 4.0
        )
        t2 = -(math.pi / 8.0) * (r0**2 - alpha**2) ** 2
        return t1 + t2
    wd = unit_ball_volume(d)
    k = r0**d / (d * (d - 2.0))
    t1 = wd * k * alpha ** (2.0 - d) * (r0**d - alpha**d)
    t2 = -d * wd * k * (r0**2 - alpha**2) / 2.0
    i3 = (r0 ** (d + 2) - alpha ** (d + 2)) / (d + 2.0) - alpha**2 * (
        r0**d - alpha**d
    ) / d
    t3 = -(wd / 2.0) * i3
    return t1 + t2 + t3


def neumann_bound_profile(alpha: float, d: int):
    """The radial supersolution w(r) and its derivative, for cross-checks."""
    r0 = cube_circumradius(d)
    if d == 2:
        k = r0**2 / 2.0

        def w(r):
            return k * np.log(r / alpha) - (r**2 - alpha**2) / 4.0

        def dw(r):
            return k / r - r / 2.0

    else:
        k = r0**d / (d * (d - 2.0))

        def w(r):
            return k * (alpha ** (2.0 - d) - r ** (2.0 - d)) - (
                r**2 - alpha**2
            ) / (2.0 * d)

        def dw(r):
            return k * (d - 2.0) * r ** (1.0 - d) - r / d

    return w, dw


def lower_bound(alpha: float, d: int, t1_cap: float | None = None) -> float:
    """Closed-form lower estimate of theta from the shape-derivative chain.

    Evaluated with the conservative cap t1 <= sqrt(d)/2; may be negative
    (vacuous) for large alpha.
    """
    if d < 2:
        raise ValueError("lower bound is stated for d >= 2")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    t1 = t1_cap if t1_cap is not None else cube_circumradius(d)
    if d == 2:
        c = math.log(1.0 / t1) / (2.0 * math.pi) + t1**2 / 2.0
        return math.log(1.0 / alpha) / (2.0 * math.pi) - c
    wd = unit_ball_volume(d)
    c = t1**2 / d + t1 ** (2.0 - d) / (d * (d - 2.0) * wd)
    return alpha ** (2.0 - d) / (d * (d - 2.0) * wd) - c


def theta_derivative_bound(alpha: float, d: int) -> float:
    """Lower bound on -theta'(alpha), clamped at zero."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    wd = unit_ball_volume(d)
    return max(0.0, alpha ** (1.0 - d) / (d * wd) - 2.0 * alpha / d)


# ---------------------------------------------------------------------------
# resolution rule


@dataclass
class ResolutionRule:
    """Grid choice for lattice sweeps: h = 1/(k*m), cells aligned to the lattice.

    m is the smallest even per-cell node count with r/h >= ratio and
    h <= h_cap; when alpha*m can be made an integer nearby, it is nudged so
    ball surfaces land on nodes (kills the 1-d staircase bias entirely).
    """

    ratio: float = 8.0
    h_cap: float | None = None
    max_nodes: int = 8_000_000

    def spacing(self, alpha: float, k: int, domain: Domain,
                nodes_divisor: int = 1) -> float:
        m = 2
        if alpha > 0:
            m = max(m, math.ceil(self.ratio / alpha))
        if self.h_cap is not None:
            m = max(m, math.ceil(max(domain.extents) / (k * self.h_cap)))
        m += m % 2
        if alpha > 0:
            for cand in range(m, 4 * m + 1, 2):
                if abs(alpha * cand - round(alpha * cand)) < 1e-9:
                    m = cand
                    break
        nodes = 1
        for e in domain.extents:
            nodes *= int(round(e * k * m / max(domain.extents))) + 1
        if nodes // nodes_divisor > self.max_nodes:
            raise ResolutionError(
                f"k={k} at r/h>={self.ratio} needs {nodes // nodes_divisor} "
                f"nodes (cap {self.max_nodes})"
            )
        return max(domain.extents) / (k * m)


# ---------------------------------------------------------------------------
# configuration families


def _family_config(
    family: str,
    k: int,
    alpha: float,
    domain: Domain,
    h,
    opt_budget: int,
    opt_n_cap: int,
    seed: int,
) -> BallConfig | None:
    if family == "lattice":
        return lattice_config(k, alpha, domain)
    if family == "lattice+optimize":
        n = k**domain.d
        if n > opt_n_cap or opt_budget <= 0:
            return None
        start = lattice_config(k, alpha, domain)
        settings = OptimizerSettings(
            method="pattern-search",
            initial_step=0.25,
            max_iters=opt_budget,
            seed=seed,
            restarts=0,
            solver_tol=1e-7,
        )
        f_one = ScalarField.constant(domain, h, 1.0)
        return optimize(start, f_one, settings, h).final_config
    if family == "hex":
        if domain.d != 2:
            return None
        return hex_config(k**2, alpha, domain)
    raise ValueError(f"unknown family {family!r}")


def _homogenized_best_config(k: int, alpha: float, domain: Domain) -> BallConfig:
    """Boundary-covered small cell, tiled to order k, radii grown back to alpha.

    The cover inflates alpha, so the base lattice is built at a shrunk level
    found by a short fixed-point iteration; growing the radii back to the
    class value can only lower the compliance.
    """
    base_k = 2
    a = alpha
    for _ in range(4):
        base = lattice_config(base_k, a, domain)
        covered = boundary_cover(base)
        a = alpha * (base.n / covered.n) ** (1.0 / domain.d)
    base = lattice_config(base_k, a, domain)
    covered = boundary_cover(base)
    tiled = homogenize(covered, k, domain)
    return BallConfig(domain, tiled.centers, alpha)


def _scaled_value(config: BallConfig, domain: Domain, h, solver_tol: float) -> float:
    mask = rasterize(config, domain, h)
    f = ScalarField.constant(domain, h, 1.0)
    u, _ = solve_poisson(domain, mask, f, tol=solver_tol)
    return config.n ** (2.0 / domain.d) * compliance(u, f)


def _lattice_value_symmetric(
    k: int, alpha: float, domain: Domain, h, solver_tol: float
) -> float:
    """Scaled lattice compliance via the reflection-symmetric orthant.

    For even k and unit load the problem is mirror symmetric across every
    mid-plane, so it is solved on [0, 1/2]^d with Neumann symmetry faces
    (the outer Dirichlet faces are pinned through the mask) at 2^d the
    economy.  The trapezoid quadrature glues exactly: the full integral is
    2^d times the orthant one.
    """
    d = domain.d
    dom_q = Domain(tuple(e / 2.0 for e in domain.extents), outer=NEUMANN)
    mids = [(np.arange(k // 2) + 0.5) * e / k for e in domain.extents]
    grids = np.meshgrid(*mids, indexing="ij")
    centers = np.stack([g.ravel() for g in grids], axis=1)
    # same physical radius alpha/k under the quadrant ball count
    alpha_q = (alpha / k) * (k // 2)
    cfg_q = BallConfig(dom_q, centers, alpha_q)
    mask = rasterize(cfg_q, dom_q, h)
    pin = mask.pinned
    for a in range(d):  # outer Dirichlet faces of the original box
        sl = [slice(None)] * d
        sl[a] = 0
        pin[tuple(sl)] = True
    f = ScalarField.constant(dom_q, h, 1.0)
    u, _ = solve_poisson(dom_q, mask, f, tol=solver_tol)
    n = k**d
    return n ** (2.0 / d) * (2**d) * compliance(u, f)


def estimate_theta(
    alpha: float,
    d: int,
    k_list,
    families=("lattice", "lattice+optimize"),
    h_rule: ResolutionRule | None = None,
    opt_budget: int = 3,
    opt_n_cap: int = 64,
    solver_tol: float = 1e-6,
    seed: int = 0,
):
    """Scaled-compliance estimate of theta(alpha) on the unit cube.

    For each k (n = k^d) take the best value over the configuration
    families; report the value at the largest k with the last successive
    difference as the error bar.

    Returns (theta_hat, err, metadata).
    """
    k_list = sorted(int(k) for k in k_list)
    if not k_list:
        raise ValueError("k_list must be nonempty")
    bad = set(families) - set(ALL_FAMILIES)
    if bad:
        raise ValueError(f"unknown families {sorted(bad)}")
    rule = h_rule if h_rule is not None else ResolutionRule()
    domain = Domain.unit_cube(d)
    per_k: dict[int, dict[str, float]] = {}
    best_per_k = []
    h_last = None
    for k in k_list:
        symmetric = d >= 2 and k % 2 == 0 and 0 < alpha < 0.5
        h = rule.spacing(alpha, k, domain, nodes_divisor=2**d if symmetric else 1)
        h_last = h
        vals: dict[str, float] = {}
        for fam in families:
            if fam == "lattice" and symmetric:
                vals[fam] = _lattice_value_symmetric(k, alpha, domain, h, solver_tol)
                continue
            if fam == "homogenized-best":
                cfg = _homogenized_best_config(k, alpha, domain)
            else:
                cfg = _family_config(
                    fam, k, alpha, domain, h, opt_budget, opt_n_cap, seed
                )
            if cfg is None:
                continue
            vals[fam] = _scaled_value(cfg, domain, h, solver_tol)
        per_k[k] = vals
        best_per_k.append(min(vals.values()))
    theta_hat = best_per_k[-1]
    err = (
        abs(best_per_k[-1] - best_per_k[-2]) if len(best_per_k) > 1 else theta_hat
    )
    k_best = k_list[-1]
    fam_best = min(per_k[k_best], key=per_k[k_best].get)
    meta = {
        "k_list": k_list,
        "per_k": per_k,
        "h": h_last,
        "family": fam_best,
        "best_per_k": best_per_k,
    }
    return theta_hat, err, meta


# ---------------------------------------------------------------------------
# table, envelopes and the g profile


@dataclass
class ThetaSample:
    alpha: float
    theta: float
    err: float
    k_max: int
    h: float
    family: str


@dataclass
class ThetaTable:
    d: int
    samples: list[ThetaSample] = field(default_factory=list)

    def __post_init__(self):
        self.samples.sort(key=lambda s: s.alpha)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([s.alpha for s in self.samples])

    @property
    def thetas(self) -> np.ndarray:
        return np.array([s.theta for s in self.samples])

    @property
    def errs(self) -> np.ndarray:
        return np.array([s.err for s in self.samples])

    def isotonic(self) -> np.ndarray:
        """Nonincreasing PAV fit of the raw values."""
        return pav_decreasing(self.thetas)

    def to_json_dict(self) -> dict:
        return {
            "d": self.d,
            "samples": [
                {
                    "alpha": s.alpha,
                    "theta": s.theta,
                    "err": s.err,
                    "k_max": s.k_max,
                    "h": s.h,
                    "family": s.family,
                }
                for s in self.samples
            ],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ThetaTable":
        return cls(
            int(obj["d"]),
            [ThetaSample(**s) for s in obj["samples"]],
        )


def pav_decreasing(values) -> np.ndarray:
    """Pool-adjacent-violators projection onto nonincreasing sequences."""
    vals = [float(v) for v in values]
    blocks = [[v, 1] for v in vals]  # (mean, count)
    out: list[list[float]] = []
    for b in blocks:
        out.append(b)
        while len(out) >= 2 and out[-2][0] < out[-1][0]:
            m2, c2 = out.pop()
            m1, c1 = out.pop()
            out.append([(m1 * c1 + m2 * c2) / (c1 + c2), c1 + c2])
    fit = []
    for m, c in out:
        fit.extend([m] * c)
    return np.asarray(fit)


def envelopes(table: ThetaTable):
    """Monotone interpolants (theta_minus, theta_plus) from the cleaned table.

    Both are nonincreasing piecewise-linear functions through the isotonic
    values (they coincide wherever the table is continuous); they extend
    flat on both sides of the sampled range.
    """
    if not table.samples:
        raise ValueError("empty table")
    a = table.alphas
    v = np.maximum(0.0, table.isotonic())

    def theta_minus(x):
        return np.interp(x, a, v, left=v[0], right=v[-1])

    def theta_plus(x):
        return np.interp(x, a, v, left=v[0], right=v[-1])

    return theta_minus, theta_plus


def t1_estimate(table: ThetaTable, zero_tol: float | None = None):
    """First alpha where the cleaned table drops below zero_tol.

    Returns (t1, capped): if the table never reaches zero_tol the conservative
    cap sqrt(d)/2 is reported with capped=True.
    """
    v = np.maximum(0.0, table.isotonic())
    a = table.alphas
    if zero_tol is None:
        zero_tol = 1e-3 * max(v[0], 1e-300)
    below = np.flatnonzero(v <= zero_tol)
    if below.size == 0:
        return cube_circumradius(table.d), True
    j = int(below[0])
    if j == 0:
        return float(a[0]), False
    # linear crossing between the previous sample and this one
    t1 = a[j - 1] + (v[j - 1] - zero_tol) * (a[j] - a[j - 1]) / (v[j - 1] - v[j])
    return float(t1), False


def lower_convex_hull(x: np.ndarray, y: np.ndarray):
    """Vertices of the lower convex envelope of the points (x, y)."""
    hx: list[float] = []
    hy: list[float] = []
    for xi, yi in zip(x, y):
        while len(hx) >= 2 and (
            (hy[-1] - hy[-2]) * (xi - hx[-1]) >= (yi - hy[-1]) * (hx[-1] - hx[-2])
        ):
            hx.pop()
            hy.pop()
        hx.append(float(xi))
        hy.append(float(yi))
    return np.asarray(hx), np.asarray(hy)


@dataclass
class GFunction:
    """Piecewise-linear convex nonincreasing density-cost profile.

    Evaluation extends constant below the first breakpoint and is zero at
    and beyond the cutoff t_alpha (infinite when the profile never reaches
    zero inside its grid).
    """

    x: np.ndarray
    g: np.ndarray
    alpha: float
    d: int
    t_alpha: float

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        if self.x.ndim != 1 or self.x.shape != self.g.shape or self.x.size < 2:
            raise ValueError("need matching 1-d breakpoint/value arrays")
        if self.x[0] <= 0 or np.any(np.diff(self.x) <= 0):
            raise ValueError("breakpoints must be positive and increasing")
        if np.any(self.g < 0):
            raise ValueError("g values must be nonnegative")
        s = np.diff(self.g) / np.diff(self.x)
        if np.any(s > 1e-12):
            raise ValueError("g must be nonincreasing")
        if np.any(np.diff(s) < -1e-12 * max(1.0, float(np.max(np.abs(s))))):
            raise ValueError("g must be convex")

    def slopes(self) -> np.ndarray:
        return np.diff(self.g) / np.diff(self.x)

    def __call__(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        out = np.interp(q, self.x, self.g, left=self.g[0], right=self.g[-1])
        if np.isfinite(self.t_alpha):
            out = np.where(q >= self.t_alpha, 0.0, out)
        return out

    def to_json_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "d": self.d,
            "t_alpha": self.t_alpha if np.isfinite(self.t_alpha) else None,
            "breakpoints": [[float(a), float(b)] for a, b in zip(self.x, self.g)],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "GFunction":
        pts = np.asarray(obj["breakpoints"], dtype=float)
        t = obj.get("t_alpha")
        return cls(
            pts[:, 0],
            pts[:, 1],
            float(obj["alpha"]),
            int(obj["d"]),
            math.inf if t is None else float(t),
        )


def raw_g_values(table: ThetaTable, alpha: float, x_grid) -> np.ndarray:
    """x**(-2/d) theta_minus(alpha x**(1/d)) before convexification."""
    tm, _ = envelopes(table)
    x = np.asarray(x_grid, dtype=float)
    d = table.d
    return x ** (-2.0 / d) * tm(alpha * x ** (1.0 / d))


def build_g(table: ThetaTable, alpha: float, x_grid) -> GFunction:
    """Lower convex envelope of the rescaled table on the given density grid."""
    x = np.asarray(x_grid, dtype=float)
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if x.ndim != 1 or x.size < 2 or x[0] <= 0 or np.any(np.diff(x) <= 0):
        raise ValueError("x_grid must be positive and increasing")
    raw = raw_g_values(table, alpha, x)
    hx, hy = lower_convex_hull(x, raw)
    hy = np.maximum(hy, 0.0)
    scale = max(float(hy[0]), 1e-300)
    zero = hy <= 1e-14 * scale
    if np.any(zero):
        j = int(np.flatnonzero(zero)[0])
        t_alpha = float(hx[j])
        hx, hy = hx[: j + 1], hy[: j + 1]
        hy[j] = 0.0
        # explicit flat zero tail so the subdifferential sees the cutoff
        hx = np.append(hx, x[-1] if x[-1] > t_alpha else 2.0 * t_alpha)
        hy = np.append(hy, 0.0)
    else:
        t_alpha = math.inf
    return GFunction(hx, hy, alpha, table.d, t_alpha)
