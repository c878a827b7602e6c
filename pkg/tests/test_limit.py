import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize as sopt

from comploc.errors import DomainMismatchError, InfeasibleError
from comploc.grids import Domain, ScalarField, trapezoid_weights
from comploc.limit import (
    DensityMeasure,
    default_g_grid,
    evaluate_F,
    exact_oned_gfunction,
    feasibility_checks,
    oned_limit_exact,
    oned_theta_exact,
    solve_limit,
    subdiff_inverse,
    _subdiff_inverse_arrays,
)
from comploc.theta import GFunction

UNIT1 = Domain.unit_cube(1)


def test_oned_theta_exact_values():
    assert oned_theta_exact(0.0) == 1.0 / 12.0
    assert abs(oned_theta_exact(0.25) - 1.0 / 96.0) < 1e-15
    assert oned_theta_exact(0.5) == 0.0
    assert oned_theta_exact(0.7) == 0.0
    with pytest.raises(ValueError):
        oned_theta_exact(-0.1)


def test_exact_gfunction_values():
    g = exact_oned_gfunction(0.2)
    assert abs(g(np.array([1.0]))[0] - oned_theta_exact(0.2)) < 1e-9
    assert g.t_alpha == 2.5
    assert g(np.array([3.0]))[0] == 0.0
    g0 = exact_oned_gfunction(0.0)
    assert math.isinf(g0.t_alpha)
    assert abs(g0(np.array([2.0]))[0] - 1.0 / 48.0) < 1e-6


# ---------------------------------------------------------------------------
# subdifferential inversion


def brute_inverse(g: GFunction, t: float):
    """Scan-based oracle for {x : t in -dg(x)} on the breakpoint grid."""
    mags = -g.slopes()
    xs = []
    # breakpoints: interval [mags[j], mags[j-1]] (inf on the far left)
    for j, xj in enumerate(g.x):
        left = mags[j - 1] if j >= 1 else math.inf
        right = mags[j] if j < mags.size else 0.0
        if right - 1e-12 <= t <= left + 1e-12:
            xs.append(xj)
    # open segments where the slope equals t exactly
    for j, m in enumerate(mags):
        if abs(m - t) <= 1e-12 * (1 + abs(t)):
            xs.extend([g.x[j], g.x[j + 1]])
    return (min(xs), max(xs)) if xs else None


def random_gfun(seed):
    rng = np.random.default_rng(seed)
    m = rng.integers(3, 9)
    x = np.cumsum(rng.uniform(0.1, 1.0, size=m))
    mags = np.sort(rng.uniform(0.0, 5.0, size=m - 1))[::-1]
    g = np.concatenate([[3.0], 3.0 - np.cumsum(mags * np.diff(x))])
    g = g - g.min()
    t_alpha = x[-1] if mags[-1] == 0 else math.inf
    return GFunction(x, g, 0.1, 1, math.inf)


@given(st.integers(0, 200))
@settings(max_examples=60, deadline=None)
def test_subdiff_inverse_matches_brute(seed):
    g = random_gfun(seed)
    mags = -g.slopes()
    rng = np.random.default_rng(seed + 999)
    queries = list(rng.uniform(0.0, 6.0, size=8)) + list(mags) + [math.inf]
    for t in queries:
        lo, hi = subdiff_inverse(g, t)
        oracle = brute_inverse(g, t)
        if oracle is None:
            # flatter than the whole profile: clamps right
            assert lo == hi
            continue
        if math.isinf(t):
            assert (lo, hi) == (0.0, g.x[0])
            continue
        assert abs(lo - oracle[0]) < 1e-9 and abs(hi - oracle[1]) < 1e-9


def test_subdiff_inverse_spec_cases():
    g = exact_oned_gfunction(0.2, np.linspace(0.05, 3.0, 60))
    mags = -g.slopes()
    # strictly between adjacent slopes: singleton at the shared breakpoint
    t = 0.5 * (mags[3] + mags[4])
    lo, hi = subdiff_inverse(g, t)
    assert lo == hi == g.x[4]
    # exactly a slope: the full segment
    lo, hi = subdiff_inverse(g, mags[2])
    assert (lo, hi) == (g.x[2], g.x[3])
    # t = +inf -> [0, x0]
    assert subdiff_inverse(g, math.inf) == (0.0, g.x[0])
    # t <= 0 -> cutoff clamp
    assert subdiff_inverse(g, 0.0) == (g.t_alpha, g.t_alpha)
    assert subdiff_inverse(g, -1.0) == (g.t_alpha, g.t_alpha)


# ---------------------------------------------------------------------------
# evaluate_F


def test_evaluate_f_uniform_density():
    g = exact_oned_gfunction(0.2)
    h = 1e-3
    f = ScalarField.constant(UNIT1, h, 1.0)
    mu = DensityMeasure(ScalarField.constant(UNIT1, h, 1.0))
    val = evaluate_F(mu, f, g)
    assert abs(val - oned_theta_exact(0.2)) < 1e-9


def test_evaluate_f_above_cutoff_is_zero():
    g = exact_oned_gfunction(0.2)
    h = 1e-2
    f = ScalarField.constant(UNIT1, h, 1.0)
    mu = DensityMeasure(ScalarField.constant(UNIT1, h, 3.0))  # >= t_alpha = 2.5
    assert evaluate_F(mu, f, g) == 0.0


def test_evaluate_f_exact_alpha0():
    g = exact_oned_gfunction(0.0)
    h = 1e-4
    f = ScalarField.constant(UNIT1, h, 1.0)
    mu = DensityMeasure(ScalarField.constant(UNIT1, h, 1.0))
    assert abs(evaluate_F(mu, f, g) - 1.0 / 12.0) < 1e-7


def test_evaluate_f_grid_mismatch():
    g = exact_oned_gfunction(0.2)
    f = ScalarField.constant(UNIT1, 1e-2, 1.0)
    mu = DensityMeasure(ScalarField.constant(UNIT1, 1e-3, 1.0))
    with pytest.raises(DomainMismatchError):
        evaluate_F(mu, f, g)


# ---------------------------------------------------------------------------
# solve_limit


def test_solve_limit_uniform_f():
    g = exact_oned_gfunction(0.2)
    f = ScalarField.constant(UNIT1, 1e-3, 1.0)
    sol = solve_limit(f, g)
    assert np.max(np.abs(sol.density.values - 1.0)) < 1e-3
    # c lands in -dg(1)
    from comploc.limit import _subdiff_interval_at

    lo_t, hi_t = _subdiff_interval_at(g, np.array([1.0]))
    assert lo_t[0] - 1e-8 <= sol.c <= hi_t[0] + 1e-8
    assert sol.residuals["mass_error"] <= 1e-6


def test_solve_limit_exact_alpha0_profile():
    g = exact_oned_gfunction(0.0)
    h = 1e-4
    f = ScalarField.from_callable(UNIT1, h, lambda x: 1.0 + x)
    sol = solve_limit(f, g)
    mu_exact, obj_exact = oned_limit_exact(f)
    assert np.max(np.abs(sol.density.values - mu_exact.values)) <= 1e-4
    assert abs(sol.objective - obj_exact) <= 1e-6
    assert sol.residuals["mass_error"] <= 1e-6
    assert sol.residuals["inclusion_violation"] <= 1e-8


def test_solve_limit_certificate_alpha02():
    g = exact_oned_gfunction(0.2)
    h = 1e-4
    f = ScalarField.from_callable(UNIT1, h, lambda x: 1.0 + x)
    sol = solve_limit(f, g)
    assert sol.residuals["mass_error"] <= 1e-6
    assert sol.residuals["inclusion_violation"] <= 1e-8
    assert np.max(sol.density.values) <= g.t_alpha + 1e-6
    assert sol.c > 0
    # random feasible perturbations never do better
    rng = np.random.default_rng(0)
    w = trapezoid_weights(f.shape) * np.prod(f.h)
    base = evaluate_F(sol.density, f, g)
    for _ in range(100):
        noise = rng.normal(0.0, 0.05, size=f.shape)
        pert = np.maximum(0.0, sol.density.values + noise)
        mass = float(np.sum(w * pert))
        if mass <= 0:
            continue
        pert /= mass
        val = evaluate_F(DensityMeasure(ScalarField(UNIT1, pert)), f, g)
        assert val >= base - 1e-12


def test_solve_limit_zero_f_region():
    g = exact_oned_gfunction(0.2)
    h = 1e-3
    f = ScalarField.from_callable(UNIT1, h, lambda x: np.where(x < 0.5, 1.0, 0.0))
    sol = solve_limit(f, g)
    nodes = f.axes()[0]
    assert np.all(sol.density.values[nodes > 0.5] == 0.0)
    assert sol.residuals["mass_error"] <= 1e-6


def test_solve_limit_infeasible_alpha():
    # d=1 covering check: 2 alpha >= t1 = 1/2 makes covering possible
    g = exact_oned_gfunction(0.3)
    f = ScalarField.constant(UNIT1, 1e-3, 1.0)
    with pytest.raises(InfeasibleError):
        solve_limit(f, g)


def test_feasibility_checks_reported():
    g = exact_oned_gfunction(0.2)
    checks = feasibility_checks(g, UNIT1)
    assert checks["covering_impossible"] is True
    assert "literal" in checks
    assert np.isclose(checks["t1_effective"], 0.5)


def test_mass_monotone_in_c():
    g = exact_oned_gfunction(0.2)
    h = 1e-3
    f = ScalarField.from_callable(UNIT1, h, lambda x: 1.0 + x)
    w = trapezoid_weights(f.shape) * np.prod(f.h)
    masses = []
    for c in np.geomspace(1e-3, 10.0, 25):
        lo, hi = _subdiff_inverse_arrays(g, c / f.values**2)
        masses.append(float(np.sum(w * 0.5 * (lo + hi))))
    assert all(b <= a + 1e-12 for a, b in zip(masses, masses[1:]))


def test_density_measure_validation():
    with pytest.raises(ValueError):
        DensityMeasure(ScalarField(UNIT1, np.array([-0.1, 0.5, 0.2])))


# ---------------------------------------------------------------------------
# exact 1-d limit


def test_oned_limit_exact_uniform_unit():
    f = ScalarField.constant(UNIT1, 1e-4, 1.0)
    mu, obj = oned_limit_exact(f)
    assert np.allclose(mu.values, 1.0)
    assert abs(obj - 1.0 / 12.0) < 1e-12


def test_oned_limit_exact_length_two():
    dom = Domain((2.0,))
    f = ScalarField.constant(dom, 1e-3, 1.0)
    mu, obj = oned_limit_exact(f)
    assert np.allclose(mu.values, 0.5)
    assert abs(obj - 8.0 / 12.0) < 1e-12


def test_oned_limit_exact_indicator_with_simplex_oracle():
    h = 1e-4
    f = ScalarField.from_callable(UNIT1, h, lambda x: np.where(x < 0.5, 1.0, 0.0))
    mu, obj = oned_limit_exact(f)
    assert abs(obj - 1.0 / 96.0) < 1e-3 / 96.0
    # independent oracle: numerically minimise (1/12) int f^2 / mu^2 over the
    # mass-one simplex on a coarse grid
    cells = 40
    hc = 1.0 / cells
    xs = (np.arange(cells) + 0.5) * hc
    fv = np.where(xs < 0.5, 1.0, 0.0)

    def objective(m):
        mm = np.maximum(m, 1e-9)
        return np.sum(fv**2 / mm**2) * hc / 12.0

    cons = [{"type": "eq", "fun": lambda m: np.sum(m) * hc - 1.0}]
    x0 = np.full(cells, 1.0)
    res = sopt.minimize(
        objective, x0, bounds=[(0, 10)] * cells, constraints=cons,
        method="SLSQP", options={"maxiter": 500},
    )
    assert res.success
    assert abs(res.fun - obj) / obj < 0.02
    # density doubles on the support (up to the jump-node quadrature bias)
    support = f.axes()[0] < 0.5
    assert np.allclose(mu.values[support & (f.axes()[0] > 0.01)], 2.0, rtol=1e-3)


def test_oned_limit_exact_degenerate():
    f = ScalarField.constant(UNIT1, 1e-2, 0.0)
    with pytest.raises(ValueError):
        oned_limit_exact(f)


def test_default_g_grid_covers_cutoff():
    x = default_g_grid(0.2)
    assert x[0] <= 1e-3 and x[-1] >= 2.5
    assert np.all(np.diff(x) > 0)
