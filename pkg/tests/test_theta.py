import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from comploc.errors import ResolutionError
from comploc.grids import Domain
from comploc.limit import oned_theta_exact
from comploc.theta import (
    GFunction,
    ResolutionRule,
    ThetaSample,
    ThetaTable,
    build_g,
    envelopes,
    estimate_theta,
    lower_bound,
    lower_convex_hull,
    neumann_bound_profile,
    pav_decreasing,
    raw_g_values,
    t1_estimate,
    theta_derivative_bound,
    unit_ball_volume,
    upper_bound_neumann,
)


# ---------------------------------------------------------------------------
# closed-form bounds


def test_upper_bound_examples_and_quad_oracle():
    for d, alpha in [(2, 0.1), (2, 0.05), (3, 0.1), (3, 0.2)]:
        val = upper_bound_neumann(alpha, d)
        w, _ = neumann_bound_profile(alpha, d)
        r0 = math.sqrt(d) / 2.0
        surf = d * unit_ball_volume(d)
        oracle, err = integrate.quad(
            lambda r: w(r) * surf * r ** (d - 1), alpha, r0, epsabs=1e-12
        )
        assert abs(val - oracle) < 1e-6
    # leading term check from the logarithmic form
    lead = 0.25 * math.log(1.0 / (math.sqrt(2) * 0.1))
    assert abs(upper_bound_neumann(0.1, 2) - lead) < 0.02 * max(lead, 1)


def test_upper_bound_neumann_constant():
    # zero normal derivative at the outer radius fixes the constant
    for d in (2, 3):
        _, dw = neumann_bound_profile(0.1, d)
        assert abs(dw(math.sqrt(d) / 2)) < 1e-12


def test_upper_bound_outward_flux_positive_on_cube():
    # w' > 0 strictly inside (alpha, r0); the cube boundary radii lie there
    for d in (2, 3):
        _, dw = neumann_bound_profile(0.1, d)
        rng = np.random.default_rng(0)
        pts = rng.random((200, d))
        for a in range(d):
            side = pts.copy()
            side[:, a] = 1.0
            rho = np.linalg.norm(side - 0.5, axis=1)
            assert np.all(dw(rho) > 0)


def test_upper_bound_degenerate_annulus():
    r0 = math.sqrt(2) / 2
    v = upper_bound_neumann(r0 * (1 - 1e-6), 2)
    assert -1e-12 <= v < 1e-9  # analytic value >= 0; fp cancellation allowed


def test_upper_bound_rejections():
    with pytest.raises(ValueError):
        upper_bound_neumann(0.8, 2)  # alpha >= r0
    with pytest.raises(ValueError):
        upper_bound_neumann(0.1, 1)


def test_lower_bound_examples():
    # independent arithmetic for d=2, alpha=0.1, cap sqrt(2)/2
    c = math.log(1 / (math.sqrt(2) / 2)) / (2 * math.pi) + (math.sqrt(2) / 2) ** 2 / 2
    expect = math.log(10.0) / (2 * math.pi) - c
    assert abs(lower_bound(0.1, 2) - expect) < 1e-12
    assert abs(expect - 0.0613) < 5e-4
    # at the cap the stated constant leaves exactly -t1^2/2 (vacuous there)
    assert abs(lower_bound(math.sqrt(2) / 2, 2) + 0.25) < 1e-12
    # d=3 closed form
    w3 = unit_ball_volume(3)
    t1 = math.sqrt(3) / 2
    c3 = t1**2 / 3 + t1 ** (-1) / (3 * w3)
    expect3 = (1 / 0.05) / (3 * w3) - c3
    assert abs(lower_bound(0.05, 3) - expect3) < 1e-12
    with pytest.raises(ValueError):
        lower_bound(0.1, 1)


def test_theta_derivative_bound_values():
    assert abs(theta_derivative_bound(0.1, 2) - (10 / (2 * math.pi) - 0.1)) < 1e-12
    assert abs(theta_derivative_bound(0.1, 1) - 0.3) < 1e-12
    # consistency with the exact 1-d derivative: -theta'(a) = (1-2a)^2 / 2
    exact_minus_dtheta = 0.5 * (1 - 0.2) ** 2
    assert exact_minus_dtheta >= theta_derivative_bound(0.1, 1)
    assert theta_derivative_bound(5.0, 2) == 0.0


# ---------------------------------------------------------------------------
# isotonic cleanup and envelopes


@given(st.lists(st.floats(0, 10, allow_nan=False), min_size=1, max_size=30))
@settings(max_examples=80, deadline=None)
def test_pav_decreasing_properties(vals):
    out = pav_decreasing(vals)
    assert np.all(np.diff(out) <= 1e-12)
    assert np.isclose(np.sum(out), np.sum(vals))  # block means preserve mass
    already = sorted(vals, reverse=True)
    assert np.allclose(pav_decreasing(already), already)


def _table(d, alphas, thetas, errs=None):
    errs = errs if errs is not None else [0.0] * len(alphas)
    return ThetaTable(
        d,
        [
            ThetaSample(a, t, e, 8, 0.01, "lattice")
            for a, t, e in zip(alphas, thetas, errs)
        ],
    )


def test_envelopes_strictly_decreasing_table():
    t = _table(1, [0.1, 0.2, 0.3], [3.0, 2.0, 1.0])
    tm, tp = envelopes(t)
    for x in (0.1, 0.15, 0.25, 0.3):
        expect = np.interp(x, [0.1, 0.2, 0.3], [3.0, 2.0, 1.0])
        assert np.isclose(tm(x), expect) and np.isclose(tp(x), expect)


def test_envelopes_remove_blip():
    t = _table(1, [0.1, 0.2, 0.3], [3.0, 3.2, 1.0], errs=[0.3, 0.3, 0.3])
    tm, _ = envelopes(t)
    assert tm(0.2) <= 3.1 + 1e-12
    iso = t.isotonic()
    assert np.all(np.abs(iso - t.thetas) <= 2 * t.errs)


def test_envelopes_zero_tail():
    t = _table(2, [0.1, 0.5, 0.7, 0.8], [1.0, 0.2, 0.0, 0.0])
    tm, tp = envelopes(t)
    assert tm(0.75) == 0.0 and tp(0.9) == 0.0


def test_t1_estimate_exact_1d():
    alphas = np.linspace(0.0, 0.6, 13)
    t = _table(1, alphas, [oned_theta_exact(a) for a in alphas])
    t1, capped = t1_estimate(t)
    assert not capped
    assert abs(t1 - 0.5) <= 0.05 + 1e-9


def test_t1_estimate_edge_cases():
    t = _table(1, [0.1, 0.2], [0.0, 0.0])
    t1, capped = t1_estimate(t)
    assert t1 == 0.1 and not capped
    t2 = _table(2, [0.05, 0.1], [1.0, 0.8])
    t1b, capped_b = t1_estimate(t2)
    assert capped_b and np.isclose(t1b, math.sqrt(2) / 2)


# ---------------------------------------------------------------------------
# convex hull and the g profile


@given(
    st.lists(st.floats(0.0, 5.0, allow_nan=False), min_size=3, max_size=25),
)
@settings(max_examples=80, deadline=None)
def test_lower_convex_hull_properties(ys):
    xs = np.arange(1.0, len(ys) + 1.0)
    hx, hy = lower_convex_hull(xs, np.asarray(ys))
    # endpoints kept, hull below data, slopes nondecreasing
    assert hx[0] == xs[0] and hx[-1] == xs[-1]
    interp = np.interp(xs, hx, hy)
    assert np.all(interp <= np.asarray(ys) + 1e-9)
    s = np.diff(hy) / np.diff(hx)
    assert np.all(np.diff(s) >= -1e-9)


def exact_1d_table(alphas):
    return _table(1, alphas, [oned_theta_exact(a) for a in alphas])


def test_build_g_exact_1d_value():
    alphas = np.linspace(0.0, 0.6, 61)
    table = exact_1d_table(alphas)
    x = np.linspace(0.05, 4.0, 400)
    g = build_g(table, 0.25, x)
    # g(1) = theta(0.25) = 1/96
    assert abs(g(np.array([1.0]))[0] - 1.0 / 96.0) < 2e-4
    s = g.slopes()
    assert np.all(np.diff(s) >= -1e-12)
    # cutoff where alpha * x = t1: x = 2 for alpha = 0.25
    assert abs(g.t_alpha - 2.0) < 0.1


def test_build_g_zero_table():
    table = _table(1, [0.1, 0.2], [0.0, 0.0])
    g = build_g(table, 0.5, np.linspace(0.1, 2.0, 20))
    assert np.all(g(np.linspace(0.05, 3.0, 17)) == 0.0)


def test_build_g_d2_cutoff_scaling():
    # zero tail at t1 = 0.5 means the density cutoff sits at (t1/alpha)^d
    table = _table(2, [0.1, 0.3, 0.5, 0.6], [1.0, 0.3, 0.0, 0.0])
    x = np.geomspace(0.01, 60.0, 800)
    g = build_g(table, 0.1, x)
    assert abs(g.t_alpha - (0.5 / 0.1) ** 2) / 25.0 < 0.05


def test_gfunction_validation_and_roundtrip():
    with pytest.raises(ValueError):
        GFunction(np.array([1.0, 2.0]), np.array([1.0, 2.0]), 0.1, 1, math.inf)
    with pytest.raises(ValueError):
        GFunction(
            np.array([1.0, 2.0, 3.0]),
            np.array([3.0, 2.9, 1.0]),  # concave
            0.1,
            1,
            math.inf,
        )
    g = GFunction(np.array([0.5, 1.0, 2.0]), np.array([2.0, 1.0, 0.5]), 0.2, 1,
                  math.inf)
    obj = g.to_json_dict()
    g2 = GFunction.from_json_dict(obj)
    assert np.array_equal(g2.x, g.x) and np.array_equal(g2.g, g.g)
    assert g2.t_alpha == math.inf
    # evaluation extensions
    assert g(np.array([0.1]))[0] == 2.0
    assert g(np.array([5.0]))[0] == 0.5


def test_raw_g_convexity_from_convex_table():
    # piecewise-linear interpolation of a convex decreasing theta gives a
    # convex raw g; mirrors the shape diagnostics used on numerical tables
    alphas = np.linspace(0.05, 0.75, 15)
    thetas = np.maximum(0.0, np.log(1.0 / alphas) / (2 * math.pi) - 0.05)
    table = _table(2, alphas, thetas)
    x = np.geomspace(0.5, 40.0, 300)
    raw = raw_g_values(table, 0.1, x)
    second = raw[:-2] - 2 * raw[1:-1] + raw[2:]
    scale = np.maximum(np.abs(raw[1:-1]), 1e-12)
    assert np.min(second / scale) > -0.05


# ---------------------------------------------------------------------------
# resolution rule and the sweep

def test_resolution_rule_alignment():
    rule = ResolutionRule(ratio=8.0)
    dom = Domain.unit_cube(2)
    h = rule.spacing(0.1, 4, dom)
    m = 1.0 / (4 * h)
    assert abs(m - round(m)) < 1e-9
    assert (0.1 / 4) / h >= 8.0  # r/h honoured
    assert abs(0.1 * (1.0 / (4 * h) / 4) % 1.0) < 1e-6  # alpha*m integral


def test_resolution_rule_memory_cap():
    rule = ResolutionRule(ratio=8.0, max_nodes=10_000)
    with pytest.raises(ResolutionError):
        rule.spacing(0.05, 24, Domain.unit_cube(2))


def test_estimate_theta_1d_quick():
    rule = ResolutionRule(ratio=4.0, h_cap=1e-3)
    th, err, meta = estimate_theta(
        0.25, 1, [8, 32], families=("lattice",), h_rule=rule
    )
    exact = oned_theta_exact(0.25)
    assert abs(th - exact) / exact < 0.05
    assert err >= 0
    assert meta["family"] == "lattice"
    assert list(meta["per_k"].keys()) == [8, 32]


def test_estimate_theta_unknown_family():
    with pytest.raises(ValueError):
        estimate_theta(0.1, 1, [4], families=("voronoi",))


def test_estimate_theta_optimize_family_improves():
    rule = ResolutionRule(ratio=4.0, h_cap=2e-3)
    th_l, _, _ = estimate_theta(0.1, 1, [4], families=("lattice",), h_rule=rule)
    th_o, _, meta = estimate_theta(
        0.1, 1, [4], families=("lattice", "lattice+optimize"), h_rule=rule,
        opt_budget=10,
    )
    assert th_o <= th_l + 1e-12


def test_symmetric_lattice_path_matches_full():
    from comploc.theta import _family_config, _lattice_value_symmetric, _scaled_value

    dom = Domain.unit_cube(2)
    rule = ResolutionRule(ratio=8.0)
    h = rule.spacing(0.2, 4, dom)
    full = _scaled_value(_family_config("lattice", 4, 0.2, dom, h, 0, 0, 0),
                         dom, h, 1e-8)
    sym = _lattice_value_symmetric(4, 0.2, dom, h, 1e-8)
    assert abs(full - sym) < 1e-6 * full


def test_lipschitz_margin_exact_1d():
    # finite-difference slopes of the exact table dominate the closed-form
    # derivative bound at interval midpoints
    alphas = np.linspace(0.05, 0.45, 9)
    table = exact_1d_table(alphas)
    iso = table.isotonic()
    for i in range(len(alphas) - 1):
        slope = (iso[i] - iso[i + 1]) / (alphas[i + 1] - alphas[i])
        mid = 0.5 * (alphas[i] + alphas[i + 1])
        assert slope >= theta_derivative_bound(mid, 1) - 1e-9
