import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isaacs_fd import Ball, Box, DegenerateData, EmptyRegion, build_grid
from isaacs_fd.analysis import (
    barrier_ratio,
    build_barrier,
    fit_rate,
    holder_seminorm,
    k_gap_study,
    rate_study,
    regularity_study,
    sup_error,
)
from isaacs_fd.lattice import standard_directions
from isaacs_fd.problem import constant_coefficient_problem, make_manufactured

L1 = standard_directions(1)


@pytest.mark.parametrize(
    "samples,exponent",
    [
        ([(0.1, 0.01), (0.05, 0.0025), (0.025, 0.000625)], 2.0),
        ([(0.1, 1.0), (0.05, 1.0)], 0.0),
        ([(1.0, 3.0), (0.5, 1.5), (0.25, 0.75), (0.125, 0.375)], 1.0),
    ],
)
def test_fit_rate_examples(samples, exponent):
    rep = fit_rate(samples)
    assert rep.fitted_exponent == pytest.approx(exponent, abs=1e-12)
    assert all(o == pytest.approx(exponent, abs=1e-12) for o in rep.pairwise_orders)
    assert rep.residual <= 1e-12


def test_fit_rate_rejects_bad_input():
    with pytest.raises(DegenerateData):
        fit_rate([(0.1, 0.0), (0.05, 0.0)])
    with pytest.raises(ValueError):
        fit_rate([(0.05, 1.0), (0.1, 2.0)])
    with pytest.raises(ValueError):
        fit_rate([(0.1, 1.0)])


@settings(max_examples=100, deadline=None)
@given(
    st.floats(0.1, 3.0),
    st.floats(0.01, 100.0),
    st.lists(st.floats(1e-3, 1.0), min_size=2, max_size=6, unique=True),
)
def test_fit_rate_recovers_power_law(p, C, hs):
    hs = sorted(hs, reverse=True)
    if min(a / b for a, b in zip(hs, hs[1:])) < 1.01:
        return
    rep = fit_rate([(h, C * h**p) for h in hs])
    assert abs(rep.fitted_exponent - p) <= 1e-10


def test_sup_error_examples():
    g = build_grid(Box((0.0,), (1.0,)), 0.5, 0.25)
    u = g.sample(lambda t, x: x[:, 0])
    assert sup_error(u, lambda t, x: x[:, 0]) == 0.0
    assert sup_error(u, lambda t, x: x[:, 0] + 0.5) == pytest.approx(0.5)
    assert sup_error(u, g.zeros()) == pytest.approx(0.75)


def brute_seminorm(u, eps, chi):
    """Double loop over every pair of points in ``Q_eps``."""
    g = u.grid
    h = g.h
    pts = []
    for k, t in enumerate(g.times):
        if t >= g.T - eps * eps:
            continue
        for j, x in enumerate(g.coords):
            if g.rho[j] <= eps:
                continue
            nb = [(g.lookup(g.nodes[j] + e), g.lookup(g.nodes[j] - e)) for e in np.eye(g.dim, dtype=int)]
            if min(min(p) for p in nb) < 0:
                continue
            Du = np.array([(u.values[k, a] - u.values[k, b]) / (2 * h) for a, b in nb])
            pts.append((t, x, u.values[k, j], Du))
    s1 = s2 = s3 = 0.0
    for t, x, val, Du in pts:
        for s, y, val2, Du2 in pts:
            if np.array_equal(x, y) and t != s:
                s1 = max(s1, abs(val - val2) / abs(t - s) ** ((1 + chi) / 2))
                s3 = max(s3, np.linalg.norm(Du - Du2) / abs(t - s) ** (chi / 2))
            if t == s and not np.array_equal(x, y):
                s2 = max(s2, np.linalg.norm(Du - Du2) / np.linalg.norm(x - y) ** chi)
    return s1 + s2 + s3


@pytest.mark.parametrize("d", [1, 2])
def test_seminorm_matches_brute_force(d):
    L = standard_directions(d)
    g = build_grid(Box((0.0,) * d, (1.0,) * d), 0.1, 1 / 8, L.r_lambda)
    rng = np.random.default_rng(d)
    u = g.zeros()
    u.values[:] = rng.normal(size=g.shape)
    for eps in (0.1, 0.2):
        assert holder_seminorm(u, None, eps, 0.5) == pytest.approx(brute_seminorm(u, eps, 0.5), rel=1e-12)


def test_seminorm_zero_on_affine_and_scales():
    g = build_grid(Box((0.0, 0.0), (1.0, 1.0)), 0.25, 1 / 8, math.sqrt(2))
    aff = g.sample(lambda t, x: 3 * x[:, 0] - x[:, 1] + 2)
    assert holder_seminorm(aff, None, 0.1, 0.5) <= 1e-12
    assert holder_seminorm(g.sample(lambda t, x: np.full(len(x), 4.0)), None, 0.2, 0.3) == 0.0
    u = g.sample(lambda t, x: np.sin(3 * x[:, 0]) * np.cos(t + x[:, 1]))
    base = holder_seminorm(u, None, 0.1, 0.5)
    assert base > 0
    assert holder_seminorm(u * 2.5, None, 0.1, 0.5) == pytest.approx(2.5 * base, rel=1e-12)


def test_seminorm_empty_region():
    g = build_grid(Box((0.0,), (1.0,)), 0.25, 1 / 8)
    with pytest.raises(EmptyRegion):
        holder_seminorm(g.zeros(), None, 0.45, 0.5)
    with pytest.raises(ValueError):
        holder_seminorm(g.zeros(), None, 0.1, 1.0)


def test_barrier_ratio_examples():
    g = build_grid(Box((0.0, 0.0), (1.0, 1.0)), 0.25, 1 / 8, math.sqrt(2))
    gfun = lambda t, x: x[:, 0] * t
    v = g.sample(gfun)
    assert barrier_ratio(v, gfun) == 0.0
    w = g.sample(lambda t, x: x[:, 0] * t + g.domain.distance(x))
    assert barrier_ratio(w, gfun) == pytest.approx(1.0, rel=1e-12)
    assert barrier_ratio(w - v) == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("domain,delta,K0", [(Box((0.0,), (1.0,)), 0.5, 0.0), (Ball((0.0, 0.0), 1.0), 0.3, 2.0)])
def test_barrier_properties(domain, delta, K0):
    bp = build_barrier(domain, delta, K0)
    rng = np.random.default_rng(0)
    x = domain.sample(5000, rng)
    assert np.all(bp(x) >= 1)
    # worst case over S_delta and |b| <= K0 for a radial function:
    # delta on the concave radial curvature, 1/delta on the tangential one
    r = np.linalg.norm(x, axis=1)
    mu = bp.mu
    radial = -(mu**2) * np.cosh(mu * r)
    tangential = -mu * np.where(r > 0, np.sinh(mu * r) / np.where(r > 0, r, 1), mu)
    worst = delta * radial + (domain.dim - 1) * delta * tangential + K0 * mu * np.sinh(mu * r)
    assert np.all(worst <= -1 + 1e-9)
    # radially decreasing
    assert bp(np.array([[0.1] + [0.0] * (domain.dim - 1)]))[0] > bp(np.array([[0.5] + [0.0] * (domain.dim - 1)]))[0]


def test_barrier_hessian_matches_differences():
    bp = build_barrier(Ball((0.0, 0.0), 1.0), 0.5, 1.0)
    x = np.array([[0.3, -0.2]])
    e = 1e-5
    num = np.zeros((2, 2))
    for i in range(2):
        dx = np.zeros((1, 2))
        dx[0, i] = e
        num[i] = (bp.grad(x + dx) - bp.grad(x - dx))[0] / (2 * e)
    np.testing.assert_allclose(bp.hess(x)[0], num, rtol=1e-6)


def test_k_gap_zero_data_is_exact():
    g = build_grid(Box((0.0,), (1.0,)), 0.25, 1 / 8)
    rep = k_gap_study(constant_coefficient_problem(np.eye(1)), g, L1, [1, 2, 4])
    assert rep.exact and math.isnan(rep.fitted_exponent)
    assert rep.meta["gaps"] == [0.0, 0.0, 0.0]


def test_k_gap_heat():
    case = make_manufactured("heat_1d", {"T": 0.25})
    g = build_grid(case.domain, case.T, 1 / 16)
    rep = k_gap_study(case.problem, g, L1, [1, 2, 4, 8])
    gaps = rep.meta["gaps"]
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))
    assert rep.fitted_exponent > 0
    with pytest.raises(ValueError):
        k_gap_study(case.problem, g, L1, [2, 1])


def test_rate_and_regularity_studies():
    case = make_manufactured("heat_1d", {"T": 0.25})
    rep = rate_study(case, [1 / 8, 1 / 16, 1 / 32], L1)
    assert rep.fitted_exponent > 0.8
    v = rep.meta["solutions"][-1]
    reg = regularity_study(v, [0.1, 0.4, 0.2], 0.5)
    assert reg.meta["epsilon"] == [0.4, 0.2, 0.1]
    assert all(np.isfinite(reg.meta["seminorm"]))


def test_explicit_grid_argument():
    g = build_grid(Box((0.0,), (1.0,)), 0.25, 1 / 8)
    other = build_grid(Box((0.0,), (1.0,)), 0.25, 1 / 16)
    v = g.sample(lambda t, x: np.sin(3 * x[:, 0]) + t)
    assert barrier_ratio(v, v, g) == 0.0
    assert holder_seminorm(v, g, 0.1, 0.5) == holder_seminorm(v, None, 0.1, 0.5)
    with pytest.raises(ValueError, match="different grid"):
        barrier_ratio(v, None, other)
    with pytest.raises(ValueError, match="different grid"):
        holder_seminorm(v, other, 0.1, 0.5)
