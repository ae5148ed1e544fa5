import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isaacs_fd import Ball, Box, CallbackDomain, EmptyGrid, InvalidStep, OutOfGrid, boundary_distance, build_grid
from isaacs_fd.lattice import standard_directions


def test_unit_interval_quarter_step():
    g = build_grid(Box((0.0,), (1.0,)), T=1.0, h=0.25, r_lambda=1.0)
    assert sorted(g.coords[:, 0].tolist()) == [0.25, 0.5, 0.75]
    np.testing.assert_array_equal(g.times, 0.0625 * np.arange(1, 16))
    # rho(0.25) = 0.25 is not > h * r = 0.25
    assert g.coords[g.interior_nodes, 0].tolist() == [0.5]
    assert not g.interior[-1].any()
    assert g.interior[:-1, g.node_index(0.5)].all()


def test_single_node_without_interior_is_empty():
    with pytest.raises(EmptyGrid):
        build_grid(Box((0.0,), (1.0,)), T=1.0, h=0.9)


@pytest.mark.parametrize("h", [0.25, 0.1, 0.5])
def test_horizon_equal_to_time_step_is_rejected(h):
    with pytest.raises(InvalidStep):
        build_grid(Box((0.0,), (1.0,)), T=h * h, h=h)


@pytest.mark.parametrize("h", [0.0, -0.1])
def test_nonpositive_step(h):
    with pytest.raises(InvalidStep):
        build_grid(Box((0.0,), (1.0,)), T=1.0, h=h)


def test_boundary_distance_examples():
    assert boundary_distance(Box((0, 0), (1, 1)), (0.5, 0.5)) == 0.5
    assert boundary_distance(Ball((0.0, 0.0), 1.0), (0.25, 0.0)) == 0.75
    assert boundary_distance(Box((0,), (1,)), 1.2) == 0.0
    assert boundary_distance(Box((0,), (1,)), 1.0) == 0.0


def test_box_needs_ordered_bounds():
    with pytest.raises(ValueError):
        Box((0.0, 1.0), (1.0, 1.0))
    with pytest.raises(ValueError):
        Ball((0.0,), 0.0)


DOMAINS = [
    (Box((0.0,), (1.0,)), 1),
    (Box((0.0, -0.5), (1.0, 0.5)), 2),
    (Ball((0.1, 0.0), 0.8), 2),
    (Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0)), 3),
]


@pytest.mark.parametrize("domain,d", DOMAINS)
def test_partition_and_membership(domain, d):
    L = standard_directions(d)
    g = build_grid(domain, 0.3, 1 / 8, L.r_lambda)
    assert np.all(domain.contains(g.coords))
    inner, bdry = g.interior, g.boundary
    assert not np.any(inner & bdry)
    assert np.all(inner | bdry)
    # every lattice point of the bounding box that lies in G is a node
    lo, hi = domain.bounding_box()
    axes = [np.arange(math.floor(a * 8), math.ceil(b * 8) + 1) for a, b in zip(lo, hi)]
    full = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
    inside = full[domain.contains(full / 8)]
    assert {tuple(r) for r in inside} == {tuple(r) for r in g.nodes.tolist()}


@pytest.mark.parametrize("domain,d", DOMAINS)
def test_interior_flag_matches_distance(domain, d):
    L = standard_directions(d)
    g = build_grid(domain, 0.3, 1 / 8, L.r_lambda)
    margin = g.rho - g.h * L.r_lambda
    # float comparison agrees away from exact ties
    clear = np.abs(margin) > 1e-12
    np.testing.assert_array_equal(g.interior_nodes[clear], margin[clear] > 0)


@pytest.mark.parametrize("domain,d", DOMAINS)
def test_refinement_keeps_nodes(domain, d):
    g1 = build_grid(domain, 0.3, 1 / 8, 1.0)
    g2 = build_grid(domain, 0.3, 1 / 16, 1.0)
    fine = {tuple(r) for r in g2.nodes.tolist()}
    assert all(tuple(2 * np.array(r)) in fine for r in g1.nodes.tolist())


@pytest.mark.parametrize("domain,d", DOMAINS)
def test_stencil_reads_are_defined(domain, d):
    L = standard_directions(d)
    g = build_grid(domain, 0.3, 1 / 8, L.r_lambda)
    r = L.r_lambda
    span = int(math.floor(r))
    vecs = [np.array(v) for v in np.ndindex(*(2 * span + 1,) * d)]
    vecs = [v - span for v in vecs if 0 < np.linalg.norm(v - span) <= r + 1e-12]
    for idx in g.nodes[g.interior_nodes]:
        for l in vecs:
            assert g.lookup(idx + l) >= 0
            assert g.lookup(idx - l) >= 0
    table = g.neighbor_table(L)
    assert table.shape == (g.interior_nodes.sum(), len(L), 2)


def test_neighbor_table_rejects_too_wide_directions():
    g = build_grid(Ball((0.0, 0.0), 1.0), 0.3, 1 / 4, 1.0)
    with pytest.raises(OutOfGrid):
        g.neighbor_table(standard_directions(2))


def test_ball_interior_is_exact_at_ties():
    # node (0.5, 0) in the unit ball at h = 0.25, r = 2: rho = 0.5 = h r, not interior
    g = build_grid(Ball((0.0, 0.0), 1.0), 1.0, 0.25, 2.0)
    j = g.node_index((0.5, 0.0))
    assert not g.interior_nodes[j]
    assert g.interior_nodes[g.node_index((0.25, 0.0))]


def test_callback_domain_matches_box():
    box = Box((0.0, 0.0), (1.0, 1.0))
    cb = CallbackDomain(2, box.contains, box.distance, (0.0, 0.0), (1.0, 1.0))
    g1 = build_grid(box, 0.2, 1 / 8, math.sqrt(2))
    g2 = build_grid(cb, 0.2, 1 / 8, math.sqrt(2))
    np.testing.assert_array_equal(g1.nodes, g2.nodes)
    np.testing.assert_array_equal(g1.interior_nodes, g2.interior_nodes)


def test_grid_function_lookup():
    g = build_grid(Box((0.0,), (1.0,)), 0.5, 0.25)
    u = g.sample(lambda t, x: t + x[:, 0])
    assert u.at(0.125, 0.75) == pytest.approx(0.875)
    with pytest.raises(OutOfGrid):
        u.at(0.1, 0.5)
    with pytest.raises(OutOfGrid):
        u.at(0.125, 0.3)


pts = st.lists(st.floats(-1.5, 1.5), min_size=2, max_size=2)


@settings(max_examples=200, deadline=None)
@given(pts, pts)
def test_distance_is_one_lipschitz(x, y):
    for dom in (Box((0.0, -0.5), (1.0, 0.5)), Ball((0.1, 0.0), 0.8)):
        dx = boundary_distance(dom, x) - boundary_distance(dom, y)
        assert abs(dx) <= np.linalg.norm(np.subtract(x, y)) + 1e-12
