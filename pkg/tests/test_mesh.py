import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pqsingular.mesh import build_interval_mesh, build_rect_mesh, default_A, phi_delta


def test_interval_basics():
    m = build_interval_mesh(0.0, 2.0, 8)
    assert m.n_nodes == 9 and m.h == pytest.approx(0.25)
    assert m.boundary_mask.sum() == 2
    assert m.integrate(np.ones(9)) == pytest.approx(2.0)
    assert m.dist.max() == pytest.approx(1.0)


def test_smallest_interval_has_one_interior_node():
    m = build_interval_mesh(0.0, 1.0, 2)
    assert m.interior_mask.sum() == 1


@pytest.mark.parametrize("n", [1, 0, 2.5])
def test_interval_rejects_too_few_cells(n):
    with pytest.raises(ValueError):
        build_interval_mesh(0.0, 1.0, n)


def test_interval_rejects_reversed_bounds():
    with pytest.raises(ValueError):
        build_interval_mesh(1.0, 0.0, 4)


def test_rect_geometry():
    m = build_rect_mesh(0.0, 2.0, 0.0, 1.0, 8, 4)
    assert m.n_nodes == 45
    assert m.integrate(np.ones(m.n_nodes)) == pytest.approx(2.0)
    assert m.boundary_mask.sum() == 2 * 9 + 2 * 3
    assert m.diameter == pytest.approx(math.sqrt(5.0))
    centre = np.argmin(np.abs(m.nodes[:, 0] - 1.0) + np.abs(m.nodes[:, 1] - 0.5))
    assert m.dist[centre] == pytest.approx(0.5)


def test_interpolate_zeroes_boundary():
    m = build_rect_mesh(0, 1, 0, 1, 4, 4)
    u = m.interpolate(lambda x, y: 1.0 + x + y)
    assert np.all(u[m.boundary_mask] == 0) and np.all(u[m.interior_mask] > 0)


def test_refine_doubles_resolution():
    m = build_interval_mesh(0, 1, 10).refine()
    assert m.shape == (21,)
    r = build_rect_mesh(0, 1, 0, 2, 3, 5).refine()
    assert r.shape == (7, 11)


def test_phi_delta_branches():
    s = np.array([0.0, 0.1, 0.5])
    assert np.allclose(phi_delta(s, 0.5, 2.0, 4.0), s)
    assert np.allclose(phi_delta(s, 2.0, 3.0, 4.0), s ** 0.75)
    log_branch = phi_delta(s, 1.0, 2.0, 4.0)
    assert log_branch[0] == 0.0
    assert log_branch[1] == pytest.approx(0.1 * math.log(40.0) ** 0.5)
    assert isinstance(phi_delta(0.2, 0.5, 2.0, 4.0), float)


def test_phi_delta_log_branch_needs_s_below_A():
    with pytest.raises(ValueError):
        phi_delta(5.0, 1.0, 2.0, 4.0)
    with pytest.raises(ValueError):
        phi_delta(-0.1, 0.5, 2.0, 4.0)


def test_default_A_is_four_diameters():
    assert default_A(build_interval_mesh(0, 3, 4)) == pytest.approx(12.0)


@settings(max_examples=60, deadline=None)
@given(delta=st.floats(0.05, 4.0), p=st.floats(1.1, 5.0))
def test_phi_delta_is_increasing_near_zero(delta, p):
    s = np.linspace(1e-4, 0.5, 50)
    v = phi_delta(s, delta, p, 4.0)
    assert np.all(np.diff(v) > 0)
