import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pqsingular.mesh import build_interval_mesh, build_rect_mesh
from pqsingular.params import ProblemParams
from pqsingular import nonlinearity as nlm
from pqsingular.operators import (apply_p_laplacian, energy_J, eta_for, flux_pairing, grad_integral,
                                  nehari_I, power_energy, pq_gradient, pq_hessian, quad_pairing,
                                  singular_integral)

from conftest import random_field


def _ibp_gap(mesh, u, v, p):
    eta = eta_for(mesh, u)
    lhs = quad_pairing(mesh, apply_p_laplacian(mesh, u, p, eta), v)
    rhs = flux_pairing(mesh, u, v, p, eta)
    return abs(lhs - rhs) / max(abs(rhs), 1e-300)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), p=st.sampled_from([1.3, 1.5, 2.0, 2.5, 4.0]))
def test_integration_by_parts_1d(seed, p):
    m = build_interval_mesh(0, 1, 64)
    assert _ibp_gap(m, random_field(m, seed), random_field(m, seed + 1), p) < 1e-12


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), p=st.sampled_from([1.5, 2.0, 3.0]))
def test_integration_by_parts_2d(seed, p):
    m = build_rect_mesh(0, 1, 0, 1, 16, 16)
    assert _ibp_gap(m, random_field(m, seed), random_field(m, seed + 1), p) < 1e-12


@pytest.mark.parametrize("dim", [1, 2])
def test_gradient_matches_finite_differences(dim):
    m = build_interval_mesh(0, 1, 32) if dim == 1 else build_rect_mesh(0, 1, 0, 1, 8, 8)
    u = random_field(m, 3)
    v = random_field(m, 4)
    eta = 1e-3
    g = pq_gradient(m, u, 2.7, 1.4, eta)
    t = 1e-6
    fd = (sum(power_energy(m, u + t * v, s, eta) for s in (2.7, 1.4))
          - sum(power_energy(m, u - t * v, s, eta) for s in (2.7, 1.4))) / (2 * t)
    assert abs(fd - g @ v) / abs(fd) < 1e-5


@pytest.mark.parametrize("dim", [1, 2])
def test_hessian_matches_gradient_differences(dim):
    m = build_interval_mesh(0, 1, 24) if dim == 1 else build_rect_mesh(0, 1, 0, 1, 6, 6)
    u, v = random_field(m, 5), random_field(m, 6)
    eta, t = 1e-2, 1e-6
    H = pq_hessian(m, u, 3.0, 1.5, eta)
    fd = (pq_gradient(m, u + t * v, 3.0, 1.5, eta) - pq_gradient(m, u - t * v, 3.0, 1.5, eta)) / (2 * t)
    assert np.max(np.abs(H @ v - fd)) / np.max(np.abs(fd)) < 1e-6


def test_laplacian_of_sine_is_second_order():
    errs = []
    for n in (32, 64, 128):
        m = build_interval_mesh(0, 1, n)
        u = np.sin(np.pi * m.x)
        lap = apply_p_laplacian(m, u, 2.0)
        errs.append(np.max(np.abs(lap - np.pi ** 2 * u)[m.interior_mask]))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(abs(o - 2) < 0.1 for o in orders)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_power_profile_oracle(p):
    m = build_interval_mesh(0, 1, 2048)
    d = 2.0
    tau = p / (p - 1 + d)
    c = tau ** (p - 1) * (1 - tau) * (p - 1)
    u = m.x ** tau
    r = apply_p_laplacian(m, u, p) - c * np.where(m.interior_mask, u, 1.0) ** (-d)
    sel = (m.x > 0.1) & (m.x < 0.9)
    assert np.max(np.abs(r[sel]) / (c * u[sel] ** (-d))) < 0.05


def test_boundary_entries_are_zero(rect16):
    u = random_field(rect16, 1)
    assert np.all(apply_p_laplacian(rect16, u, 2.5)[rect16.boundary_mask] == 0)


def test_singular_integral_branches(mesh64):
    u = np.sin(np.pi * mesh64.x)
    assert math.isfinite(singular_integral(mesh64, u, 0.5))
    assert math.isfinite(singular_integral(mesh64, u, 1.0))
    assert math.isfinite(singular_integral(mesh64, u, 1.5))
    v = u.copy()
    v[10] = 0.0
    with pytest.raises(FloatingPointError):
        singular_integral(mesh64, v, 1.5)


def test_log_branch_of_energy(mesh64):
    u = 0.5 + 0.3 * np.sin(np.pi * mesh64.x)
    P = ProblemParams(2.0, 1.5, 1.0, theta=2.0)
    eta = 1e-6
    ii = mesh64.interior_mask
    expected = (power_energy(mesh64, u, 2.0, eta) + power_energy(mesh64, u, 1.5, eta)
                - 2.0 * np.dot(mesh64.quad_weights[ii], np.log(u[ii])))
    assert energy_J(mesh64, u, P, eta=eta) == pytest.approx(expected, rel=1e-13)


def test_nehari_is_derivative_of_energy_along_rays(mesh64):
    P = ProblemParams(2.5, 1.5, 0.5)
    nl = nlm.power(4.0)
    u = np.sin(np.pi * mesh64.x)
    eta, t = 1e-9, 1e-6
    dJ = (energy_J(mesh64, (1 + t) * u, P, nl, eta) - energy_J(mesh64, (1 - t) * u, P, nl, eta)) / (2 * t)
    assert nehari_I(mesh64, u, P, nl, eta) == pytest.approx(dJ, rel=1e-6)


def test_grad_integral(mesh64):
    assert grad_integral(mesh64, mesh64.x.copy(), 3.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        grad_integral(mesh64, mesh64.x, 0.5)
