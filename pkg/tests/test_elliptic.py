import math
import warnings

import numpy as np
import pytest

from pqsingular import elliptic as el, nonlinearity as nlm
from pqsingular.diagnostics import conical_shell_fit
from pqsingular.elliptic import EllipticConfig
from pqsingular.mesh import build_interval_mesh, build_rect_mesh
from pqsingular.operators import apply_pq_laplacian, energy_J, pq_energy
from pqsingular.params import ProblemParams

LIN = ProblemParams(2.0, 2.0, 1.0, theta=0.0)


def test_config_validation():
    with pytest.raises(ValueError):
        EllipticConfig(eps_schedule=(1e-2, 1e-1))
    with pytest.raises(ValueError):
        EllipticConfig(damping=1.5)


def test_linear_resolvent_matches_exact_mode():
    m = build_interval_mesh(0, 1, 128)
    lam = 0.1
    h = np.sin(np.pi * m.x)
    u = el.solve_S_lambda(m, h, lam, LIN).u
    exact = h / (1 + 2 * lam * np.pi ** 2)
    assert np.max(np.abs(u - exact)) < 1e-4


def test_torsion_linear_case_is_exact_quadratic():
    m = build_interval_mesh(0, 1, 64)
    u = el.solve_torsion(m, 1.0, LIN).u
    assert np.max(np.abs(u - m.x * (1 - m.x) / 4)) < 1e-12


def test_torsion_on_rectangle_is_positive_and_symmetric():
    m = build_rect_mesh(0, 1, 0, 1, 12, 12)
    u = el.solve_torsion(m, 1.0, ProblemParams(3.0, 2.0, 0.5)).u.reshape(13, 13)
    assert np.all(u[1:-1, 1:-1] > 0)
    assert np.allclose(u, u.T, atol=1e-10)


def test_residual_below_tolerance():
    m = build_interval_mesh(0, 1, 256)
    P = ProblemParams(2.5, 1.5, 1.5)
    r = el.solve_PS(m, P)
    assert r.converged and r.residual < 1e-10
    ii = m.interior_mask
    eq = apply_pq_laplacian(m, r.u, P)[ii] - r.u[ii] ** -1.5
    assert np.max(np.abs(eq)) / np.max(r.u[ii] ** -1.5) < 1e-8


def test_regularised_solutions_increase_as_eps_decreases():
    m = build_interval_mesh(0, 1, 128)
    P = ProblemParams(2.5, 1.5, 1.5)
    h = np.zeros(m.n_nodes)
    us = [el.solve_S_eps(m, h, 0.5, eps, P).u for eps in (1e-1, 1e-2, 1e-3)]
    for a, b in zip(us, us[1:]):
        assert el.comparison_check(a, b)


def test_ordered_data_give_ordered_solutions():
    m = build_interval_mesh(0, 1, 128)
    P = ProblemParams(2.2, 1.6, 0.8)
    rng = np.random.default_rng(7)
    for _ in range(5):
        h1 = rng.random(m.n_nodes)
        h2 = h1 + rng.random(m.n_nodes)
        u1 = el.solve_S_lambda(m, h1, 0.3, P).u
        u2 = el.solve_S_lambda(m, h2, 0.3, P).u
        assert el.comparison_check(u1, u2)


def test_converged_solve_minimises_functional():
    m = build_interval_mesh(0, 1, 128)
    P = ProblemParams(2.5, 1.5, 0.5)
    h = np.ones(m.n_nodes)
    lam = 0.2
    r = el.solve_S_lambda(m, h, lam, P)
    fun = el._Functional(m, 1.0, lam, P.p, P.q, lam * P.theta, P.delta, 0.0, h, r.eta)
    base = fun.value(r.u)
    rng = np.random.default_rng(1)
    for _ in range(20):
        v = 1e-3 * rng.standard_normal(m.n_nodes)
        v[m.boundary_mask] = 0.0
        w = r.u + v
        if fun.feasible(w):
            assert fun.value(w) >= base - 1e-14 * abs(base)


def test_shell_exponent_matches_tau():
    m = build_interval_mesh(0, 1, 1024)
    P = ProblemParams(3.0, 2.0, 2.0)
    fit = conical_shell_fit(m, el.solve_PS(m, P).u, P)
    assert abs(fit.exponent - P.tau) < 0.1 * P.tau
    assert 0 < fit.c1 <= fit.c2 < math.inf


def test_supercritical_returns_regularised_solve_with_warning():
    m = build_interval_mesh(0, 1, 64)
    P = ProblemParams(2.0, 1.5, 3.5)
    with pytest.warns(RuntimeWarning, match="2\\+1/\\(p-1\\)"):
        r = el.solve_S_lambda(m, np.zeros(m.n_nodes), 0.5, P)
    assert r.warning and np.all(r.u[m.interior_mask] > 0)


def test_invalid_arguments():
    m = build_interval_mesh(0, 1, 16)
    P = ProblemParams(2.0, 1.5, 0.5)
    with pytest.raises(ValueError):
        el.solve_S_lambda(m, 0.0, 0.0, P)
    with pytest.raises(ValueError):
        el.solve_S_eps(m, 0.0, 1.0, 0.0, P)
    with pytest.raises(ValueError):
        el.solve_torsion(m, -1.0, P)
    with pytest.raises(ValueError):
        el.solve_barrier_M(m, 0.5, 0.0, 0.0, P)


def test_torsion_norms_shrink_with_rho():
    m = build_interval_mesh(0, 1, 256)
    P = ProblemParams(3.0, 2.0, 0.5)
    norms = [el.solve_torsion(m, rho, P).u.max() for rho in (1, 0.1, 0.01, 0.001)]
    assert all(b < a for a, b in zip(norms, norms[1:]))


def test_barrier_with_l_term_dominates_l_zero():
    m = build_interval_mesh(0, 1, 128)
    P = ProblemParams(2.5, 1.5, 0.5)
    u0 = el.solve_barrier_M(m, 2.0, 0.0, 1.0, P).u
    u1 = el.solve_barrier_M(m, 2.0, 0.5, 1.0, P).u
    assert el.comparison_check(u0, u1)


def test_scaled_profiles_approach_limit_problem():
    m = build_interval_mesh(0, 1, 512)
    P = ProblemParams(2.5, 1.5, 1.5)
    w10, w1000 = (el.scaled_profile(m, M, P) for M in (10.0, 1000.0))
    assert el.limit_residual(m, w1000, P) < el.limit_residual(m, w10, P)


def test_steady_state_monotone_and_sandwiched():
    m = build_interval_mesh(0, 1, 128)
    P = ProblemParams(2.2, 1.8, 0.5)
    ss = el.solve_steady_state(m, nlm.capped_power(1.8), P, keep_iterates=True)
    for a, b in zip(ss.iterates, ss.iterates[1:]):
        assert np.all(b >= a - 1e-10)
    assert el.comparison_check(ss.lower, ss.u) and el.comparison_check(ss.u, ss.upper)
    ii = m.interior_mask
    d = el._equation_defect(m, ss.u, P, nlm.capped_power(1.8))
    assert np.max(np.abs(d)) < 1e-6 * np.max(ss.u[ii] ** -0.5)


def test_steady_state_without_reaction_is_singular_solve():
    m = build_interval_mesh(0, 1, 128)
    P = ProblemParams(2.5, 1.5, 0.5)
    u = el.solve_steady_state(m, nlm.none(), P).u
    v = el.solve_singular(m, 1.0, P).u
    assert np.max(np.abs(u - v)) < 1e-7 * np.max(v)


def test_steady_state_rejects_superhomogeneous():
    m = build_interval_mesh(0, 1, 16)
    with pytest.raises(ValueError):
        el.solve_steady_state(m, nlm.power(4.0), ProblemParams(2.0, 1.5, 0.5))


def test_comparison_check_reports_worst_node():
    u = np.array([0.0, 1.0, 2.0])
    assert el.comparison_check(u, u)
    res = el.comparison_check(u, np.array([0.0, 0.5, 2.0]))
    assert not res and res.worst_index == 1 and res.worst_gap == pytest.approx(0.5)
    with pytest.raises(ValueError):
        el.comparison_check(u, np.zeros(4))


def test_solutions_on_rect_are_positive():
    m = build_rect_mesh(0, 1, 0, 1, 16, 16)
    P = ProblemParams(2.5, 1.5, 1.5)
    r = el.solve_PS(m, P)
    assert r.converged and np.all(r.u[m.interior_mask] > 0)
