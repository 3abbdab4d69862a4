import math

import numpy as np
import pytest

from pqsingular import diagnostics as dg, elliptic as el, nonlinearity as nlm, parabolic as pb
from pqsingular.mesh import build_interval_mesh, default_A, phi_delta
from pqsingular.params import ProblemParams


@pytest.fixture(scope="module")
def m256():
    return build_interval_mesh(0, 1, 256)


@pytest.mark.parametrize("delta", [0.5, 1.0, 2.0])
def test_shell_fit_of_exact_profile(m256, delta):
    P = ProblemParams(3.0, 2.0, delta)
    u = phi_delta(m256.dist, delta, 3.0, default_A(m256))
    c1, c2, expo = dg.conical_shell_fit(m256, u, P)
    assert c1 == pytest.approx(1.0, abs=1e-12) and c2 == pytest.approx(1.0, abs=1e-12)
    if delta == 1.0:
        assert math.isnan(expo)
    else:
        assert expo == pytest.approx(1.0 if delta < 1 else P.tau, rel=1e-9)


def test_shell_fit_linear_multiple(m256):
    fit = dg.conical_shell_fit(m256, 3.0 * m256.dist, ProblemParams(2.0, 1.5, 0.5))
    assert fit == pytest.approx((3.0, 3.0, 1.0))


def test_shell_fit_errors():
    coarse = build_interval_mesh(0, 1, 4)
    with pytest.raises(ValueError, match="coarse"):
        dg.conical_shell_fit(coarse, coarse.dist, ProblemParams(2.0, 1.5, 0.5))
    m = build_interval_mesh(0, 1, 64)
    with pytest.raises(ValueError):
        dg.conical_shell_fit(m, np.zeros(m.n_nodes), ProblemParams(2.0, 1.5, 0.5))


def test_theta_star_printed_example():
    m = build_interval_mesh(0, 1, 512)
    P = ProblemParams(2.5, 2.0, 0.5)
    u0 = np.ones(m.n_nodes)        # ||u0||_2 = 1 on the unit interval
    val = dg.theta_star(m, u0, P, nlm.power(4.0), 1.0, 1.0)
    assert val == pytest.approx(min(1.0, 4 * 0.5 * 0.5 * 2 ** -0.75 / (2.5 * 2 * 3.5)))


def test_theta_star_scaling_and_monotonicity():
    m = build_interval_mesh(0, 1, 128)
    P = ProblemParams(2.5, 1.5, 0.5)
    u0 = np.sin(np.pi * m.x)
    nl = nlm.power(4.0)
    a = dg.theta_star(m, u0, P, nl, 1.0, 1e9)
    b = dg.theta_star(m, 2 * u0, P, nl, 1.0, 1e9)
    assert b / a == pytest.approx(2 ** (P.q - 1 + P.delta))
    c = dg.theta_star(m, u0, P.replace(q=1.2), nl, 1.0, 1e9)
    assert c > a


def test_theta_star_preconditions():
    m = build_interval_mesh(0, 1, 16)
    with pytest.raises(ValueError):
        dg.theta_star(m, np.ones(17), ProblemParams(2.0, 1.5, 1.5), nlm.power(4.0), 1.0, 1.0)
    with pytest.raises(dg.ConfigurationError):
        dg.theta_star(m, np.ones(17), ProblemParams(2.0, 1.5, 0.5), nlm.power(4.0), None, 1.0)


def test_ledger_on_stationary_run(m256):
    P = ProblemParams(2.2, 1.8, 0.5)
    nl = nlm.capped_power(1.8)
    u_inf = el.solve_steady_state(m256, nl, P).u
    tr = pb.run_P(m256, u_inf, nl, 1.0, 10, P)
    led = dg.build_blowup_ledger(tr, P, nl)
    assert np.ptp(led.J) < 1e-9 * abs(led.J[0])
    assert np.max(led.audit) < 1e-8
    assert np.all(np.diff(led.M) >= 0) and np.all(led.Mp >= 0)


def test_ledger_heat_decay_rate(m256):
    P = ProblemParams(2.0, 2.0, 1.0, theta=0.0)
    tr = pb.run_G(m256, np.sin(np.pi * m256.x), 0.0, 0.05, 200, P)
    led = dg.build_blowup_ledger(tr, P)
    rate = -np.polyfit(led.times, np.log(led.Mp), 1)[0]
    assert rate == pytest.approx(4 * np.pi ** 2, rel=0.02)
    # M'' = -I is the derivative of M'
    assert np.allclose(np.gradient(led.Mp, led.times)[5:-5], led.Mpp[5:-5], rtol=0.05)


def test_ledger_needs_two_steps(m256):
    P = ProblemParams(2.0, 1.5, 0.5)
    tr = pb.run_G(m256, np.sin(np.pi * m256.x), 0.0, 0.01, 1, P)
    with pytest.raises(ValueError):
        dg.build_blowup_ledger(tr, P)


def test_blowup_premises_fail_for_positive_energy(m256):
    P = ProblemParams(2.0, 1.5, 2.0)
    v = dg.check_blowup_conditions(m256, 0.1 * np.sin(np.pi * m256.x) ** P.tau, P, nlm.power(4.0))
    assert v.condition_checked == "case_ii_delta_gt_1"
    assert not v.premises["J_nonpositive"] and not v.premises_hold


def test_blowup_case_i_needs_user_constants(m256):
    P = ProblemParams(2.0, 1.5, 0.5)
    with pytest.raises(dg.ConfigurationError):
        dg.check_blowup_conditions(m256, np.sin(np.pi * m256.x), P, nlm.power(4.0))
    v = dg.check_blowup_conditions(m256, 20 * np.sin(np.pi * m256.x), P, nlm.power(4.0),
                                   theta_hat=0.0, C_star=1.0, lambda_star=1.0)
    assert v.condition_checked == "case_i_delta_le_1" and isinstance(v.theta_star, float)


def test_blowup_run_verdict(m256):
    P = ProblemParams(2.0, 2.0, 2.0)
    nl = nlm.power(4.0)
    base = np.sin(np.pi * m256.x) ** P.tau
    u0 = dg.scale_to_nonpositive_energy(m256, base, P, nl) * base
    tr = pb.run_superhomog(m256, u0, nl, 0.5, 500, P)
    led = dg.build_blowup_ledger(tr, P, nl)
    v = dg.check_blowup_conditions(m256, u0, P, nl, led, tr)
    assert v.premises_hold and v.observed_blown_up
    assert v.mpp_positive and v.concavity_holds_on_tail
    assert v.T_star_estimate / v.observed_time < 3 and v.observed_time / v.T_star_estimate < 3


def test_sigma_route_for_p_above_two(m256):
    P = ProblemParams(3.0, 2.0, 1.5)
    nl = nlm.power(4.0)
    base = np.sin(np.pi * m256.x) ** P.tau
    u0 = 2 * dg.scale_to_nonpositive_energy(m256, base, P, nl) * base
    tr = pb.run_superhomog(m256, u0, nl, 0.5, 500, P)
    led = dg.build_blowup_ledger(tr, P, nl)
    assert led.concavity_sigma == pytest.approx(1.25)
    v = dg.check_blowup_conditions(m256, u0, P, nl, led, tr)
    assert v.route == "sigma" and v.observed_blown_up and v.concavity_holds_on_tail


def test_stabilization_report_at_steady_state(m256):
    P = ProblemParams(2.2, 1.8, 0.5)
    nl = nlm.capped_power(1.8)
    u_inf = el.solve_steady_state(m256, nl, P).u
    rep = dg.stabilization_report(pb.run_P(m256, u_inf, nl, 1.0, 10, P), u_inf)
    assert rep.converged and np.max(rep.errors) < 1e-7


def test_stabilization_from_subsolution_is_monotone(m256):
    P = ProblemParams(2.2, 1.8, 0.5)
    nl = nlm.capped_power(1.8)
    ss = el.solve_steady_state(m256, nl, P)
    tr = pb.run_P(m256, ss.lower, nl, 10.0, 100, P)
    rep = dg.stabilization_report(tr, ss.u)
    assert np.all(np.diff(rep.errors) <= 1e-10 * ss.u.max())
    assert rep.converged


def test_sobolev_probe_power_profile():
    tau = 0.6                       # threshold m = 1/(1-tau) = 2.5
    fam = [(m, m.x ** tau) for m in (build_interval_mesh(0, 1, n) for n in (256, 512, 1024))]
    for m, u in fam:
        u[-1] = 1.0
    _, cls = dg.sobolev_probe(fam, [1.0, 2.0, 4.0])
    assert cls[1.0] == "stable" and cls[2.0] == "stable" and cls[4.0] == "growing"
    with pytest.raises(ValueError):
        dg.sobolev_probe(fam[:1], [1.0])


def test_scale_to_nonpositive_energy(m256):
    P = ProblemParams(2.0, 1.5, 1.5)
    nl = nlm.power(4.0)
    base = np.sin(np.pi * m256.x) ** P.tau
    s = dg.scale_to_nonpositive_energy(m256, base, P, nl)
    from pqsingular.operators import energy_J
    assert energy_J(m256, s * base, P, nl) <= 0 < energy_J(m256, s / 1.25 * base, P, nl)
