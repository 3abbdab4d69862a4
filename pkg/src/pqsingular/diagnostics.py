"""Measurements on solutions and trajectories.

Conical-shell fits, the blow-up ledger built on
``M(t) = (1/2) ∫_0^t ||u(s)||² ds`` with ``M' = ||u||²/2`` and
``M'' = -I(u)``, blow-up premises, stabilisation and gradient-integrability
probes.  All time integrals are trapezoid sums on the step grid.
"""

from dataclasses import dataclass, field
import math
from typing import NamedTuple, Optional

import numpy as np

from .mesh import default_A, phi_delta
from .operators import energy_J, eta_for, grad_integral, nehari_I


class ConfigurationError(ValueError):
    """A diagnostic needs a constant that only the user can supply."""


class ShellFit(NamedTuple):
    c1: float
    c2: float
    exponent: float


def conical_shell_fit(mesh, u, params, A=None, near=0.1):
    """Shell constants ``c1 <= u/phi_delta(d) <= c2`` and the boundary exponent.

    The exponent is the least-squares slope of ``log u`` against ``log d``
    over interior nodes with ``d < near * diam``; it is NaN for delta = 1
    where the profile is not a pure power.
    """
    u = np.asarray(u, dtype=float)
    ii = mesh.interior_mask
    ui, di = u[ii], mesh.dist[ii]
    if np.any(ui <= 0):
        raise ValueError("conical_shell_fit: u must be positive at interior nodes")
    A = default_A(mesh) if A is None else A
    ratio = ui / phi_delta(di, params.delta, params.p, A)
    sel = di < near * mesh.diameter
    if np.count_nonzero(sel) < 2:
        raise ValueError("conical_shell_fit: too few nodes near the boundary (mesh too coarse)")
    if params.delta == 1:
        slope = math.nan
    else:
        ld, lu = np.log(di[sel]), np.log(ui[sel])
        if np.ptp(ld) == 0:
            raise ValueError("conical_shell_fit: near-boundary nodes share one distance")
        slope = float(np.polyfit(ld, lu, 1)[0])
    return ShellFit(float(ratio.min()), float(ratio.max()), slope)


def _cumtrapz(y, dt):
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * dt * (y[1:] + y[:-1]))
    return out


@dataclass
class BlowupLedger:
    times: np.ndarray
    M: np.ndarray
    Mp: np.ndarray
    Mpp: np.ndarray
    J: np.ndarray
    audit: np.ndarray          # |J(t_n) - J(0) + Σ dt ||δu||²|, audit[0] = 0
    concavity_sigma: Optional[float] = None


def build_blowup_ledger(traj, params=None, nl=None, sigma=None):
    """Ledger of M, M', M'', J and the energy-dissipation audit along ``traj``."""
    params = params or traj.params
    mesh = traj.mesh
    if len(traj.fields) < 3:
        raise ValueError("build_blowup_ledger: need a trajectory with at least 2 steps")
    dt = traj.dt
    # energies of a run share one regularisation
    eta = eta_for(mesh, scale=float(np.max(np.abs(traj.fields[0]))))
    Mp = np.array([0.5 * mesh.integrate(u * u) for u in traj.fields])
    Mpp = np.array([-nehari_I(mesh, u, params, nl, eta) for u in traj.fields])
    J = np.array([energy_J(mesh, u, params, nl, eta) for u in traj.fields])
    diss = np.zeros(len(traj.fields))
    for k in range(1, len(traj.fields)):
        du = (traj.fields[k] - traj.fields[k - 1]) / dt
        diss[k] = diss[k - 1] + dt * mesh.integrate(du * du)
    audit = np.abs(J - J[0] + diss)
    if sigma is None and params.p > 2:
        sigma = 0.5 * (1.0 + 0.5 * params.p)
    return BlowupLedger(times=np.asarray(traj.times, dtype=float), M=_cumtrapz(Mp, dt), Mp=Mp,
                        Mpp=Mpp, J=J, audit=audit, concavity_sigma=sigma)


def theta_star(mesh, u0, params, nl, C_star, lambda_star):
    """``min{λ_*, r(p-q)(1-δ) 2^(-(q-1+δ)/2) / (pq(r-1+δ) C_*^(q-1+δ)) ||u0||_2^(q-1+δ)}``."""
    if params.delta > 1:
        raise ValueError("theta_star: formula only applies for delta <= 1")
    if not (C_star and C_star > 0 and lambda_star and lambda_star > 0):
        raise ConfigurationError("theta_star needs C_star > 0 and lambda_star > 0")
    if nl.r is None:
        raise ValueError("theta_star needs a superhomogeneous nonlinearity with exponent r")
    p, q, d, r = params.p, params.q, params.delta, nl.r
    e = q - 1.0 + d
    norm = mesh.l2_norm(np.asarray(u0, dtype=float))
    second = r * (p - q) * (1.0 - d) * 2.0 ** (-e / 2.0) / (p * q * (r - 1.0 + d) * C_star ** e) * norm ** e
    return float(min(lambda_star, second))


def concavity_constant(mesh, params, nl):
    """``C_r`` with ``C_r M'^(r/2) <= M''`` on the p <= 2 route.

    From c_r|s|^r <= rF(s) with λ = 1/p: ``M'' >= c_r (r-p)/r ∫|u|^r``, and Hölder turns
    ``∫|u|^r`` into ``2^(r/2) |Ω|^(1-r/2) M'^(r/2)``.
    """
    r, p = nl.r, params.p
    return nl.c_r * (r - p) / r * 2.0 ** (r / 2.0) * mesh.measure ** (1.0 - r / 2.0)


def _sobolev_exponent(mesh, p):
    if mesh.dim == 1 or p >= mesh.dim:
        return math.inf
    return mesh.dim * p / (mesh.dim - p)


@dataclass
class BlowupVerdict:
    condition_checked: str
    theta_star: object
    premises: dict
    observed_blown_up: Optional[bool] = None
    observed_step: Optional[int] = None
    observed_time: Optional[float] = None
    T_star_estimate: Optional[float] = None
    route: str = ""
    concavity_holds_on_tail: Optional[bool] = None
    mpp_positive: Optional[bool] = None
    notes: list = field(default_factory=list)

    @property
    def premises_hold(self):
        return all(self.premises.values())


def _concavity(ledger, params, nl, mesh):
    """Check the concavity inequality on the second half of the ledger."""
    n = len(ledger.times)
    lo = max(1, n // 2)
    M, Mp, Mpp, t = ledger.M, ledger.Mp, ledger.Mpp, ledger.times
    if params.p > 2:
        s = ledger.concavity_sigma
        ok = s * Mp[lo:] ** 2 <= Mpp[lo:] * M[lo:] * (1 + 1e-12)
        T = t[lo] + M[lo] / ((s - 1.0) * Mp[lo]) if M[lo] > 0 and Mp[lo] > 0 else math.nan
        return "sigma", bool(np.all(ok)), float(T)
    C = concavity_constant(mesh, params, nl)
    r = nl.r
    ok = C * Mp[lo:] ** (r / 2.0) <= Mpp[lo:] * (1 + 1e-12)
    T = t[lo] + 2.0 * Mp[lo] ** (1.0 - r / 2.0) / (C * (r - 2.0)) if Mp[lo] > 0 else math.nan
    return "r_power", bool(np.all(ok)), float(T)


def check_blowup_conditions(mesh, u0, params, nl, ledger=None, traj=None, theta_hat=None,
                            C_star=None, lambda_star=None):
    """Premises of the finite-time blow-up theorem and, given a ledger, the observed behaviour.

    delta <= 1 needs ``J(u0) <= theta_hat``, ``I(u0) < 0`` and ``θ < θ_*``;
    ``theta_hat`` must be a lower bound for the Nehari infimum and defaults
    to 0 only for delta = 1.  delta > 1 needs ``J(u0) <= 0``.
    """
    if nl.kind != "superhomog" or nl.r is None:
        raise ValueError("check_blowup_conditions needs a superhomogeneous nonlinearity")
    u0 = np.asarray(u0, dtype=float)
    r = nl.r
    J0 = energy_J(mesh, u0, params, nl)
    I0 = nehari_I(mesh, u0, params, nl)
    premises = {"r_range": bool(params.p <= r < _sobolev_exponent(mesh, params.p) and r > 2)}
    ts = "not-applicable"
    if params.delta <= 1:
        case = "case_i_delta_le_1"
        if theta_hat is None and params.delta == 1:
            theta_hat = 0.0
        missing = [k for k, v in (("theta_hat", theta_hat), ("C_star", C_star),
                                  ("lambda_star", lambda_star)) if v is None]
        if missing:
            raise ConfigurationError(f"blow-up case delta<=1 needs user-supplied {', '.join(missing)}")
        ts = theta_star(mesh, u0, params, nl, C_star, lambda_star)
        premises.update(J_below_theta_hat=bool(J0 <= theta_hat), I_negative=bool(I0 < 0),
                        theta_below_theta_star=bool(params.theta < ts))
    else:
        case = "case_ii_delta_gt_1"
        premises.update(J_nonpositive=bool(J0 <= 0), delta_subcritical=bool(params.subcritical))
    v = BlowupVerdict(condition_checked=case, theta_star=ts, premises=premises)
    v.notes.append(f"J(u0)={J0:.6g}, I(u0)={I0:.6g}")
    if traj is not None:
        v.observed_blown_up = traj.status == "blown_up"
        v.observed_step = traj.status_step
        if traj.status_step is not None:
            v.observed_time = traj.status_step * traj.dt
    if ledger is not None:
        v.mpp_positive = bool(np.all(ledger.Mpp[1:] > 0))
        v.route, v.concavity_holds_on_tail, v.T_star_estimate = _concavity(ledger, params, nl, mesh)
    return v


@dataclass
class StabilizationReport:
    errors: np.ndarray
    converged: bool
    tail_nonincreasing: bool
    tol: float


def stabilization_report(traj, u_inf, tol=None, jitter=0.05, floor=1e-10):
    """``e_n = ||u^n - u_inf||_inf`` and a convergence verdict.

    The tail (second half) counts as nonincreasing when
    ``e_(n+1) <= (1 + jitter) e_n + floor ||u_inf||_inf``; the floor keeps
    round-off at convergence from reading as growth.
    """
    u_inf = np.asarray(u_inf, dtype=float)
    scale = float(np.max(np.abs(u_inf)))
    if tol is None:
        tol = 1e-3 * scale
    e = np.array([float(np.max(np.abs(u - u_inf))) for u in traj.fields])
    tail = e[len(e) // 2:]
    mono = bool(np.all(tail[1:] <= (1.0 + jitter) * tail[:-1] + floor * scale))
    return StabilizationReport(errors=e, converged=bool(e[-1] < tol and mono),
                               tail_nonincreasing=mono, tol=tol)


def sobolev_probe(family, m_grid, stable_tol=0.10, growth_tol=0.25):
    """Table of ``∫|∇u|^m`` over a refinement family and a trend per m.

    ``family`` is a sequence of ``(mesh, u)`` pairs with increasing resolution.
    A value of m is ``stable`` when every relative change per refinement is
    below ``stable_tol`` and ``growing`` when every change exceeds
    ``growth_tol``; anything else is ``indeterminate``.
    Returns ``(rows, classification)``.
    """
    if len(family) < 2:
        raise ValueError("sobolev_probe: need at least two meshes")
    rows = []
    classes = {}
    for m in m_grid:
        vals = [grad_integral(mesh, u, m) for mesh, u in family]
        changes = [(b - a) / abs(a) for a, b in zip(vals, vals[1:])]
        if all(abs(c) < stable_tol for c in changes):
            cls = "stable"
        elif all(c > growth_tol for c in changes):
            cls = "growing"
        else:
            cls = "indeterminate"
        classes[m] = cls
        for k, ((mesh, _), val) in enumerate(zip(family, vals)):
            rows.append({"m": m, "n": mesh.shape[0] - 1, "integral": val,
                         "rel_change": changes[k - 1] if k else math.nan, "class": cls})
    return rows, classes


def scale_to_nonpositive_energy(mesh, base, params, nl, factor=1.25, max_steps=200):
    """Smallest ``factor**k`` (k >= 0) with ``J(factor**k * base) <= 0``."""
    s = 1.0
    for _ in range(max_steps):
        if energy_J(mesh, s * base, params, nl) <= 0:
            return s
        s *= factor
    raise ValueError("could not reach J <= 0 by scaling; is the reaction superhomogeneous?")
