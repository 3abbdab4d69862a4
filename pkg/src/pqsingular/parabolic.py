"""Implicit Euler in time for the singular (p,q)-heat problem.

Each step solves the resolvent problem

    u^n - dt (Δ_p u^n + Δ_q u^n + θ (u^n)^-δ) = dt g^n + u^(n-1)

with the elliptic solver.  ``run_G`` uses a given forcing g(x, t) averaged
over the step, ``run_P`` lags the reaction, ``g^n = f(x, u^(n-1))``, and
``run_superhomog`` wraps the lagged scheme in Picard sweeps over windows of
steps.
"""

from dataclasses import dataclass, field
import logging
import math
import warnings

import numpy as np

from . import elliptic
from .elliptic import SolverError
from .nonlinearity import Nonlinearity, check_growth_conditions
from .operators import energy_J, eta_for, nehari_I, pq_energy, singular_integral

log = logging.getLogger(__name__)

# 3-point Gauss-Legendre rule on [0, 1]
_GAUSS_X = 0.5 + 0.5 * np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
_GAUSS_W = np.array([5.0, 8.0, 5.0]) / 18.0


@dataclass
class Trajectory:
    """Nodal time series of a run.

    ``fields[n]`` is u^n with ``fields[0] = u0``; ``forcing[n-1]`` is g^n.
    ``ledger`` has one dict per completed step.  ``status`` is ``completed``,
    ``blown_up`` or ``solver_failed``; ``status_step`` is the step at which a
    run stopped early.
    """

    mesh: object
    params: object
    dt: float
    times: list
    fields: list
    forcing: list = field(default_factory=list)
    ledger: list = field(default_factory=list)
    status: str = "completed"
    status_step: int = None
    message: str = ""
    picard: list = field(default_factory=list)

    @property
    def n_steps(self):
        return len(self.fields) - 1

    @property
    def final(self):
        return self.fields[-1]

    def _locate(self, t):
        if not 0.0 <= t <= self.times[-1] + 1e-12 * max(1.0, self.times[-1]):
            raise ValueError(f"t={t} outside the computed interval [0, {self.times[-1]}]")
        return min(max(math.ceil(t / self.dt - 1e-9), 0), self.n_steps)

    def piecewise_constant(self, t):
        """``u_dt(t) = u^n`` for ``t`` in ``(t_(n-1), t_n]``."""
        return self.fields[self._locate(t)]

    def piecewise_linear(self, t):
        """Linear interpolation between ``u^(n-1)`` and ``u^n``."""
        n = self._locate(t)
        if n == 0:
            return self.fields[0]
        s = (t - self.times[n - 1]) / self.dt
        return (1.0 - s) * self.fields[n - 1] + s * self.fields[n]

    def series(self, key):
        return np.array([row[key] for row in self.ledger])


def _coords(mesh):
    return mesh.coords


def average_forcing(mesh, g, n, dt):
    """Step average ``(1/dt) ∫_{t_(n-1)}^{t_n} g(x, t) dt`` by 3-point Gauss.

    ``g`` may be a callable ``g(x, t)``, a scalar or a nodal array.
    """
    if not callable(g):
        return np.broadcast_to(np.asarray(g, dtype=float), (mesh.n_nodes,)).copy()
    x = _coords(mesh)
    t0 = (n - 1) * dt
    out = np.zeros(mesh.n_nodes)
    for xi, wi in zip(_GAUSS_X, _GAUSS_W):
        out += wi * np.broadcast_to(np.asarray(g(x, t0 + xi * dt), dtype=float), (mesh.n_nodes,))
    return out


def euler_step(mesh, u_prev, g_n, dt, params, cfg=None):
    """One implicit Euler step; returns the elliptic :class:`SolveResult`."""
    if dt <= 0:
        raise ValueError("euler_step: need dt > 0")
    h = dt * np.asarray(g_n, dtype=float) + u_prev
    warm = u_prev if params.theta == 0 or bool(np.all(u_prev[mesh.interior_mask] > 0)) else None
    r = elliptic.solve_S_lambda(mesh, h, dt, params, cfg=cfg, u_init=warm)
    r.u[mesh.boundary_mask] = 0.0
    return r


def _check_initial(mesh, u0, params, check_shell):
    u0 = np.asarray(u0, dtype=float).copy()
    if u0.shape != (mesh.n_nodes,):
        raise ValueError("u0 must be a nodal field on the mesh")
    if not params.subcritical:
        raise ValueError(f"need 0<delta<2+1/(p-1) (delta={params.delta}, "
                         f"2+1/(p-1)={params.delta_crit:.6g})")
    u0[mesh.boundary_mask] = 0.0
    if check_shell and params.theta > 0:
        from .diagnostics import conical_shell_fit
        try:
            fit = conical_shell_fit(mesh, u0, params)
            target = 1.0 if params.delta <= 1 else params.tau
            if not math.isnan(fit.exponent) and abs(fit.exponent - target) > 0.25 * target:
                warnings.warn(f"u0 boundary exponent {fit.exponent:.3g} is far from {target:.3g}; "
                              "u0 may lie outside the conical shell", RuntimeWarning, stacklevel=3)
        except ValueError as exc:
            warnings.warn(f"conical shell check failed: {exc}", RuntimeWarning, stacklevel=3)
    return u0


def _ledger_row(mesh, n, dt, u, u_prev, params, nl, r):
    eta = eta_for(mesh, u)
    try:
        J = energy_J(mesh, u, params, nl, eta)
        I = nehari_I(mesh, u, params, nl, eta)
    except FloatingPointError:
        J = I = math.nan
    return {
        "step": n,
        "t": n * dt,
        "l2sq": mesh.integrate(u * u),
        "linf": float(np.max(np.abs(u))),
        "J": J,
        "I": I,
        "residual": float(r.residual),
        "newton_iterations": int(r.iterations),
        "increment": float(np.max(np.abs(u - u_prev))),
    }


def _march(mesh, u0, forcing, T, N0, params, cfg, nl, blow_cap, traj=None, start=0, stop=None):
    """Advance ``traj`` from step ``start`` to ``stop`` with ``g^n = forcing(n, u^(n-1))``."""
    dt = T / N0
    if traj is None:
        traj = Trajectory(mesh, params, dt, [0.0], [u0])
    stop = N0 if stop is None else stop
    u = traj.fields[start]
    for n in range(start + 1, stop + 1):
        g = forcing(n, u)
        try:
            r = euler_step(mesh, u, g, dt, params, cfg)
        except (SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
            traj.status, traj.status_step, traj.message = "solver_failed", n, str(exc)
            return traj
        new = r.u
        if not np.all(np.isfinite(new)):
            traj.status, traj.status_step, traj.message = "solver_failed", n, "non-finite step"
            return traj
        del traj.fields[n:], traj.times[n:], traj.forcing[n - 1:], traj.ledger[n - 1:]
        traj.fields.append(new)
        traj.times.append(n * dt)
        traj.forcing.append(np.asarray(g, dtype=float))
        traj.ledger.append(_ledger_row(mesh, n, dt, new, u, params, nl, r))
        u = new
        if blow_cap is not None and float(np.max(np.abs(u))) > blow_cap:
            traj.status, traj.status_step = "blown_up", n
            traj.message = f"max norm exceeded blow_cap={blow_cap:.3g}"
            return traj
    return traj


def run_G(mesh, u0, g, T, N0, params, cfg=None, check_shell=True):
    """Implicit Euler for ``u_t - Δ_p u - Δ_q u = θ u^-δ + g(x, t)``.

    ``g`` is a callable ``g(x, t)``, a constant, a nodal field or ``None``.
    """
    if T <= 0 or int(N0) != N0 or N0 < 1:
        raise ValueError("run_G: need T > 0 and an integer N0 >= 1")
    u0 = _check_initial(mesh, u0, params, check_shell)
    g = 0.0 if g is None else g
    dt = T / N0
    return _march(mesh, u0, lambda n, u: average_forcing(mesh, g, n, dt), T, int(N0),
                  params, cfg, None, None)


def run_P(mesh, u0, nl: Nonlinearity, T, N0, params, cfg=None, check_shell=True, s_grid=None):
    """Lagged scheme ``g^n = f(x, u^(n-1))`` for a subhomogeneous reaction."""
    if T <= 0 or int(N0) != N0 or N0 < 1:
        raise ValueError("run_P: need T > 0 and an integer N0 >= 1")
    if nl.kind not in ("subhomog", "none"):
        raise ValueError("run_P needs a subhomogeneous nonlinearity")
    if nl.kind == "subhomog":
        grid = np.geomspace(1e-6, 1e6, 241) if s_grid is None else s_grid
        rep = check_growth_conditions(nl, grid, params.q)
        if not rep.subhomogeneous:
            raise ValueError(f"subhomogeneous growth conditions fail: {rep.violations}")
    u0 = _check_initial(mesh, u0, params, check_shell)
    x = _coords(mesh)
    return _march(mesh, u0, lambda n, u: nl.eval_f(x, u), T, int(N0), params, cfg, nl, None)


def run_superhomog(mesh, u0, nl: Nonlinearity, T, N0, params, picard_tol=1e-10, picard_max=50,
                   cfg=None, window=8, blow_cap=None, check_shell=True):
    """Picard iteration for a superhomogeneous reaction.

    Time is split into windows of ``window`` steps.  Within a window the
    reaction is frozen along the previous sweep, ``g^n = f(v^k(t_(n-1)))``,
    starting from ``v^0`` constant in time; sweeps repeat until the sup-in-time
    max-norm change drops below ``picard_tol``.  A norm above ``blow_cap``
    (default ``1e8 ||u0||_inf``) or a failed step after the norm has grown
    sets status ``blown_up``.  ``traj.picard`` holds the sweep distances per
    window.
    """
    if T <= 0 or int(N0) != N0 or N0 < 1:
        raise ValueError("run_superhomog: need T > 0 and an integer N0 >= 1")
    if nl.kind == "none":
        return run_G(mesh, u0, 0.0, T, N0, params, cfg, check_shell)
    if nl.kind != "superhomog":
        raise ValueError("run_superhomog needs a superhomogeneous nonlinearity")
    grid = np.geomspace(1e-6, 1e3, 121)
    rep = check_growth_conditions(nl, grid, params.q)
    if not rep.f3:
        raise ValueError(f"superhomogeneous growth condition c_r|s|^r <= rF(s) <= s f(s) fails: {rep.violations}")
    u0 = _check_initial(mesh, u0, params, check_shell)
    N0 = int(N0)
    dt = T / N0
    norm0 = float(np.max(np.abs(u0)))
    if blow_cap is None:
        blow_cap = 1e8 * max(norm0, 1e-300)
    x = _coords(mesh)
    traj = Trajectory(mesh, params, dt, [0.0], [u0])
    start = 0
    while start < N0:
        stop = min(start + int(window), N0)
        frozen = [traj.fields[start]] * (stop - start)   # v^0: constant in time
        dists = []
        for sweep in range(picard_max):
            def forcing(n, u, frozen=frozen, start=start):
                return nl.eval_f(x, frozen[n - 1 - start])
            _march(mesh, u0, forcing, T, N0, params, cfg, nl, None, traj, start, stop)
            if traj.status != "completed":
                break
            new = traj.fields[start:stop]
            d = max(float(np.max(np.abs(a - b))) for a, b in zip(new, frozen))
            dists.append(d)
            frozen = list(new)
            scale = max(float(np.max(np.abs(v))) for v in new)
            if d <= picard_tol * (1.0 + scale) or scale > blow_cap:
                break
        traj.picard.append(dists)
        if traj.status == "solver_failed":
            peak = max(float(np.max(np.abs(v))) for v in traj.fields)
            if peak > 1e3 * norm0:
                traj.status = "blown_up"
                traj.message = f"step failed after growth to {peak:.3g}: {traj.message}"
            return traj
        peak = float(np.max(np.abs(traj.fields[-1])))
        over = [k for k, v in enumerate(traj.fields) if float(np.max(np.abs(v))) > blow_cap]
        if over:
            k = over[0]
            del traj.fields[k + 1:], traj.times[k + 1:], traj.forcing[k:], traj.ledger[k:]
            traj.status, traj.status_step = "blown_up", k
            traj.message = f"max norm exceeded blow_cap={blow_cap:.3g}"
            return traj
        if dists and dists[-1] > picard_tol * (1.0 + peak):
            R = max(float(np.max(np.abs(v))) for v in traj.fields[start:stop + 1])
            omega = nl.lipschitz(R) if nl.lipschitz else math.nan
            Tw = (stop - start) * dt
            traj.status, traj.status_step = "solver_failed", stop
            traj.message = (f"Picard did not contract in {picard_max} sweeps; "
                            f"window length times Lipschitz constant = {Tw * omega:.3g}")
            return traj
        start = stop
    return traj


def _E(mesh, u, params, eta):
    val = pq_energy(mesh, u, params.p, params.q, eta)
    if params.theta:
        val -= params.theta * singular_integral(mesh, u, params.delta)
    return val


def energy_identity_residual(traj: Trajectory, params=None, nl=None):
    """Gap in the discrete energy identity at every recorded step.

    ``|Σ dt ||δu||² + E(u^n) - E(u^0) - Σ dt ∫ g^k δu|`` with
    ``δu = (u^k - u^(k-1))/dt`` and E the energy without the reaction.
    The forcing is taken from ``traj.forcing``, so lagged reactions are
    audited with the values actually used.
    """
    params = params or traj.params
    mesh = traj.mesh
    dt = traj.dt
    # one regularisation for the whole series so the energies are comparable
    eta = eta_for(mesh, scale=max(float(np.max(np.abs(v))) for v in traj.fields))
    E0 = _E(mesh, traj.fields[0], params, eta)
    diss = work = 0.0
    out = []
    for k in range(1, len(traj.fields)):
        du = (traj.fields[k] - traj.fields[k - 1]) / dt
        diss += dt * mesh.integrate(du * du)
        work += dt * mesh.integrate(traj.forcing[k - 1] * du)
        out.append(abs(diss + _E(mesh, traj.fields[k], params, eta) - E0 - work))
    return np.array(out)
