"""Stationary singular (p,q)-problems.

Every solve minimises a strictly convex discrete functional

    Phi(u) = c0/2 ∫u² + lam [(1/p)∫|∇u|^p + (1/q)∫|∇u|^q] - sing ∫G_eps(u) - ∫b u

by damped Newton, where ``G_eps`` is the primitive of ``(s + eps)^-delta``.
Its stationarity condition is ``c0 u - lam (Δ_p u + Δ_q u) - sing (u+eps)^-delta = b``
at interior nodes.  The singular problems are reached by continuation in
``eps`` followed by a final ``eps = 0`` solve, which is well posed on the
grid once every interior value is positive.
"""

from dataclasses import dataclass, field
import logging
import math
import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _accel
from .operators import (apply_p_laplacian, apply_pq_laplacian, eta_for, pq_energy, pq_gradient,
                        pq_hessian, singular_primitive)

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Newton or fixed-point iteration failed; ``history`` holds the residuals."""

    def __init__(self, msg, history=None):
        super().__init__(msg)
        self.history = list(history or [])


class InvariantViolation(RuntimeError):
    pass


@dataclass
class EllipticConfig:
    eps_schedule: tuple = tuple(10.0 ** -k for k in range(1, 9))
    newton_tol: float = 1e-10
    max_newton: int = 200
    damping: float = 0.5
    armijo: float = 1e-4
    # warm-started solves from a positive field go straight to eps = 0
    skip_continuation_when_warm: bool = True

    def __post_init__(self):
        sched = tuple(float(e) for e in self.eps_schedule)
        if not sched or any(e <= 0 for e in sched):
            raise ValueError("eps_schedule must be nonempty and positive")
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ValueError("eps_schedule must be strictly decreasing")
        if self.newton_tol <= 0 or self.max_newton < 1:
            raise ValueError("newton_tol and max_newton must be positive")
        if not 0 < self.damping < 1 or not 0 < self.armijo < 1:
            raise ValueError("damping and armijo must lie in (0, 1)")
        self.eps_schedule = sched


DEFAULT_CONFIG = EllipticConfig()


@dataclass
class SolveResult:
    u: np.ndarray
    residual: float
    iterations: int
    converged: bool = True
    history: list = field(default_factory=list)
    eps_trace: list = field(default_factory=list)
    warning: str = ""
    eta: float = 0.0


# ---------------------------------------------------------------------------
# Newton core
# ---------------------------------------------------------------------------

@dataclass
class _Functional:
    mesh: object
    c0: float
    lam: float
    p: float
    q: float
    sing: float
    delta: float
    eps: float
    b: np.ndarray
    eta: float

    def __post_init__(self):
        m = self.mesh
        self.inner = np.flatnonzero(m.interior_mask)
        self.w = m.quad_weights
        self.b = np.ascontiguousarray(self.b, dtype=float)

    def feasible(self, u):
        if self.sing == 0.0:
            return True
        ui = u[self.inner] + self.eps
        return bool(np.all(ui > 0)) if (self.eps == 0.0) else bool(np.all(ui >= self.eps))

    def value(self, u):
        if self.mesh.dim == 1:
            return float(_accel.objective_1d(u, self.mesh.spacing[0], self.w, self.c0, self.lam,
                                             self.p, self.q, self.eta, self.sing, self.delta,
                                             self.eps, self.b))
        ui = u[self.inner]
        wi = self.w[self.inner]
        loc = 0.5 * self.c0 * ui * ui - self.b[self.inner] * ui
        if self.sing:
            loc = loc - self.sing * singular_primitive(ui + self.eps, self.delta)
        return self.lam * pq_energy(self.mesh, u, self.p, self.q, self.eta) + float(np.dot(wi, loc))

    def system(self, u):
        """Interior gradient, Hessian and per-node residual scale."""
        if self.mesh.dim == 1:
            grad, diag, off, scale = _accel.newton_system_1d(
                u, self.mesh.spacing[0], self.w, self.c0, self.lam, self.p, self.q,
                self.eta, self.sing, self.delta, self.eps, self.b)
            return grad, (off, diag), scale
        ii = self.inner
        ui = u[ii]
        wi = self.w[ii]
        if self.sing:
            sterm = self.sing * (ui + self.eps) ** (-self.delta)
            sdiff = self.delta * sterm / (ui + self.eps)
        else:
            sterm = sdiff = np.zeros_like(ui)
        egrad = pq_gradient(self.mesh, u, self.p, self.q, self.eta)[ii]
        grad = wi * (self.c0 * ui - sterm - self.b[ii]) + self.lam * egrad
        H = self.lam * pq_hessian(self.mesh, u, self.p, self.q, self.eta)[ii][:, ii]
        H = (H + sp.diags(wi * (self.c0 + sdiff))).tocsc()
        # lam * |energy gradient| is a lower bound of the flux magnitudes; good enough as a scale
        scale = wi * (np.abs(self.c0 * ui) + sterm + np.abs(self.b[ii])) + self.lam * np.abs(egrad)
        return grad, H, scale

    def solve(self, H, rhs):
        if self.mesh.dim == 1:
            off, diag = H
            return _accel.thomas(off, diag, rhs)
        return spla.spsolve(H, rhs)


def _residual(grad, scale, wi):
    """Max-norm of the strong residual relative to ``1 + data scale``."""
    if not grad.size:
        return 0.0
    return float(np.max(np.abs(grad) / wi) / (1.0 + np.max(scale / wi)))


def _newton(fun, u, cfg):
    """Damped Newton from ``u`` (full nodal vector, modified copy returned)."""
    u = np.array(u, dtype=float)
    u[fun.mesh.boundary_mask] = 0.0
    ii = fun.inner
    wi = fun.w[ii]
    history = []
    phi = fun.value(u)
    for it in range(cfg.max_newton + 1):
        grad, H, scale = fun.system(u)
        res = _residual(grad, scale, wi)
        history.append(res)
        if not math.isfinite(res):
            raise SolverError("non-finite residual", history)
        if res <= cfg.newton_tol:
            return u, res, it, history
        if it == cfg.max_newton:
            break
        d = fun.solve(H, -grad)
        slope = float(np.dot(grad, d))
        alpha = 1.0
        accepted = False
        for _ in range(60):
            trial = u.copy()
            trial[ii] = u[ii] + alpha * d
            if fun.sing and fun.eps > 0:
                np.maximum(trial, 0.0, out=trial)
            if fun.feasible(trial):
                phi_t = fun.value(trial)
                step_slope = float(np.dot(grad, trial[ii] - u[ii])) if fun.sing and fun.eps > 0 else alpha * slope
                if phi_t <= phi + cfg.armijo * step_slope:
                    accepted = True
                    break
                # round-off regime: the decrease is below what the functional can resolve
                if abs(slope) <= 1e-13 * (abs(phi) + 1.0) and phi_t <= phi + 1e-12 * (abs(phi) + 1.0):
                    accepted = True
                    break
            alpha *= cfg.damping
        if not accepted:
            if res <= 1e3 * cfg.newton_tol:
                return u, res, it, history
            raise SolverError(f"line search failed at iteration {it} (residual {res:.3e})", history)
        moved = float(np.max(np.abs(trial - u)))
        u = trial
        phi = phi_t
        # stagnation at the round-off floor of the residual
        if moved <= 1e-13 * max(float(np.max(np.abs(u))), 1e-300) and res <= 1e4 * cfg.newton_tol:
            grad, _, scale = fun.system(u)
            res = _residual(grad, scale, wi)
            history.append(res)
            return u, res, it + 1, history
    raise SolverError(f"Newton did not converge in {cfg.max_newton} iterations "
                      f"(residual {history[-1]:.3e})", history)


def _initial_guess(mesh, c0, lam, sing, delta, eps, b):
    """Positive guess from a linear problem with the same data scale."""
    ii = np.flatnonzero(mesh.interior_mask)
    w = mesh.quad_weights[ii]
    rhs = np.maximum(b[ii], 0.0) + sing * (1.0 + eps) ** (-delta) + 1e-3
    zero = np.zeros(mesh.n_nodes)
    K = pq_hessian(mesh, zero, 2.0, 2.0, 1.0)[ii][:, ii] * (0.5 * max(lam, 1e-300))
    A = (K + sp.diags(w * c0)).tocsc()
    u = np.zeros(mesh.n_nodes)
    u[ii] = spla.spsolve(A, w * rhs)
    return np.maximum(u, 0.0)


def minimize(mesh, *, c0, lam, params, sing, b, eps=0.0, u_init=None, cfg=None, eta=None):
    """Single damped-Newton solve at fixed ``eps``.

    ``params`` supplies p, q and delta.  Returns a :class:`SolveResult`.
    """
    cfg = cfg or DEFAULT_CONFIG
    b = np.broadcast_to(np.asarray(b, dtype=float), (mesh.n_nodes,)).copy()
    if u_init is None:
        u_init = _initial_guess(mesh, c0, lam, sing, params.delta, eps, b)
    if eta is None:
        eta = eta_for(mesh, u_init)
    fun = _Functional(mesh, float(c0), float(lam), float(params.p), float(params.q), float(sing),
                      float(params.delta), float(eps), b, float(eta))
    u, res, it, hist = _newton(fun, u_init, cfg)
    # the regularisation follows the solution scale
    new_eta = eta_for(mesh, u)
    if not (0.1 * eta <= new_eta <= 10 * eta):
        fun.eta = new_eta
        u, res, it2, hist2 = _newton(fun, u, cfg)
        it += it2
        hist += hist2
        eta = new_eta
    return SolveResult(u=u, residual=res, iterations=it, history=hist, eta=eta,
                       converged=res <= cfg.newton_tol)


def _positive_inside(mesh, u):
    return u is not None and bool(np.all(u[mesh.interior_mask] > 0))


def continuation(mesh, *, c0, lam, params, sing, b, u_init=None, cfg=None):
    """eps-continuation down ``cfg.eps_schedule`` then an exact eps = 0 solve.

    Without a singular term this is a single Newton solve.
    """
    cfg = cfg or DEFAULT_CONFIG
    if sing == 0:
        return minimize(mesh, c0=c0, lam=lam, params=params, sing=0.0, b=b, u_init=u_init, cfg=cfg)
    if cfg.skip_continuation_when_warm and _positive_inside(mesh, u_init):
        try:
            res = minimize(mesh, c0=c0, lam=lam, params=params, sing=sing, b=b, eps=0.0,
                           u_init=u_init, cfg=cfg)
            res.eps_trace = [(0.0, float(np.max(res.u)), math.nan)]
            return res
        except SolverError:
            log.debug("warm eps=0 solve failed, falling back to continuation")
    u = u_init
    trace = []
    total_it = 0
    hist = []
    prev = None
    for eps in tuple(cfg.eps_schedule) + (0.0,):
        r = minimize(mesh, c0=c0, lam=lam, params=params, sing=sing, b=b, eps=eps, u_init=u, cfg=cfg)
        u = r.u
        total_it += r.iterations
        hist += r.history
        diff = math.nan if prev is None else float(np.max(np.abs(u - prev)))
        trace.append((eps, float(np.max(u)), diff))
        prev = u
    return SolveResult(u=u, residual=r.residual, iterations=total_it, history=hist,
                       eps_trace=trace, eta=r.eta, converged=r.converged)


# ---------------------------------------------------------------------------
# Problems
# ---------------------------------------------------------------------------

def solve_S_eps(mesh, h, lam, eps, params, cfg=None, u_init=None):
    """Regularised resolvent problem ``u - lam(Δ_p u + Δ_q u + θ(u+eps)^-δ) = h``."""
    if lam <= 0 or eps <= 0:
        raise ValueError("solve_S_eps: need lam > 0 and eps > 0")
    cfg = cfg or DEFAULT_CONFIG
    return minimize(mesh, c0=1.0, lam=lam, params=params, sing=lam * params.theta, b=h,
                    eps=eps, u_init=u_init, cfg=cfg)


def solve_S_lambda(mesh, h, lam, params, cfg=None, u_init=None):
    """Singular resolvent problem ``u - lam(Δ_p u + Δ_q u + θ u^-δ) = h``.

    Above the critical singularity the smallest-eps solve is returned with
    ``warning`` set.
    """
    if lam <= 0:
        raise ValueError("solve_S_lambda: need lam > 0")
    cfg = cfg or DEFAULT_CONFIG
    if not params.subcritical:
        r = minimize(mesh, c0=1.0, lam=lam, params=params, sing=lam * params.theta, b=h,
                     eps=cfg.eps_schedule[-1], u_init=u_init, cfg=cfg)
        for eps in cfg.eps_schedule:
            r = minimize(mesh, c0=1.0, lam=lam, params=params, sing=lam * params.theta, b=h,
                         eps=eps, u_init=r.u, cfg=cfg)
        r.warning = (f"delta={params.delta} >= 2+1/(p-1)={params.delta_crit:.4g}: "
                     f"returning the eps={cfg.eps_schedule[-1]:g} solve")
        warnings.warn(r.warning, RuntimeWarning, stacklevel=2)
        return r
    return continuation(mesh, c0=1.0, lam=lam, params=params, sing=lam * params.theta, b=h,
                        u_init=u_init, cfg=cfg)


def solve_torsion(mesh, rho, params, cfg=None):
    """``-Δ_p u - Δ_q u = rho`` with zero boundary values."""
    if rho <= 0:
        raise ValueError("solve_torsion: need rho > 0")
    return minimize(mesh, c0=0.0, lam=1.0, params=params, sing=0.0, b=float(rho), cfg=cfg)


def solve_singular(mesh, weight, params, b=0.0, cfg=None, u_init=None):
    """``-Δ_p u - Δ_q u = weight u^-δ + b`` (b a scalar or nodal field)."""
    if weight <= 0:
        raise ValueError("solve_singular: need a positive singular weight")
    return continuation(mesh, c0=0.0, lam=1.0, params=params, sing=float(weight), b=b,
                        u_init=u_init, cfg=cfg)


def solve_barrier_M(mesh, M, l, L, params, cfg=None, max_outer=500, tol=1e-10):
    """``-Δ_p u - Δ_q u = M u^-δ + l u^(q-1) + L``.

    The ``l u^(q-1)`` term is handled by an outer monotone iteration starting
    from the ``l = 0`` solution; divergence (l too large for coercivity) is
    reported as a :class:`SolverError`.
    """
    if M < 1 or l < 0 or L < 0:
        raise ValueError("solve_barrier_M: need M >= 1 and l, L >= 0")
    r = solve_singular(mesh, M, params, b=float(L), cfg=cfg)
    if l == 0:
        return r
    u = r.u
    hist = []
    for k in range(max_outer):
        b = l * np.maximum(u, 0.0) ** (params.q - 1.0) + L
        r = solve_singular(mesh, M, params, b=b, cfg=cfg, u_init=u)
        step = float(np.max(np.abs(r.u - u)))
        hist.append(step)
        scale = float(np.max(r.u))
        u = r.u
        if not math.isfinite(scale) or scale > 1e12:
            raise SolverError("barrier iteration diverges: l exceeds the coercivity range", hist)
        if step <= tol * (1.0 + scale):
            r.history = hist
            return r
    raise SolverError("barrier outer iteration did not converge", hist)


def solve_PS(mesh, params, b=0.0, cfg=None):
    """Purely singular problem ``-Δ_p u - Δ_q u = u^-δ + b``."""
    return solve_singular(mesh, 1.0, params, b=b, cfg=cfg)


def scaled_profile(mesh, M, params, cfg=None):
    """``M^(-1/(p-1+δ))`` times the solution of the M-barrier with l = L = 0."""
    if M < 1:
        raise ValueError("scaled_profile: need M >= 1")
    u = solve_barrier_M(mesh, M, 0.0, 0.0, params, cfg=cfg).u
    return M ** (-1.0 / (params.p - 1.0 + params.delta)) * u


def limit_residual(mesh, w, params):
    """Max interior residual of ``-Δ_p w - w^-δ = 0`` (the M -> ∞ limit problem)."""
    ii = mesh.interior_mask
    r = apply_p_laplacian(mesh, w, params.p) - np.where(ii, w, 1.0) ** (-params.delta)
    return float(np.max(np.abs(r[ii])))


# ---------------------------------------------------------------------------
# Barriers and the monotone iteration for the stationary problem
# ---------------------------------------------------------------------------

def _equation_defect(mesh, u, params, nl):
    """``-Δ_p u - Δ_q u - θ u^-δ - f(u)`` at interior nodes."""
    ii = mesh.interior_mask
    d = apply_pq_laplacian(mesh, u, params)[ii]
    d -= params.theta * u[ii] ** (-params.delta)
    d -= nl.eval_f(mesh.coords[ii], u[ii])
    return d


def subsolution(mesh, params, nl, cfg=None, rho=None, max_halvings=40):
    """Small positive subsolution of the stationary problem.

    Torsion solution for delta < 1, a small-weight singular solution for
    delta >= 1; the parameter is halved until the discrete subsolution
    inequality holds at every interior node.
    """
    if rho is None:
        rho = 0.5 * params.theta if params.delta >= 1 else 1.0
    for _ in range(max_halvings):
        if params.delta < 1:
            u = solve_torsion(mesh, rho, params, cfg).u
        else:
            u = solve_singular(mesh, rho, params, cfg=cfg).u
        if _positive_inside(mesh, u):
            defect = _equation_defect(mesh, u, params, nl)
            scale = 1e-9 * (1.0 + np.max(np.abs(apply_pq_laplacian(mesh, u, params))))
            if np.all(defect <= scale):
                return u
        rho *= 0.5
    raise SolverError("could not construct a subsolution")


def supersolution(mesh, params, nl, cfg=None, M=None):
    """Solution of the M-barrier with the growth bound of f, M > max(1, θ)."""
    m, L = nl.upper_growth
    if M is None:
        M = 2.0 * max(1.0, params.theta)
    return solve_barrier_M(mesh, M, m, L, params, cfg=cfg).u


@dataclass
class SteadyState:
    u: np.ndarray
    iterates: list
    steps: list
    lower: np.ndarray
    upper: np.ndarray
    K: float


def solve_steady_state(mesh, nl, params, cfg=None, tol=1e-9, max_iter=2000, keep_iterates=False):
    """Fixed point of the monotone scheme

        -Δ_p u_n - Δ_q u_n - θ u_n^-δ + K u_n = f(u_{n-1}) + K u_{n-1}

    started from :func:`subsolution`, with K the monotonicity modulus of f.
    Raises :class:`InvariantViolation` if an iterate decreases anywhere.
    """
    if nl.kind == "none":
        from . import nonlinearity
        nl = nonlinearity.constant(0.0)
    if nl.kind != "subhomog":
        raise ValueError("solve_steady_state needs a subhomogeneous nonlinearity")
    if not params.subcritical:
        raise ValueError("solve_steady_state: need 0<delta<2+1/(p-1)")
    lower = subsolution(mesh, params, nl, cfg)
    upper = supersolution(mesh, params, nl, cfg)
    K = float(nl.omega)
    u = lower
    iterates = [u] if keep_iterates else []
    steps = []
    x = mesh.coords
    for n in range(max_iter):
        b = nl.eval_f(x, u) + K * u
        r = continuation(mesh, c0=K, lam=1.0, params=params, sing=params.theta, b=b, u_init=u, cfg=cfg)
        new = r.u
        drop = float(np.max(u - new))
        if drop > 1e-8 * (1.0 + np.max(np.abs(new))):
            raise InvariantViolation(f"monotone iteration decreased by {drop:.3e} at step {n}")
        step = float(np.max(np.abs(new - u)))
        steps.append(step)
        u = new
        if keep_iterates:
            iterates.append(u)
        if step < tol:
            return SteadyState(u=u, iterates=iterates, steps=steps, lower=lower, upper=upper, K=K)
    raise SolverError("monotone iteration did not converge", steps)


@dataclass
class ComparisonResult:
    holds: bool
    worst_index: int
    worst_gap: float
    tol: float

    def __bool__(self):
        return self.holds


def comparison_check(u, v, tol=None):
    """Whether ``u <= v + tol`` at every node; reports the worst node."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError("comparison_check: fields live on different meshes")
    if tol is None:
        tol = 1e-8 * max(1.0, float(np.max(np.abs(u))), float(np.max(np.abs(v))))
    gap = u - v
    k = int(np.argmax(gap))
    return ComparisonResult(holds=bool(gap[k] <= tol), worst_index=k, worst_gap=float(gap[k]), tol=tol)
