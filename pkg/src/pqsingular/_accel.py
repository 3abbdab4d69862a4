"""Hot 1D kernels for the (p,q)-energy and the Newton system.

Every kernel exists twice: a numba ``@njit`` version and a vectorised numpy
twin with the same signature.  ``PQSINGULAR_DISABLE_NUMBA=1`` (or a missing
numba install) selects the numpy path at import time.

Conventions shared by all kernels
---------------------------------
``u`` holds every node including the two boundary nodes (which carry 0).
Edge ``e`` joins nodes ``e`` and ``e+1``; its slope is ``g = (u[e+1]-u[e])/h``.
The regularised edge energy density is

    psi(g) = sum_s ((g^2 + eta^2)^(s/2) - eta^s) / s,   s in (p, q)

so the discrete energy is ``h * sum_e psi(g_e)`` and its exact node gradient
is a flux difference.
"""

import math
import os

import numpy as np

_DISABLE = os.environ.get("PQSINGULAR_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLE:
        raise ImportError
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:
    NUMBA_AVAILABLE = False

BACKEND = "numba" if NUMBA_AVAILABLE else "numpy"


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------

def _singular_primitive_np(s, delta):
    if delta == 1.0:
        return np.log(s)
    return s ** (1.0 - delta) / (1.0 - delta)


def edge_flux_1d_np(u, h, s, eta):
    g = np.diff(u) / h
    return (g * g + eta * eta) ** ((s - 2.0) / 2.0) * g


def pq_energy_1d_np(u, h, p, q, eta):
    g2 = (np.diff(u) / h) ** 2 + eta * eta
    dens = (g2 ** (p / 2.0) - eta ** p) / p + (g2 ** (q / 2.0) - eta ** q) / q
    return h * dens.sum()


def grad_power_1d_np(u, h, m):
    g = np.abs(np.diff(u)) / h
    return h * (g ** m).sum()


def objective_1d_np(u, h, w, c0, lam, p, q, eta, sing, delta, eps, b):
    ui = u[1:-1]
    val = lam * pq_energy_1d_np(u, h, p, q, eta)
    local = 0.5 * c0 * ui * ui - b[1:-1] * ui
    if sing != 0.0:
        local = local - sing * _singular_primitive_np(ui + eps, delta)
    return val + (w[1:-1] * local).sum()


def newton_system_1d_np(u, h, w, c0, lam, p, q, eta, sing, delta, eps, b):
    """Gradient, Hessian bands and residual scale of the 1D objective.

    Returns ``(grad, diag, off, scale)`` on interior nodes; ``off[k]`` couples
    interior nodes ``k`` and ``k+1``.
    """
    g = np.diff(u) / h
    g2 = g * g + eta * eta
    flux = g2 ** ((p - 2.0) / 2.0) * g + g2 ** ((q - 2.0) / 2.0) * g
    curv = (g2 ** ((p - 4.0) / 2.0) * ((p - 1.0) * g * g + eta * eta)
            + g2 ** ((q - 4.0) / 2.0) * ((q - 1.0) * g * g + eta * eta))
    ui = u[1:-1]
    wi = w[1:-1]
    bi = b[1:-1]
    if sing != 0.0:
        sterm = sing * (ui + eps) ** (-delta)
        sdiff = delta * sterm / (ui + eps)
    else:
        sterm = np.zeros_like(ui)
        sdiff = np.zeros_like(ui)
    grad = wi * (c0 * ui - sterm - bi) + lam * (flux[:-1] - flux[1:])
    diag = wi * (c0 + sdiff) + lam * (curv[:-1] + curv[1:]) / h
    off = -lam * curv[1:-1] / h
    scale = wi * (np.abs(c0 * ui) + sterm + np.abs(bi)) + lam * (np.abs(flux[:-1]) + np.abs(flux[1:]))
    return grad, diag, off, scale


def thomas_np(off, diag, rhs):
    from scipy.linalg import solve_banded

    n = diag.size
    ab = np.zeros((3, n))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    return solve_banded((1, 1), ab, rhs, check_finite=False)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if NUMBA_AVAILABLE:

    @njit(cache=True)
    def edge_flux_1d_nb(u, h, s, eta):
        n = u.size - 1
        out = np.empty(n)
        for e in range(n):
            g = (u[e + 1] - u[e]) / h
            out[e] = (g * g + eta * eta) ** ((s - 2.0) / 2.0) * g
        return out

    @njit(cache=True)
    def pq_energy_1d_nb(u, h, p, q, eta):
        acc = 0.0
        ep = eta ** p
        eq = eta ** q
        for e in range(u.size - 1):
            g = (u[e + 1] - u[e]) / h
            g2 = g * g + eta * eta
            acc += (g2 ** (p / 2.0) - ep) / p + (g2 ** (q / 2.0) - eq) / q
        return h * acc

    @njit(cache=True)
    def grad_power_1d_nb(u, h, m):
        acc = 0.0
        for e in range(u.size - 1):
            acc += (abs(u[e + 1] - u[e]) / h) ** m
        return h * acc

    @njit(cache=True)
    def objective_1d_nb(u, h, w, c0, lam, p, q, eta, sing, delta, eps, b):
        val = lam * pq_energy_1d_nb(u, h, p, q, eta)
        for i in range(1, u.size - 1):
            ui = u[i]
            loc = 0.5 * c0 * ui * ui - b[i] * ui
            if sing != 0.0:
                if delta == 1.0:
                    loc -= sing * math.log(ui + eps)
                else:
                    loc -= sing * (ui + eps) ** (1.0 - delta) / (1.0 - delta)
            val += w[i] * loc
        return val

    @njit(cache=True)
    def newton_system_1d_nb(u, h, w, c0, lam, p, q, eta, sing, delta, eps, b):
        n = u.size - 1
        m = n - 1
        flux = np.empty(n)
        curv = np.empty(n)
        e2 = eta * eta
        for e in range(n):
            g = (u[e + 1] - u[e]) / h
            g2 = g * g + e2
            flux[e] = g2 ** ((p - 2.0) / 2.0) * g + g2 ** ((q - 2.0) / 2.0) * g
            curv[e] = (g2 ** ((p - 4.0) / 2.0) * ((p - 1.0) * g * g + e2)
                       + g2 ** ((q - 4.0) / 2.0) * ((q - 1.0) * g * g + e2))
        grad = np.empty(m)
        diag = np.empty(m)
        off = np.empty(max(m - 1, 0))
        scale = np.empty(m)
        for k in range(m):
            i = k + 1
            ui = u[i]
            sterm = 0.0
            sdiff = 0.0
            if sing != 0.0:
                sterm = sing * (ui + eps) ** (-delta)
                sdiff = delta * sterm / (ui + eps)
            grad[k] = w[i] * (c0 * ui - sterm - b[i]) + lam * (flux[i - 1] - flux[i])
            diag[k] = w[i] * (c0 + sdiff) + lam * (curv[i - 1] + curv[i]) / h
            scale[k] = w[i] * (abs(c0 * ui) + sterm + abs(b[i])) + lam * (abs(flux[i - 1]) + abs(flux[i]))
            if k < m - 1:
                off[k] = -lam * curv[i] / h
        return grad, diag, off, scale

    @njit(cache=True)
    def thomas_nb(off, diag, rhs):
        n = diag.size
        c = np.empty(n)
        d = np.empty(n)
        x = np.empty(n)
        beta = diag[0]
        d[0] = rhs[0] / beta
        for i in range(1, n):
            c[i - 1] = off[i - 1] / beta
            beta = diag[i] - off[i - 1] * c[i - 1]
            d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / beta
        x[n - 1] = d[n - 1]
        for i in range(n - 2, -1, -1):
            x[i] = d[i] - c[i] * x[i + 1]
        return x


if NUMBA_AVAILABLE:
    edge_flux_1d = edge_flux_1d_nb
    pq_energy_1d = pq_energy_1d_nb
    grad_power_1d = grad_power_1d_nb
    objective_1d = objective_1d_nb
    newton_system_1d = newton_system_1d_nb
    thomas = thomas_nb
else:
    edge_flux_1d = edge_flux_1d_np
    pq_energy_1d = pq_energy_1d_np
    grad_power_1d = grad_power_1d_np
    objective_1d = objective_1d_np
    newton_system_1d = newton_system_1d_np
    thomas = thomas_np
