"""Discrete (p,q)-Laplacian and the energy functionals built on it.

Gradients live on elements: edges in 1D, the two triangles of every cell in
2D (P1 elements on the structured triangulation).  The operator returned by
:func:`apply_p_laplacian` is the exact gradient of the discrete energy
``(1/p) sum_e |e| |grad u|_e^p`` divided by the nodal quadrature weights, so
discrete integration by parts holds to round-off.

``|grad u|^(p-2)`` is regularised as ``(|grad u|^2 + eta^2)^((p-2)/2)`` with
``eta = 1e-8 * max|u| / h`` unless an explicit ``eta`` is passed.
"""

import math

import numpy as np
import scipy.sparse as sp

from . import _accel
from .nonlinearity import Nonlinearity

ETA_REL = 1e-8


def eta_for(mesh, u=None, scale=None):
    if scale is None:
        scale = float(np.max(np.abs(u))) if u is not None and u.size else 0.0
    if not scale > 0:
        scale = 1.0
    return ETA_REL * scale / mesh.h


def _tri_operators(mesh):
    """Sparse x/y difference operators for the triangles of a 2D mesh."""
    if "tri" in mesh._cache:
        return mesh._cache["tri"]
    nxp, nyp = mesh.shape
    hx, hy = mesh.spacing
    I, J = np.meshgrid(np.arange(nxp - 1), np.arange(nyp - 1), indexing="ij")
    I, J = I.ravel(), J.ravel()
    k = lambda i, j: i * nyp + j  # noqa: E731
    a, b, c, d = k(I, J), k(I + 1, J), k(I, J + 1), k(I + 1, J + 1)
    nc = I.size
    rows = np.arange(2 * nc)
    # triangle (a, b, c) then (d, c, b)
    cols_x = np.concatenate([np.column_stack([a, b]), np.column_stack([c, d])])
    cols_y = np.concatenate([np.column_stack([a, c]), np.column_stack([b, d])])
    vals_x = np.tile([-1.0 / hx, 1.0 / hx], (2 * nc, 1))
    vals_y = np.tile([-1.0 / hy, 1.0 / hy], (2 * nc, 1))
    shape = (2 * nc, mesh.n_nodes)
    Bx = sp.csr_matrix((vals_x.ravel(), (np.repeat(rows, 2), cols_x.ravel())), shape=shape)
    By = sp.csr_matrix((vals_y.ravel(), (np.repeat(rows, 2), cols_y.ravel())), shape=shape)
    area = np.full(2 * nc, 0.5 * hx * hy)
    mesh._cache["tri"] = (Bx, By, area)
    return mesh._cache["tri"]


def element_gradients(mesh, u):
    """Per-element gradients ``(n_el, dim)`` and element measures."""
    if mesh.dim == 1:
        h = mesh.spacing[0]
        return (np.diff(u) / h)[:, None], np.full(u.size - 1, h)
    Bx, By, area = _tri_operators(mesh)
    return np.column_stack([Bx @ u, By @ u]), area


def _regularised(G, s, eta):
    g2 = np.einsum("ij,ij->i", G, G) + eta * eta
    return g2, g2 ** ((s - 2.0) / 2.0)


def power_energy(mesh, u, s, eta=None):
    """Regularised ``(1/s) int |grad u|^s``, zero for constant u."""
    if eta is None:
        eta = eta_for(mesh, u)
    G, area = element_gradients(mesh, u)
    g2 = np.einsum("ij,ij->i", G, G) + eta * eta
    return float(np.dot(area, g2 ** (s / 2.0) - eta ** s) / s)


def _energy_node_gradient(mesh, u, s, eta):
    """Nodal gradient of ``power_energy`` (not divided by weights)."""
    if mesh.dim == 1:
        flux = _accel.edge_flux_1d(np.ascontiguousarray(u, dtype=float), mesh.spacing[0], float(s), float(eta))
        out = np.zeros_like(u, dtype=float)
        out[:-1] -= flux
        out[1:] += flux
        return out
    Bx, By, area = _tri_operators(mesh)
    G = np.column_stack([Bx @ u, By @ u])
    _, a = _regularised(G, s, eta)
    return Bx.T @ (area * a * G[:, 0]) + By.T @ (area * a * G[:, 1])


def apply_p_laplacian(mesh, u, p, eta=None):
    """Discrete ``-Δ_p u`` at interior nodes; boundary entries are 0."""
    u = np.asarray(u, dtype=float)
    if eta is None:
        eta = eta_for(mesh, u)
    out = _energy_node_gradient(mesh, u, p, eta)
    out[mesh.interior_mask] /= mesh.quad_weights[mesh.interior_mask]
    out[mesh.boundary_mask] = 0.0
    return out


def apply_pq_laplacian(mesh, u, params, eta=None):
    """Discrete ``-Δ_p u - Δ_q u``."""
    u = np.asarray(u, dtype=float)
    if eta is None:
        eta = eta_for(mesh, u)
    return apply_p_laplacian(mesh, u, params.p, eta) + apply_p_laplacian(mesh, u, params.q, eta)


def flux_pairing(mesh, u, v, p, eta=None):
    """Element quadrature of ``|grad u|^(p-2) grad u . grad v``."""
    if eta is None:
        eta = eta_for(mesh, u)
    Gu, area = element_gradients(mesh, u)
    Gv, _ = element_gradients(mesh, v)
    _, a = _regularised(Gu, p, eta)
    return float(np.dot(area * a, np.einsum("ij,ij->i", Gu, Gv)))


def quad_pairing(mesh, a, b):
    return float(np.dot(mesh.quad_weights, a * b))


def pq_hessian(mesh, u, p, q, eta):
    """Sparse Hessian of the regularised (p,q)-energy (all nodes)."""
    if mesh.dim == 1:
        h = mesh.spacing[0]
        g = np.diff(u) / h
        g2 = g * g + eta * eta
        curv = sum(g2 ** ((s - 4.0) / 2.0) * ((s - 1.0) * g * g + eta * eta) for s in (p, q)) / h
        n = u.size
        main = np.zeros(n)
        main[:-1] += curv
        main[1:] += curv
        return sp.diags([main, -curv, -curv], [0, 1, -1], format="csr")
    Bx, By, area = _tri_operators(mesh)
    G = np.column_stack([Bx @ u, By @ u])
    g2 = np.einsum("ij,ij->i", G, G) + eta * eta
    a = sum(g2 ** ((s - 2.0) / 2.0) for s in (p, q))
    b = sum((s - 2.0) * g2 ** ((s - 4.0) / 2.0) for s in (p, q))
    hxx = area * (a + b * G[:, 0] ** 2)
    hyy = area * (a + b * G[:, 1] ** 2)
    hxy = area * b * G[:, 0] * G[:, 1]
    D = sp.diags
    return (Bx.T @ D(hxx) @ Bx + By.T @ D(hyy) @ By
            + Bx.T @ D(hxy) @ By + By.T @ D(hxy) @ Bx).tocsr()


def pq_gradient(mesh, u, p, q, eta):
    return _energy_node_gradient(mesh, u, p, eta) + _energy_node_gradient(mesh, u, q, eta)


def pq_energy(mesh, u, p, q, eta):
    if mesh.dim == 1:
        return float(_accel.pq_energy_1d(np.ascontiguousarray(u, dtype=float), mesh.spacing[0],
                                         float(p), float(q), float(eta)))
    return power_energy(mesh, u, p, eta) + power_energy(mesh, u, q, eta)


def singular_primitive(s, delta):
    """``s^(1-delta)/(1-delta)``, or ``log s`` for delta = 1."""
    if delta == 1:
        return np.log(s)
    return s ** (1.0 - delta) / (1.0 - delta)


def singular_integral(mesh, u, delta):
    """Quadrature of ``u^(1-delta)/(1-delta)`` (log u for delta=1) over interior nodes.

    Boundary nodes are excluded.  Raises ``FloatingPointError`` if the value is
    not finite (a nonpositive interior value with delta >= 1).
    """
    ui = u[mesh.interior_mask]
    w = mesh.quad_weights[mesh.interior_mask]
    if delta < 1:
        val = float(np.dot(w, np.maximum(ui, 0.0) ** (1.0 - delta))) / (1.0 - delta)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            val = float(np.dot(w, singular_primitive(ui, delta)))
    if not math.isfinite(val):
        raise FloatingPointError("singular integral is not finite (u must be positive inside)")
    return val


def singular_power_integral(mesh, u, delta):
    """Quadrature of ``u^(1-delta)`` over interior nodes."""
    ui = u[mesh.interior_mask]
    w = mesh.quad_weights[mesh.interior_mask]
    with np.errstate(divide="ignore"):
        val = float(np.dot(w, np.maximum(ui, 0.0) ** (1.0 - delta)))
    if not math.isfinite(val):
        raise FloatingPointError("singular integral is not finite (u must be positive inside)")
    return val


def _reaction_primitive(mesh, u, nl):
    if nl is None or nl.kind in ("none", "frozen"):
        return 0.0
    return mesh.integrate(nl.eval_F(mesh.coords, u))


def _reaction_pairing(mesh, u, nl):
    if nl is None or nl.kind in ("none", "frozen"):
        return 0.0
    return mesh.integrate(nl.eval_f(mesh.coords, u) * u)


def energy_J(mesh, u, params, nl: Nonlinearity = None, eta=None):
    """``(1/p)∫|∇u|^p + (1/q)∫|∇u|^q - θ∫u^(1-δ)/(1-δ) - ∫F(u)``.

    The singular term switches to ``θ∫log u`` at δ = 1.  Frozen forcings carry
    no primitive and contribute nothing.
    """
    u = np.asarray(u, dtype=float)
    if eta is None:
        eta = eta_for(mesh, u)
    val = pq_energy(mesh, u, params.p, params.q, eta)
    if params.theta:
        val -= params.theta * singular_integral(mesh, u, params.delta)
    return val - _reaction_primitive(mesh, u, nl)


def nehari_I(mesh, u, params, nl: Nonlinearity = None, eta=None):
    """``∫|∇u|^p + ∫|∇u|^q - θ∫u^(1-δ) - ∫f(u)u``."""
    u = np.asarray(u, dtype=float)
    if eta is None:
        eta = eta_for(mesh, u)
    val = params.p * power_energy(mesh, u, params.p, eta) + params.q * power_energy(mesh, u, params.q, eta)
    if params.theta:
        val -= params.theta * singular_power_integral(mesh, u, params.delta)
    return val - _reaction_pairing(mesh, u, nl)


def grad_integral(mesh, u, m):
    """Element quadrature of ``∫|∇u|^m`` (no regularisation)."""
    if m < 1:
        raise ValueError("grad_integral: need m >= 1")
    u = np.ascontiguousarray(u, dtype=float)
    if mesh.dim == 1:
        return float(_accel.grad_power_1d(u, mesh.spacing[0], float(m)))
    G, area = element_gradients(mesh, u)
    return float(np.dot(area, np.sqrt(np.einsum("ij,ij->i", G, G)) ** m))
