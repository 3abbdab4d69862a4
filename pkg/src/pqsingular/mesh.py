"""Structured meshes on intervals and rectangles.

Nodal data everywhere in the package are flat float arrays indexed like
``mesh.nodes``.  For rectangles the flat index is ``i * (ny + 1) + j`` with
``i`` counting along x.
"""

from dataclasses import dataclass, field
import math

import numpy as np


@dataclass(frozen=True, eq=False)
class Mesh:
    dim: int
    nodes: np.ndarray          # (N, dim)
    spacing: tuple             # h per axis
    shape: tuple               # nodes per axis, (n+1,) or (nx+1, ny+1)
    bounds: tuple              # ((a, b),) or ((ax, bx), (ay, by))
    interior_mask: np.ndarray
    boundary_mask: np.ndarray
    dist: np.ndarray
    quad_weights: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def h(self):
        """Smallest spacing."""
        return min(self.spacing)

    @property
    def measure(self):
        return math.prod(b - a for a, b in self.bounds)

    @property
    def diameter(self):
        return math.sqrt(sum((b - a) ** 2 for a, b in self.bounds))

    @property
    def x(self):
        return self.nodes[:, 0]

    @property
    def coords(self):
        """Coordinates handed to user callables: ``x`` in 1D, ``(N, 2)`` nodes in 2D."""
        return self.nodes[:, 0] if self.dim == 1 else self.nodes

    def zeros(self):
        return np.zeros(self.n_nodes)

    def interpolate(self, fn):
        """Evaluate ``fn`` at the nodes and zero the boundary."""
        if self.dim == 1:
            vals = np.asarray(fn(self.nodes[:, 0]), dtype=float)
        else:
            vals = np.asarray(fn(self.nodes[:, 0], self.nodes[:, 1]), dtype=float)
        vals = np.broadcast_to(vals, (self.n_nodes,)).copy()
        vals[self.boundary_mask] = 0.0
        return vals

    def integrate(self, values):
        return float(np.dot(self.quad_weights, values))

    def l2_norm(self, values):
        return math.sqrt(max(self.integrate(values * values), 0.0))

    def refine(self):
        """Same domain with every axis resolution doubled."""
        n = tuple(2 * (s - 1) for s in self.shape)
        if self.dim == 1:
            (a, b), = self.bounds
            return build_interval_mesh(a, b, n[0])
        (ax, bx), (ay, by) = self.bounds
        return build_rect_mesh(ax, bx, ay, by, n[0], n[1])

    def to_spec(self):
        """Plain description used for serialisation."""
        if self.dim == 1:
            (a, b), = self.bounds
            return {"kind": "interval", "a": a, "b": b, "n": self.shape[0] - 1}
        (ax, bx), (ay, by) = self.bounds
        return {"kind": "rect", "ax": ax, "bx": bx, "ay": ay, "by": by,
                "nx": self.shape[0] - 1, "ny": self.shape[1] - 1}


def _check_axis(a, b, n, name):
    if not a < b:
        raise ValueError(f"{name}: need a < b, got a={a}, b={b}")
    if int(n) != n or n < 2:
        raise ValueError(f"{name}: need an integer n >= 2 cells, got n={n}")


def build_interval_mesh(a, b, n):
    """Equispaced mesh of ``[a, b]`` with ``n`` cells (``n + 1`` nodes).

    ``n = 2`` is the smallest mesh with an interior node.
    """
    _check_axis(a, b, n, "interval")
    n = int(n)
    x = np.linspace(a, b, n + 1)
    h = (b - a) / n
    boundary = np.zeros(n + 1, dtype=bool)
    boundary[[0, -1]] = True
    dist = np.minimum(x - a, b - x)
    dist[boundary] = 0.0
    w = np.full(n + 1, h)
    w[[0, -1]] = h / 2
    return Mesh(1, x[:, None], (h,), (n + 1,), ((float(a), float(b)),),
                ~boundary, boundary, dist, w)


def build_rect_mesh(ax, bx, ay, by, nx, ny):
    """Tensor mesh of the rectangle with exact distance to its boundary."""
    _check_axis(ax, bx, nx, "rect x-axis")
    _check_axis(ay, by, ny, "rect y-axis")
    nx, ny = int(nx), int(ny)
    x = np.linspace(ax, bx, nx + 1)
    y = np.linspace(ay, by, ny + 1)
    X, Y = np.meshgrid(x, y, indexing="ij")
    hx, hy = (bx - ax) / nx, (by - ay) / ny
    bnd = np.zeros((nx + 1, ny + 1), dtype=bool)
    bnd[[0, -1], :] = True
    bnd[:, [0, -1]] = True
    dist = np.minimum.reduce([X - ax, bx - X, Y - ay, by - Y])
    dist[bnd] = 0.0
    wx = np.full(nx + 1, hx)
    wx[[0, -1]] = hx / 2
    wy = np.full(ny + 1, hy)
    wy[[0, -1]] = hy / 2
    w = np.outer(wx, wy)
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    return Mesh(2, nodes, (hx, hy), (nx + 1, ny + 1),
                ((float(ax), float(bx)), (float(ay), float(by))),
                ~bnd.ravel(), bnd.ravel(), dist.ravel(), w.ravel())


def default_A(mesh):
    """Constant in the logarithmic branch of ``phi_delta``: four diameters."""
    return 4.0 * mesh.diameter


def phi_delta(s, delta, p, A):
    """Boundary profile of the conical shell as a function of distance ``s``.

    Identity for ``delta < 1``, ``s * log(A/s)**(1/p)`` for ``delta == 1`` and
    ``s**(p/(p-1+delta))`` for ``delta > 1``.  Works on scalars and arrays.
    """
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr < 0):
        raise ValueError("phi_delta: distance must be nonnegative")
    if p <= 1 or delta <= 0:
        raise ValueError("phi_delta: need p > 1 and delta > 0")
    if delta < 1:
        out = s_arr.copy()
    elif delta == 1:
        if np.any(s_arr >= A):
            raise ValueError("phi_delta: need s < A for delta == 1 (log must stay positive)")
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(s_arr > 0, s_arr * np.log(A / np.where(s_arr > 0, s_arr, 1.0)) ** (1.0 / p), 0.0)
    else:
        out = s_arr ** (p / (p - 1.0 + delta))
    return float(out) if np.ndim(s) == 0 else out
