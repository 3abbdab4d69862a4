"""Reaction terms f(x, u) and the growth-condition checks they must satisfy."""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


@dataclass(frozen=True)
class Nonlinearity:
    """Tagged reaction term.

    kind is one of ``none``, ``frozen``, ``subhomog``, ``superhomog``.
    ``f(x, s)`` and ``F(x, s)`` are vectorised over nodes; ``x`` is
    ``mesh.coords`` (or ``None`` for x-independent terms).  Frozen forcings
    are called as ``g(x, t)`` with the same ``x``.

    For ``subhomog``: ``alpha_f`` is the limit of f/s^(q-1), ``lower_bound``
    is L in f >= -L, and ``omega`` is the smallest K making ``f(s) + K s``
    nondecreasing on the positive axis.
    For ``superhomog``: ``r`` and ``c_r`` from c_r|s|^r <= rF(s) <= s f(s),
    and ``lipschitz(R)`` is the Lipschitz constant of f on [-R, R].
    """

    kind: str
    f: Optional[Callable] = None
    F: Optional[Callable] = None
    g: Optional[Callable] = None
    alpha_f: float = 0.0
    lower_bound: float = 0.0
    omega: float = 0.0
    r: Optional[float] = None
    c_r: Optional[float] = None
    lipschitz: Optional[Callable] = None
    # (m, L) with f(x, s) <= m s^(q-1) + L, used to build upper barriers
    upper_growth: tuple = (0.0, 0.0)
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("none", "frozen", "subhomog", "superhomog"):
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")

    def eval_f(self, x, s):
        if self.f is None:
            return np.zeros_like(s, dtype=float)
        return np.asarray(self.f(x, s), dtype=float)

    def eval_F(self, x, s):
        if self.F is None:
            return np.zeros_like(s, dtype=float)
        return np.asarray(self.F(x, s), dtype=float)


def none():
    return Nonlinearity("none", spec={"kind": "none"})


def frozen(g):
    """Time-dependent forcing ``g(x, t)``, no dependence on u."""
    return Nonlinearity("frozen", g=g, spec={"kind": "frozen"})


def constant(c):
    """f(x, s) = c.  Subhomogeneous for c >= 0."""
    c = float(c)
    return Nonlinearity(
        "subhomog",
        f=lambda x, s: np.full_like(np.asarray(s, dtype=float), c),
        F=lambda x, s: c * np.asarray(s, dtype=float),
        alpha_f=0.0,
        lower_bound=max(-c, 0.0),
        omega=0.0,
        upper_growth=(0.0, max(c, 0.0)),
        spec={"kind": "constant", "value": c},
    )


def capped_power(q, cap=1.0):
    """f(s) = min(s^(q-1), cap) for s >= 0."""
    q, cap = float(q), float(cap)
    s_star = cap ** (1.0 / (q - 1.0))

    def f(x, s):
        s = np.maximum(np.asarray(s, dtype=float), 0.0)
        return np.minimum(s ** (q - 1.0), cap)

    def F(x, s):
        s = np.maximum(np.asarray(s, dtype=float), 0.0)
        return np.where(s <= s_star, s ** q / q, s_star ** q / q + cap * (s - s_star))

    return Nonlinearity(
        "subhomog", f=f, F=F, alpha_f=0.0, lower_bound=0.0, omega=0.0,
        upper_growth=(0.0, cap),
        spec={"kind": "capped_power", "q": q, "cap": cap},
    )


def power(r, coef=1.0):
    """Superhomogeneous f(s) = coef |s|^(r-2) s with c_r = coef."""
    r, coef = float(r), float(coef)
    return Nonlinearity(
        "superhomog",
        f=lambda x, s: coef * np.abs(s) ** (r - 2.0) * s,
        F=lambda x, s: coef * np.abs(s) ** r / r,
        r=r,
        c_r=coef,
        lipschitz=lambda R: coef * (r - 1.0) * R ** (r - 2.0),
        spec={"kind": "power", "r": r, "coef": coef},
    )


def from_spec(spec):
    """Rebuild a serialisable nonlinearity from its ``spec`` dict."""
    kind = spec.get("kind", "none")
    if kind == "none":
        return none()
    if kind == "constant":
        return constant(spec["value"])
    if kind == "capped_power":
        return capped_power(spec["q"], spec.get("cap", 1.0))
    if kind == "power":
        return power(spec["r"], spec.get("coef", 1.0))
    raise ValueError(f"nonlinearity kind {kind!r} cannot be built from a spec")


@dataclass
class GrowthReport:
    f1: Optional[bool]
    f2: Optional[bool]
    f3: Optional[bool]
    lower_bound: Optional[bool]
    violations: dict

    @property
    def subhomogeneous(self):
        return bool(self.f1) and bool(self.f2)


def check_growth_conditions(nl, s_grid, q, x=None, rtol=1e-12):
    """Sample the growth conditions on a positive increasing grid.

    Returns a :class:`GrowthReport`; each flag is ``None`` when the condition
    does not apply to the kind of ``nl``.  ``violations`` maps a condition name
    to the first offending sample.
    """
    s = np.asarray(s_grid, dtype=float)
    if s.ndim != 1 or s.size < 2 or np.any(s <= 0) or np.any(np.diff(s) <= 0):
        raise ValueError("s_grid must be positive and strictly increasing")
    violations = {}
    fs = nl.eval_f(x, s)

    ratio = fs / s ** (q - 1.0)
    # a finite nonnegative limit is judged from the last quarter of the grid:
    # the ratio must not keep growing there and must stay >= 0
    tail = ratio[-max(2, s.size // 4):]
    f1 = bool(np.all(np.isfinite(tail)) and tail[-1] >= -rtol * max(1.0, abs(tail[-1]))
              and tail[-1] <= tail[0] * (1 + 1e-9) + rtol)
    if not f1:
        violations["f1"] = float(s[-1])

    jumps = np.diff(ratio)
    bad = np.nonzero(jumps > rtol * np.maximum(1.0, np.abs(ratio[:-1])))[0]
    f2 = bad.size == 0
    if not f2:
        violations["f2"] = float(s[bad[0] + 1])

    lb = None
    if nl.kind == "subhomog":
        low = np.nonzero(fs < -nl.lower_bound - rtol)[0]
        lb = low.size == 0
        if not lb:
            violations["lower_bound"] = float(s[low[0]])

    f3 = None
    if nl.r is not None:
        r = nl.r
        grid = np.concatenate([-s[::-1], s])
        fg = nl.eval_f(x, grid)
        Fg = nl.eval_F(x, grid)
        lhs = nl.c_r * np.abs(grid) ** r
        mid = r * Fg
        rhs = grid * fg
        tol = rtol * np.maximum(1.0, np.abs(rhs))
        bad3 = np.nonzero((lhs > mid + tol) | (mid > rhs + tol))[0]
        f3 = bad3.size == 0 and q < r
        if bad3.size:
            violations["f3"] = float(grid[bad3[0]])
        elif not q < r:
            violations["f3"] = "r must exceed q"
    return GrowthReport(f1=f1, f2=f2, f3=f3, lower_bound=lb, violations=violations)
