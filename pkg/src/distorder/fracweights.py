"""L1 convolution weights for Caputo derivatives and their distributed-order mix.

Conventions used throughout the package: on a grid ``t_0 = 0 < ... < t_N`` the
L1 approximation of the order-``alpha`` Caputo derivative at ``t_n`` is

    d^alpha u(t_n) ~= sum_{j=0}^{n} b[j] * u^{n-j}

so ``b[j]`` multiplies the value ``j`` steps back. Rows always sum to zero,
which is why applying them to ``u - u^0`` or to ``u`` gives the same result.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import special

from .expr import Expr, parse

__all__ = [
    "gamma_fn",
    "TimeGrid",
    "AlphaQuadrature",
    "WeightDistribution",
    "L1Table",
    "DistributedWeights",
    "l1_weights",
    "distributed_weights",
]


def gamma_fn(z):
    """Euler's Gamma function; raises at the poles 0, -1, -2, ..."""
    arr = np.asarray(z, dtype=float)
    if np.any((arr <= 0) & (arr == np.round(arr))):
        raise ValueError(f"Gamma has a pole at nonpositive integer {z}")
    if arr.ndim == 0:
        return math.gamma(float(arr))
    return special.gamma(arr)


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Time nodes ``t_0 = 0 < t_1 < ... < t_N``."""

    nodes: np.ndarray
    kind: str = "explicit"
    ratio: float | None = None

    def __post_init__(self):
        t = np.asarray(self.nodes, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("a time grid needs at least two nodes")
        if t[0] != 0.0:
            raise ValueError("time grids start at t_0 = 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("time nodes must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "nodes", t)

    @classmethod
    def uniform(cls, T: float, N: int) -> "TimeGrid":
        if N < 1 or T <= 0:
            raise ValueError("uniform grid needs N >= 1 and T > 0")
        return cls(np.arange(N + 1) * (T / N), kind="uniform")

    @classmethod
    def geometric(cls, t_min: float, T: float, per_decade: int = 40) -> "TimeGrid":
        """``0`` followed by log-spaced nodes from ``t_min`` to ``T``."""
        if not 0 < t_min < T:
            raise ValueError("geometric grid needs 0 < t_min < T")
        decades = math.log10(T / t_min)
        count = max(int(math.ceil(decades * per_decade - 1e-9)), 1)
        pts = np.logspace(math.log10(t_min), math.log10(T), count + 1)
        pts[-1] = T
        return cls(np.concatenate([[0.0], pts]), kind="geometric", ratio=float(pts[1] / pts[0]))

    @classmethod
    def explicit(cls, nodes) -> "TimeGrid":
        return cls(np.asarray(nodes, dtype=float), kind="explicit")

    @property
    def N(self) -> int:
        return self.nodes.size - 1

    @property
    def T(self) -> float:
        return float(self.nodes[-1])

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    @cached_property
    def is_uniform(self) -> bool:
        if self.kind == "uniform":
            return True
        h = self.steps
        return bool(np.all(np.abs(h - h[0]) <= 1e-14 * h[0]))

    def trapezoid_weights(self) -> np.ndarray:
        """Weights of the composite trapezoid rule on the nodes."""
        h = self.steps
        w = np.zeros(self.nodes.size)
        w[:-1] += h / 2
        w[1:] += h / 2
        return w

    def key(self) -> tuple:
        return (self.kind, self.nodes.size, self.nodes.tobytes())


@dataclass(frozen=True, eq=False)
class AlphaQuadrature:
    """Nodes in [0, 1] with quadrature masses for integrals in the order variable."""

    nodes: np.ndarray
    weights: np.ndarray
    mode: str = "trapezoid"

    def __post_init__(self):
        a = np.asarray(self.nodes, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if a.size == 0:
            raise ValueError("empty quadrature")
        if a.shape != w.shape:
            raise ValueError("nodes and weights differ in length")
        if np.any(a < 0) or np.any(a > 1):
            raise ValueError("quadrature nodes must lie in [0, 1]")
        if self.mode == "discrete" and np.any(w <= 0):
            raise ValueError("discrete atoms need positive masses")
        object.__setattr__(self, "nodes", a)
        object.__setattr__(self, "weights", w)

    @classmethod
    def trapezoid(cls, n: int, lo: float = 0.0, hi: float = 1.0) -> "AlphaQuadrature":
        if n < 1:
            raise ValueError("trapezoid rule needs at least one interval")
        nodes = np.linspace(lo, hi, n + 1)
        w = np.full(n + 1, (hi - lo) / n)
        w[0] *= 0.5
        w[-1] *= 0.5
        return cls(nodes, w, "trapezoid")

    @classmethod
    def discrete(cls, atoms) -> "AlphaQuadrature":
        atoms = np.asarray(atoms, dtype=float).reshape(-1, 2)
        return cls(atoms[:, 0], atoms[:, 1], "discrete")

    @property
    def spacing(self) -> float:
        return float(self.nodes[1] - self.nodes[0]) if self.nodes.size > 1 else 0.0


@dataclass(frozen=True, eq=False)
class WeightDistribution:
    """Nonnegative order weight ``mu`` on [0, 1].

    ``kind`` is one of ``expr`` (density given by an expression in ``alpha``),
    ``indicator`` (``chi_[b1, b2]``), ``grid`` (samples on a uniform alpha
    grid, linearly interpolated) or ``atoms`` (finite sum of Dirac masses).
    """

    kind: str
    expr: Expr | None = None
    support: tuple = (0.0, 1.0)
    values: np.ndarray | None = None
    atoms: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        b1, b2 = map(float, self.support)
        object.__setattr__(self, "support", (b1, b2))
        if self.kind not in ("expr", "indicator", "grid", "atoms"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.kind == "atoms":
            atoms = np.asarray(self.atoms, dtype=float).reshape(-1, 2)
            if np.any(atoms[:, 0] <= 0) or np.any(atoms[:, 0] >= 1):
                raise ValueError("atom orders must lie in (0, 1)")
            if np.any(atoms[:, 1] <= 0):
                raise ValueError("atom masses must be positive")
            object.__setattr__(self, "atoms", atoms)
        elif not 0.0 <= b1 < b2 <= 1.0:
            raise ValueError(f"invalid support [{b1}, {b2}]")
        if self.kind == "grid":
            v = np.asarray(self.values, dtype=float)
            if v.ndim != 1 or v.size < 2:
                raise ValueError("grid weights need at least two samples")
            if np.any(v < 0):
                raise ValueError("weight samples must be nonnegative")
            v = v.copy()
            v.setflags(write=False)
            object.__setattr__(self, "values", v)
        if self.kind == "expr" and self.expr is None:
            raise ValueError("expression weight needs an expression")

    # constructors -------------------------------------------------------
    @classmethod
    def from_expr(cls, src: str | Expr, support=None, name: str = "") -> "WeightDistribution":
        e = parse(src) if isinstance(src, str) else src
        if support is None:
            support = _infer_support(e)
        return cls("expr", expr=e, support=support, name=name)

    @classmethod
    def indicator(cls, b1: float, b2: float, name: str = "") -> "WeightDistribution":
        return cls("indicator", support=(b1, b2), name=name)

    @classmethod
    def from_samples(cls, values, name: str = "") -> "WeightDistribution":
        v = np.asarray(values, dtype=float)
        alpha = np.linspace(0.0, 1.0, v.size)
        pos = np.nonzero(v > 0)[0]
        if pos.size:
            lo = alpha[max(pos[0] - 1, 0)]
            hi = alpha[min(pos[-1] + 1, v.size - 1)]
            support = (lo, hi) if hi > lo else (0.0, 1.0)
        else:
            support = (0.0, 1.0)
        return cls("grid", values=v, support=support, name=name)

    @classmethod
    def from_atoms(cls, atoms, name: str = "") -> "WeightDistribution":
        atoms = np.asarray(atoms, dtype=float).reshape(-1, 2)
        lo, hi = float(atoms[:, 0].min()), float(atoms[:, 0].max())
        return cls("atoms", atoms=atoms, support=(lo, hi), name=name)

    # evaluation ---------------------------------------------------------
    @property
    def is_discrete(self) -> bool:
        return self.kind == "atoms"

    def density(self, alpha):
        """Pointwise density; undefined (raises) for atomic weights."""
        a = np.asarray(alpha, dtype=float)
        if self.kind == "atoms":
            raise TypeError("atomic weights have no density")
        if self.kind == "indicator":
            b1, b2 = self.support
            out = np.where((a >= b1) & (a <= b2), 1.0, 0.0)
        elif self.kind == "grid":
            out = np.interp(a, np.linspace(0.0, 1.0, self.values.size), self.values)
        else:
            out = np.asarray(self.expr(alpha=a), dtype=float)
            out = np.broadcast_to(out, a.shape).copy() if out.shape != a.shape else out
        return float(out) if np.ndim(out) == 0 else out

    def __call__(self, alpha):
        return self.density(alpha)

    def default_quadrature(self, n_alpha: int = 128) -> AlphaQuadrature:
        """Quadrature matched to the weight's representation.

        Indicators are integrated on their own support so the jump at the
        edges costs nothing; sampled weights use their own sample nodes.
        """
        if self.kind == "atoms":
            return AlphaQuadrature.discrete(self.atoms)
        if self.kind == "indicator":
            return AlphaQuadrature.trapezoid(n_alpha, *self.support)
        if self.kind == "grid":
            return AlphaQuadrature.trapezoid(self.values.size - 1)
        return AlphaQuadrature.trapezoid(n_alpha)

    def masses(self, quad: AlphaQuadrature) -> np.ndarray:
        """Per-node masses ``c_i * dalpha * mu(alpha_i)`` (or atom masses)."""
        if quad.mode == "discrete":
            if self.kind != "atoms":
                return quad.weights * self.density(quad.nodes)
            if quad.nodes.size != self.atoms.shape[0] or not np.allclose(
                quad.nodes, self.atoms[:, 0]
            ):
                raise ValueError("discrete quadrature does not match the atoms")
            return self.atoms[:, 1].copy()
        if self.kind == "atoms":
            raise ValueError("atomic weights need the discrete quadrature")
        return quad.weights * self.density(quad.nodes)

    def total_mass(self, n_alpha: int = 2048) -> float:
        return float(np.sum(self.masses(self.default_quadrature(n_alpha))))


def _infer_support(e: Expr, n: int = 2001) -> tuple:
    a = np.linspace(0.0, 1.0, n)
    v = np.asarray(e(alpha=a), dtype=float) * np.ones_like(a)
    pos = np.nonzero(v > 0)[0]
    if pos.size == 0:
        return (0.0, 1.0)
    return (float(a[max(pos[0] - 1, 0)]), float(a[min(pos[-1] + 1, n - 1)]))


def _l1_rows_nonuniform(t: np.ndarray, n: int, alphas: np.ndarray) -> np.ndarray:
    """Rows ``b[:, 0..n]`` for each alpha on an arbitrary grid.

    Built from the coefficient of each increment ``u^j - u^{j-1}``:
    ``[(t_n - t_{j-1})^(1-a) - (t_n - t_j)^(1-a)] / (Gamma(2-a) (t_j - t_{j-1}))``.
    """
    beta = (1.0 - alphas)[:, None]
    x = t[n] - t[:n]  # t_n - t_{j-1}, j = 1..n
    dt = t[1 : n + 1] - t[:n]
    # x^b - (x - dt)^b without cancellation when dt << x
    with np.errstate(divide="ignore"):
        diff = -(x**beta) * np.expm1(beta * np.log1p(-dt / x))
    a = diff / (special.gamma(1.0 + beta) * dt)
    a_rev = a[:, ::-1]
    b = np.zeros((alphas.size, n + 1))
    b[:, :n] += a_rev
    b[:, 1:] -= a_rev
    return b


def _l1_toeplitz_uniform(tau: float, N: int, alphas: np.ndarray):
    """Uniform-grid weights: interior sequence ``b[j]`` (j < n) and the tails."""
    beta = (1.0 - alphas)[:, None]
    k = np.arange(N + 2, dtype=float)[None, :]
    kb = k**beta
    scale = 1.0 / (special.gamma(1.0 + beta) * tau ** alphas[:, None])
    interior = np.zeros((alphas.size, N + 1))
    interior[:, 0] = 1.0
    interior[:, 1:] = kb[:, 2 : N + 2] + kb[:, 0:N] - 2.0 * kb[:, 1 : N + 1]
    # j = n term: (n-1)^b - n^b, indexed by n
    tail = kb[:, 0 : N + 1] - kb[:, 1 : N + 2]
    return interior * scale, np.roll(tail, 1, axis=1) * scale


class L1Table:
    """L1 weight rows for a fixed grid and a set of orders.

    Uniform grids keep a single Toeplitz sequence per order; other grids
    build each row on request and cache it.
    """

    def __init__(self, grid: TimeGrid, alphas):
        alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
        if np.any(alphas <= 0) or np.any(alphas >= 1):
            raise ValueError("L1 weights need orders strictly inside (0, 1)")
        self.grid = grid
        self.alphas = alphas
        self._rows: dict[int, np.ndarray] = {}
        if grid.is_uniform:
            self._interior, self._tail = _l1_toeplitz_uniform(
                float(grid.steps[0]), grid.N, alphas
            )

    def rows(self, n: int) -> np.ndarray:
        """Array of shape ``(len(alphas), n + 1)``: column ``j`` multiplies ``u^{n-j}``."""
        if not 1 <= n <= self.grid.N:
            raise IndexError(f"step index {n} outside 1..{self.grid.N}")
        if self.grid.is_uniform:
            out = self._interior[:, : n + 1].copy()
            out[:, n] = self._tail[:, n]
            return out
        row = self._rows.get(n)
        if row is None:
            row = _l1_rows_nonuniform(self.grid.nodes, n, self.alphas)
            self._rows[n] = row
        return row

    def apply(self, n: int, history: np.ndarray) -> np.ndarray:
        """Discrete derivatives at ``t_n`` for every order.

        ``history`` holds ``u^0..u^n`` along axis 0; the result has shape
        ``(len(alphas),) + history.shape[1:]``.
        """
        b = self.rows(n)
        return np.tensordot(b, history[n::-1], axes=(1, 0))


@dataclass(eq=False)
class DistributedWeights:
    """Weights ``p_{j,n}`` of the distributed-order L1 scheme.

    ``p_{j,n} = sum_i m_i b_{j,n}^{(alpha_i)}`` with per-node masses ``m_i``
    (trapezoid mass times density, or atom mass).
    """

    grid: TimeGrid
    alphas: np.ndarray
    masses: np.ndarray
    table: L1Table | None = None
    _rows: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=float)
        self.masses = np.asarray(self.masses, dtype=float)
        keep = self.masses != 0
        if self.table is None or self.table.alphas.size != self.alphas.size:
            self.table = L1Table(self.grid, self.alphas) if np.any(keep) else None
        if self.grid.is_uniform:
            if self.table is None:
                self._interior = np.zeros(self.grid.N + 1)
                self._tail = np.zeros(self.grid.N + 1)
            else:
                self._interior = self.masses @ self.table._interior
                self._tail = self.masses @ self.table._tail

    @classmethod
    def build(cls, grid: TimeGrid, mu: WeightDistribution, quad: AlphaQuadrature | None = None,
              table: L1Table | None = None) -> "DistributedWeights":
        quad = quad or mu.default_quadrature()
        masses = mu.masses(quad)
        nodes = quad.nodes
        # orders 0 and 1 sit outside the L1 family; a zero mass there is harmless
        inside = (nodes > 0) & (nodes < 1)
        if np.any(masses[~inside] != 0):
            raise ValueError("nonzero weight mass at order 0 or 1")
        if table is not None and (
            table.alphas.size != int(inside.sum()) or table.grid is not grid
        ):
            table = None
        return cls(grid, nodes[inside], masses[inside], table)

    @property
    def p0(self) -> np.ndarray:
        """``p_{0,n}`` for n = 1..N (constant on uniform grids)."""
        return np.array([self.row(n)[0] for n in range(1, self.grid.N + 1)])

    def row(self, n: int) -> np.ndarray:
        if not 1 <= n <= self.grid.N:
            raise IndexError(f"step index {n} outside 1..{self.grid.N}")
        if self.grid.is_uniform:
            out = self._interior[: n + 1].copy()
            out[n] = self._tail[n]
            return out
        row = self._rows.get(n)
        if row is None:
            row = np.zeros(n + 1) if self.table is None else self.masses @ self.table.rows(n)
            self._rows[n] = row
        return row

    def apply(self, n: int, history: np.ndarray) -> np.ndarray:
        """``sum_j p_{j,n} history[n-j]`` (the full discrete derivative at ``t_n``)."""
        return self.row(n) @ history[n::-1].reshape(n + 1, -1)

    def history_sum(self, n: int, increments: np.ndarray) -> np.ndarray:
        """``sum_{j=1}^{n-1} p_{j,n} W^{n-j}`` for ``W = U - U^0`` (``W^0 = 0``)."""
        if n == 1:
            return np.zeros(increments.shape[1:])
        p = self.row(n)[1:n]
        return p @ increments[n - 1 : 0 : -1]


def l1_weights(grid: TimeGrid, alpha: float, n: int) -> np.ndarray:
    """Row ``b_{j,n}``, ``j = 0..n``, of the L1 scheme for a single order."""
    if not 0 < alpha < 1:
        raise ValueError(f"order {alpha} outside (0, 1)")
    if not 1 <= n <= grid.N:
        raise IndexError(f"step index {n} outside 1..{grid.N}")
    if grid.is_uniform:
        tau = float(grid.steps[0])
        k = np.arange(n + 1, dtype=float)
        beta = 1.0 - alpha
        b = np.empty(n + 1)
        b[0] = 1.0
        b[1:n] = (k[2 : n + 1]) ** beta + (k[0 : n - 1]) ** beta - 2.0 * k[1:n] ** beta
        b[n] = (n - 1.0) ** beta - float(n) ** beta
        return b / (gamma_fn(2.0 - alpha) * tau**alpha)
    return _l1_rows_nonuniform(grid.nodes, n, np.array([alpha]))[0]


def distributed_weights(grid: TimeGrid, mu: WeightDistribution, quad: AlphaQuadrature,
                        n: int) -> np.ndarray:
    """Row ``p_{j,n}`` of the distributed-order weights (see DistributedWeights)."""
    return DistributedWeights.build(grid, mu, quad).row(n)
