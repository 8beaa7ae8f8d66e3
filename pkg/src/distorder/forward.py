"""Implicit time stepping for the distributed-order diffusion problem.

At every step ``n`` the scheme solves

    (p_{0,n} M + S) U^n = p_{0,n} M U^0 - M sum_{j=1}^{n-1} p_{j,n} (U^{n-j} - U^0) + F^n

plus boundary terms, where ``p`` are the distributed-order L1 weights,
``M``/``S`` the P1 mass/stiffness matrices and ``F^n = M f(.) sigma(t_n)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .expr import Expr, parse
from .fem1d import (
    BoundarySpec,
    CoefficientField,
    FEOperators,
    Mesh1D,
    ThomasSolver,
    TriDiag,
    boundary_flux,
)
from .fracweights import (
    AlphaQuadrature,
    DistributedWeights,
    L1Table,
    TimeGrid,
    WeightDistribution,
)

__all__ = [
    "Observation",
    "ProblemSpec",
    "ForwardSolution",
    "ObservationTrace",
    "march",
    "step_forward",
    "observe",
    "add_noise",
    "write_trace",
    "read_trace",
    "trace_l2",
    "steady_observation",
]


@dataclass(frozen=True)
class Observation:
    """Boundary point ``x0`` in {0, 1} and the observed quantity."""

    x0: float = 0.0
    kind: str = "conormal_flux"

    def __post_init__(self):
        if self.x0 not in (0.0, 1.0):
            raise ValueError("observation point must be a boundary point (0 or 1)")
        if self.kind not in ("dirichlet", "conormal_flux"):
            raise ValueError(f"unknown trace kind {self.kind!r}")

    @property
    def side(self) -> str:
        return "left" if self.x0 == 0.0 else "right"


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    mesh: Mesh1D
    coeff: CoefficientField
    bc: BoundarySpec
    u0: Expr
    f: Expr
    sigma: Expr
    mu: WeightDistribution
    grid: TimeGrid
    observe: Observation = Observation()
    source_cutoff: float | None = None
    n_alpha: int = 128
    quad: AlphaQuadrature | None = None

    def __post_init__(self):
        dual = "conormal_flux" if self.bc.kind == "dirichlet" else "dirichlet"
        if self.observe.kind != dual:
            raise ValueError(
                f"{self.bc.kind} boundary condition is observed through the "
                f"{dual} trace, not {self.observe.kind}"
            )

    @classmethod
    def build(cls, *, M: int, a="1", q="0", bc: BoundarySpec, u0="0", f="0", sigma="1",
              mu: WeightDistribution, grid: TimeGrid, x0: float = 0.0,
              source_cutoff: float | None = None, n_alpha: int = 128,
              quad: AlphaQuadrature | None = None) -> "ProblemSpec":
        kind = "conormal_flux" if bc.kind == "dirichlet" else "dirichlet"
        return cls(
            mesh=Mesh1D.uniform(M),
            coeff=CoefficientField(_ex(a), _ex(q)),
            bc=bc,
            u0=_ex(u0),
            f=_ex(f),
            sigma=_ex(sigma),
            mu=mu,
            grid=grid,
            observe=Observation(x0, kind),
            source_cutoff=source_cutoff,
            n_alpha=n_alpha,
            quad=quad,
        )

    def with_weight(self, mu: WeightDistribution, quad: AlphaQuadrature | None = None) -> "ProblemSpec":
        return replace(self, mu=mu, quad=quad)

    def quadrature(self) -> AlphaQuadrature:
        return self.quad or self.mu.default_quadrature(self.n_alpha)

    def sigma_at(self, t: float) -> float:
        if self.source_cutoff is not None and t > self.source_cutoff:
            return 0.0
        return float(self.sigma(t=t))

    def has_source(self) -> bool:
        f = self.f
        return not (f.is_constant() and float(f()) == 0.0)


def _ex(v) -> Expr:
    return v if isinstance(v, Expr) else parse(str(v))


@dataclass(eq=False)
class ForwardSolution:
    """Nodal history ``U[n]`` plus the discrete derivative ``D[n]`` of each step.

    ``D[n] = sum_j p_{j,n} (U^{n-j} - U^0)`` is kept so that boundary fluxes
    can be recovered from the discrete equations afterwards. ``load[n]`` is
    the source/boundary load vector used at step ``n``.
    """

    grid: TimeGrid
    U: np.ndarray
    D: np.ndarray
    load: np.ndarray
    ops: FEOperators
    weights: DistributedWeights | None = None

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes


@dataclass(eq=False)
class ObservationTrace:
    times: np.ndarray
    values: np.ndarray
    provenance: str = "exact"
    eps: float = 0.0
    seed: int | None = None
    exact: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise ValueError("times and values differ in length")

    def window(self, t1: float, t2: float) -> "ObservationTrace":
        m = (self.times >= t1) & (self.times <= t2)
        return ObservationTrace(self.times[m], self.values[m], self.provenance, self.eps, self.seed)


def march(ops: FEOperators, weights: DistributedWeights, U0: np.ndarray, rhs,
          homogeneous: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Generic forward recursion shared by the state and sensitivity problems.

    ``rhs(n)`` returns the source load at step ``n`` (before boundary terms).
    Returns the nodal history and the per-step discrete derivatives.
    """
    grid = weights.grid
    N = grid.N
    size = ops.size
    U = np.zeros((N + 1, size))
    W = np.zeros((N + 1, size))
    D = np.zeros((N + 1, size))
    U[0] = U0
    solver = None
    last_p0 = None
    A_full = None
    for n in range(1, N + 1):
        row = weights.row(n)
        p0 = row[0]
        if p0 != last_p0:
            A_full = p0 * ops.mass + ops.stiffness
            solver = ops.factor(p0)
            last_p0 = p0
        H = weights.history_sum(n, W)
        b = ops.mass.matvec(p0 * U0 - H) + rhs(n)
        b = ops.apply_bc(A_full, b, grid.nodes[n], homogeneous=homogeneous)
        U[n] = solver.solve(b)
        W[n] = U[n] - U0
        D[n] = p0 * W[n] + H
    return U, D


def step_forward(spec: ProblemSpec, weights: DistributedWeights | None = None,
                 table: L1Table | None = None) -> ForwardSolution:
    ops = FEOperators(spec.mesh, spec.coeff, spec.bc)
    if weights is None:
        weights = DistributedWeights.build(spec.grid, spec.mu, spec.quadrature(), table)
    if weights.grid is not spec.grid and weights.grid.key() != spec.grid.key():
        raise ValueError("weight table was built for a different time grid")
    U0 = ops.interpolate(spec.u0)
    if spec.bc.kind == "dirichlet":
        gl, gr = spec.bc.data(0.0)
        U0[0], U0[-1] = gl, gr
    Mf = ops.mass.matvec(ops.interpolate(spec.f)) if spec.has_source() else None
    t = spec.grid.nodes
    N = spec.grid.N
    loads = np.zeros((N + 1, ops.size))
    if Mf is not None:
        for n in range(1, N + 1):
            loads[n] = spec.sigma_at(t[n]) * Mf

    U, D = march(ops, weights, U0, lambda n: loads[n])
    return ForwardSolution(spec.grid, U, D, loads, ops, weights)


def initial_flux(ops: FEOperators, U0: np.ndarray, load0: np.ndarray, side: str) -> float:
    """Flux of the initial state of a Dirichlet problem: the limit of the first-step flux as the step shrinks.

    With a vanishing step the discrete derivative on free nodes tends to
    ``z = M^{-1}(F - S U^0)`` (zero on Dirichlet nodes); the flux follows
    from the boundary row with that residual.
    """
    r = load0 - ops.stiffness.matvec(U0)
    m = ops.mass
    inner = TriDiag(m.lower[1:-1], m.diag[1:-1], m.upper[1:-1])
    z = np.zeros_like(U0)
    z[1:-1] = ThomasSolver(inner).solve(r[1:-1])
    return boundary_flux(ops, U0, side, ops.mass.matvec(z) - load0)


def observe(sol: ForwardSolution, spec: ProblemSpec) -> ObservationTrace:
    ops = sol.ops
    obs = spec.observe
    b = 0 if obs.side == "left" else ops.mesh.M
    if obs.kind == "dirichlet":
        if spec.bc.kind != "neumann":
            raise ValueError("value observations need a Neumann problem")
        return ObservationTrace(sol.times.copy(), sol.U[:, b].copy())
    if spec.bc.kind != "dirichlet":
        raise ValueError("flux observations need a Dirichlet problem")
    g = np.empty(sol.grid.N + 1)
    load0 = np.zeros(ops.size)
    if spec.has_source():
        load0 = spec.sigma_at(0.0) * ops.mass.matvec(ops.interpolate(spec.f))
    g[0] = initial_flux(ops, sol.U[0], load0, obs.side)
    for n in range(1, sol.grid.N + 1):
        res = ops.mass.matvec(sol.D[n]) - sol.load[n]
        g[n] = boundary_flux(ops, sol.U[n], obs.side, res)
    return ObservationTrace(sol.times.copy(), g)


def add_noise(trace: ObservationTrace, eps: float, seed: int) -> ObservationTrace:
    """``g + eps * max|g| * xi`` with i.i.d. standard normal ``xi`` from ``seed``."""
    if eps < 0:
        raise ValueError("noise level must be nonnegative")
    if trace.provenance != "exact":
        raise ValueError("noise is added to exact traces only")
    scale = eps * float(np.max(np.abs(trace.values)))
    xi = np.random.default_rng(seed).standard_normal(trace.values.size)
    noisy = trace.values + scale * xi if eps > 0 else trace.values.copy()
    return ObservationTrace(trace.times.copy(), noisy, "noisy", eps, seed, trace.values.copy())


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_trace(path, trace: ObservationTrace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "g"])
        for t, g in zip(trace.times, trace.values):
            w.writerow([_fmt(t), _fmt(g)])


def read_trace(path) -> ObservationTrace:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t", "g"]:
        raise ValueError(f"{path}: expected header 't,g'")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    if data.size == 0:
        raise ValueError(f"{path}: no data rows")
    return ObservationTrace(data[:, 0], data[:, 1])


def trace_l2(times: np.ndarray, values: np.ndarray) -> float:
    grid = TimeGrid.explicit(times) if times[0] == 0 else None
    if grid is None:
        w = np.zeros(times.size)
        h = np.diff(times)
        w[:-1] += h / 2
        w[1:] += h / 2
    else:
        w = grid.trapezoid_weights()
    return math.sqrt(float(np.sum(w * values**2)))


def steady_observation(spec: ProblemSpec) -> float | None:
    """Large-time limit of the flux trace of a Dirichlet problem with a persistent source.

    With time-independent boundary data and ``sigma`` constant, the state tends
    to the elliptic solution ``A w = sigma f`` and the trace to its flux.
    Returns None when that limit is not determined by an elliptic solve.
    """
    if spec.bc.kind != "dirichlet" or not (spec.bc.left.is_constant() and spec.bc.right.is_constant()):
        return None
    if spec.source_cutoff is not None or not spec.sigma.is_constant():
        return 0.0 if spec.source_cutoff is not None and spec.bc.data(0.0) == (0.0, 0.0) else None
    ops = FEOperators(spec.mesh, spec.coeff, spec.bc)
    load = np.zeros(ops.size)
    if spec.has_source():
        load = float(spec.sigma()) * ops.mass.matvec(ops.interpolate(spec.f))
    A = ops.stiffness
    rhs = ops.apply_bc(A, load, 0.0)
    w = ops.factor(0.0, 1.0).solve(rhs)
    return boundary_flux(ops, w, spec.observe.side, -load)
