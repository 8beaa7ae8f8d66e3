"""Adjoint, sensitivity and gradient of the output least-squares functional.

The functional is ``J(mu) = 1/2 sum_n w_n (U^n(x0) - g_n)^2`` with trapezoid
weights ``w_n`` in time. The state recursion is linear in ``mu`` through the
weights ``p_{j,n}``, so its derivative in a direction ``h`` (sampled at the
order-quadrature nodes) is the same recursion with zero initial state and
load ``-M sum_i m_i h_i d^{alpha_i}(U - U^0)``.

The adjoint is the transposed recursion. It runs backwards from ``t_N`` with
zero terminal state, the same step matrices ``p_{0,m} M + S`` and point loads
``w_m r_m`` at the observation node; on a uniform grid this is exactly the
time-reversed forward scheme. Because it is the exact transpose, the
gradient it produces agrees with finite differences of the discrete ``J`` up
to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import ForwardSolution, ObservationTrace, ProblemSpec, march, step_forward
from .fracweights import DistributedWeights, L1Table

__all__ = [
    "AdjointSolution",
    "GradientSample",
    "data_misfit",
    "solve_adjoint",
    "solve_sensitivity",
    "assemble_gradient",
    "right_sided_l1",
    "gradient",
]


@dataclass(eq=False)
class AdjointSolution:
    """Backward multipliers ``V[m]`` (``V[0] = 0``)."""

    V: np.ndarray
    time_weights: np.ndarray

    @property
    def density(self) -> np.ndarray:
        """``V / w``: samples of the continuous adjoint state."""
        out = np.zeros_like(self.V)
        out[1:] = self.V[1:] / self.time_weights[1:, None]
        return out


@dataclass(eq=False)
class GradientSample:
    """L2(0,1) gradient sampled on the order-quadrature nodes."""

    alphas: np.ndarray
    values: np.ndarray
    masses: np.ndarray

    def dot(self, h: np.ndarray) -> float:
        return float(np.sum(self.masses * self.values * h))


def _obs_index(spec: ProblemSpec) -> int:
    return 0 if spec.observe.side == "left" else spec.mesh.M


def data_misfit(spec: ProblemSpec, sol: ForwardSolution, data: ObservationTrace):
    """Residual ``r = U(x0) - g`` and ``J = 1/2 sum w r^2``."""
    if data.values.size != spec.grid.N + 1 or not np.allclose(data.times, spec.grid.nodes):
        raise ValueError("data must live on the problem's time grid")
    r = sol.U[:, _obs_index(spec)] - data.values
    w = spec.grid.trapezoid_weights()
    return r, 0.5 * float(np.sum(w * r * r))


def _require_neumann(spec: ProblemSpec):
    if spec.bc.kind != "neumann":
        raise ValueError("the adjoint is only available for Neumann problems")


def _pmatrix(weights: DistributedWeights) -> np.ndarray:
    """Dense lower-triangular ``P[n, m] = p_{n-m, n}`` for m < n (nonuniform grids)."""
    N = weights.grid.N
    P = np.zeros((N + 1, N + 1))
    for n in range(1, N + 1):
        P[n, : n + 1] = weights.row(n)[::-1]
    return P


def solve_adjoint(spec: ProblemSpec, sol: ForwardSolution, residual: np.ndarray) -> AdjointSolution:
    """Backward solve of the transposed state recursion driven by ``residual``."""
    _require_neumann(spec)
    weights = sol.weights
    ops = sol.ops
    grid = spec.grid
    N = grid.N
    w = grid.trapezoid_weights()
    b = _obs_index(spec)
    V = np.zeros((N + 1, ops.size))
    if not np.any(residual[1:]):
        return AdjointSolution(V, w)
    P = None if grid.is_uniform else _pmatrix(weights)
    seq = weights._interior if grid.is_uniform else None
    solver, last_p0 = None, None
    for m in range(N, 0, -1):
        p0 = weights.row(m)[0]
        if p0 != last_p0:
            solver = ops.factor(p0)
            last_p0 = p0
        if m < N:
            if seq is not None:
                acc = seq[1 : N - m + 1] @ V[m + 1 :]
            else:
                acc = P[m + 1 :, m] @ V[m + 1 :]
            rhs = -ops.mass.matvec(acc)
        else:
            rhs = np.zeros(ops.size)
        rhs[b] += w[m] * residual[m]
        V[m] = solver.solve(rhs)
    return AdjointSolution(V, w)


def _direction_weights(spec: ProblemSpec, sol: ForwardSolution, h: np.ndarray,
                       table: L1Table | None) -> DistributedWeights:
    quad = spec.quadrature()
    h = np.asarray(h, dtype=float)
    if h.shape != quad.nodes.shape:
        raise ValueError("direction does not match the order-quadrature grid")
    inside = (quad.nodes > 0) & (quad.nodes < 1)
    if np.any(h[~inside] != 0):
        raise ValueError("directions must vanish at orders 0 and 1")
    masses = quad.weights[inside] * h[inside]
    if table is None and sol.weights is not None and sol.weights.table is not None:
        table = sol.weights.table
    if table is not None and table.alphas.size != int(inside.sum()):
        table = None
    return DistributedWeights(spec.grid, quad.nodes[inside], masses, table)


def solve_sensitivity(spec: ProblemSpec, sol: ForwardSolution, h: np.ndarray,
                      table: L1Table | None = None) -> ForwardSolution:
    """Derivative of the state in the direction ``h`` (samples on the order grid)."""
    _require_neumann(spec)
    ops = sol.ops
    dw = _direction_weights(spec, sol, h, table)
    W = sol.U - sol.U[0]
    N = spec.grid.N
    loads = np.zeros((N + 1, ops.size))
    for n in range(1, N + 1):
        loads[n] = -ops.mass.matvec(dw.apply(n, W))
    U, D = march(ops, sol.weights, np.zeros(ops.size), lambda n: loads[n], homogeneous=True)
    return ForwardSolution(spec.grid, U, D, loads, ops, sol.weights)


def assemble_gradient(spec: ProblemSpec, sol: ForwardSolution, adj: AdjointSolution,
                      table: L1Table | None = None) -> GradientSample:
    """``G_i = -sum_n (M V^n) . d^{alpha_i}(U - U^0)^n`` on the order grid."""
    quad = spec.quadrature()
    inside = (quad.nodes > 0) & (quad.nodes < 1)
    G = np.zeros(quad.nodes.size)
    if not np.any(adj.V):
        return GradientSample(quad.nodes, G, quad.weights)
    alphas = quad.nodes[inside]
    if table is None:
        table = sol.weights.table if sol.weights is not None else None
    if table is None or table.alphas.size != alphas.size or not np.allclose(table.alphas, alphas):
        table = L1Table(spec.grid, alphas)
    ops = sol.ops
    Y = np.stack([ops.mass.matvec(v) for v in adj.V])
    W = sol.U - sol.U[0]
    C = Y @ W.T  # C[n, m] = (M V^n) . W^m
    N = spec.grid.N
    if spec.grid.is_uniform:
        s = np.array([np.trace(C, offset=-k) for k in range(N)])
        g_in = -(table._interior[:, :N] @ s)
    else:
        g_in = np.zeros(alphas.size)
        for n in range(1, N + 1):
            g_in -= table.rows(n) @ C[n, n::-1]
    G[inside] = g_in
    return GradientSample(quad.nodes, G, quad.weights)


def right_sided_l1(table: L1Table, V: np.ndarray) -> np.ndarray:
    """Transpose of the L1 operator: ``(B^T V)^m = sum_{n >= m} b_{n-m,n} V^n``.

    The discrete counterpart of the right-sided Riemann-Liouville derivative;
    for a single order in ``table`` this satisfies
    ``sum_n V^n . (B u)^n = sum_m u^m . (B^T V)^m``.
    """
    N = table.grid.N
    out = np.zeros((table.alphas.size,) + V.shape)
    flat = out.reshape(table.alphas.size, N + 1, -1)
    Vf = V.reshape(N + 1, -1)
    for n in range(1, N + 1):
        rows = table.rows(n)  # column j multiplies u^{n-j}
        flat[:, n::-1] += rows[:, :, None] * Vf[n][None, None, :]
    return out


def gradient(spec: ProblemSpec, data: ObservationTrace, table: L1Table | None = None):
    """Convenience: ``(J, gradient, forward solution, residual)`` at ``spec.mu``."""
    sol = step_forward(spec, table=table)
    r, J = data_misfit(spec, sol, data)
    adj = solve_adjoint(spec, sol, r)
    return J, assemble_gradient(spec, sol, adj, table), sol, r
