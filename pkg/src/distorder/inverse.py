"""Reconstruction of the order weight from one-point boundary data.

Two procedures live here:

* ``fit_bound`` estimates a support bound from the power law of the trace.
  Large times follow ``c0 + c1 t^-b`` with ``b`` near the lower bound; small
  times follow ``g(0) + c1 t^b`` with ``b`` near the upper bound.
* ``cgm_recover`` recovers the whole weight by a projected conjugate gradient
  iteration on the output least-squares functional, using the adjoint
  gradient smoothed by the inverse Dirichlet Laplacian in ``alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adjoint import assemble_gradient, data_misfit, solve_adjoint, solve_sensitivity
from .expr import parse
from .fem1d import SingularSystemError, TriDiag, solve_tridiag
from .forward import ObservationTrace, ProblemSpec, step_forward
from .fracweights import AlphaQuadrature, L1Table, WeightDistribution

__all__ = [
    "DegenerateFitError",
    "BoundFit",
    "fit_bound",
    "loglog_slope",
    "CGMOptions",
    "RecoveryState",
    "StopDecision",
    "sobolev_smooth",
    "stopping_rule",
    "cgm_recover",
]

B_MIN, B_MAX, B_SCAN = 0.01, 0.99, 99
_GOLD = 0.5 * (math.sqrt(5.0) - 1.0)


class DegenerateFitError(ArithmeticError):
    pass


@dataclass(frozen=True)
class BoundFit:
    window: tuple
    target: str
    b: float
    c0: float
    c1: float
    residual: float
    rel_residual: float
    anchored: bool = False


def _inner(t: np.ndarray, g: np.ndarray, b: float, target: str, c0_fixed: float | None):
    x = t ** (b if target == "upper" else -b)
    if c0_fixed is not None:
        xx = float(x @ x)
        if xx == 0.0:
            raise DegenerateFitError("vanishing regressor")
        y = g - c0_fixed
        c1 = float(x @ y) / xx
        return float(np.linalg.norm(c1 * x - y)), c0_fixed, c1
    n = float(t.size)
    sx, sxx = float(x.sum()), float(x @ x)
    sg, sxg = float(g.sum()), float(x @ g)
    det = n * sxx - sx * sx
    if det <= 1e-14 * n * sxx:
        raise DegenerateFitError(f"singular normal equations at b={b}")
    c0 = (sxx * sg - sx * sxg) / det
    c1 = (n * sxg - sx * sg) / det
    return float(np.linalg.norm(c0 + c1 * x - g)), c0, c1


def fit_bound(trace: ObservationTrace, window: tuple, target: str, anchor: bool = True) -> BoundFit:
    """Least-squares power-law fit of the trace over ``window``.

    ``target='lower'`` fits ``c0 + c1 t^-b`` (late times), ``target='upper'``
    fits ``c0 + c1 t^b`` (early times). With ``anchor`` and a sample at
    ``t = 0`` the early-time offset is pinned to that sample, which keeps
    the exponent identifiable when the window sees only the first few
    percent of the departure from ``g(0)``.
    """
    if target not in ("upper", "lower"):
        raise ValueError(f"target must be 'upper' or 'lower', got {target!r}")
    t1, t2 = map(float, window)
    if not 0 < t1 < t2:
        raise ValueError(f"invalid window {window}")
    times = np.asarray(trace.times, dtype=float)
    if times.size == 0 or times.min() > t1 or times.max() < t2:
        raise ValueError("trace does not cover the window")
    sel = (times >= t1) & (times <= t2)
    t, g = times[sel], np.asarray(trace.values, dtype=float)[sel]
    if t.size < 8:
        raise ValueError(f"only {t.size} samples in window; need at least 8")
    c0_fixed = None
    if target == "upper" and anchor and times[0] == 0.0:
        c0_fixed = float(trace.values[0])
    if np.ptp(g) == 0.0:
        raise DegenerateFitError("trace is constant over the window")

    def cost(b):
        return _inner(t, g, b, target, c0_fixed)[0]

    grid = np.linspace(B_MIN, B_MAX, B_SCAN)
    vals = np.array([cost(b) for b in grid])
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, B_SCAN - 1)]
    # golden-section refinement of the bracket around the best scan point
    x1 = hi - _GOLD * (hi - lo)
    x2 = lo + _GOLD * (hi - lo)
    f1, f2 = cost(x1), cost(x2)
    while hi - lo > 1e-7:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLD * (hi - lo)
            f1 = cost(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLD * (hi - lo)
            f2 = cost(x2)
    cands = [(vals[k], grid[k]), (f1, x1), (f2, x2)]
    _, b = min(cands)
    r, c0, c1 = _inner(t, g, b, target, c0_fixed)
    scale = float(np.linalg.norm(g))
    return BoundFit((t1, t2), target, float(b), c0, c1, r, r / scale if scale else math.inf,
                    c0_fixed is not None)


def loglog_slope(trace: ObservationTrace, window: tuple, offset: float) -> float:
    """Least-squares slope of ``log|g - offset|`` against ``log t`` over ``window``."""
    t1, t2 = window
    sel = (trace.times >= t1) & (trace.times <= t2)
    dev = np.abs(trace.values[sel] - offset)
    if sel.sum() < 2 or np.any(dev == 0):
        raise ValueError("need at least two samples with nonzero deviation")
    return float(np.polyfit(np.log(trace.times[sel]), np.log(dev), 1)[0])


# ---------------------------------------------------------------------------
# conjugate gradient recovery


@dataclass(frozen=True)
class CGMOptions:
    n_alpha: int = 50
    k_max: int = 100
    tau_dp: float = 1.1
    eps: float = 0.0
    stop: str = "discrepancy"  # or "none": run to k_max, report the best iterate
    gamma: str = "smoothed"  # "literal" uses the raw gradient, "zero" gives steepest descent
    smooth: bool = True
    initial: str = "sin(pi*alpha)/100"
    grad_floor: float = 1e-12

    def __post_init__(self):
        if self.stop not in ("discrepancy", "none"):
            raise ValueError(f"unknown stopping mode {self.stop!r}")
        if self.gamma not in ("smoothed", "literal", "zero"):
            raise ValueError(f"unknown conjugate coefficient {self.gamma!r}")
        if self.n_alpha < 2 or self.k_max < 0 or self.tau_dp <= 0 or self.eps < 0:
            raise ValueError("invalid CGM options")


@dataclass
class RecoveryState:
    alpha: np.ndarray
    mu: np.ndarray
    w_prev: np.ndarray | None = None
    g_prev: np.ndarray | None = None
    d: np.ndarray | None = None
    k: list = field(default_factory=list)
    J: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    error: list = field(default_factory=list)
    step: list = field(default_factory=list)
    stopped: bool = False
    stop_reason: str = ""
    stop_index: int | None = None
    best_index: int | None = None
    best_mu: np.ndarray | None = None
    delta_est: float = 0.0

    @property
    def best_error(self) -> float:
        if self.best_index is None:
            return math.nan
        return self.error[self.best_index]

    def weight(self, best: bool = True) -> WeightDistribution:
        v = self.best_mu if best and self.best_mu is not None else self.mu
        return WeightDistribution.from_samples(v)

    def log_rows(self):
        return list(zip(self.k, self.J, self.residual, self.error, self.step))


@dataclass(frozen=True)
class StopDecision:
    stop: bool
    reason: str = ""


def _alpha_l2(values: np.ndarray, spacing: float) -> float:
    w = np.full(values.size, spacing)
    w[0] = w[-1] = 0.5 * spacing
    return math.sqrt(float(np.sum(w * values * values)))


def _d_alpha_sq(values: np.ndarray, spacing: float) -> float:
    return float(np.sum(np.diff(values) ** 2) / spacing)


def sobolev_smooth(G: np.ndarray, spacing: float) -> np.ndarray:
    """Solve ``-w'' = G`` on the alpha grid with ``w = 0`` at both ends."""
    n = G.size - 2
    out = np.zeros_like(G)
    if n <= 0:
        return out
    off = np.full(n - 1, -1.0)
    A = TriDiag(off, np.full(n, 2.0), off.copy())
    out[1:-1] = solve_tridiag(A, spacing * spacing * G[1:-1])
    return out


def stopping_rule(state: RecoveryState, opts: CGMOptions) -> StopDecision:
    """Discrepancy principle plus the iteration cap."""
    if not state.residual:
        raise ValueError("no residual recorded yet")
    if opts.stop == "discrepancy" and state.residual[-1] <= opts.tau_dp * state.delta_est:
        return StopDecision(True, "discrepancy")
    if state.k[-1] >= opts.k_max:
        return StopDecision(True, "max-iterations")
    return StopDecision(False)


def _sample_truth(mu_true, alpha):
    if mu_true is None:
        return None
    if isinstance(mu_true, WeightDistribution):
        return np.asarray(mu_true.density(alpha), dtype=float)
    return np.asarray(mu_true, dtype=float)


def cgm_recover(spec: ProblemSpec, data: ObservationTrace, opts: CGMOptions = CGMOptions(),
                mu_true=None, callback=None) -> RecoveryState:
    """Projected conjugate gradient recovery of the weight on a uniform alpha grid."""
    if spec.bc.kind != "neumann":
        raise ValueError("weight recovery needs a Neumann problem (adjoint availability)")
    quad = AlphaQuadrature.trapezoid(opts.n_alpha)
    alpha, h_a = quad.nodes, quad.spacing
    inner_nodes = alpha[1:-1]
    table = L1Table(spec.grid, inner_nodes)
    w_t = spec.grid.trapezoid_weights()

    mu0 = np.asarray(parse(opts.initial)(alpha=alpha), dtype=float) * np.ones_like(alpha)
    mu0 = np.maximum(mu0, 0.0)
    # the L1 family is defined for orders strictly inside (0, 1)
    mu0[0] = mu0[-1] = 0.0
    truth = _sample_truth(mu_true, alpha)

    g_ref = data.exact if data.exact is not None else data.values
    delta_est = opts.eps * float(np.max(np.abs(g_ref))) * math.sqrt(spec.grid.T)
    state = RecoveryState(alpha, mu0, delta_est=delta_est)

    for k in range(opts.k_max + 1):
        sk = spec.with_weight(WeightDistribution.from_samples(state.mu), quad)
        try:
            sol = step_forward(sk, table=table)
        except SingularSystemError:
            # an all-zero weight leaves the pure Neumann step matrix singular
            state.stopped, state.stop_reason, state.stop_index = True, "singular-iterate", k - 1
            break
        r, J = data_misfit(sk, sol, data)
        res = math.sqrt(float(np.sum(w_t * r * r)))
        err = _alpha_l2(state.mu - truth, h_a) if truth is not None else math.nan
        state.k.append(k)
        state.J.append(J)
        state.residual.append(res)
        state.error.append(err)
        state.step.append(math.nan)
        if truth is not None and (state.best_index is None or err < state.error[state.best_index]):
            state.best_index, state.best_mu = k, state.mu.copy()
        if callback is not None:
            callback(state)

        decision = stopping_rule(state, opts)
        if decision.stop:
            state.stopped, state.stop_reason, state.stop_index = True, decision.reason, k
            break

        adj = solve_adjoint(sk, sol, r)
        G = assemble_gradient(sk, sol, adj, table).values
        if _alpha_l2(G, h_a) <= opts.grad_floor:
            state.stopped, state.stop_reason, state.stop_index = True, "gradient-floor", k
            break
        w = sobolev_smooth(G, h_a) if opts.smooth else G.copy()
        w[0] = w[-1] = 0.0
        if opts.gamma == "zero" or state.w_prev is None:
            gamma = 0.0
        else:
            a, b = (w, state.w_prev) if opts.gamma == "smoothed" else (G, state.g_prev)
            den = _d_alpha_sq(b, h_a)
            gamma = _d_alpha_sq(a, h_a) / den if den > 0 else 0.0
        d = -w if state.d is None or gamma == 0.0 else -w + gamma * state.d

        sens = solve_sensitivity(sk, sol, d, table)
        ud = sens.U[:, 0 if sk.observe.side == "left" else sk.mesh.M]
        den = float(np.sum(w_t * ud * ud))
        if den == 0.0 or not math.isfinite(den):
            state.stopped, state.stop_reason, state.stop_index = True, "zero-sensitivity", k
            break
        s = -float(np.sum(w_t * ud * r)) / den
        state.step[-1] = s
        state.w_prev, state.g_prev, state.d = w, G, d
        mu_new = np.maximum(state.mu + s * d, 0.0)
        mu_new[0] = mu_new[-1] = 0.0
        state.mu = mu_new

    if state.best_index is None:
        state.best_index = len(state.k) - 1 if truth is not None else None
        state.best_mu = state.mu.copy()
    return state
