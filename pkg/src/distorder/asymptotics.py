"""Contour-integral evaluation of the small- and large-time observation laws.

For a weight ``mu`` supported in ``[b1, b2]``::

    V(p)   = int p^a mu(a) da
    Q(t,p) = int t^-a p^a mu(a) da          (so Q(t, p) = V(p / t))
    P(t)   = int t^-a mu(a) da

and on the keyhole contour ``gamma(delta, theta)`` (arc of radius ``delta``
plus the rays ``r e^{+-i theta}``, counterclockwise)::

    Qc(t) = 1/(2 pi i) int e^p / Q(t,p) dp,   Pc(t) = 1/(2 pi i) int e^p Q(t,p) dp

The boundary observation behaves like ``t^-1 Qc(t) R*h(x0)`` as t -> 0 and
like ``-t^-1 R*A^-2 h(x0) Pc(t)`` as t -> infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .fracweights import WeightDistribution

__all__ = [
    "ContourParams",
    "KernelMoments",
    "ContourError",
    "eval_P",
    "eval_Q",
    "eval_V",
    "contour_integral",
    "contour_Q",
    "contour_P",
    "predict_small_t",
    "predict_large_t",
    "check_limits",
]


class ContourError(ArithmeticError):
    pass


@dataclass(frozen=True)
class ContourParams:
    """Keyhole contour: arc radius, ray angle, truncation radius and resolution.

    ``theta=None`` picks the midpoint of ``(pi/2, min(pi/(2 b2), pi))`` once
    the weight is known; ``r_max=None`` truncates the rays where
    ``e^{r cos(theta)}`` drops to ``e^-40``.
    """

    delta: float = 1.0
    theta: float | None = None
    r_max: float | None = None
    nodes: int = 16
    panel_length: float = 1.0
    arc_nodes: int = 64

    def resolve(self, mu: WeightDistribution) -> "ContourParams":
        b2 = mu.support[1]
        hi = min(math.pi / (2 * b2), math.pi) if b2 > 0 else math.pi
        theta = self.theta if self.theta is not None else 0.5 * (math.pi / 2 + hi)
        if not math.pi / 2 < theta < hi:
            raise ValueError(f"theta={theta} outside (pi/2, {hi})")
        r_max = self.r_max if self.r_max is not None else 40.0 / abs(math.cos(theta))
        r_max = max(r_max, 2.0 * self.delta)
        return ContourParams(self.delta, theta, r_max, self.nodes, self.panel_length, self.arc_nodes)

    def refined(self) -> "ContourParams":
        return ContourParams(self.delta, self.theta, self.r_max, 2 * self.nodes,
                             self.panel_length, 2 * self.arc_nodes)


class KernelMoments:
    """Evaluators of ``V``, ``Q`` and ``P`` for one weight.

    Indicators and atoms use closed forms; densities use Gauss-Legendre
    nodes on the support (``P`` additionally has an adaptive path).
    """

    def __init__(self, mu: WeightDistribution, n_gauss: int = 200):
        self.mu = mu
        b1, b2 = mu.support
        if mu.kind == "atoms":
            self._alpha = mu.atoms[:, 0]
            self._w = mu.atoms[:, 1]
        elif mu.kind != "indicator":
            x, w = np.polynomial.legendre.leggauss(n_gauss)
            # split at interior kinks of the density is not attempted;
            # samples-based weights are piecewise linear on a fine grid
            self._alpha = 0.5 * (b2 - b1) * (x + 1) + b1
            self._w = 0.5 * (b2 - b1) * w * mu.density(self._alpha)

    def V(self, p):
        p = np.asarray(p, dtype=complex)
        if np.any((p.imag == 0) & (p.real <= 0)):
            raise ValueError("p on the branch cut (-inf, 0]")
        return self._mix(np.log(p))

    def Q(self, t: float, p):
        if t <= 0:
            raise ValueError("t must be positive")
        p = np.asarray(p, dtype=complex)
        if np.any((p.imag == 0) & (p.real <= 0)):
            raise ValueError("p on the branch cut (-inf, 0]")
        return self._mix(np.log(p) - math.log(t))

    def P(self, t: float) -> float:
        if t <= 0:
            raise ValueError("t must be positive")
        return float(self._mix(np.asarray(-math.log(t), dtype=complex)).real)

    def _mix(self, c):
        """``int e^{a c} mu(a) da`` for complex ``c``."""
        c = np.asarray(c, dtype=complex)
        if self.mu.kind == "indicator":
            b1, b2 = self.mu.support
            small = np.abs(c) < 1e-8
            cs = np.where(small, 1.0, c)
            out = np.exp(b1 * cs) * np.expm1((b2 - b1) * cs) / cs
            # Taylor branch near c = 0
            ser = (b2 - b1) * (1 + 0.5 * (b1 + b2) * c)
            return np.where(small, ser, out)
        return np.exp(np.multiply.outer(c, self._alpha)) @ self._w


def eval_V(p, mu: WeightDistribution):
    return KernelMoments(mu).V(p)


def eval_Q(t: float, p, mu: WeightDistribution):
    return KernelMoments(mu).Q(t, p)


def eval_P(t: float, mu: WeightDistribution) -> float:
    """``int_{b1}^{b2} t^-a mu(a) da``; adaptive quadrature for densities."""
    if t <= 0:
        raise ValueError("t must be positive")
    if mu.kind in ("indicator", "atoms"):
        return KernelMoments(mu).P(t)
    b1, b2 = mu.support
    lt = math.log(t)
    val, _ = integrate.quad(lambda a: math.exp(-a * lt) * float(mu.density(a)), b1, b2,
                            epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def _gauss_panels(a: float, b: float, panel: float, nodes: int):
    n_pan = max(int(math.ceil((b - a) / panel)), 1)
    x, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(a, b, n_pan + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    r = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wr = (half[:, None] * w[None, :]).ravel()
    return r, wr


def _contour_raw(func, cp: ContourParams) -> complex:
    th, d = cp.theta, cp.delta
    # arc: p = d e^{i b}, dp = i p db
    x, w = np.polynomial.legendre.leggauss(cp.arc_nodes)
    beta = th * x
    p_arc = d * np.exp(1j * beta)
    arc = np.sum(w * th * np.exp(p_arc) * func(p_arc) * 1j * p_arc)
    # rays: upper p = r e^{i th} outward, lower p = r e^{-i th} inward
    r, wr = _gauss_panels(d, cp.r_max, cp.panel_length, cp.nodes)
    eu, el = np.exp(1j * th), np.exp(-1j * th)
    pu, pl = r * eu, r * el
    upper = np.sum(wr * np.exp(pu) * func(pu)) * eu
    lower = -np.sum(wr * np.exp(pl) * func(pl)) * el
    return (arc + upper + lower) / (2j * math.pi)


def contour_integral(func, mu: WeightDistribution, cp: ContourParams | None = None,
                     rtol: float = 1e-6, return_complex: bool = False):
    """``1/(2 pi i) int_gamma e^p func(p) dp`` with a node-doubling check."""
    cp = (cp or ContourParams()).resolve(mu)
    v1 = _contour_raw(func, cp)
    v2 = _contour_raw(func, cp.refined())
    scale = max(abs(v2), 1e-300)
    if abs(v2 - v1) > rtol * scale and abs(v2 - v1) > 1e-14:
        v3 = _contour_raw(func, cp.refined().refined())
        if abs(v3 - v2) > rtol * max(abs(v3), 1e-300) and abs(v3 - v2) > 1e-14:
            raise ContourError(f"contour quadrature not converged: {v2} vs {v3}")
        v2 = v3
    return v2 if return_complex else float(v2.real)


def contour_Q(t: float, mu: WeightDistribution, cp: ContourParams | None = None,
              return_complex: bool = False):
    if t <= 0:
        raise ValueError("t must be positive")
    km = KernelMoments(mu)
    return contour_integral(lambda p: 1.0 / km.Q(t, p), mu, cp, return_complex=return_complex)


def contour_P(t: float, mu: WeightDistribution, cp: ContourParams | None = None,
              return_complex: bool = False):
    if t <= 0:
        raise ValueError("t must be positive")
    if mu.kind == "atoms" and np.all(mu.atoms[:, 1] == 0):
        return 0.0
    km = KernelMoments(mu)
    return contour_integral(lambda p: km.Q(t, p), mu, cp, return_complex=return_complex)


def predict_small_t(t: float, mu: WeightDistribution, boundary_value: float,
                    cp: ContourParams | None = None) -> float:
    """Leading small-time term ``t^-1 Qc(t) R*h(x0)``."""
    if boundary_value == 0:
        return 0.0
    return contour_Q(t, mu, cp) * boundary_value / t


def predict_large_t(t: float, mu: WeightDistribution, A2_boundary_value: float,
                    cp: ContourParams | None = None) -> float:
    """Leading large-time term ``-t^-1 R*A^-2 h(x0) Pc(t)``."""
    if A2_boundary_value == 0:
        return 0.0
    return -contour_P(t, mu, cp) * A2_boundary_value / t


LARGE_T = (1e2, 1e3, 1e4, 1e5, 1e6)
SMALL_T = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


def check_limits(mu: WeightDistribution, b: float) -> dict:
    """Trend of ``t^b P(t)`` as t grows and of ``t^-b / P(t)`` as t shrinks.

    The trend is the sign of the log-log slope over the last sampled
    decade; it is compared with the limit expected from the position of
    ``b`` relative to the support bounds.
    """
    b1, b2 = mu.support
    if b == b1 or b == b2:
        raise ValueError("exponent must differ from the support bounds")
    km = KernelMoments(mu) if mu.kind in ("indicator", "atoms") else None
    P = km.P if km is not None else (lambda t: eval_P(t, mu))

    large = np.array([t**b * P(t) for t in LARGE_T])
    small = np.array([t ** (-b) / P(t) for t in SMALL_T])
    large_trend = "diverging" if math.log(large[-1] / large[-2]) > 0 else "vanishing"
    small_trend = "diverging" if math.log(small[-1] / small[-2]) > 0 else "vanishing"
    large_expected = "vanishing" if b < b1 else "diverging"
    small_expected = "vanishing" if b < b2 else "diverging"
    return {
        "b": b,
        "large_t": list(LARGE_T),
        "large_values": large.tolist(),
        "large_trend": large_trend,
        "large_expected": large_expected,
        "small_t": list(SMALL_T),
        "small_values": small.tolist(),
        "small_trend": small_trend,
        "small_expected": small_expected,
        "consistent": large_trend == large_expected and small_trend == small_expected,
    }
