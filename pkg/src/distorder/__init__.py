"""Distributed-order time-fractional diffusion in 1-D: forward solver and inverse tools."""

from .expr import Expr, parse
from .fracweights import AlphaQuadrature, DistributedWeights, L1Table, TimeGrid, WeightDistribution
from .fem1d import BoundarySpec, CoefficientField, Mesh1D
from .forward import ObservationTrace, ProblemSpec, add_noise, observe, step_forward
from .inverse import BoundFit, CGMOptions, RecoveryState, cgm_recover, fit_bound

__version__ = "0.1.0"

__all__ = [
    "Expr",
    "parse",
    "AlphaQuadrature",
    "DistributedWeights",
    "L1Table",
    "TimeGrid",
    "WeightDistribution",
    "BoundarySpec",
    "CoefficientField",
    "Mesh1D",
    "ObservationTrace",
    "ProblemSpec",
    "add_noise",
    "observe",
    "step_forward",
    "BoundFit",
    "CGMOptions",
    "RecoveryState",
    "cgm_recover",
    "fit_bound",
]
