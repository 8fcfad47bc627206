"""Factor graph, measurement factors, and the Levenberg-Marquardt back-end."""

from .core import DIMS, C, FactorGraph, Gaussian, Huber, Key, L, VariableKind, X, local, retract
from .factors import (
    DepthFactor,
    DvlFactor,
    Factor,
    ImuFactor,
    PriorNavStateFactor,
    PriorPoseFactor,
    ReprojectionFactor,
    reprojection_residual,
)
from .solver import (
    SolveReport,
    SolverOptions,
    add_loop_closure_observations,
    compute_step,
    evaluate_cost,
    optimize_extrinsics_toggle,
    solve,
)

__all__ = [
    "DIMS",
    "C",
    "L",
    "X",
    "FactorGraph",
    "Gaussian",
    "Huber",
    "Key",
    "VariableKind",
    "local",
    "retract",
    "DepthFactor",
    "DvlFactor",
    "Factor",
    "ImuFactor",
    "PriorNavStateFactor",
    "PriorPoseFactor",
    "ReprojectionFactor",
    "reprojection_residual",
    "SolveReport",
    "SolverOptions",
    "add_loop_closure_observations",
    "compute_step",
    "evaluate_cost",
    "optimize_extrinsics_toggle",
    "solve",
]
