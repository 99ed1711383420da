"""Parametrizations ``Phi: Q -> H`` and the spaces they map into."""
from .base import (
    FreeFlowResult,
    JacobianMap,
    LocalProblem,
    NoTangentLift,
    ParametricModel,
    TangentLift,
    free_flow_step,
    gram_and_rhs,
    tangent_lift_laplacian,
)
from .gaussian import GaussianSumModel, wavepacket_to_params
from .linear import LinearModel, fourier_model
from .mlp import LV_SIZES, MLPModel, count_params
from .toy import CallableModel, half_square_model, identity_model
from .spaces import GaussianSpace, GTerms, QuadratureSpace, composite_gauss_legendre, gaussian_moments

__all__ = [
    "CallableModel",
    "half_square_model",
    "identity_model",
    "FreeFlowResult",
    "GTerms",
    "GaussianSpace",
    "GaussianSumModel",
    "JacobianMap",
    "LV_SIZES",
    "LocalProblem",
    "LinearModel",
    "MLPModel",
    "NoTangentLift",
    "ParametricModel",
    "QuadratureSpace",
    "TangentLift",
    "composite_gauss_legendre",
    "count_params",
    "fourier_model",
    "free_flow_step",
    "gaussian_moments",
    "gram_and_rhs",
    "tangent_lift_laplacian",
    "wavepacket_to_params",
]

