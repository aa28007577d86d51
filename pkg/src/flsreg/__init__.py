"""Correspondence-free point cloud registration in an orthonormal cosine basis.

Point sets are compared through the coefficients of their delta-mixtures in a
truncated cosine basis; pose (and optionally scale) are found by minimizing
the weighted coefficient differences.
"""

from .basis import (
    BasisSpec,
    CoefficientVector,
    basis_eval,
    basis_grad,
    coefficients,
    delta_distance_sq,
    sobolev_weights,
)
from .core import (
    PointCloud,
    RegistrationResult,
    SimilarityTransform,
    apply_transform,
    normalize_to_unit_cube,
    rotation_error_deg,
    translation_error,
)
from .icp import KdTree, icp_refine, nearest
from .io import TriangleMesh, load_cloud, load_mesh, sample_mesh, write_cloud
from .registration import FlsConfig, register
from .scale import ScaleConfig, estimate_scale, register_with_unknown_scale, trims
from .solver import LeastSquaresProblem, SolverOptions, solve

__version__ = "0.1.0"

__all__ = [
    "BasisSpec",
    "CoefficientVector",
    "basis_eval",
    "basis_grad",
    "coefficients",
    "delta_distance_sq",
    "sobolev_weights",
    "PointCloud",
    "RegistrationResult",
    "SimilarityTransform",
    "apply_transform",
    "normalize_to_unit_cube",
    "rotation_error_deg",
    "translation_error",
    "KdTree",
    "icp_refine",
    "nearest",
    "TriangleMesh",
    "load_cloud",
    "load_mesh",
    "sample_mesh",
    "write_cloud",
    "FlsConfig",
    "register",
    "ScaleConfig",
    "estimate_scale",
    "register_with_unknown_scale",
    "trims",
    "LeastSquaresProblem",
    "SolverOptions",
    "solve",
    "__version__",
]
