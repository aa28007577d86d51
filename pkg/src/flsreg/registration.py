"""Rotation and translation estimation with known scale.

The objective is ``sum_k lambda_k (mean_i f_k(s R a_i + t) - c_k^B)^2`` over the
cosine basis of :mod:`flsreg.basis`.  Rotations are updated on the left,
``R <- exp([w]x) R``, with translation increments added directly, so the
Jacobian is always taken at ``w = 0``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .basis import (
    BasisSpec,
    CoefficientVector,
    _coefficients_sorted,
    evaluate_features,
    point_blocks,
    sobolev_weights,
)
from .core import (
    DegenerateCloudError,
    DimensionError,
    PointCloud,
    RegistrationResult,
    SimilarityTransform,
    canonical_order,
    so3_exp,
)
from .solver import LeastSquaresProblem, SolverError, SolverOptions, solve

__all__ = [
    "FlsConfig",
    "PoseParams",
    "Pose",
    "residuals",
    "jacobian",
    "register",
    "pose_problem",
    "NormalizedFrame",
]

MARGIN = 0.9


@dataclass
class FlsConfig:
    order: int = 4
    weight_exponent: float | None = None
    solver: SolverOptions = field(default_factory=SolverOptions)
    pre_align_centroids: bool = True
    half_width: float = 1.0

    def basis(self, dim: int) -> BasisSpec:
        return BasisSpec.cube(dim, self.half_width, self.order, self.weight_exponent)


@dataclass(frozen=True)
class PoseParams:
    """Tangent increment: ``omega`` (axis-angle, rad) and ``tau`` (translation)."""

    omega: NDArray[np.float64]
    tau: NDArray[np.float64]

    @classmethod
    def from_vector(cls, v: NDArray, dim: int = 3) -> PoseParams:
        nrot = 3 if dim == 3 else 1
        return cls(np.asarray(v[:nrot], dtype=np.float64), np.asarray(v[nrot:], dtype=np.float64))


@dataclass(frozen=True, eq=False)
class Pose:
    """Optimization state: rotation and translation acting on pre-scaled points."""

    R: NDArray[np.float64]
    t: NDArray[np.float64]

    def retract(self, dx: NDArray[np.float64]) -> Pose:
        d = self.R.shape[0]
        if d == 3:
            dR = so3_exp(dx[:3])
            tau = dx[3:]
        else:
            c, s = np.cos(dx[0]), np.sin(dx[0])
            dR = np.array([[c, -s], [s, c]])
            tau = dx[1:]
        R = dR @ self.R
        # keep R on SO(d) despite accumulated rounding
        U, _, Vt = np.linalg.svd(R)
        return Pose(U @ Vt, self.t + tau)


def _num_params(dim: int) -> int:
    return 6 if dim == 3 else 3


def _transformed(points: NDArray, T: SimilarityTransform) -> NDArray:
    return T.scale * points @ T.rotation.T + T.translation


def _residuals_from_points(spec, moved, target, sqrt_w):
    return sqrt_w * (_coefficients_sorted(spec, moved) - target)


def _jacobian_from_points(spec, base, moved, sqrt_w):
    """``base`` are the rotated, scaled points ``s R a`` and ``moved = base + t``."""
    n = moved.shape[0]
    grad_sum = np.zeros((spec.dim, spec.size))
    if spec.dim == 3:
        M = np.zeros((spec.size, 3, 3))  # M[k, l, j] = sum_n q_l dF_k/dx_j
    else:
        J_w = np.zeros(spec.size)
    for block in point_blocks(n, spec.size):
        _, G = evaluate_features(spec, moved[block], gradient=True)
        grad_sum += G.sum(axis=2)
        q = np.ascontiguousarray(base[block].T)
        if spec.dim == 3:
            M += np.einsum("jkn,ln->klj", G, q)
        else:
            # d/dw of rotation by w in the plane applied to q: (-q_y, q_x)
            J_w += np.einsum("kn,n->k", G[1], q[0]) - np.einsum("kn,n->k", G[0], q[1])
    J_t = grad_sum.T / n
    if spec.dim == 3:
        # d/dw f(exp(w) q + t) at w=0 is q x grad f
        J_w = np.stack(
            [M[:, 1, 2] - M[:, 2, 1], M[:, 2, 0] - M[:, 0, 2], M[:, 0, 1] - M[:, 1, 0]], axis=1
        ) / n
    else:
        J_w = J_w[:, None] / n
    return sqrt_w[:, None] * np.hstack([J_w, J_t])


def residuals(
    source: PointCloud,
    target_coefficients: CoefficientVector,
    spec: BasisSpec,
    T: SimilarityTransform,
) -> NDArray[np.float64]:
    """Weighted coefficient differences between the moved source and the target."""
    if source.dim != spec.dim or T.dim != spec.dim:
        raise DimensionError("source, basis and transform dimensions must agree")
    if not target_coefficients.spec.same_as(spec):
        raise ValueError("target coefficients were computed with a different basis")
    pts = source.points[canonical_order(source.points)]
    sqrt_w = np.sqrt(sobolev_weights(spec))
    return _residuals_from_points(spec, _transformed(pts, T), target_coefficients.values, sqrt_w)


def jacobian(
    source: PointCloud,
    spec: BasisSpec,
    T: SimilarityTransform,
) -> NDArray[np.float64]:
    """Derivative of :func:`residuals` w.r.t. ``(omega, tau)`` at ``omega = 0``.

    Columns are ``[omega_x, omega_y, omega_z, tau_x, tau_y, tau_z]`` in 3D and
    ``[omega, tau_x, tau_y]`` in 2D.
    """
    if source.dim != spec.dim or T.dim != spec.dim:
        raise DimensionError("source, basis and transform dimensions must agree")
    pts = source.points[canonical_order(source.points)]
    base = T.scale * pts @ T.rotation.T
    sqrt_w = np.sqrt(sobolev_weights(spec))
    return _jacobian_from_points(spec, base, base + T.translation, sqrt_w)


def pose_problem(
    points: NDArray[np.float64], target: NDArray[np.float64], spec: BasisSpec
) -> LeastSquaresProblem:
    """Least-squares problem over :class:`Pose` for pre-scaled, canonically ordered points."""
    sqrt_w = np.sqrt(sobolev_weights(spec))
    cache: dict[int, tuple[Pose, NDArray]] = {}

    def base_of(x: Pose) -> NDArray:
        hit = cache.get(id(x))
        if hit is not None and hit[0] is x:
            return hit[1]
        base = points @ x.R.T
        cache.clear()
        cache[id(x)] = (x, base)
        return base

    def res(x: Pose) -> NDArray:
        return _residuals_from_points(spec, base_of(x) + x.t, target, sqrt_w)

    def jac(x: Pose) -> NDArray:
        base = base_of(x)
        return _jacobian_from_points(spec, base, base + x.t, sqrt_w)

    return LeastSquaresProblem(
        res, jac, _num_params(spec.dim), spec.size, retract=lambda x, dx: x.retract(dx)
    )


@dataclass(frozen=True)
class NormalizedFrame:
    """Joint similarity that maps both clouds into the basis domain.

    Source points go to ``sigma * (s a - source_offset)`` and target points to
    ``sigma * (b - target_offset)``.
    """

    sigma: float
    source_offset: NDArray[np.float64]
    target_offset: NDArray[np.float64]
    scale: float

    @classmethod
    def fit(cls, src: NDArray, tgt: NDArray, scale: float, half_width: float,
            align_centroids: bool) -> NormalizedFrame:
        c_b = tgt.mean(axis=0)
        c_a = scale * src.mean(axis=0) if align_centroids else c_b
        # bounding sphere, so no rotation of the source can leave the box
        radius = max(
            np.max(np.linalg.norm(scale * src - c_a, axis=1)),
            np.max(np.linalg.norm(tgt - c_b, axis=1)),
        )
        if not radius > 0:
            raise DegenerateCloudError("both clouds collapse to a single point")
        return cls(MARGIN * half_width / radius, c_a, c_b, scale)

    def source(self, pts: NDArray) -> NDArray:
        return self.sigma * (self.scale * pts - self.source_offset)

    def target(self, pts: NDArray) -> NDArray:
        return self.sigma * (pts - self.target_offset)

    def to_pose(self, T: SimilarityTransform) -> Pose:
        R = T.rotation
        t_n = self.sigma * (T.translation - self.target_offset + R @ self.source_offset)
        return Pose(R.copy(), t_n)

    def from_pose(self, pose: Pose) -> SimilarityTransform:
        t = self.target_offset - pose.R @ self.source_offset + pose.t / self.sigma
        return SimilarityTransform(pose.R, t, self.scale)


def register(
    source: PointCloud,
    target: PointCloud,
    config: FlsConfig | None = None,
    scale: float = 1.0,
    initial: SimilarityTransform | None = None,
) -> RegistrationResult:
    """Estimate ``R, t`` with ``target ~ scale * R @ source + t``.

    Both clouds are centered on their centroids (when enabled) and mapped into
    the basis box by one shared similarity; the estimate is mapped back to the
    input frame.  ``initial=None`` starts from the identity rotation with the
    centroids aligned; an explicit ``initial`` is used as given, with its
    rotation and translation and the fixed ``scale``.

    ``final_cost`` is the objective in the normalized frame.  Solver failures
    are reported through ``converged=False`` and ``details['error']``.
    """
    cfg = config or FlsConfig()
    if source.dim != target.dim:
        raise DimensionError(f"source is {source.dim}D, target is {target.dim}D")
    if not scale > 0:
        raise ValueError("scale must be positive")
    t0 = time.perf_counter()
    dim = source.dim
    spec = cfg.basis(dim)

    src = source.points[canonical_order(source.points)]
    tgt = target.points[canonical_order(target.points)]
    frame = NormalizedFrame.fit(src, tgt, scale, cfg.half_width, cfg.pre_align_centroids)
    src_n = frame.source(src)
    tgt_n = frame.target(tgt)
    target_c = _coefficients_sorted(spec, tgt_n)

    if initial is None:
        x0 = Pose(np.eye(dim), np.zeros(dim))
    else:
        x0 = frame.to_pose(initial)

    problem = pose_problem(src_n, target_c, spec)
    details: dict = {"frame_sigma": frame.sigma}
    try:
        x, report = solve(problem, x0, cfg.solver)
        cost, iterations, converged = report.final_cost, report.iterations, report.converged
        details["termination"] = report.termination
        details["cost_history"] = report.cost_history
    except SolverError as exc:
        x, cost, iterations, converged = x0, float("nan"), 0, False
        details["error"] = str(exc)
    T = frame.from_pose(x)
    return RegistrationResult(T, cost, iterations, converged, time.perf_counter() - t0, details)
