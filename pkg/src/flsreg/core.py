"""Point clouds, similarity transforms and error metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

__all__ = [
    "PointCloud",
    "SimilarityTransform",
    "RegistrationResult",
    "DimensionError",
    "DegenerateCloudError",
    "apply_transform",
    "rotation_error_deg",
    "translation_error",
    "normalize_to_unit_cube",
    "hat",
    "so3_exp",
    "canonical_order",
]

_ORTHO_TOL = 1e-9


class DimensionError(ValueError):
    """Raised when point and transform dimensions disagree."""


class DegenerateCloudError(ValueError):
    """Raised when a cloud has no spatial extent to work with."""


def _frozen(a: NDArray) -> NDArray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PointCloud:
    """An ordered set of ``d``-dimensional points, ``d`` in {2, 3}.

    Algorithms in this package never depend on the order of ``points``.
    """

    points: NDArray[np.float64]
    name: str = ""

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] not in (2, 3):
            raise DimensionError(f"points must have shape (N, 2) or (N, 3), got {pts.shape}")
        if pts.shape[0] < 1:
            raise ValueError("a point cloud needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", _frozen(pts))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def centroid(self) -> NDArray[np.float64]:
        # mean over the canonical ordering so the result is order independent
        return self.points[canonical_order(self.points)].mean(axis=0)

    def with_points(self, points: ArrayLike) -> PointCloud:
        return PointCloud(np.asarray(points, dtype=np.float64), self.name)


@dataclass(frozen=True, eq=False)
class SimilarityTransform:
    """``x -> scale * rotation @ x + translation``."""

    rotation: NDArray[np.float64]
    translation: NDArray[np.float64]
    scale: float = 1.0

    def __post_init__(self) -> None:
        R = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(-1)
        if R.ndim != 2 or R.shape[0] != R.shape[1] or R.shape[0] not in (2, 3):
            raise DimensionError(f"rotation must be 2x2 or 3x3, got {R.shape}")
        if t.shape != (R.shape[0],):
            raise DimensionError(f"translation has shape {t.shape}, expected ({R.shape[0]},)")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("transform entries must be finite")
        _check_rotation(R)
        s = float(self.scale)
        if not s > 0 or not np.isfinite(s):
            raise ValueError(f"scale must be positive, got {s}")
        object.__setattr__(self, "rotation", _frozen(R))
        object.__setattr__(self, "translation", _frozen(t))
        object.__setattr__(self, "scale", s)

    @classmethod
    def identity(cls, dim: int = 3) -> SimilarityTransform:
        return cls(np.eye(dim), np.zeros(dim), 1.0)

    @property
    def dim(self) -> int:
        return self.rotation.shape[0]

    def inverse(self) -> SimilarityTransform:
        Rt = self.rotation.T
        return SimilarityTransform(Rt, -(Rt @ self.translation) / self.scale, 1.0 / self.scale)

    def compose(self, other: SimilarityTransform) -> SimilarityTransform:
        """Return ``self o other`` (apply ``other`` first)."""
        return SimilarityTransform(
            self.rotation @ other.rotation,
            self.scale * (self.rotation @ other.translation) + self.translation,
            self.scale * other.scale,
        )

    def apply(self, points: ArrayLike) -> NDArray[np.float64]:
        pts = np.asarray(points, dtype=np.float64)
        return self.scale * pts @ self.rotation.T + self.translation

    def to_dict(self) -> dict[str, Any]:
        return {
            "scale": self.scale,
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SimilarityTransform:
        return cls(np.asarray(data["rotation"]), np.asarray(data["translation"]), float(data.get("scale", 1.0)))


@dataclass
class RegistrationResult:
    transform: SimilarityTransform
    final_cost: float
    iterations: int
    converged: bool
    wall_time: float
    details: dict[str, Any] = field(default_factory=dict)


def _check_rotation(R: NDArray) -> None:
    n = R.shape[0]
    err = np.max(np.abs(R.T @ R - np.eye(n)))
    if err >= _ORTHO_TOL or np.linalg.det(R) <= 0:
        raise ValueError(f"not a proper rotation (orthogonality error {err:.3g}, det {np.linalg.det(R):.6g})")


def apply_transform(cloud: PointCloud, T: SimilarityTransform) -> PointCloud:
    if cloud.dim != T.dim:
        raise DimensionError(f"cloud is {cloud.dim}D but transform is {T.dim}D")
    return cloud.with_points(T.apply(cloud.points))


def rotation_error_deg(R_est: ArrayLike, R_gt: ArrayLike) -> float:
    """Geodesic angle between two rotations, in degrees."""
    Re = np.asarray(R_est, dtype=np.float64)
    Rg = np.asarray(R_gt, dtype=np.float64)
    if Re.shape != Rg.shape:
        raise DimensionError(f"rotation shapes differ: {Re.shape} vs {Rg.shape}")
    _check_rotation(Re)
    _check_rotation(Rg)
    D = Rg.T @ Re
    if D.shape[0] == 2:
        angle = abs(np.arctan2(D[1, 0], D[0, 0]))
    else:
        # acos loses precision near 0 and pi; atan2 of (|axis|, cos) does not
        c = (np.trace(D) - 1.0) / 2.0
        axis = np.array([D[2, 1] - D[1, 2], D[0, 2] - D[2, 0], D[1, 0] - D[0, 1]]) / 2.0
        angle = np.arctan2(np.linalg.norm(axis), np.clip(c, -1.0, 1.0))
    return float(np.clip(np.degrees(angle), 0.0, 180.0))


def translation_error(t_est: ArrayLike, t_gt: ArrayLike) -> float:
    a = np.asarray(t_est, dtype=np.float64).reshape(-1)
    b = np.asarray(t_gt, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise DimensionError(f"translation shapes differ: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def normalize_to_unit_cube(cloud: PointCloud) -> tuple[PointCloud, SimilarityTransform]:
    """Center the bounding box at the origin and scale its longest side to 1.

    Returns the normalized cloud and the transform that was applied to it.
    """
    lo = cloud.points.min(axis=0)
    hi = cloud.points.max(axis=0)
    extent = float(np.max(hi - lo))
    if extent <= 0:
        raise DegenerateCloudError("cannot normalize a cloud whose points are all identical")
    s = 1.0 / extent
    center = (lo + hi) / 2.0
    T = SimilarityTransform(np.eye(cloud.dim), -center * s, s)
    out = T.apply(cloud.points)
    return cloud.with_points(out), T


def hat(w: ArrayLike) -> NDArray[np.float64]:
    """Skew-symmetric matrix with ``hat(w) @ v == cross(w, v)``."""
    x, y, z = np.asarray(w, dtype=np.float64)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_exp(w: ArrayLike) -> NDArray[np.float64]:
    """Rodrigues' formula."""
    w = np.asarray(w, dtype=np.float64)
    theta = float(np.linalg.norm(w))
    K = hat(w)
    if theta < 1e-8:
        return np.eye(3) + K + 0.5 * K @ K
    return np.eye(3) + np.sin(theta) / theta * K + (1.0 - np.cos(theta)) / theta**2 * K @ K


def canonical_order(points: NDArray) -> NDArray[np.intp]:
    """Lexicographic row order; identical for any permutation of the same point set."""
    return np.lexsort(points.T[::-1])
