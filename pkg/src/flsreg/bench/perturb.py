"""Synthetic perturbations and partial-view scans."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import ConvexHull, QhullError

from ..core import PointCloud, SimilarityTransform, so3_exp

__all__ = [
    "PerturbationSpec",
    "PartialViewWarning",
    "make_rng",
    "random_rotation",
    "perturb",
    "hidden_point_removal",
    "synthesize_partial_view",
]


class PartialViewWarning(UserWarning):
    """Fewer points are visible than were requested."""


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class PerturbationSpec:
    """Ranges for a random similarity transform plus noise.

    Angles are in radians; ``translation_range`` applies to every axis.
    """

    rotation_angle_range: tuple[float, float] = (-math.pi / 2, math.pi / 2)
    translation_range: tuple[float, float] = (1.0, 2.0)
    noise_sigma: float = 0.0
    scale_range: tuple[float, float] | None = None
    shuffle: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        lo, hi = self.rotation_angle_range
        if lo > hi or lo < -math.pi or hi > math.pi:
            raise ValueError("rotation_angle_range must be ordered and inside [-pi, pi]")
        if self.translation_range[0] > self.translation_range[1]:
            raise ValueError("translation_range must be ordered")
        if self.scale_range is not None:
            s0, s1 = self.scale_range
            if not 0 < s0 <= s1:
                raise ValueError("scale_range must be positive and ordered")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")


def random_rotation(angle_range: tuple[float, float], seed=0, dim: int = 3) -> NDArray[np.float64]:
    """``exp([u theta]x)`` with ``u`` drawn from the positive orthant and ``theta`` uniform.

    The axis is a normalized vector of independent U(0, 1) components.
    """
    rng = make_rng(seed)
    lo, hi = angle_range
    if dim == 2:
        theta = rng.uniform(lo, hi)
        c, s = math.cos(theta), math.sin(theta)
        return np.array([[c, -s], [s, c]])
    u = rng.random(3)
    while not np.linalg.norm(u) > 1e-12:
        u = rng.random(3)
    u /= np.linalg.norm(u)
    theta = rng.uniform(lo, hi) if hi > lo else lo
    return so3_exp(u * theta)


def perturb(cloud: PointCloud, spec: PerturbationSpec) -> tuple[PointCloud, SimilarityTransform]:
    """Return a moved, noisy, optionally shuffled copy and the noise-free ground truth.

    The draw order is fixed (rotation, translation, scale, noise, permutation)
    so two specs that differ only in ``noise_sigma`` share every other draw and
    the same noise direction.
    """
    rng = make_rng(spec.seed)
    d = cloud.dim
    R = random_rotation(spec.rotation_angle_range, rng, dim=d)
    t = rng.uniform(*spec.translation_range, size=d)
    s = 1.0 if spec.scale_range is None else float(rng.uniform(*spec.scale_range))
    T = SimilarityTransform(R, t, s)
    noise = rng.standard_normal(cloud.points.shape)
    pts = T.apply(cloud.points)
    if spec.noise_sigma > 0:
        pts = pts + spec.noise_sigma * noise
    if spec.shuffle:
        pts = pts[rng.permutation(len(pts))]
    return cloud.with_points(pts), T


def hidden_point_removal(points: NDArray, viewpoint: NDArray, gamma: float = 2.0) -> NDArray[np.intp]:
    """Indices visible from ``viewpoint`` by the spherical-flip / convex-hull test.

    The flip radius is ``10**gamma`` times the farthest point's distance.  Much
    larger radii lose the depth ordering to rounding and let hidden points
    through.
    """
    p = points - viewpoint
    norm = np.linalg.norm(p, axis=1)
    norm = np.maximum(norm, 1e-300)
    radius = norm.max() * 10.0**gamma
    flipped = p + 2.0 * (radius - norm)[:, None] * p / norm[:, None]
    try:
        hull = ConvexHull(np.vstack([flipped, np.zeros(points.shape[1])]))
    except QhullError:
        return np.arange(len(points))
    v = hull.vertices
    return np.sort(v[v < len(points)])


def synthesize_partial_view(
    cloud: PointCloud, n_views: int = 3, keep_points: int = 512, seed=0,
    distance_factor: float = 3.0,
) -> PointCloud:
    """Approximate a sparse multi-view scan of ``cloud``.

    Viewpoints are random directions at ``distance_factor`` times the cloud's
    radius from its centroid.  Points visible from any view are kept, then
    ``keep_points`` of them are drawn without replacement with probability
    proportional to ``sum over seeing views of (r_min / r)^2`` so that areas
    seen closer and from more views come out denser.  Emits
    :class:`PartialViewWarning` and returns every visible point when fewer than
    ``keep_points`` are visible.
    """
    if cloud.dim != 3:
        raise ValueError("partial views need a 3D cloud")
    rng = make_rng(seed)
    pts = cloud.points
    center = pts.mean(axis=0)
    radius = float(np.max(np.linalg.norm(pts - center, axis=1)))
    weight = np.zeros(len(pts))
    for _ in range(n_views):
        direction = rng.standard_normal(3)
        direction /= np.linalg.norm(direction)
        eye = center + distance_factor * radius * direction
        vis = hidden_point_removal(pts, eye)
        dist = np.linalg.norm(pts[vis] - eye, axis=1)
        weight[vis] += (dist.min() / dist) ** 2
    visible = np.flatnonzero(weight > 0)
    if len(visible) <= keep_points:
        if len(visible) < keep_points:
            warnings.warn(
                f"only {len(visible)} points visible, fewer than the {keep_points} requested",
                PartialViewWarning, stacklevel=2,
            )
        return cloud.with_points(pts[visible])
    p = weight[visible] / weight[visible].sum()
    chosen = np.sort(rng.choice(visible, size=keep_points, replace=False, p=p))
    return cloud.with_points(pts[chosen])
