"""Point-to-point ICP, used to refine an FLS estimate."""

from __future__ import annotations

import time

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial import cKDTree

from .core import DimensionError, PointCloud, RegistrationResult, SimilarityTransform

__all__ = ["KdTree", "nearest", "rigid_align", "icp_refine", "TooFewCorrespondencesError"]


class TooFewCorrespondencesError(RuntimeError):
    pass


class KdTree:
    """Balanced k-d tree over a fixed point set (backed by ``scipy.spatial.cKDTree``)."""

    def __init__(self, points: ArrayLike | PointCloud):
        pts = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("a KdTree needs a nonempty (N, d) point array")
        self.points = pts
        self._tree = cKDTree(pts, balanced_tree=True, compact_nodes=True)

    def __len__(self) -> int:
        return self.points.shape[0]

    def query(self, p: ArrayLike) -> tuple[NDArray[np.intp], NDArray[np.float64]]:
        """Nearest indexed point for each query row; returns ``(indices, distances)``."""
        q = np.asarray(p, dtype=np.float64)
        if q.shape[-1] != self.points.shape[1]:
            raise DimensionError(f"query is {q.shape[-1]}D, tree is {self.points.shape[1]}D")
        d, i = self._tree.query(q, k=1)
        return np.asarray(i, dtype=np.intp), np.asarray(d, dtype=np.float64)

    def median_spacing(self) -> float:
        """Median distance from each point to its nearest other point."""
        if len(self) < 2:
            return 0.0
        d, _ = self._tree.query(self.points, k=2)
        return float(np.median(d[:, 1]))


def nearest(tree: KdTree, p: ArrayLike) -> tuple[int, float]:
    i, d = tree.query(np.asarray(p, dtype=np.float64).reshape(-1))
    return int(i), float(d)


def rigid_align(src: NDArray, dst: NDArray) -> tuple[NDArray, NDArray]:
    """Least-squares ``R, t`` with ``dst ~ src @ R.T + t`` (Kabsch, det-corrected)."""
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    H = (src - mu_s).T @ (dst - mu_d)
    U, _, Vt = np.linalg.svd(H)
    D = np.eye(src.shape[1])
    D[-1, -1] = np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0
    R = Vt.T @ D @ U.T
    return R, mu_d - R @ mu_s


def icp_refine(
    source: PointCloud,
    target: PointCloud,
    initial: SimilarityTransform | None = None,
    max_iter: int = 50,
    correspondence_cutoff: float | None = None,
    tol: float = 1e-10,
    tree: KdTree | None = None,
) -> RegistrationResult:
    """Refine rotation and translation by ICP; the scale of ``initial`` is kept fixed.

    Pairs farther apart than ``correspondence_cutoff`` (default: three times
    the target's median nearest-neighbour spacing) are left out of the
    alignment.  The tracked error is the truncated mean squared distance
    ``mean(min(d^2, cutoff^2))`` over all source points, which an alignment
    step followed by re-matching cannot increase.  Iteration stops once it
    improves by less than ``tol``; a step that would raise it is discarded.
    """
    if source.dim != target.dim:
        raise DimensionError(f"source is {source.dim}D, target is {target.dim}D")
    t0 = time.perf_counter()
    T = initial or SimilarityTransform.identity(source.dim)
    s = T.scale
    tree = tree or KdTree(target)
    cutoff = 3.0 * tree.median_spacing() if correspondence_cutoff is None else correspondence_cutoff
    if not cutoff > 0:
        cutoff = np.inf
    tgt = target.points
    src = s * source.points
    R, t = T.rotation.copy(), T.translation.copy()

    def correspondences(R, t):
        moved = src @ R.T + t
        idx, dist = tree.query(moved)
        keep = dist <= cutoff
        mse = float(np.mean(np.minimum(dist, cutoff) ** 2))
        return keep, idx, mse

    keep, idx, mse = correspondences(R, t)
    if keep.sum() < 3:
        raise TooFewCorrespondencesError(f"only {int(keep.sum())} correspondences within {cutoff:.4g}")
    history = [mse]
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        R_new, t_new = rigid_align(src[keep], tgt[idx[keep]])
        keep_new, idx_new, mse_new = correspondences(R_new, t_new)
        if keep_new.sum() < 3 or mse_new > mse:
            converged = True
            break
        R, t = R_new, t_new
        keep, idx = keep_new, idx_new
        improvement = mse - mse_new
        mse = mse_new
        history.append(mse)
        if improvement < tol:
            converged = True
            break
    result_T = SimilarityTransform(R, t, s)
    return RegistrationResult(
        result_T, mse, it, converged, time.perf_counter() - t0,
        {"mse_history": history, "cutoff": float(cutoff), "inliers": int(keep.sum())},
    )
