"""Normalized cosine bases on a box and the truncated delta-distance.

A point set ``A`` is treated as the mixture ``(1/N) sum_i delta(x - a_i)``.  Its
projection onto an orthonormal basis ``f_k`` has the closed form
``c_k = mean_i f_k(a_i)``, so the L2 distance between two mixtures, truncated
to a finite basis, is the squared difference of coefficient vectors.

Multi-indices ``k`` run over ``[0, order]^d`` in lexicographic order with the
last dimension varying fastest, the same order as ``itertools.product``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import DimensionError, PointCloud, canonical_order

__all__ = [
    "BasisSpec",
    "CoefficientVector",
    "SpecMismatchError",
    "basis_eval",
    "basis_grad",
    "coefficients",
    "sobolev_weights",
    "delta_distance_sq",
    "evaluate_features",
]


class SpecMismatchError(ValueError):
    """Coefficient vectors built from different bases were compared."""


@dataclass(frozen=True, eq=False)
class BasisSpec:
    """Box ``[lower, upper]``, maximum per-dimension index ``order`` and Sobolev exponent.

    ``order=4`` gives five basis functions per dimension (125 in 3D).
    """

    lower: NDArray[np.float64]
    upper: NDArray[np.float64]
    order: int = 4
    weight_exponent: float | None = None

    def __post_init__(self) -> None:
        lo = np.array(self.lower, dtype=np.float64).reshape(-1)
        hi = np.array(self.upper, dtype=np.float64).reshape(-1)
        if lo.shape != hi.shape or lo.size == 0:
            raise DimensionError("lower and upper bounds must be nonempty and of equal length")
        if not np.all(hi > lo):
            raise ValueError("upper bounds must exceed lower bounds in every dimension")
        if int(self.order) != self.order or self.order < 0:
            raise ValueError(f"order must be a nonnegative integer, got {self.order}")
        p = (lo.size + 1) / 2.0 if self.weight_exponent is None else float(self.weight_exponent)
        if not p > 0:
            raise ValueError("weight_exponent must be positive")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "order", int(self.order))
        object.__setattr__(self, "weight_exponent", p)

    @classmethod
    def cube(cls, dim: int = 3, half_width: float = 1.0, order: int = 4,
             weight_exponent: float | None = None) -> BasisSpec:
        return cls(np.full(dim, -half_width), np.full(dim, half_width), order, weight_exponent)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def size(self) -> int:
        return (self.order + 1) ** self.dim

    @cached_property
    def indices(self) -> NDArray[np.int64]:
        """All multi-indices, shape ``(size, dim)``."""
        rng = range(self.order + 1)
        return np.array(list(itertools.product(rng, repeat=self.dim)), dtype=np.int64).reshape(-1, self.dim)

    @cached_property
    def frequencies(self) -> NDArray[np.float64]:
        """``k pi / (upper - lower)`` per dimension and index value, shape ``(dim, order + 1)``."""
        k = np.arange(self.order + 1, dtype=np.float64)
        return k[None, :] * np.pi / (self.upper - self.lower)[:, None]

    @cached_property
    def inv_norms(self) -> NDArray[np.float64]:
        """``1 / h_k`` for every multi-index.

        A factor with ``k_i = 0`` is the constant 1 and integrates to the full
        width; any other cosine squared integrates to half the width.
        """
        width = self.upper - self.lower
        per_dim = np.where(self.indices == 0, width, width / 2.0)
        return 1.0 / np.sqrt(np.prod(per_dim, axis=1))

    def same_as(self, other: BasisSpec) -> bool:
        return (
            self is other
            or (
                self.order == other.order
                and self.weight_exponent == other.weight_exponent
                and np.array_equal(self.lower, other.lower)
                and np.array_equal(self.upper, other.upper)
            )
        )

    def flat_index(self, k: ArrayLike) -> int:
        k = np.asarray(k, dtype=np.int64).reshape(-1)
        if k.size != self.dim or np.any(k < 0) or np.any(k > self.order):
            raise ValueError(f"multi-index {k.tolist()} outside [0, {self.order}]^{self.dim}")
        return int(np.ravel_multi_index(tuple(k), (self.order + 1,) * self.dim))


@dataclass(frozen=True, eq=False)
class CoefficientVector:
    values: NDArray[np.float64]
    spec: BasisSpec

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        if v.size != self.spec.size:
            raise ValueError(f"expected {self.spec.size} coefficients, got {v.size}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __getitem__(self, k) -> float:
        return float(self.values[self.spec.flat_index(k)])


def _as_points(spec: BasisSpec, x: ArrayLike | PointCloud) -> NDArray[np.float64]:
    pts = x.points if isinstance(x, PointCloud) else np.asarray(x, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, spec.dim) if spec.dim == 1 else pts.reshape(1, -1)
    if pts.shape[1] != spec.dim:
        raise DimensionError(f"points are {pts.shape[1]}D but the basis is {spec.dim}D")
    return pts


def basis_eval(spec: BasisSpec, k: ArrayLike, x: ArrayLike) -> float:
    """Evaluate a single basis function at a single point."""
    idx = spec.flat_index(k)
    k = spec.indices[idx]
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != spec.dim:
        raise DimensionError(f"point is {x.size}D but the basis is {spec.dim}D")
    kbar = spec.frequencies[np.arange(spec.dim), k]
    return float(np.prod(np.cos(kbar * (x - spec.lower))) * spec.inv_norms[idx])


def basis_grad(spec: BasisSpec, k: ArrayLike, x: ArrayLike) -> NDArray[np.float64]:
    """Analytic gradient of one basis function at one point."""
    idx = spec.flat_index(k)
    k = spec.indices[idx]
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != spec.dim:
        raise DimensionError(f"point is {x.size}D but the basis is {spec.dim}D")
    kbar = spec.frequencies[np.arange(spec.dim), k]
    arg = kbar * (x - spec.lower)
    c = np.cos(arg)
    g = np.empty(spec.dim)
    for i in range(spec.dim):
        g[i] = -kbar[i] * np.sin(arg[i]) * np.prod(np.delete(c, i))
    return g * spec.inv_norms[idx]


def _outer_rows(tables: list[NDArray]) -> NDArray:
    """Row-wise tensor product of per-dimension tables ``(order+1, N)`` -> ``(size, N)``."""
    out = tables[0]
    for t in tables[1:]:
        out = (out[:, None, :] * t[None, :, :]).reshape(-1, t.shape[1])
    return out


def _trig_tables(spec: BasisSpec, pts: NDArray, with_sin: bool):
    """``cos(k theta)`` and ``sin(k theta)`` for k = 0..order, shape ``(dim, order+1, N)``.

    Uses the multiple-angle recurrence, so only one cos/sin per coordinate is
    evaluated.
    """
    K = spec.order
    theta = spec.frequencies[:, 1:2] * (pts.T - spec.lower[:, None]) if K > 0 else None
    cos = np.empty((spec.dim, K + 1, pts.shape[0]))
    cos[:, 0] = 1.0
    sin = None
    if with_sin:
        sin = np.empty_like(cos)
        sin[:, 0] = 0.0
    if K == 0:
        return cos, sin
    c1 = np.cos(theta)
    cos[:, 1] = c1
    two_c1 = 2.0 * c1
    for k in range(2, K + 1):
        cos[:, k] = two_c1 * cos[:, k - 1] - cos[:, k - 2]
    if with_sin:
        sin[:, 1] = np.sin(theta)
        for k in range(2, K + 1):
            sin[:, k] = two_c1 * sin[:, k - 1] - sin[:, k - 2]
    return cos, sin


def evaluate_features(spec: BasisSpec, points: NDArray[np.float64], gradient: bool = False):
    """Evaluate every basis function at every point.

    Returns ``F`` with shape ``(size, N)``; with ``gradient=True`` also returns
    ``G`` with shape ``(dim, size, N)`` holding the partial derivatives.
    Both are C-contiguous along the point axis so reductions over points use
    numpy's pairwise summation.
    """
    pts = _as_points(spec, points)
    cos, sin = _trig_tables(spec, pts, gradient)
    F = _outer_rows(list(cos)) * spec.inv_norms[:, None]
    if not gradient:
        return F
    dsin = -spec.frequencies[:, :, None] * sin
    G = np.empty((spec.dim,) + F.shape)
    for i in range(spec.dim):
        tables = [dsin[j] if j == i else cos[j] for j in range(spec.dim)]
        G[i] = _outer_rows(tables) * spec.inv_norms[:, None]
    return F, G


# feature-table entries per block when reducing over large clouds (fits in cache)
BLOCK_ENTRIES = 1 << 18


def point_blocks(n: int, size: int) -> list[slice]:
    step = max(256, BLOCK_ENTRIES // size)
    return [slice(i, min(i + step, n)) for i in range(0, n, step)]


def _coefficients_sorted(spec: BasisSpec, pts: NDArray[np.float64]) -> NDArray[np.float64]:
    total = np.zeros(spec.size)
    for block in point_blocks(pts.shape[0], spec.size):
        total += evaluate_features(spec, pts[block]).sum(axis=1)
    return total / pts.shape[0]


def coefficients(spec: BasisSpec, cloud: PointCloud | ArrayLike) -> CoefficientVector:
    """Coefficients of the cloud's delta-mixture: ``c_k = mean_i f_k(p_i)``.

    Points are put in canonical (lexicographic) order before the pairwise
    reduction, so any permutation of the same set gives bit-identical output.
    """
    pts = _as_points(spec, cloud)
    if pts.shape[0] == 0:
        raise ValueError("cannot compute coefficients of an empty point set")
    pts = pts[canonical_order(pts)]
    return CoefficientVector(_coefficients_sorted(spec, pts), spec)


def sobolev_weights(spec: BasisSpec) -> NDArray[np.float64]:
    """``(1 + |k|^2)^(-p)`` in coefficient order."""
    k2 = np.sum(spec.indices.astype(np.float64) ** 2, axis=1)
    return (1.0 + k2) ** (-spec.weight_exponent)


def delta_distance_sq(
    cA: CoefficientVector, cB: CoefficientVector, weights: ArrayLike | None = None
) -> float:
    """Weighted squared coefficient difference, the truncated delta-distance squared."""
    if not cA.spec.same_as(cB.spec):
        raise SpecMismatchError("coefficient vectors come from different bases")
    diff = cA.values - cB.values
    if weights is None:
        return float(np.sum(diff * diff))
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.size != diff.size:
        raise ValueError(f"expected {diff.size} weights, got {w.size}")
    return float(np.sum(w * diff * diff))
