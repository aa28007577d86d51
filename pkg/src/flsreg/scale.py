"""Scale estimation from translation/rotation invariant measurements (TRIMs).

Pairwise intra-cloud distances do not change under rigid motion and grow
linearly with scale.  Matching the 1D delta-mixtures of the two distance
sets over ``s`` therefore recovers the relative scale before any pose is known.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.spatial.distance import pdist

from .basis import BasisSpec, _coefficients_sorted, evaluate_features, point_blocks, sobolev_weights
from .core import DimensionError, PointCloud, RegistrationResult, SimilarityTransform
from .registration import FlsConfig, register
from .solver import LeastSquaresProblem, SolverError, SolverOptions, SolverReport, solve

__all__ = [
    "TrimSet",
    "ScaleConfig",
    "ScaleReport",
    "DuplicatePointError",
    "trims",
    "scale_basis",
    "scale_problem",
    "estimate_scale",
    "register_with_unknown_scale",
]

DEFAULT_MAX_PAIRS = 2_000_000


class DuplicatePointError(ValueError):
    """Two points coincide, so a pairwise distance is zero."""


@dataclass(frozen=True, eq=False)
class TrimSet:
    distances: NDArray[np.float64]
    source_count: int
    exhaustive: bool = True

    def __len__(self) -> int:
        return self.distances.size


def trims(cloud: PointCloud, max_pairs: int | None = None, seed: int = 0) -> TrimSet:
    """Pairwise distances of a cloud, sorted ascending.

    All ``N(N-1)/2`` unordered pairs are used when that is at most
    ``max_pairs`` (default 2e6); otherwise ``max_pairs`` pairs are drawn
    uniformly at random from a generator keyed by ``seed``.

    Raises
    ------
    DuplicatePointError
        If two points coincide.  Point sets are assumed to hold no repeated
        elements.
    """
    n = len(cloud)
    if n < 2:
        raise ValueError("TRIMs need at least two points")
    limit = DEFAULT_MAX_PAIRS if max_pairs is None else int(max_pairs)
    if limit < 1:
        raise ValueError("max_pairs must be positive")
    pts = cloud.points
    total = n * (n - 1) // 2
    if total <= limit:
        d = pdist(pts)
        exhaustive = True
    else:
        rng = np.random.Generator(np.random.Philox(seed))
        i = rng.integers(0, n, size=limit)
        j = rng.integers(0, n - 1, size=limit)
        j = j + (j >= i)
        d = np.linalg.norm(pts[i] - pts[j], axis=1)
        exhaustive = False
    if np.any(d == 0):
        raise DuplicatePointError(
            "cloud contains repeated points (zero pairwise distance); remove duplicates first"
        )
    d = np.sort(d)
    d.setflags(write=False)
    return TrimSet(d, n, exhaustive)


@dataclass
class ScaleConfig:
    order: int = 4
    max_scale: float = 10.0
    domain_factor: float = 1.5
    max_pairs: int = DEFAULT_MAX_PAIRS
    seed: int = 0
    solver: SolverOptions = field(default_factory=SolverOptions)


@dataclass
class ScaleReport:
    scale: float
    initial_scale: float
    clamped: bool
    converged: bool
    termination: str
    final_cost: float
    iterations: int
    domain: float
    pairs: tuple[int, int]


def scale_basis(trim_a: TrimSet, trim_b: TrimSet, config: ScaleConfig) -> BasisSpec:
    """1D basis on ``[0, L]`` wide enough for every scale up to ``max_scale``."""
    L = config.domain_factor * max(
        config.max_scale * float(trim_a.distances[-1]), float(trim_b.distances[-1])
    )
    return BasisSpec(np.zeros(1), np.array([L]), config.order, weight_exponent=1.0)


def scale_problem(trim_a: TrimSet, trim_b: TrimSet, spec: BasisSpec) -> LeastSquaresProblem:
    """Residuals over ``x = [log s]``: ``sqrt(lambda_k) (mean f_k(s d_A) - mean f_k(d_B))``."""
    dA = trim_a.distances
    target = _coefficients_sorted(spec, trim_b.distances.reshape(-1, 1))
    sqrt_w = np.sqrt(sobolev_weights(spec))

    def res(x: NDArray) -> NDArray:
        s = np.exp(x[0])
        return sqrt_w * (_coefficients_sorted(spec, (s * dA).reshape(-1, 1)) - target)

    def jac(x: NDArray) -> NDArray:
        s = np.exp(x[0])
        sd = s * dA
        total = np.zeros(spec.size)
        for block in point_blocks(sd.size, spec.size):
            _, G = evaluate_features(spec, sd[block].reshape(-1, 1), gradient=True)
            # d f(e^x d) / dx = f'(s d) s d
            total += np.einsum("kn,n->k", G[0], sd[block])
        return (sqrt_w * total / sd.size).reshape(-1, 1)

    return LeastSquaresProblem(res, jac, 1, spec.size)


def estimate_scale(
    source: PointCloud,
    target: PointCloud,
    config: ScaleConfig | None = None,
    initial_scale: float = 1.0,
) -> tuple[float, ScaleReport]:
    """Scale ``s`` such that ``target`` looks like ``s * source`` up to rigid motion.

    The search runs in ``log s``; results outside ``(0, max_scale]`` are
    clamped and flagged in the report.
    """
    cfg = config or ScaleConfig()
    if source.dim != target.dim:
        raise DimensionError(f"source is {source.dim}D, target is {target.dim}D")
    if not initial_scale > 0:
        raise ValueError("initial_scale must be positive")
    ta = trims(source, cfg.max_pairs, cfg.seed)
    tb = trims(target, cfg.max_pairs, cfg.seed + 1)
    spec = scale_basis(ta, tb, cfg)
    problem = scale_problem(ta, tb, spec)
    try:
        x, rep = solve(problem, np.array([np.log(initial_scale)]), cfg.solver)
    except SolverError:
        x = np.array([np.log(initial_scale)])
        r = problem.residual_fn(x)
        rep = SolverReport(0, "solver_error", float(r @ r), float(r @ r), [float(r @ r)])
    s = float(np.exp(x[0]))
    clamped = not (0 < s <= cfg.max_scale)
    if clamped:
        s = float(np.clip(s, np.finfo(float).tiny, cfg.max_scale))
    report = ScaleReport(
        scale=s,
        initial_scale=initial_scale,
        clamped=clamped,
        converged=rep.converged and not clamped,
        termination=rep.termination,
        final_cost=rep.final_cost,
        iterations=rep.iterations,
        domain=float(spec.upper[0]),
        pairs=(len(ta), len(tb)),
    )
    return s, report


def register_with_unknown_scale(
    source: PointCloud,
    target: PointCloud,
    config: FlsConfig | None = None,
    initial: SimilarityTransform | None = None,
    scale_config: ScaleConfig | None = None,
) -> RegistrationResult:
    """Estimate scale from TRIMs, then rotation and translation at that scale."""
    t0 = time.perf_counter()
    s0 = 1.0 if initial is None else initial.scale
    s, srep = estimate_scale(source, target, scale_config, s0)
    result = register(source, target, config, scale=s, initial=initial)
    result.details["scale"] = srep
    result.converged = result.converged and srep.converged
    result.wall_time = time.perf_counter() - t0
    return result
