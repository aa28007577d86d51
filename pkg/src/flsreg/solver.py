"""Dense Levenberg-Marquardt for small nonlinear least-squares problems.

The cost is ``sum(r**2)``.  Problems may live on a manifold: ``retract(x, dx)``
maps a state and a tangent increment to a new state, and ``jacobian_fn`` must
return derivatives with respect to that increment at ``dx = 0``.  Without a
``retract`` the state is a plain vector and increments are added.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from numpy.typing import NDArray

__all__ = [
    "LeastSquaresProblem",
    "SolverOptions",
    "SolverReport",
    "SolverError",
    "JacobianAuditError",
    "solve",
    "audit_jacobian",
    "finite_difference_jacobian",
]

_MAX_DAMPING = 1e32


class SolverError(RuntimeError):
    pass


class JacobianAuditError(AssertionError):
    pass


@dataclass
class LeastSquaresProblem:
    residual_fn: Callable[[Any], NDArray[np.float64]]
    jacobian_fn: Callable[[Any], NDArray[np.float64]]
    num_params: int
    num_residuals: int
    retract: Callable[[Any, NDArray[np.float64]], Any] | None = None

    def step(self, x: Any, dx: NDArray[np.float64]) -> Any:
        if self.retract is None:
            return np.asarray(x, dtype=np.float64) + dx
        return self.retract(x, dx)


@dataclass
class SolverOptions:
    max_iterations: int = 100
    initial_damping: float = 1e-4
    damping_increase: float = 10.0
    damping_decrease: float = 0.5
    cost_tolerance: float = 1e-10
    gradient_tolerance: float = 1e-10
    step_tolerance: float = 1e-12
    audit_jacobian: bool = False

    def __post_init__(self) -> None:
        for name in ("initial_damping", "damping_increase", "damping_decrease",
                     "cost_tolerance", "gradient_tolerance", "step_tolerance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")


@dataclass
class SolverReport:
    iterations: int
    termination: str
    initial_cost: float
    final_cost: float
    cost_history: list[float] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.termination in ("cost_tolerance", "gradient_tolerance", "step_tolerance")


def _check_finite(name: str, a: NDArray) -> None:
    if not np.all(np.isfinite(a)):
        raise SolverError(f"{name} is not finite")


def solve(
    problem: LeastSquaresProblem, x0: Any, options: SolverOptions | None = None
) -> tuple[Any, SolverReport]:
    """Minimize ``sum(residual_fn(x)**2)`` starting from ``x0``.

    Each iteration solves ``(J^T J + mu diag(J^T J)) dx = -J^T r`` by Cholesky.
    Rejected steps multiply ``mu`` by ``damping_increase``; accepted steps
    multiply it by ``damping_decrease``.  Accepted steps never raise the cost.

    Raises
    ------
    SolverError
        If residuals or the Jacobian are not finite at ``x0``, or the damped
        system cannot be solved even at maximum damping.
    """
    opts = options or SolverOptions()
    n = problem.num_params
    if problem.retract is None:
        x0 = np.asarray(x0, dtype=np.float64)
        if x0.shape != (n,):
            raise ValueError(f"x0 has shape {x0.shape}, expected ({n},)")
    x = x0
    r = np.asarray(problem.residual_fn(x), dtype=np.float64)
    _check_finite("residual at x0", r)
    if r.shape != (problem.num_residuals,):
        raise ValueError(f"residual_fn returned shape {r.shape}, expected ({problem.num_residuals},)")
    cost = float(r @ r)
    history = [cost]
    mu = opts.initial_damping
    termination = "max_iterations"
    it = 0
    need_jacobian = True
    J = g = A = None

    while True:
        if need_jacobian:
            J = np.asarray(problem.jacobian_fn(x), dtype=np.float64)
            if J.shape != (problem.num_residuals, n):
                raise ValueError(f"jacobian_fn returned shape {J.shape}, expected {(problem.num_residuals, n)}")
            _check_finite("Jacobian", J)
            if opts.audit_jacobian:
                audit_jacobian(problem, x)
            g = J.T @ r
            A = J.T @ J
            need_jacobian = False
            if cost == 0.0 or np.max(np.abs(g)) <= opts.gradient_tolerance:
                termination = "gradient_tolerance"
                break
        if it >= opts.max_iterations:
            break

        diag = np.diag(A).copy()
        diag[diag <= 0] = 1.0
        while True:
            try:
                L = np.linalg.cholesky(A + mu * np.diag(diag))
                dx = -np.linalg.solve(L.T, np.linalg.solve(L, g))
                break
            except np.linalg.LinAlgError:
                mu *= opts.damping_increase
                if mu > _MAX_DAMPING:
                    raise SolverError("normal equations singular at maximum damping") from None

        it += 1
        x_new = problem.step(x, dx)
        r_new = np.asarray(problem.residual_fn(x_new), dtype=np.float64)
        cost_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf

        if cost_new <= cost:
            rel = (cost - cost_new) / cost if cost > 0 else 0.0
            x, r, prev, cost = x_new, r_new, cost, cost_new
            history.append(cost)
            mu = max(mu * opts.damping_decrease, 1e-15)
            need_jacobian = True
            if cost == 0.0 or (rel <= opts.cost_tolerance and prev > 0):
                termination = "cost_tolerance"
                break
            if np.linalg.norm(dx) <= opts.step_tolerance:
                termination = "step_tolerance"
                break
        else:
            mu *= opts.damping_increase
            if np.linalg.norm(dx) <= opts.step_tolerance:
                termination = "step_tolerance"
                break
            if mu > _MAX_DAMPING:
                termination = "max_damping"
                break

    return x, SolverReport(it, termination, history[0], cost, history)


def finite_difference_jacobian(
    problem: LeastSquaresProblem, x: Any, step: float = 1e-6
) -> NDArray[np.float64]:
    """Central differences through ``retract``."""
    n = problem.num_params
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        rp = np.asarray(problem.residual_fn(problem.step(x, e)))
        rm = np.asarray(problem.residual_fn(problem.step(x, -e)))
        cols.append((rp - rm) / (2 * step))
    return np.stack(cols, axis=1)


def audit_jacobian(
    problem: LeastSquaresProblem,
    x: Any,
    step: float = 1e-6,
    rtol: float = 1e-4,
    min_magnitude: float = 1e-8,
) -> float:
    """Compare ``jacobian_fn`` to central differences; return the worst relative error.

    Entries smaller than ``min_magnitude`` in both Jacobians are skipped.
    """
    J = np.asarray(problem.jacobian_fn(x))
    Jfd = finite_difference_jacobian(problem, x, step)
    mask = np.maximum(np.abs(J), np.abs(Jfd)) > min_magnitude
    if not np.any(mask):
        return 0.0
    rel = np.abs(J - Jfd)[mask] / np.maximum(np.abs(J), np.abs(Jfd))[mask]
    worst = float(rel.max())
    if worst > rtol:
        raise JacobianAuditError(f"Jacobian mismatch: relative error {worst:.3g} > {rtol:.3g}")
    return worst
