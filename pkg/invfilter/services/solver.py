# invfilter/services/solver.py
"""Dense min-norm QP over halfspaces and a box.

    minimize    ||u - target||^2
    subject to  every halfspace, lower <= u <= upper

Solved with a dual active-set iteration (start from the unconstrained minimizer,
add the most violated constraint, drop constraints whose multiplier would turn
negative). For an identity Hessian the KKT solves reduce to projections onto the
span of the active normals. When a violated constraint is a non-positive
combination of the active ones the region is empty, and those constraints are
returned as the certificate.

Constraints are indexed halfspaces first, then box faces (lower, upper) per axis.
Ties between equally violated constraints go to the lowest index.
"""
import logging
import math
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from invfilter.models.schemas import (
    ControlBox,
    FeasibilityResult,
    Halfspace,
    MinNormProblem,
    SolveResult,
    SolveStatus,
    as_vector,
)
from invfilter.utils.config import settings
from invfilter.utils.numerics import axis_grid

logger = logging.getLogger(__name__)

FEAS_TOL = 1e-12
DEGENERATE_TOL = 1e-10
ORACLE_TOL = 1e-9
ORACLE_WINDOW = 15


@lru_cache(maxsize=None)
def _box_labels(m: int) -> Tuple[str, ...]:
    return tuple(label for k in range(m) for label in (f"box.lower[{k}]", f"box.upper[{k}]"))


def _stack_constraints(problem: MinNormProblem) -> Tuple[np.ndarray, np.ndarray, List[str]]:
    """All constraints in the form a . u >= d"""
    m = problem.target.size
    n_half = len(problem.halfspaces)
    A = np.empty((n_half + 2 * m, m))
    d = np.empty(n_half + 2 * m)
    labels = []
    for idx, hs in enumerate(problem.halfspaces):
        a, c = hs.as_le()
        A[idx] = -a
        d[idx] = -c
        labels.append(hs.label or f"halfspace[{idx}]")
    eye = np.eye(m)
    A[n_half::2] = eye
    A[n_half + 1::2] = -eye
    d[n_half::2] = problem.box.lower
    d[n_half + 1::2] = -problem.box.upper
    labels.extend(_box_labels(m))
    return A, d, labels


def _max_violation(A: np.ndarray, d: np.ndarray, x: np.ndarray) -> float:
    if A.size == 0:
        return 0.0
    return float(max(0.0, -np.min(A @ x - d)))


def _norm(v: np.ndarray) -> float:
    return math.sqrt(float(v @ v))


def solve_min_norm(problem: MinNormProblem) -> SolveResult:
    target = np.array(problem.target, dtype=float)
    A, d, labels = _stack_constraints(problem)

    degenerate = ~A.any(axis=1)
    if degenerate.any():
        for i in np.flatnonzero(degenerate).tolist():
            if d[i] > settings.MEMBERSHIP_TOL:
                logger.debug(f"Constraint {labels[i]} has a zero normal and is unsatisfiable")
                return SolveResult.model_construct(status=SolveStatus.INFEASIBLE, certificate=[i], labels=labels)
        # zero normal, satisfied everywhere: dropped
        working = np.flatnonzero(~degenerate).tolist()
        Aw, dw = A[working], d[working]
    else:
        working = list(range(len(d)))
        Aw, dw = A, d

    x = target.copy()
    active: List[int] = []
    lam: List[float] = []
    iterations = 0

    while working:
        slack = Aw @ x - dw
        worst = int(np.argmin(slack))
        sp = float(slack[worst])
        if sp >= -FEAS_TOL:
            break
        p = working[worst]
        n_plus = A[p]
        lam_plus = lam + [0.0]

        while True:
            iterations += 1
            if iterations > settings.SOLVER_MAX_ITER:
                raise RuntimeError(f"min-norm solver did not converge in {settings.SOLVER_MAX_ITER} iterations")

            if active:
                N = A[active].T
                r = np.linalg.solve(N.T @ N, N.T @ n_plus)
                z = n_plus - N @ r
            else:
                r = np.zeros(0)
                z = n_plus.copy()

            t1, drop = np.inf, None
            for j, rj in enumerate(r.tolist()):
                if rj > DEGENERATE_TOL:
                    ratio = lam_plus[j] / rj
                    if ratio < t1:
                        t1, drop = ratio, j

            if _norm(z) > DEGENERATE_TOL * max(1.0, _norm(n_plus)):
                t2 = -sp / float(z @ n_plus)
            else:
                t2 = np.inf

            t = min(t1, t2)
            if not np.isfinite(t):
                certificate = [p] + [active[j] for j, rj in enumerate(r.tolist()) if rj < -DEGENERATE_TOL]
                logger.debug(f"Infeasible constraint set, certificate {[labels[i] for i in certificate]}")
                return SolveResult.model_construct(
                    status=SolveStatus.INFEASIBLE,
                    certificate=certificate,
                    labels=labels,
                    iterations=iterations,
                )

            for j in range(len(active)):
                lam_plus[j] -= t * r[j]
            lam_plus[-1] += t

            if np.isfinite(t2):
                x = x + t * z
                sp = sp + t * float(z @ n_plus)

            if t2 <= t1:
                active.append(p)
                lam = lam_plus
                break

            del active[drop]
            del lam_plus[drop]

    return SolveResult.model_construct(
        status=SolveStatus.OPTIMAL,
        point=as_vector(x),
        active_set=list(active),
        multipliers=[max(0.0, float(v)) for v in lam],
        labels=labels,
        max_violation=_max_violation(A, d, x),
        iterations=iterations,
    )


def kkt_residual(problem: MinNormProblem, result: SolveResult) -> float:
    """Stationarity residual ||(u - target) - sum lambda_j a_j|| at an optimal point"""
    if not result.optimal:
        raise ValueError("KKT residual only exists for optimal results")
    A, _, _ = _stack_constraints(problem)
    gradient = np.asarray(result.point) - np.asarray(problem.target)
    combination = np.zeros_like(gradient)
    for idx, mult in zip(result.active_set, result.multipliers):
        combination += mult * A[idx]
    return float(np.linalg.norm(gradient - combination))


def feasible(halfspaces: Sequence[Halfspace], box: ControlBox) -> FeasibilityResult:
    """Emptiness test for the intersection; the witness is the point nearest the box center"""
    result = solve_min_norm(MinNormProblem(target=box.center, halfspaces=list(halfspaces), box=box))
    if result.optimal:
        return FeasibilityResult(feasible=True, witness=result.point)
    return FeasibilityResult(feasible=False, certificate=result.certificate_labels())


def oracle_min_norm(
    problem: MinNormProblem,
    grid_points_per_axis: int,
    refinements: Optional[int] = None,
) -> Optional[np.ndarray]:
    """Brute-force grid search, used only to check solve_min_norm.

    Each refinement re-grids a window around the best feasible point found so far.
    Returns None when no grid point satisfies every halfspace.
    """
    m = problem.target.size
    if m > 3:
        raise ValueError(f"grid oracle is limited to 3 control dimensions, got {m}")
    refinements = settings.ORACLE_REFINEMENTS if refinements is None else refinements

    rows, rhs = [], []
    for hs in problem.halfspaces:
        a, c = hs.as_le()
        rows.append(a)
        rhs.append(c)
    A = np.array(rows, dtype=float).reshape(-1, m)
    c = np.array(rhs, dtype=float)
    target = np.asarray(problem.target, dtype=float)

    window = problem.box
    best: Optional[np.ndarray] = None
    best_dist = np.inf
    for _ in range(refinements + 1):
        points = axis_grid(window, grid_points_per_axis)
        if A.size:
            ok = np.all(points @ A.T <= c + ORACLE_TOL, axis=1)
        else:
            ok = np.ones(len(points), dtype=bool)
        if not ok.any():
            break
        candidates = points[ok]
        dist = np.sum((candidates - target) ** 2, axis=1)
        idx = int(np.argmin(dist))
        if dist[idx] < best_dist:
            best, best_dist = candidates[idx], float(dist[idx])
        spacing = window.width / max(grid_points_per_axis - 1, 1)
        half = ORACLE_WINDOW * spacing
        window = ControlBox(
            lower=np.maximum(problem.box.lower, best - half),
            upper=np.minimum(problem.box.upper, best + half),
        )
    return best
