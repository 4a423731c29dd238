# invfilter/services/cbf.py
import logging
from typing import List, Optional, Sequence

import numpy as np

from invfilter.models.schemas import (
    BarrierSpec,
    CbfConstraint,
    ControlAffineSystem,
    ControlBox,
    Halfspace,
    MinNormProblem,
    Sense,
    ValidityReport,
)
from invfilter.services.dynamics import class_kappa, lie_derivatives
from invfilter.services.solver import solve_min_norm
from invfilter.utils.config import settings
from invfilter.utils.errors import ConfigurationError, DimensionError, InfeasibleError
from invfilter.utils.numerics import axis_grid, boundary_biased_points, grid_points

logger = logging.getLogger(__name__)


def cbf_constraint(barrier: BarrierSpec, system: ControlAffineSystem, x) -> CbfConstraint:
    """{u : L_g h(x) . u >= -(L_f h(x) + h(x)/k)}"""
    x = np.asarray(x, dtype=float).reshape(-1)
    if logger.isEnabledFor(logging.DEBUG) and barrier.domain.dim == x.size and not barrier.domain.contains(x):
        logger.debug(f"Barrier {barrier.label}: state {x.tolist()} lies outside the sampling domain")
    h_value = float(barrier.h(x))
    lie_f, lie_g = lie_derivatives(barrier.grad_h, system, x)
    alpha_value = class_kappa(barrier.k_gain, h_value)
    halfspace = Halfspace.of(lie_g, -(lie_f + alpha_value), Sense.GE, label=f"cbf:{barrier.label}")
    return CbfConstraint.model_construct(
        halfspace=halfspace,
        barrier=barrier,
        lie_f=lie_f,
        lie_g=halfspace.normal,
        h_value=h_value,
        alpha_value=alpha_value,
    )


def in_K_cbf(
    barrier: BarrierSpec,
    system: ControlAffineSystem,
    x,
    u,
    tol: Optional[float] = None,
    box: Optional[ControlBox] = None,
) -> bool:
    """Membership of u in K_cbf(x); with a box, u must also lie in U"""
    tol = settings.MEMBERSHIP_TOL if tol is None else tol
    u = np.asarray(u, dtype=float).reshape(-1)
    if box is not None and not box.contains(u, tol):
        return False
    return cbf_constraint(barrier, system, x).residual_at(u) >= -tol


def boundary_gradient_ok(barrier: BarrierSpec, x, h_value: Optional[float] = None) -> bool:
    """False when x is near the boundary of C and grad h (nearly) vanishes there"""
    x = np.asarray(x, dtype=float)
    h_value = float(barrier.h(x)) if h_value is None else h_value
    if abs(h_value) >= settings.BOUNDARY_BAND:
        return True
    return float(np.linalg.norm(barrier.grad_h(x))) >= settings.GRADIENT_FLOOR


def is_cbf(
    barrier: BarrierSpec,
    system: ControlAffineSystem,
    box: ControlBox,
    state_samples: int,
    control_grid: int,
    tol: Optional[float] = None,
    seed: int = 0,
) -> ValidityReport:
    """Sampling check of sup_u [L_f h + L_g h u] >= -alpha(h) over the domain.

    The residual is affine in u, so its maximum over the box sits at the vertex picked by
    the signs of L_g h. The control grid only cross-checks that vertex at the worst sample.
    """
    tol = settings.MEMBERSHIP_TOL if tol is None else tol
    if state_samples < 1 or control_grid < 1:
        raise ConfigurationError("state_samples and control_grid must be at least 1")
    if barrier.domain.dim != system.state_dim:
        raise ConfigurationError(
            f"barrier domain has dimension {barrier.domain.dim}, system state has {system.state_dim}"
        )
    if box.dim != system.control_dim:
        raise ConfigurationError(f"control box has dimension {box.dim}, system control has {system.control_dim}")

    rng = np.random.default_rng(seed)
    n_biased = state_samples // 4
    samples = grid_points(barrier.domain, max(1, state_samples - n_biased))
    if n_biased:
        samples = np.vstack([samples, boundary_biased_points(barrier.h, barrier.domain, n_biased, rng)])

    worst_value, worst_state, worst_constraint = np.inf, None, None
    failures = 0
    for x in samples:
        constraint = cbf_constraint(barrier, system, x)
        best = constraint.residual_at(box.maximizing_vertex(constraint.lie_g))
        if best < -tol:
            failures += 1
        if best < worst_value:
            worst_value, worst_state, worst_constraint = best, x, constraint

    grid = axis_grid(box, control_grid)
    grid_best = float(np.max(worst_constraint.lie_f + grid @ worst_constraint.lie_g + worst_constraint.alpha_value))
    if grid_best > worst_value + 1e-9 * max(1.0, abs(worst_value)):
        logger.error(f"Control grid beats the vertex rule at {worst_state.tolist()}: {grid_best} > {worst_value}")

    passed = failures == 0
    detail = (
        f"max residual >= {-tol:g} at all {len(samples)} samples"
        if passed
        else f"{failures} of {len(samples)} samples have no control meeting the barrier condition"
    )
    logger.info(f"is_cbf({barrier.label}, k={barrier.k_gain}): {'pass' if passed else 'fail'}, worst residual {worst_value:.6g}")
    return ValidityReport(
        kind="cbf",
        passed=passed,
        samples_checked=len(samples),
        failures=failures,
        worst_state=worst_state,
        worst_value=float(worst_value),
        threshold=-tol,
        detail=detail,
    )


def cbf_filter(nominal_u, constraints: Sequence[CbfConstraint], box: ControlBox) -> np.ndarray:
    """argmin ||u - nominal||^2 over every barrier halfspace and the box"""
    nominal = np.asarray(nominal_u, dtype=float).reshape(-1)
    if nominal.size != box.dim:
        raise DimensionError(f"nominal control has dimension {nominal.size}, box has {box.dim}")
    halfspaces: List[Halfspace] = []
    for constraint in constraints:
        if constraint.halfspace.dim != box.dim:
            raise DimensionError(f"{constraint.halfspace.label} has dimension {constraint.halfspace.dim}, expected {box.dim}")
        halfspaces.append(constraint.halfspace)

    result = solve_min_norm(MinNormProblem.of(nominal, halfspaces, box))
    if not result.optimal:
        raise InfeasibleError(
            "no control in the box satisfies the barrier constraints; h is not a valid CBF on this box",
            certificate=result.certificate_labels(),
            tier="cbf",
        )
    return np.array(result.point)


class CbfSafetyFilter:
    """Min-norm safety filter bound to a system, its barriers and a control box"""

    def __init__(self, system: ControlAffineSystem, barriers: Sequence[BarrierSpec], box: ControlBox):
        self.system = system
        self.barriers = list(barriers)
        self.box = box

    def constraints(self, x) -> List[CbfConstraint]:
        return [cbf_constraint(b, self.system, x) for b in self.barriers]

    def __call__(self, x, nominal_u):
        constraints = self.constraints(x)
        u = cbf_filter(nominal_u, constraints, self.box)
        return u, constraints
