# invfilter/services/bclf.py
import logging
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from invfilter.models.schemas import (
    UNBOUNDED,
    BclfControlResult,
    BclfProblem,
    ControlAffineSystem,
    ControlBox,
    ControllerTier,
    CplReport,
    GeneralSystem,
    Halfspace,
    MinNormProblem,
    Objective,
    Sense,
    StateDomain,
    ValidityReport,
    bound_reached,
    bound_satisfied,
)
from invfilter.services.dynamics import class_kappa, lie_derivatives, vector_fields
from invfilter.services.solver import solve_min_norm
from invfilter.utils.config import settings
from invfilter.utils.errors import ConfigurationError, InfeasibleError, PriorityInconsistencyError
from invfilter.utils.numerics import axis_grid, boundary_biased_points, grid_points

logger = logging.getLogger(__name__)


def _objective_values(problem: BclfProblem, x: np.ndarray) -> List[float]:
    return [float(obj.V(x)) for obj in problem.objectives]


def _resolve_level(problem: BclfProblem, x: np.ndarray, level: Optional[int]) -> int:
    if level is None:
        return current_priority_level(problem, x).level
    if not 0 <= level <= problem.top_level:
        raise ConfigurationError(f"level {level} is outside 0..{problem.top_level}")
    return level


class _LieCache:
    """Lie derivatives of each objective at one state, computed on first use"""

    def __init__(self, problem: BclfProblem, system: ControlAffineSystem, x: np.ndarray):
        self.problem = problem
        self.system = system
        self.x = x
        self.fields = vector_fields(system, x)
        self._cache: Dict[int, Tuple[float, np.ndarray]] = {}

    def __getitem__(self, i: int) -> Tuple[float, np.ndarray]:
        if i not in self._cache:
            grad = self.problem.objectives[i].grad_V
            self._cache[i] = lie_derivatives(grad, self.system, self.x, fields=self.fields)
        return self._cache[i]


def _level_report(problem: BclfProblem, values: List[float]) -> CplReport:
    level = 0
    for j in range(problem.top_level + 1):
        if all(bound_satisfied(v, problem.table.bound(i, j)) for i, v in enumerate(values)):
            level = j
    satisfied = [bound_satisfied(v, problem.table.bound(i, level)) for i, v in enumerate(values)]
    return CplReport.model_construct(level=level, top_level=problem.top_level, satisfied=satisfied, values=values)


def current_priority_level(problem: BclfProblem, x) -> CplReport:
    """Rightmost column of the bound table whose bounds all hold at x"""
    x = np.asarray(x, dtype=float).reshape(-1)
    return _level_report(problem, _objective_values(problem, x))


def _sat_halfspaces(problem: BclfProblem, j: int, values: List[float], lie: _LieCache) -> List[Halfspace]:
    halfspaces = []
    for i, objective in enumerate(problem.objectives):
        bound = problem.table.bound(i, j)
        if bound is UNBOUNDED:
            continue
        lie_f, lie_g = lie[i]
        offset = class_kappa(problem.k_gain, bound - values[i]) - lie_f
        halfspaces.append(Halfspace.of(lie_g, offset, Sense.LE, label=f"sat:{objective.label}"))
    return halfspaces


def u_sat_constraints(
    problem: BclfProblem,
    system: ControlAffineSystem,
    x,
    level: Optional[int] = None,
) -> List[Halfspace]:
    """One halfspace Vdot_i <= (b_ij - V_i)/k per finite bound of the current level"""
    x = np.asarray(x, dtype=float).reshape(-1)
    j = _resolve_level(problem, x, level)
    return _sat_halfspaces(problem, j, _objective_values(problem, x), _LieCache(problem, system, x))


def in_U_sat(
    problem: BclfProblem,
    system: ControlAffineSystem,
    x,
    u,
    tol: Optional[float] = None,
    box: Optional[ControlBox] = None,
    level: Optional[int] = None,
) -> bool:
    tol = settings.MEMBERSHIP_TOL if tol is None else tol
    u = np.asarray(u, dtype=float).reshape(-1)
    if box is not None and not box.contains(u, tol):
        return False
    return all(hs.satisfied(u, tol) for hs in u_sat_constraints(problem, system, x, level))


def _focus(problem: BclfProblem, j: int, values: List[float]) -> List[int]:
    if j >= problem.top_level:
        return []
    focus = [i for i, v in enumerate(values) if bound_reached(v, problem.table.bound(i, j + 1))]
    if not focus:
        raise PriorityInconsistencyError(
            f"level {j} is below the top level {problem.top_level} but every bound of level {j + 1} already holds"
        )
    return focus


def i_next(problem: BclfProblem, x, level: Optional[int] = None) -> List[int]:
    """Objectives whose next-level bound is not met yet (zero-based, ascending)"""
    x = np.asarray(x, dtype=float).reshape(-1)
    j = _resolve_level(problem, x, level)
    if j >= problem.top_level:
        return []
    return _focus(problem, j, _objective_values(problem, x))


def _inc_halfspaces(problem: BclfProblem, focus: List[int], lie: _LieCache) -> List[Halfspace]:
    halfspaces = []
    for i in focus:
        lie_f, lie_g = lie[i]
        label = f"inc:{problem.objectives[i].label}"
        halfspaces.append(Halfspace.of(lie_g, -problem.epsilon - lie_f, Sense.LE, label=label))
    return halfspaces


def u_inc_constraints(
    problem: BclfProblem,
    system: ControlAffineSystem,
    x,
    level: Optional[int] = None,
) -> List[Halfspace]:
    """Vdot_i <= -epsilon for every objective in I_next"""
    x = np.asarray(x, dtype=float).reshape(-1)
    focus = i_next(problem, x, level)
    return _inc_halfspaces(problem, focus, _LieCache(problem, system, x))


def is_bclf(
    objective: Objective,
    system: Union[ControlAffineSystem, GeneralSystem],
    box: ControlBox,
    bound: float,
    epsilon: float,
    domain: StateDomain,
    state_samples: int,
    control_grid: int,
    tol: Optional[float] = None,
    seed: int = 0,
) -> ValidityReport:
    """Sampling check of min_u grad V . f(x, u) <= -epsilon wherever V(x) >= bound.

    Control-affine systems use the exact box vertex; general systems grid the box.
    """
    tol = settings.MEMBERSHIP_TOL if tol is None else tol
    if state_samples < 1 or control_grid < 1:
        raise ConfigurationError("state_samples and control_grid must be at least 1")
    if domain.dim != system.state_dim:
        raise ConfigurationError(f"domain has dimension {domain.dim}, system state has {system.state_dim}")

    rng = np.random.default_rng(seed)
    n_biased = state_samples // 4
    samples = grid_points(domain, max(1, state_samples - n_biased))
    if n_biased:
        samples = np.vstack([samples, boundary_biased_points(objective.V, domain, n_biased, rng, level=bound)])
    region = [x for x in samples if float(objective.V(x)) >= bound]

    if not region:
        logger.warning(f"is_bclf({objective.label}, b={bound}): no sample with V >= b in the domain, passing vacuously")
        return ValidityReport(kind="bclf", passed=True, vacuous=True, threshold=-epsilon + tol, detail="empty region")

    controls = axis_grid(box, control_grid) if isinstance(system, GeneralSystem) else None
    worst_value, worst_state, failures = -np.inf, None, 0
    for x in region:
        if isinstance(system, GeneralSystem):
            grad = np.asarray(objective.grad_V(x), dtype=float)
            best = min(float(grad @ np.asarray(system.dynamics(x, u), dtype=float)) for u in controls)
        else:
            lie_f, lie_g = lie_derivatives(objective.grad_V, system, x)
            best = lie_f + float(lie_g @ box.minimizing_vertex(lie_g))
        if best > -epsilon + tol:
            failures += 1
        if best > worst_value:
            worst_value, worst_state = best, x

    passed = failures == 0
    logger.info(f"is_bclf({objective.label}, b={bound}, eps={epsilon}): {'pass' if passed else 'fail'}, worst Vdot {worst_value:.6g}")
    return ValidityReport(
        kind="bclf",
        passed=passed,
        samples_checked=len(region),
        failures=failures,
        worst_state=worst_state,
        worst_value=float(worst_value),
        threshold=-epsilon + tol,
        detail=(
            f"min Vdot <= {-epsilon:g} at all {len(region)} samples with V >= {bound:g}"
            if passed
            else f"{failures} of {len(region)} samples cannot decrease V at rate {epsilon:g}"
        ),
    )


def bclf_controller(
    problem: BclfProblem,
    system: ControlAffineSystem,
    x,
    nominal_u,
    box: ControlBox,
) -> BclfControlResult:
    """Min-norm control over U_sat and U_inc, falling back to U_sat alone.

    U_sat alone still keeps the priority level from dropping.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    nominal = np.asarray(nominal_u, dtype=float).reshape(-1)
    values = _objective_values(problem, x)
    cpl = _level_report(problem, values)
    lie = _LieCache(problem, system, x)
    sat = _sat_halfspaces(problem, cpl.level, values, lie)
    focus = _focus(problem, cpl.level, values)
    inc = _inc_halfspaces(problem, focus, lie)

    result = solve_min_norm(MinNormProblem.of(nominal, sat + inc, box))
    if result.optimal:
        return BclfControlResult.model_construct(
            control=result.point, tier=ControllerTier.SAT_INC, cpl=cpl, focus=focus, constraints=sat + inc
        )

    logger.debug(f"U_sat and U_inc do not intersect at level {cpl.level} ({result.certificate_labels()}), dropping U_inc")
    result = solve_min_norm(MinNormProblem.of(nominal, sat, box))
    if not result.optimal:
        raise InfeasibleError(
            f"U_sat is empty inside the control box at level {cpl.level}; the bounds, k and box violate the BCLF premises",
            certificate=result.certificate_labels(),
            tier=ControllerTier.SAT_ONLY.value,
        )
    return BclfControlResult.model_construct(
        control=result.point, tier=ControllerTier.SAT_ONLY, cpl=cpl, focus=focus, constraints=sat
    )
