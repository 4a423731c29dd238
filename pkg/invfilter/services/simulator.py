# invfilter/services/simulator.py
import logging
import math
from typing import Callable, List, Optional, Tuple

import numpy as np

from invfilter.models.schemas import (
    UNBOUNDED,
    ControlAffineSystem,
    ControllerKind,
    ControllerTier,
    Halfspace,
    RunStatus,
    Scenario,
    StepRecord,
    TrajectoryLog,
)
from invfilter.services.bclf import bclf_controller, current_priority_level, u_sat_constraints
from invfilter.services.cbf import CbfSafetyFilter, boundary_gradient_ok
from invfilter.services.dynamics import eval_dynamics
from invfilter.utils.errors import ConfigurationError, DimensionError, InfeasibleError, SimulationDivergenceError

logger = logging.getLogger(__name__)

# (control, tier, smallest constraint slack at that control)
ControlStep = Tuple[np.ndarray, str, float]


def step_rk4(system: ControlAffineSystem, u, x, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step with u held constant over [t, t + dt]"""
    if not dt > 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float).reshape(-1)
    k1 = eval_dynamics(system, x, u)
    u = np.asarray(u, dtype=float).reshape(-1)
    shape = (system.state_dim, system.control_dim)

    def held(xs: np.ndarray) -> np.ndarray:
        # shapes were checked by the first stage
        return np.asarray(system.drift(xs), dtype=float).reshape(-1) + np.reshape(system.input_matrix(xs), shape) @ u

    k2 = held(x + 0.5 * dt * k1)
    k3 = held(x + 0.5 * dt * k2)
    k4 = held(x + dt * k3)
    x_next = x + dt * ((k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0)
    if not np.isfinite(x_next).all():
        raise SimulationDivergenceError(f"{system.name}: state became non-finite after a step from {x.tolist()}")
    return x_next


def equality_control(halfspace: Halfspace) -> np.ndarray:
    """Minimum-norm u with a . u = c"""
    a, c = halfspace.as_le()
    norm_sq = float(a @ a)
    if norm_sq == 0.0:
        raise InfeasibleError(
            "the active constraint has a zero normal, so no control reaches its boundary",
            certificate=[halfspace.label],
            tier=ControllerTier.SATURATING.value,
        )
    return a * (c / norm_sq)


def _min_slack(halfspaces: List[Halfspace], u: np.ndarray) -> float:
    return min((hs.slack(u) for hs in halfspaces), default=math.inf)


class _ClosedLoop:
    """Maps a state to (control, tier, min slack) for one scenario's controller kind"""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.system = scenario.system
        self.filter = CbfSafetyFilter(scenario.system, scenario.barriers, scenario.box) if scenario.barriers else None
        self._warned_outside_box = False

    def nominal(self, x: np.ndarray) -> np.ndarray:
        u = np.asarray(self.scenario.nominal(x), dtype=float).reshape(-1)
        if u.size != self.system.control_dim:
            raise DimensionError(f"nominal policy returned {u.size} components, expected {self.system.control_dim}")
        return u

    def _constraints(self, x: np.ndarray) -> List[Halfspace]:
        if self.filter is not None:
            return [c.halfspace for c in self.filter.constraints(x)]
        return u_sat_constraints(self.scenario.problem, self.system, x)

    def __call__(self, x: np.ndarray) -> ControlStep:
        kind = self.scenario.controller
        if kind is ControllerKind.CBF:
            u, constraints = self.filter(x, self.nominal(x))
            return u, ControllerTier.FILTER.value, _min_slack([c.halfspace for c in constraints], u)
        if kind is ControllerKind.BCLF:
            result = bclf_controller(self.scenario.problem, self.system, x, self.nominal(x), self.scenario.box)
            u = np.array(result.control)
            return u, result.tier.value, _min_slack(result.constraints, u)
        if kind is ControllerKind.SATURATING:
            return self._saturating(x)
        u = self.scenario.box.clip(self.nominal(x))
        return u, ControllerTier.NOMINAL.value, _min_slack(self._constraints(x), u)

    def _saturating(self, x: np.ndarray) -> ControlStep:
        """Equality on the row with the smallest margin, lowest index on ties"""
        if self.filter is not None:
            constraints = self.filter.constraints(x)
            active = min(constraints, key=lambda c: c.h_value).halfspace
            halfspaces = [c.halfspace for c in constraints]
        else:
            problem = self.scenario.problem
            level = current_priority_level(problem, x)
            halfspaces = u_sat_constraints(problem, self.system, x, level=level.level)
            if not halfspaces:
                raise InfeasibleError(
                    f"no finite bound at level {level.level}, nothing to saturate",
                    tier=ControllerTier.SATURATING.value,
                )
            margins = [
                bound - value
                for bound, value in zip(problem.table.column(level.level), level.values)
                if bound is not UNBOUNDED
            ]
            active = halfspaces[int(np.argmin(margins))]
        u = equality_control(active)
        if not self.scenario.box.contains(u) and not self._warned_outside_box:
            logger.warning(f"Equality control {u.tolist()} leaves the control box; it is applied unclipped")
            self._warned_outside_box = True
        return u, ControllerTier.SATURATING.value, _min_slack(halfspaces, u)


def _monitored(scenario: Scenario, x: np.ndarray) -> Tuple[List[float], Optional[int]]:
    if scenario.problem is not None:
        report = current_priority_level(scenario.problem, x)
        return report.values, report.level
    return [float(b.h(x)) for b in scenario.barriers], None


def simulate(scenario: Scenario, controller: Optional[Callable[[np.ndarray], ControlStep]] = None) -> TrajectoryLog:
    """Fixed-step closed-loop rollout with the controller sampled once per step.

    An infeasible controller or a diverging state ends the run early with a partial log.
    """
    controller = _ClosedLoop(scenario) if controller is None else controller
    x = np.array(scenario.x0, dtype=float)

    initial_bounds: List[Optional[float]] = []
    if scenario.problem is not None:
        level = current_priority_level(scenario.problem, x).level
        initial_bounds = [None if b is UNBOUNDED else float(b) for b in scenario.problem.table.column(level)]

    log = TrajectoryLog(
        scenario_name=scenario.name,
        state_dim=scenario.system.state_dim,
        control_dim=scenario.system.control_dim,
        value_kind="V" if scenario.problem is not None else "h",
        dt=scenario.dt,
        top_level=scenario.problem.top_level if scenario.problem is not None else None,
        initial_bounds=initial_bounds,
    )
    logger.info(f"Simulating {scenario.name}: {scenario.controller.value} controller, {scenario.n_steps} steps of {scenario.dt}")

    previous_level = None
    for step in range(scenario.n_steps + 1):
        t = step * scenario.dt
        try:
            u, tier, min_residual = controller(x)
        except InfeasibleError as exc:
            logger.error(f"{scenario.name}: controller infeasible at t={t:.6g}, x={x.tolist()}: {exc}")
            log.status = RunStatus.INFEASIBLE
            log.failure = str(exc)
            log.certificate = list(exc.certificate)
            break

        values, level = _monitored(scenario, x)
        for barrier, value in zip(scenario.barriers, values):
            if not boundary_gradient_ok(barrier, x, h_value=value):
                logger.warning(f"{barrier.label}: gradient nearly vanishes on the boundary at t={t:.6g}")
                log.gradient_warnings += 1
        if level is not None and previous_level is not None and level != previous_level:
            logger.info(f"{scenario.name}: priority level {previous_level} -> {level} at t={t:.6g}")
        previous_level = level

        log.records.append(
            StepRecord.model_construct(
                t=t,
                x=x.tolist(),
                u=np.asarray(u, dtype=float).tolist(),
                values=[float(v) for v in values],
                cpl=level,
                tier=tier,
                min_residual=float(min_residual),
            )
        )
        if step == scenario.n_steps:
            break
        try:
            x = step_rk4(scenario.system, u, x, scenario.dt)
        except SimulationDivergenceError as exc:
            logger.error(f"{scenario.name}: {exc}")
            log.status = RunStatus.DIVERGED
            log.failure = str(exc)
            break

    logger.info(f"{scenario.name}: {log.status.value} after {len(log.records)} records")
    return log

