# invfilter/services/monitors.py
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from invfilter.models.schemas import (
    ControllerTier,
    ConvergenceReport,
    CplEvent,
    CplMonitorReport,
    InvarianceReport,
    RateFit,
    TrajectoryLog,
)
from invfilter.utils.config import settings
from invfilter.utils.errors import FitDomainError

logger = logging.getLogger(__name__)

FLAT_SLOPE = 1e-12


def _record_margins(log: TrajectoryLog) -> List[Optional[float]]:
    return [min(m) if (m := log.margins(r)) else None for r in log.records]


def margin_series(log: TrajectoryLog) -> List[Tuple[float, float]]:
    """(t, smallest margin) for every record that has a finite bound"""
    return [(r.t, m) for r, m in zip(log.records, _record_margins(log)) if m is not None]


def monitor_invariance(log: TrajectoryLog, tol: Optional[float] = None) -> InvarianceReport:
    """Pass iff the smallest margin over the whole log stays >= -tol.

    Margins are h for barrier logs and b - V against the initial level for priority logs.
    """
    tol = settings.MONITOR_TOL if tol is None else tol
    series = margin_series(log)
    if not series:
        return InvarianceReport(passed=True, tol=tol)
    worst_step = int(np.argmin([m for _, m in series]))
    worst_time, worst_margin = series[worst_step]
    passed = worst_margin >= -tol
    if not passed:
        logger.warning(f"{log.scenario_name}: invariance lost, margin {worst_margin:.6g} at t={worst_time:.6g}")
    return InvarianceReport(
        passed=passed,
        min_margin=worst_margin,
        worst_step=worst_step,
        worst_time=worst_time,
        tol=tol,
    )


def monitor_convergence(log: TrajectoryLog, tol: Optional[float] = None) -> ConvergenceReport:
    """Pass iff from some record on every margin stays >= -tol; reports that entry point"""
    tol = settings.CONVERGENCE_TOL if tol is None else tol
    series = margin_series(log)
    if not series:
        return ConvergenceReport(passed=True, tol=tol)
    outside = [idx for idx, (_, m) in enumerate(series) if m < -tol]
    final_margin = series[-1][1]
    if not outside:
        return ConvergenceReport(passed=True, entry_step=0, entry_time=series[0][0], final_margin=final_margin, tol=tol)
    entry = outside[-1] + 1
    if entry >= len(series):
        logger.warning(f"{log.scenario_name}: still outside the set at the horizon, margin {final_margin:.6g}")
        return ConvergenceReport(passed=False, final_margin=final_margin, tol=tol)
    return ConvergenceReport(
        passed=True,
        entry_step=entry,
        entry_time=series[entry][0],
        final_margin=final_margin,
        tol=tol,
    )


def monitor_cpl(log: TrajectoryLog) -> CplMonitorReport:
    """Count level decreases and the first strict increase into each level.

    When every step used the sat+inc tier and the run started below the top level,
    at least one increase is also required.
    """
    steps = [(idx, r) for idx, r in enumerate(log.records) if r.cpl is not None]
    if not steps:
        return CplMonitorReport(passed=True)

    decreases: List[CplEvent] = []
    increases: List[CplEvent] = []
    reached = set()
    for (_, prev), (idx, cur) in zip(steps, steps[1:]):
        if cur.cpl < prev.cpl:
            decreases.append(CplEvent(step=idx, t=cur.t, from_level=prev.cpl, to_level=cur.cpl))
        elif cur.cpl > prev.cpl and cur.cpl not in reached:
            reached.add(cur.cpl)
            increases.append(CplEvent(step=idx, t=cur.t, from_level=prev.cpl, to_level=cur.cpl))

    initial, final = steps[0][1].cpl, steps[-1][1].cpl
    top = log.top_level if log.top_level is not None else max(r.cpl for _, r in steps)
    continuous = all(r.tier == ControllerTier.SAT_INC.value for _, r in steps)
    passed = not decreases
    if continuous and initial < top and not increases:
        passed = False
    for event in decreases:
        logger.warning(f"{log.scenario_name}: priority level fell {event.from_level} -> {event.to_level} at step {event.step}")
    return CplMonitorReport(
        passed=passed,
        initial_level=initial,
        final_level=final,
        top_level=top,
        decreases=decreases,
        increases=increases,
        continuous_sat_inc=continuous,
        reached_top=final == top,
    )


def fit_exponential_rate(series: Sequence[Tuple[float, float]], transient_fraction: Optional[float] = None) -> RateFit:
    """Least-squares line through (t, log r) after dropping the initial transient.

    time_constant = -1/slope; a flat or growing series yields an infinite time constant
    with decaying=False.
    """
    transient_fraction = settings.FIT_TRANSIENT_FRACTION if transient_fraction is None else transient_fraction
    data = np.asarray(series, dtype=float).reshape(-1, 2)
    skip = int(math.ceil(len(data) * transient_fraction))
    window = data[skip:]
    if len(window) < 2:
        raise FitDomainError(f"need at least 2 samples after the transient, got {len(window)}")
    if np.any(window[:, 1] <= 0.0) or not np.all(np.isfinite(window[:, 1])):
        raise FitDomainError("residuals must be positive and finite over the fit window")

    slope, intercept = np.polyfit(window[:, 0], np.log(window[:, 1]), 1)
    decaying = slope < -FLAT_SLOPE
    time_constant = -1.0 / slope if decaying else math.inf
    return RateFit(
        time_constant=float(time_constant),
        slope=float(slope),
        intercept=float(intercept),
        samples_used=len(window),
        decaying=bool(decaying),
    )
