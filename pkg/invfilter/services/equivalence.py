# invfilter/services/equivalence.py
"""Numerical comparison of the CBF admissible set with the saturation set of the
single-objective priority problem obtained by V = -h, b = 0.

Two checks run over every sampled (x, u) pair:
  - boolean membership in K_cbf(x) and U_sat(x), with pairs inside the +/-tol
    residual band counted as boundary-ambiguous instead of as disagreements;
  - the residual identity L_f h + L_g h u + h/k == (0 - V)/k - Vdot, which holds
    exactly when both sides use the same gain.
"""
import logging
import math
from typing import Optional

import numpy as np

from invfilter.models.schemas import (
    UNBOUNDED,
    AgreementReport,
    BarrierSpec,
    BclfProblem,
    ControlAffineSystem,
    ControlBox,
    Disagreement,
    EquivalenceMode,
    Objective,
    PriorityTable,
    Sense,
)
from invfilter.services.bclf import current_priority_level, u_sat_constraints
from invfilter.services.cbf import cbf_constraint
from invfilter.utils.config import settings
from invfilter.utils.errors import ConfigurationError
from invfilter.utils.numerics import random_points

logger = logging.getLogger(__name__)

IDENTITY_TOL = 1e-12


def reduce_cbf_to_bclf(barrier: BarrierSpec, epsilon: Optional[float] = None) -> BclfProblem:
    """Single objective V = -h with bounds [inf, 0] and the barrier's gain"""
    h, grad_h = barrier.h, barrier.grad_h
    objective = Objective(
        label=f"-{barrier.label}",
        V=lambda x: -float(h(x)),
        grad_V=lambda x: -np.asarray(grad_h(x), dtype=float),
        original_sense=Sense.LE,
    )
    return BclfProblem(
        objectives=[objective],
        table=PriorityTable(bounds=[[UNBOUNDED, 0.0]]),
        k_gain=barrier.k_gain,
        epsilon=settings.DEFAULT_EPSILON if epsilon is None else epsilon,
    )


def _agreement_at_state(
    barrier: BarrierSpec,
    system: ControlAffineSystem,
    problem: BclfProblem,
    x: np.ndarray,
    controls: np.ndarray,
    tol: float,
    mode: EquivalenceMode,
) -> AgreementReport:
    if mode is EquivalenceMode.CPL:
        level = current_priority_level(problem, x).level
        if level < 1:
            # no finite bound at level 0, so U_sat leaves u free while K_cbf still constrains it
            return AgreementReport(mode=mode, asymmetric_states=1, identity_tol=IDENTITY_TOL)
    else:
        level = 1

    cbf = cbf_constraint(barrier, system, x)
    sat = u_sat_constraints(problem, system, x, level=level)[0]

    residuals = cbf.lie_f + controls @ cbf.lie_g + cbf.alpha_value
    slacks = sat.offset - controls @ sat.normal
    identity_error = float(np.max(np.abs(residuals - slacks) / np.maximum(1.0, np.abs(residuals))))

    in_cbf = residuals >= -tol
    in_sat = slacks >= -tol
    differ = in_cbf != in_sat
    ambiguous = differ & (np.minimum(np.abs(residuals), np.abs(slacks)) < tol)
    genuine = np.flatnonzero(differ & ~ambiguous)

    disagreements = [
        Disagreement(
            state=x,
            control=controls[idx],
            cbf_residual=float(residuals[idx]),
            sat_slack=float(slacks[idx]),
            in_cbf=bool(in_cbf[idx]),
            in_sat=bool(in_sat[idx]),
        )
        for idx in genuine
    ]
    return AgreementReport(
        mode=mode,
        pairs_checked=len(controls),
        agreements=int(np.count_nonzero(~differ)),
        boundary_pairs=int(np.count_nonzero(ambiguous)),
        disagreements=disagreements,
        max_identity_error=identity_error,
        identity_tol=IDENTITY_TOL,
    )


def sets_agree(
    barrier: BarrierSpec,
    system: ControlAffineSystem,
    box: ControlBox,
    state_samples: int,
    control_samples: int,
    tol: Optional[float] = None,
    mode: EquivalenceMode = EquivalenceMode.ROW_ACTIVE,
    problem: Optional[BclfProblem] = None,
    seed: int = 0,
) -> AgreementReport:
    """Compare K_cbf(x) with U_sat(x) over seeded random states and controls.

    `problem` defaults to reduce_cbf_to_bclf(barrier); passing another one (for
    instance with a different k) is how a mismatch is demonstrated.
    """
    tol = settings.MEMBERSHIP_TOL if tol is None else tol
    if state_samples < 1 or control_samples < 1:
        raise ConfigurationError("state_samples and control_samples must be at least 1")
    if box.dim != system.control_dim:
        raise ConfigurationError(f"control box has dimension {box.dim}, system control has {system.control_dim}")
    problem = reduce_cbf_to_bclf(barrier) if problem is None else problem
    if problem.table.n_objectives != 1 or problem.top_level < 1:
        raise ConfigurationError("equivalence needs a single objective with at least one finite level")

    mode = EquivalenceMode(mode)
    rng = np.random.default_rng(seed)
    states = random_points(barrier.domain, state_samples, rng)
    controls = random_points(box, control_samples, rng)

    report = AgreementReport(mode=mode, identity_tol=IDENTITY_TOL)
    for x in states:
        report = report.merge(_agreement_at_state(barrier, system, problem, x, controls, tol, mode))

    logger.info(
        f"Equivalence ({mode.value}): {report.pairs_checked} pairs, {len(report.disagreements)} disagreements, "
        f"{report.boundary_pairs} boundary pairs, max identity error {report.max_identity_error:.3g}"
    )
    return report


def split_samples(total: int):
    """Split a pair budget into (states, controls per state) with states * controls >= total"""
    if total < 1:
        raise ConfigurationError(f"sample count must be at least 1, got {total}")
    states = int(math.ceil(math.sqrt(total)))
    return states, int(math.ceil(total / states))
