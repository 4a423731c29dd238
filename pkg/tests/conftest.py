from pathlib import Path

import numpy as np
import pytest

from invfilter.config.builtins import BuiltinCatalog
from invfilter.models.schemas import (
    BarrierSpec,
    BclfProblem,
    ControlAffineSystem,
    ControlBox,
    Objective,
    PriorityTable,
    Sense,
    StateDomain,
)
from invfilter.utils.polynomials import polynomial

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "invfilter" / "data" / "scenarios"


def line_barrier(k: float = 1.0, lower: float = -2.0, upper: float = 2.0) -> BarrierSpec:
    """h(x) = x on a 1-D domain"""
    h = polynomial([(1.0, [1])])
    return BarrierSpec(label="h", h=h, grad_h=h.gradient, k_gain=k, domain=StateDomain(lower=[lower], upper=[upper]))


def coordinate_objective(label: str, index: int, sense: Sense = Sense.LE) -> Objective:
    """V(x) = x[index], so a test can set objective values directly through the state"""

    def value(x):
        return float(x[index])

    def gradient(x):
        g = np.zeros(len(x))
        g[index] = 1.0
        return g

    return Objective.from_user(label, value, gradient, sense)


def single_objective(poly, bounds, k: float = 1.0, epsilon: float = 0.1, label: str = "V") -> BclfProblem:
    objective = Objective(label=label, V=poly, grad_V=poly.gradient)
    return BclfProblem(objectives=[objective], table=PriorityTable(bounds=[bounds]), k_gain=k, epsilon=epsilon)


@pytest.fixture(scope="session")
def scenario_dir() -> Path:
    return SCENARIO_DIR


@pytest.fixture(scope="session")
def single_integrator() -> ControlAffineSystem:
    return BuiltinCatalog.single_integrator_1d()


@pytest.fixture(scope="session")
def double_integrator() -> ControlAffineSystem:
    return BuiltinCatalog.double_integrator_drift()


@pytest.fixture(scope="session")
def unicycle() -> ControlAffineSystem:
    return BuiltinCatalog.unicycle_linearized(lookahead=0.2)


@pytest.fixture(scope="session")
def unit_box() -> ControlBox:
    return ControlBox(lower=[-1.0], upper=[1.0])


@pytest.fixture(scope="session")
def mission_table_problem() -> BclfProblem:
    """Separation (>=), time and a third objective, read from the state (sep, time, other)"""
    objectives = [
        coordinate_objective("separation", 0, Sense.GE),
        coordinate_objective("time", 1),
        coordinate_objective("other", 2),
    ]
    table = PriorityTable.from_user(
        [
            ["-inf", 10.0, 10.0, 20.0],
            ["inf", "inf", 60.0, 60.0],
            ["inf", "inf", "inf", 100.0],
        ],
        [Sense.GE, Sense.LE, Sense.LE],
    )
    return BclfProblem(objectives=objectives, table=table, k_gain=1.0, epsilon=0.1)
