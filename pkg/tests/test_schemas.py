import math

import numpy as np
import pytest

from conftest import coordinate_objective
from invfilter.models.schemas import (
    UNBOUNDED,
    AgreementReport,
    BclfProblem,
    Box,
    ControlBox,
    EquivalenceMode,
    Halfspace,
    MinNormProblem,
    Objective,
    PriorityTable,
    Sense,
    StepRecord,
    TrajectoryLog,
    bound_reached,
    bound_satisfied,
)


class TestBox:
    def test_vertices_follow_the_coefficient_signs(self):
        box = Box(lower=[-1.0, 0.0], upper=[2.0, 3.0])
        np.testing.assert_allclose(box.maximizing_vertex([1.0, -1.0]), [2.0, 0.0])
        np.testing.assert_allclose(box.minimizing_vertex([1.0, -1.0]), [-1.0, 3.0])

    def test_contains_and_clip(self):
        box = Box(lower=[-1.0], upper=[1.0])
        assert box.contains([1.0])
        assert not box.contains([1.1])
        assert box.contains([1.0 + 1e-10], tol=1e-9)
        np.testing.assert_allclose(box.clip([5.0]), [1.0])

    @pytest.mark.parametrize(
        "lower, upper",
        [([1.0], [0.0]), ([0.0, 0.0], [1.0]), ([-math.inf], [0.0]), ([], [])],
    )
    def test_invalid_boxes(self, lower, upper):
        with pytest.raises(ValueError):
            Box(lower=lower, upper=upper)

    def test_vectors_are_read_only(self):
        box = Box(lower=[0.0], upper=[1.0])
        with pytest.raises(ValueError):
            box.lower[0] = 5.0


class TestHalfspace:
    def test_slack_in_both_senses(self):
        le = Halfspace(normal=[1.0, 2.0], offset=3.0, sense=Sense.LE)
        ge = Halfspace(normal=[1.0, 2.0], offset=3.0, sense=Sense.GE)
        assert le.slack([1.0, 0.0]) == 2.0
        assert ge.slack([1.0, 0.0]) == -2.0
        assert le.satisfied([1.0, 1.0]) and ge.satisfied([1.0, 1.0])

    def test_as_le_flips_ge_rows(self):
        a, c = Halfspace(normal=[1.0, -2.0], offset=0.5, sense=Sense.GE).as_le()
        np.testing.assert_allclose(a, [-1.0, 2.0])
        assert c == -0.5

    def test_non_finite_offset_is_rejected(self):
        with pytest.raises(ValueError):
            Halfspace(normal=[1.0], offset=math.inf, sense=Sense.LE)

    def test_flagged_only_when_unsatisfiable(self):
        assert Halfspace(normal=[0.0], offset=-1.0, sense=Sense.LE).flagged
        assert not Halfspace(normal=[0.0], offset=1.0, sense=Sense.LE).flagged
        assert not Halfspace(normal=[1.0], offset=-1.0, sense=Sense.LE).flagged

    def test_unvalidated_constructor_matches_the_model(self):
        fast = Halfspace.of([1.0, -2.0], 0.5, Sense.GE, label="row")
        model = Halfspace(normal=[1.0, -2.0], offset=0.5, sense=Sense.GE, label="row")
        np.testing.assert_array_equal(fast.normal, model.normal)
        assert (fast.offset, fast.sense, fast.label) == (model.offset, model.sense, model.label)
        with pytest.raises(ValueError):
            fast.normal[0] = 3.0

    @pytest.mark.parametrize("normal, offset", [([math.nan], 0.0), ([1.0], -math.inf)])
    def test_unvalidated_constructor_still_rejects_non_finite(self, normal, offset):
        with pytest.raises(ValueError):
            Halfspace.of(normal, offset, Sense.LE)


class TestMinNormProblem:
    def test_unvalidated_constructor_keeps_the_dimension_checks(self):
        box = ControlBox(lower=[-1.0, -1.0], upper=[1.0, 1.0])
        row = Halfspace.of([1.0], 0.0, Sense.LE)
        with pytest.raises(ValueError):
            MinNormProblem.of([0.0, 0.0], [row], box)
        with pytest.raises(ValueError):
            MinNormProblem.of([0.0], [], box)
        problem = MinNormProblem.of((0.5, 0.5), [Halfspace.of([1.0, 1.0], 0.0, Sense.LE)], box)
        assert problem.target.tolist() == [0.5, 0.5]
        assert len(problem.halfspaces) == 1


class TestPriorityTable:
    def test_unbounded_spellings(self):
        table = PriorityTable(bounds=[["inf", math.inf, 2.0]])
        assert table.bounds == ((UNBOUNDED, UNBOUNDED, 2.0),)

    def test_bound_helpers(self):
        assert bound_satisfied(1e300, UNBOUNDED)
        assert not bound_reached(1e300, UNBOUNDED)
        assert bound_satisfied(1.0, 1.0) and bound_reached(1.0, 1.0)

    def test_first_column_must_be_unbounded(self):
        with pytest.raises(ValueError, match="unbounded"):
            PriorityTable(bounds=[[5.0, 1.0]])

    def test_loosening_is_rejected(self):
        with pytest.raises(ValueError, match="loosens"):
            PriorityTable(bounds=[["inf", 0.0, 1.0]])

    def test_bound_after_finite_cannot_return_to_unbounded(self):
        with pytest.raises(ValueError, match="loosens"):
            PriorityTable(bounds=[["inf", 0.0, "inf"]])

    def test_ragged_rows(self):
        with pytest.raises(ValueError):
            PriorityTable(bounds=[["inf", 0.0], ["inf"]])

    @pytest.mark.parametrize("entry", ["-inf", -math.inf, float("nan"), "large"])
    def test_unsupported_le_entries(self, entry):
        with pytest.raises(ValueError):
            PriorityTable(bounds=[["inf", entry]])

    def test_ge_rows_are_negated(self):
        table = PriorityTable.from_user([["-inf", 10.0, 20.0], ["inf", 5.0, 1.0]], [Sense.GE, Sense.LE])
        assert table.bounds == ((UNBOUNDED, -10.0, -20.0), (UNBOUNDED, 5.0, 1.0))
        assert table.top_level == 2
        assert table.column(1) == [-10.0, 5.0]

    def test_ge_row_rejects_positive_infinity(self):
        with pytest.raises(ValueError):
            PriorityTable.from_user([["inf", 1.0]], [Sense.GE])

    def test_ge_row_must_tighten_upwards(self):
        with pytest.raises(ValueError, match="loosens"):
            PriorityTable.from_user([["-inf", 10.0, 5.0]], [Sense.GE])

    def test_row_count_must_match_senses(self):
        with pytest.raises(ValueError):
            PriorityTable.from_user([["inf", 1.0]], [Sense.LE, Sense.LE])


class TestObjective:
    def test_ge_objective_is_negated(self):
        objective = coordinate_objective("speed", 1, Sense.GE)
        x = np.array([0.0, 4.0])
        assert objective.V(x) == -4.0
        np.testing.assert_allclose(objective.grad_V(x), [0.0, -1.0])
        assert objective.user_value(x) == 4.0

    def test_le_objective_is_unchanged(self):
        objective = Objective.from_user("x", lambda x: float(x[0]), lambda x: np.array([1.0]))
        assert objective.V(np.array([2.0])) == 2.0
        assert objective.original_sense is Sense.LE


def test_problem_rows_must_match_objectives():
    with pytest.raises(ValueError, match="rows"):
        BclfProblem(
            objectives=[coordinate_objective("a", 0)],
            table=PriorityTable(bounds=[["inf", 1.0], ["inf", 2.0]]),
        )


def test_agreement_reports_of_different_modes_do_not_merge():
    with pytest.raises(ValueError):
        AgreementReport(mode=EquivalenceMode.CPL).merge(AgreementReport(mode=EquivalenceMode.ROW_ACTIVE))


def test_trajectory_level_changes():
    log = TrajectoryLog(scenario_name="s", state_dim=1, control_dim=1, value_kind="V", dt=0.5, top_level=2)
    for i, level in enumerate([0, 1, 1, 2]):
        log.records.append(StepRecord(t=i * 0.5, x=[0.0], u=[0.0], values=[0.0], cpl=level, tier="sat+inc", min_residual=0.0))
    assert log.level_changes == [(0.5, 0, 1), (1.5, 1, 2)]
    assert log.cpl_trace == [0, 1, 1, 2]
    assert log.cpl_decreases == 0
