import numpy as np
import pytest

from invfilter.models.schemas import ControlBox, Halfspace, MinNormProblem, Sense, SolveStatus
from invfilter.services.solver import feasible, kkt_residual, oracle_min_norm, solve_min_norm


def _problem(target, halfspaces=(), lower=-1.0, upper=1.0):
    m = len(target)
    return MinNormProblem(
        target=target,
        halfspaces=list(halfspaces),
        box=ControlBox(lower=[lower] * m, upper=[upper] * m),
    )


def test_interior_target_is_returned_unchanged():
    result = solve_min_norm(_problem([0.2, -0.3]))
    assert result.optimal
    np.testing.assert_allclose(result.point, [0.2, -0.3])
    assert result.active_set == []


def test_target_outside_box_is_clipped():
    result = solve_min_norm(_problem([3.0, -3.0]))
    np.testing.assert_allclose(result.point, [1.0, -1.0])
    assert set(result.active_labels()) == {"box.upper[0]", "box.lower[1]"}


def test_projection_onto_a_single_halfspace():
    hs = Halfspace(normal=[1.0, 1.0], offset=1.0, sense=Sense.GE, label="sum")
    problem = _problem([0.0, 0.0], [hs])
    result = solve_min_norm(problem)
    np.testing.assert_allclose(result.point, [0.5, 0.5], atol=1e-12)
    assert result.active_labels() == ["sum"]
    assert result.multipliers == pytest.approx([0.5])
    assert kkt_residual(problem, result) < 1e-12


def test_redundant_constraints_do_not_change_the_answer():
    halfspaces = [
        Halfspace(normal=[1.0, 0.0], offset=1.0, sense=Sense.GE, label="a"),
        Halfspace(normal=[0.0, 1.0], offset=1.0, sense=Sense.GE, label="b"),
        Halfspace(normal=[1.0, 1.0], offset=2.0, sense=Sense.GE, label="c"),
    ]
    result = solve_min_norm(_problem([0.0, 0.0], halfspaces, lower=-2.0, upper=2.0))
    np.testing.assert_allclose(result.point, [1.0, 1.0], atol=1e-12)
    assert result.max_violation <= 1e-12


def test_duplicate_halfspace_matches_single():
    hs = Halfspace(normal=[2.0, -1.0], offset=-0.5, sense=Sense.LE, label="d")
    once = solve_min_norm(_problem([0.7, 0.1], [hs]))
    twice = solve_min_norm(_problem([0.7, 0.1], [hs, hs]))
    np.testing.assert_allclose(twice.point, once.point, atol=1e-12)


def test_halfspace_against_box_is_infeasible():
    hs = Halfspace(normal=[1.0], offset=2.0, sense=Sense.GE, label="too_far")
    result = solve_min_norm(_problem([0.0], [hs]))
    assert result.status is SolveStatus.INFEASIBLE
    assert set(result.certificate_labels()) == {"too_far", "box.upper[0]"}


def test_unsatisfiable_zero_normal_is_its_own_certificate():
    hs = Halfspace(normal=[0.0, 0.0], offset=-1.0, sense=Sense.LE, label="zero")
    result = solve_min_norm(_problem([0.0, 0.0], [hs]))
    assert result.status is SolveStatus.INFEASIBLE
    assert result.certificate_labels() == ["zero"]


def test_satisfiable_zero_normal_is_ignored():
    hs = Halfspace(normal=[0.0], offset=1.0, sense=Sense.LE, label="zero")
    result = solve_min_norm(_problem([0.4], [hs]))
    np.testing.assert_allclose(result.point, [0.4])


def test_unlabelled_halfspaces_get_index_labels():
    hs = Halfspace(normal=[1.0], offset=5.0, sense=Sense.GE)
    result = solve_min_norm(_problem([0.0], [hs]))
    assert "halfspace[0]" in result.certificate_labels()


def test_dimension_mismatch_is_rejected():
    with pytest.raises(ValueError):
        _problem([0.0], [Halfspace(normal=[1.0, 0.0], offset=0.0, sense=Sense.LE)])


def test_solver_is_deterministic():
    halfspaces = [
        Halfspace(normal=[1.0, 2.0], offset=0.3, sense=Sense.LE),
        Halfspace(normal=[-1.0, 0.5], offset=0.1, sense=Sense.LE),
    ]
    first = solve_min_norm(_problem([1.0, 1.0], halfspaces))
    second = solve_min_norm(_problem([1.0, 1.0], halfspaces))
    assert first.point.tolist() == second.point.tolist()
    assert first.active_set == second.active_set


def test_kkt_residual_requires_an_optimal_result():
    hs = Halfspace(normal=[1.0], offset=2.0, sense=Sense.GE)
    problem = _problem([0.0], [hs])
    with pytest.raises(ValueError):
        kkt_residual(problem, solve_min_norm(problem))


class TestFeasible:
    def test_witness_is_nearest_the_center(self):
        box = ControlBox(lower=[-1.0], upper=[1.0])
        result = feasible([Halfspace(normal=[1.0], offset=0.5, sense=Sense.GE, label="h")], box)
        assert result.feasible
        np.testing.assert_allclose(result.witness, [0.5], atol=1e-12)

    def test_empty_intersection(self):
        box = ControlBox(lower=[-1.0, -1.0], upper=[1.0, 1.0])
        halfspaces = [
            Halfspace(normal=[1.0, 0.0], offset=0.2, sense=Sense.GE, label="right"),
            Halfspace(normal=[1.0, 0.0], offset=-0.2, sense=Sense.LE, label="left"),
        ]
        result = feasible(halfspaces, box)
        assert not result.feasible
        assert set(result.certificate) == {"right", "left"}


def test_oracle_rejects_high_dimensions():
    with pytest.raises(ValueError):
        oracle_min_norm(_problem([0.0] * 4), 5)


def _random_instance(rng, index):
    m = 1 + index % 2
    witness = rng.uniform(-1.0, 1.0, size=m)
    halfspaces = []
    for j in range(int(rng.integers(1, 4))):
        normal = rng.normal(size=m)
        normal /= np.linalg.norm(normal)
        margin = rng.uniform(0.1, 1.0)
        if rng.random() < 0.5:
            halfspaces.append(Halfspace(normal=normal, offset=float(normal @ witness) + margin, sense=Sense.LE, label=f"r{j}"))
        else:
            halfspaces.append(Halfspace(normal=normal, offset=float(normal @ witness) - margin, sense=Sense.GE, label=f"r{j}"))
    if index % 3 == 0:
        normal = rng.normal(size=m)
        normal /= np.linalg.norm(normal)
        d = rng.uniform(-1.0, 1.0)
        halfspaces.append(Halfspace(normal=normal, offset=d, sense=Sense.LE, label="pair_le"))
        halfspaces.append(Halfspace(normal=normal, offset=d + 0.5, sense=Sense.GE, label="pair_ge"))
    target = rng.uniform(-1.0, 1.0, size=m)
    return _problem(target, halfspaces, lower=-2.0, upper=2.0)


def test_agrees_with_grid_oracle_on_random_instances():
    rng = np.random.default_rng(2024)
    for index in range(100):
        problem = _random_instance(rng, index)
        result = solve_min_norm(problem)
        oracle = oracle_min_norm(problem, 201)

        assert result.optimal == (oracle is not None), f"instance {index}"
        if oracle is None:
            labels = set(result.certificate_labels())
            subset = [hs for hs in problem.halfspaces if hs.label in labels]
            assert not feasible(subset, problem.box).feasible, f"instance {index}"
            continue

        target = np.asarray(problem.target)
        assert float(np.sum((result.point - target) ** 2)) <= float(np.sum((oracle - target) ** 2)) + 1e-7, f"instance {index}"
        assert np.max(np.abs(result.point - oracle)) <= 1e-3, f"instance {index}"
        assert result.max_violation <= 1e-9
        assert kkt_residual(problem, result) <= 1e-8
