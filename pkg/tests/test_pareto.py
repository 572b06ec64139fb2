import math

import numpy as np
import pytest
import hypothesis.strategies as st
from hypothesis import given, settings

from config.settings import ParetoConfig, TrainingConfig
from core.pareto import (
    QuadraticProblem,
    SubRegion,
    TrajectoryRecord,
    active_constraints,
    constraint_values,
    find_initial_solution,
    in_subregion,
    make_preferences,
    min_norm_direction,
    min_norm_weights,
    pareto_direction,
    pareto_step,
    train_pareto,
)
from utils.exceptions import ConfigurationError, ContractError, DimensionError, NumericError


def test_two_preferences_are_the_axes():
    prefs = make_preferences(2)
    assert np.array_equal(prefs.vectors, [[1.0, 0.0], [0.0, 1.0]])


def test_preferences_are_unit_and_ordered():
    prefs = make_preferences(5)
    assert len(prefs) == 5
    assert np.allclose(np.linalg.norm(prefs.vectors, axis=1), 1.0)
    assert np.all(np.diff(prefs.angles) > 0)
    assert np.all(prefs.vectors >= 0)


def test_single_preference_is_rejected():
    with pytest.raises(ConfigurationError):
        make_preferences(1)


def test_membership_follows_the_largest_projection():
    prefs = make_preferences(2)
    assert in_subregion((0.2, 0.8), 1, prefs)
    assert not in_subregion((0.2, 0.8), 0, prefs)
    assert SubRegion(0, prefs).contains((0.8, 0.2))
    assert constraint_values((0.2, 0.8), 1, prefs) == pytest.approx([-0.6, 0.0])


def test_every_loss_vector_has_a_region():
    prefs = make_preferences(4)
    for v in [(1.0, 0.0), (0.3, 0.3), (0.01, 2.0), (5.0, 4.9)]:
        assert any(in_subregion(v, k, prefs) for k in range(4))


def test_min_norm_of_orthogonal_units():
    result = min_norm_direction([np.array([1.0, 0.0]), np.array([0.0, 1.0])])
    assert np.allclose(result.direction, [-0.5, -0.5])
    assert result.weights == pytest.approx([0.5, 0.5])
    assert result.norm == pytest.approx(math.sqrt(0.5))


def test_min_norm_of_opposing_gradients_is_zero():
    result = min_norm_direction([np.array([2.0, 1.0]), np.array([-2.0, -1.0])])
    assert result.norm == pytest.approx(0.0, abs=1e-12)


def test_single_gradient_is_negated():
    assert np.array_equal(min_norm_direction([np.array([3.0, -1.0])]).direction, [-3.0, 1.0])


def test_min_norm_over_three_gradients():
    grads = [np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([1.0, 1.0])]
    result = min_norm_direction(grads)
    assert np.allclose(result.direction, [-0.5, -0.5], atol=1e-6)
    assert result.weights.sum() == pytest.approx(1.0)
    assert np.all(result.weights >= 0)


def test_min_norm_weights_of_one_vector():
    assert min_norm_weights(np.array([[4.0]])).tolist() == [1.0]


def test_min_norm_needs_gradients_of_one_size():
    with pytest.raises(ContractError):
        min_norm_direction([])
    with pytest.raises(DimensionError):
        min_norm_direction([np.ones(2), np.ones(3)])


vectors = st.lists(st.floats(min_value=-10, max_value=10), min_size=3, max_size=3)


@settings(max_examples=80, deadline=None)
@given(vectors, vectors)
def test_min_norm_direction_descends_on_both(g1, g2):
    result = min_norm_direction([np.array(g1), np.array(g2)])
    d = result.direction
    for g in (g1, g2):
        assert np.dot(g, d) <= -result.norm ** 2 + 1e-6 * (1.0 + np.dot(g, g))


def test_direction_without_constraints_weights_tasks():
    result = pareto_direction([np.array([1.0, 0.0]), np.array([0.0, 1.0])])
    assert result.alphas == pytest.approx((0.5, 0.5))
    assert not result.critical


def test_opposing_task_gradients_are_critical():
    result = pareto_direction([np.array([1.0, 0.0]), np.array([-1.0, 0.0])])
    assert result.critical
    assert sum(result.alphas) == pytest.approx(1.0)


def test_step_activates_violated_constraints():
    prefs = make_preferences(2)
    grads = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    assert pareto_step(grads, (0.8, 0.2), 1, prefs).active == [0]
    assert pareto_step(grads, (0.8, 0.2), 0, prefs).active == []


def test_active_constraints_are_capped_by_value():
    prefs = make_preferences(5)
    assert active_constraints((1.0, 0.0), 4, prefs, tolerance=1e-3, cap=2) == [0, 1]
    assert active_constraints((1.0, 0.0), 4, prefs, tolerance=1e-3, cap=0) == []


def _opposed_objective(theta):
    losses = np.array([(theta[0] - 1.0) ** 2, (theta[0] + 1.0) ** 2])
    grads = np.array([[2.0 * (theta[0] - 1.0)], [2.0 * (theta[0] + 1.0)]])
    return losses, grads


def test_initial_solution_moves_into_the_region():
    prefs = make_preferences(2)
    result = find_initial_solution(np.array([1.0]), 0, prefs, _opposed_objective, step_size=0.05, max_iters=20)
    assert result.feasible
    assert 5 <= result.iterations <= 6
    assert result.theta[0] <= 1e-9


def test_initial_solution_already_inside():
    prefs = make_preferences(2)
    result = find_initial_solution(np.array([1.0]), 1, prefs, _opposed_objective, step_size=0.05, max_iters=20)
    assert result.feasible and result.iterations == 0


def test_initial_solution_gives_up():
    prefs = make_preferences(2)
    result = find_initial_solution(np.array([1.0]), 0, prefs, _opposed_objective, step_size=0.05, max_iters=2)
    assert not result.feasible
    assert result.iterations == 2


def test_initial_solution_rejects_non_finite_losses():
    def broken(theta):
        return np.array([np.nan, 1.0]), np.zeros((2, 1))

    with pytest.raises(NumericError):
        find_initial_solution(np.zeros(1), 0, make_preferences(2), broken, 0.05, 5)


def _distance_to_segment(point, a, b):
    a, b, point = np.asarray(a, float), np.asarray(b, float), np.asarray(point, float)
    t = np.clip((point - a) @ (b - a) / ((b - a) @ (b - a)), 0.0, 1.0)
    return float(np.linalg.norm(point - (a + t * (b - a))))


def test_solutions_reach_the_front_of_a_convex_problem():
    problem = QuadraticProblem((1.0, 0.0), (0.0, 1.0))
    prefs = make_preferences(5)
    training = TrainingConfig(epochs=400, lr=0.05, lr_decay=0.99)
    pareto = ParetoConfig(init_step=0.05, init_max_iters=200)
    results = [train_pareto(problem, prefs, k, training, pareto, seed=0) for k in range(5)]
    for result in results:
        assert result.feasible
        assert _distance_to_segment(result.theta, (1.0, 0.0), (0.0, 1.0)) < 0.05
    assert results[0].losses[0] > results[-1].losses[0]
    assert results[0].losses[1] < results[-1].losses[1]


def test_fixed_weights_minimise_the_weighted_sum():
    problem = QuadraticProblem((1.0, 0.0), (0.0, 1.0))
    training = TrainingConfig(epochs=400, lr=0.05, lr_decay=0.99)
    result = train_pareto(problem, None, 0, training, ParetoConfig(), fixed_alphas=(0.5, 0.5))
    assert result.initial is None
    assert np.allclose(result.theta, [0.5, 0.5], atol=0.05)
    assert all((r.alpha_1, r.alpha_2) == (0.5, 0.5) for r in result.trajectory)


def test_trajectory_record_keys():
    record = TrajectoryRecord(3, 0.5, 0.25, 0.6, 0.4, 2)
    assert record.to_dict() == {"step": 3, "L1": 0.5, "L2": 0.25, "alpha1": 0.6, "alpha2": 0.4, "k": 2}


def test_front_solutions_are_distinct_members_of_their_regions():
    problem = QuadraticProblem((1.0, 0.0), (0.0, 1.0))
    prefs = make_preferences(5)
    training = TrainingConfig(epochs=400, lr=0.05, lr_decay=0.99)
    pareto = ParetoConfig(init_step=0.05, init_max_iters=200)
    start, _ = problem.evaluate(problem.initial_parameters())
    results = [train_pareto(problem, prefs, k, training, pareto, seed=0) for k in range(5)]
    for result in results:
        assert in_subregion(result.losses / start, result.k, prefs)
    for i in range(5):
        for j in range(i + 1, 5):
            assert np.linalg.norm(results[i].theta - results[j].theta) > 1e-6


def test_grid_membership_matches_an_inner_product_scan():
    count = 10
    prefs = make_preferences(count)
    angles = [j * (math.pi / 2) / (count - 1) for j in range(count)]
    units = [(math.cos(a), math.sin(a)) for a in angles]
    for x in np.linspace(0.0, 1.0, 100):
        for y in np.linspace(0.0, 1.0, 100):
            products = [u[0] * x + u[1] * y for u in units]
            best = max(products)
            members = [k for k in range(count) if in_subregion((x, y), k, prefs)]
            near = [k for k in range(count) if products[k] >= best - 1e-9]
            assert members and set(members) <= set(near)
            if len(near) == 1:
                assert members == near


@pytest.mark.parametrize("seed", range(100))
def test_min_norm_beats_random_simplex_points(seed):
    rng = np.random.default_rng(seed)
    count = int(rng.integers(2, 7))
    dim = int(rng.integers(5, 51))
    gradients = rng.normal(size=(count, dim))
    result = min_norm_direction(list(gradients))
    assert result.weights.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(result.weights >= -1e-9)
    samples = rng.dirichlet(np.ones(count), size=10_000)
    sampled_norms = np.linalg.norm(samples @ gradients, axis=1)
    assert result.norm <= sampled_norms.min() + 1e-9
