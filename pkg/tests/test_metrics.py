import numpy as np
import pytest

from taskorder.core import Task, TaskCollection, residual_norm_sq
from taskorder.generators import gen_adversarial_highdim, gen_isotropic
from taskorder.metrics import avg_loss, distance_sq, forgetting, regret
from taskorder.orderings import OrderingPolicy
from taskorder.simulate import run_policy


def test_avg_loss_zero_at_solution(iso_small):
    assert avg_loss(iso_small, iso_small.joint_solution) <= 1e-18


def test_avg_loss_degenerate_radius():
    task = Task(features=np.zeros((1, 2)), targets=np.zeros(1))
    coll = TaskCollection.build([task])
    with pytest.raises(ValueError):
        avg_loss(coll, np.zeros(2))


def test_avg_loss_unnormalized_toggle(iso_small):
    rng = np.random.default_rng(0)
    w = rng.standard_normal(iso_small.dim)
    raw = avg_loss(iso_small, w, normalized=False)
    scaled = avg_loss(iso_small, w)
    factor = iso_small.norm_ref**2 * iso_small.radius**2
    assert raw == pytest.approx(scaled * factor, rel=1e-12)


def test_avg_loss_adversarial_floor_d100():
    # Full greedy pass over the d=100 catastrophic family.
    _, coll, _ = gen_adversarial_highdim(100)
    result = run_policy(coll, OrderingPolicy(kind="greedy_md"), log_every=0)
    assert avg_loss(coll, result.final_iterate) >= 1 / 8 - 1 / 400 - 1e-10


def test_distance_examples(iso_small):
    assert distance_sq(iso_small.joint_solution, iso_small) <= 1e-18
    assert distance_sq(iso_small.w0, iso_small) == pytest.approx(1.0, rel=1e-12)


def test_distance_dimension_mismatch(iso_small):
    with pytest.raises(ValueError):
        distance_sq(np.zeros(3), iso_small)


@pytest.mark.parametrize("kind", ["greedy_md", "random_without", "min_distance"])
def test_loss_bounded_by_distance_along_runs(iso_small, kind):
    # avg_loss <= distance_sq at every logged step, and distance_sq is
    # non-increasing.
    result = run_policy(iso_small, OrderingPolicy(kind=kind, seed=9))
    prev = np.inf
    for row in result.metrics:
        assert row.avg_loss <= row.distance_sq + 1e-8
        assert row.distance_sq <= prev + 1e-12
        assert row.avg_loss >= 0.0 and np.isfinite(row.avg_loss)
        prev = row.distance_sq


def test_forgetting_just_fitted(iso_small):
    result = run_policy(iso_small, OrderingPolicy(kind="greedy_md"), iterations=1)
    assert forgetting(result.state, iso_small) <= 1e-18


def test_forgetting_single_pass_equals_avg_loss(iso_small):
    result = run_policy(iso_small, OrderingPolicy(kind="greedy_md"), log_every=0)
    f = forgetting(result.state, iso_small)
    l = avg_loss(iso_small, result.final_iterate)
    assert f == pytest.approx(l, abs=1e-10)


def test_forgetting_with_replacement_multiset(iso_small):
    # Must match direct summation over the visited multiset.
    result = run_policy(
        iso_small,
        OrderingPolicy(kind="greedy_md", repetition=True, seed=2),
        iterations=25,
        log_every=0,
    )
    state = result.state
    w = state.iterate
    direct = sum(
        residual_norm_sq(iso_small.tasks[i], w) for i in state.visited
    ) / len(state.visited)
    direct /= iso_small.norm_ref**2 * iso_small.radius**2
    assert forgetting(state, iso_small) == pytest.approx(direct, rel=1e-12)
    assert len(state.visited) > len(set(state.visited))  # actually revisited


def test_forgetting_empty_history(iso_small):
    from taskorder.core import LearnerState

    with pytest.raises(ValueError):
        forgetting(LearnerState(iso_small.w0), iso_small)


def test_regret_zero_when_starting_at_solution():
    X = np.array([[1.0, 0.0]])
    w_star = np.array([1.0, 0.0])
    task = Task(features=X, targets=X @ w_star)
    coll = TaskCollection.build([task], w0=w_star)
    result = run_policy(coll, OrderingPolicy(kind="greedy_md"), log_every=0)
    assert regret(result.state, coll) <= 1e-18


def test_regret_single_step(iso_small):
    result = run_policy(iso_small, OrderingPolicy(kind="greedy_md"), iterations=1)
    chosen = result.state.visited[0]
    expected = residual_norm_sq(iso_small.tasks[chosen], iso_small.w0)
    expected /= iso_small.norm_ref**2 * iso_small.radius**2
    assert regret(result.state, iso_small) == pytest.approx(expected, rel=1e-12)


def test_regret_recomputation_oracle(iso_small):
    # Recompute from the stored pre-step iterates; paths must agree to 1e-12.
    result = run_policy(iso_small, OrderingPolicy(kind="random_without", seed=4))
    state = result.state
    total = 0.0
    for rec in state.history:
        w_before = state.iterates[rec.step - 1]
        total += residual_norm_sq(iso_small.tasks[rec.chosen], w_before)
    expected = total / len(state.history) / (iso_small.norm_ref**2 * iso_small.radius**2)
    assert regret(state, iso_small) == pytest.approx(expected, abs=1e-12)


def test_regret_empty_history(iso_small):
    from taskorder.core import LearnerState

    with pytest.raises(ValueError):
        regret(LearnerState(iso_small.w0), iso_small)
