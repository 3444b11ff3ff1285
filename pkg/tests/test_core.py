import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taskorder.core import (
    LearnerState,
    ProjectorCache,
    Task,
    TaskCollection,
    fit_task,
    min_norm_joint_solution,
    pseudoinverse,
    residual_norm_sq,
)
from taskorder.generators import gen_isotropic, gen_rank_dminus1
from taskorder.orderings import OrderingPolicy
from taskorder.simulate import run_policy

REL_TOL = 1e-12


# ---------------------------------------------------------------------------
# pseudoinverse
# ---------------------------------------------------------------------------


def test_pinv_identity():
    assert np.allclose(pseudoinverse(np.eye(3)), np.eye(3), atol=1e-14)


def test_pinv_zero_matrix():
    P = pseudoinverse(np.zeros((2, 3)))
    assert P.shape == (3, 2)
    assert np.all(P == 0.0)


def test_pinv_diagonal():
    P = pseudoinverse(np.diag([2.0, 0.0]))
    assert np.allclose(P, np.diag([0.5, 0.0]), atol=1e-14)


def test_pinv_rejects_bad_input():
    with pytest.raises(ValueError):
        pseudoinverse(np.array([[1.0, np.nan]]))
    with pytest.raises(ValueError):
        pseudoinverse(np.eye(2), rel_tol=0.0)


def _penrose_errors(X, P):
    return max(
        np.max(np.abs(X @ P @ X - X)),
        np.max(np.abs(P @ X @ P - P)),
        np.max(np.abs((X @ P).T - X @ P)),
        np.max(np.abs((P @ X).T - P @ X)),
    )


@pytest.mark.parametrize("seed", range(8))
def test_pinv_penrose_random(seed):
    rng = np.random.default_rng(seed)
    m, n = rng.integers(1, 7, size=2)
    X = rng.standard_normal((m, n))
    smax = np.linalg.norm(X, 2)
    assert _penrose_errors(X, pseudoinverse(X)) <= 10 * REL_TOL * smax + 1e-13


@pytest.mark.parametrize("seed", range(8))
def test_pinv_penrose_rank_deficient(seed):
    rng = np.random.default_rng(100 + seed)
    inner = int(rng.integers(1, 4))
    X = rng.standard_normal((5, inner)) @ rng.standard_normal((inner, 6))
    smax = np.linalg.norm(X, 2)
    assert _penrose_errors(X, pseudoinverse(X)) <= 10 * REL_TOL * smax + 1e-12


# ---------------------------------------------------------------------------
# fit_task
# ---------------------------------------------------------------------------


def test_fit_task_fixed_point(iso_small):
    w_star = iso_small.joint_solution
    for task, cache, _ in iso_small.iter_unique():
        assert np.allclose(fit_task(w_star, task, cache), w_star, atol=1e-10)


def test_fit_task_axis_projection():
    task = Task(features=np.array([[1.0, 0.0]]), targets=np.array([0.0]))
    cache = ProjectorCache.from_task(task)
    out = fit_task(np.array([1.0, 1.0]), task, cache)
    assert np.allclose(out, [0.0, 1.0], atol=1e-14)


def test_fit_task_residual_vanishes(iso_small):
    rng = np.random.default_rng(5)
    w = rng.standard_normal(iso_small.dim)
    for idx in range(5):
        task, cache = iso_small.tasks[idx], iso_small.caches[idx]
        w_new = fit_task(w, task, cache)
        assert residual_norm_sq(task, w_new) <= 1e-18


@settings(deadline=None, max_examples=40)
@given(st.integers(0, 10_000))
def test_fit_task_pythagorean(seed):
    # ||w_prev - w*||^2 - ||w_out - w*||^2 == ||w_out - w_prev||^2
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((3, 5))
    w_star = rng.standard_normal(5)
    task = Task(features=X, targets=X @ w_star)
    cache = ProjectorCache.from_task(task)
    w_prev = rng.standard_normal(5)
    w_out = fit_task(w_prev, task, cache)
    lhs = float((w_prev - w_star) @ (w_prev - w_star)) - float(
        (w_out - w_star) @ (w_out - w_star)
    )
    rhs = float((w_out - w_prev) @ (w_out - w_prev))
    assert abs(lhs - rhs) <= 1e-9


def test_fit_task_dimension_mismatch(iso_small):
    with pytest.raises(ValueError):
        fit_task(np.zeros(3), iso_small.tasks[0], iso_small.caches[0])


def test_fit_explicit_projector_equivalence(iso_small):
    # w* + P (w - w*) must match the implicit update entrywise.
    rng = np.random.default_rng(11)
    w = rng.standard_normal(iso_small.dim)
    w_star = iso_small.joint_solution
    for idx in range(4):
        task, cache = iso_small.tasks[idx], iso_small.caches[idx]
        P = cache.projector_matrix(task)
        explicit = w_star + P @ (w - w_star)
        assert np.max(np.abs(explicit - fit_task(w, task, cache))) <= 1e-10


# ---------------------------------------------------------------------------
# projector cache invariants
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("make", [
    lambda: gen_isotropic(12, 3, 4, seed=2),
    lambda: gen_rank_dminus1(6, 4, seed=3),
])
def test_projector_invariants(make):
    coll = make()
    tol = 1e-10
    for task, cache, _ in coll.iter_unique():
        P = cache.projector_matrix(task)
        assert np.max(np.abs(P - P.T)) <= tol
        assert np.max(np.abs(P @ P - P)) <= tol
        pinv = cache.pinv if isinstance(cache.pinv, np.ndarray) else cache.pinv.toarray()
        assert np.max(np.abs(P @ pinv)) <= tol


# ---------------------------------------------------------------------------
# min_norm_joint_solution / TaskCollection
# ---------------------------------------------------------------------------


def test_min_norm_single_equation():
    task = Task(features=np.array([[1.0, 0.0]]), targets=np.array([3.0]))
    assert np.allclose(min_norm_joint_solution([task]), [3.0, 0.0], atol=1e-12)


def test_min_norm_recovers_teacher():
    coll = gen_isotropic(20, 4, 10, seed=13)  # stacked rank 20 < 40 rows
    assert np.max(np.abs(coll.joint_solution - coll.teacher)) <= 1e-8


def test_min_norm_empty():
    with pytest.raises(ValueError):
        min_norm_joint_solution([])


def test_contradictory_tasks_flagged():
    t1 = Task(features=np.array([[1.0, 0.0]]), targets=np.array([0.0]))
    t2 = Task(features=np.array([[1.0, 0.0]]), targets=np.array([1.0]))
    coll = TaskCollection.build([t1, t2])
    assert not coll.realizable
    assert coll.stacked_residual > 0.1


def test_collection_radius(iso_small):
    smax = max(np.linalg.norm(t.dense_features(), 2) for t in iso_small.tasks)
    assert abs(iso_small.radius - smax) <= 1e-12


def test_collection_degenerate_norm_ref():
    # w0 == w*: norm_ref falls back to 1 and losses are exactly 0.
    X = np.array([[1.0, 0.0]])
    w_star = np.array([2.0, 0.0])
    task = Task(features=X, targets=X @ w_star)
    coll = TaskCollection.build([task], w0=w_star)
    assert coll.norm_ref == 1.0
    assert residual_norm_sq(task, coll.w0) == 0.0


def test_collection_dimension_mismatch():
    t1 = Task(features=np.eye(2), targets=np.zeros(2))
    t2 = Task(features=np.eye(3), targets=np.zeros(3))
    with pytest.raises(ValueError):
        TaskCollection.build([t1, t2])


# ---------------------------------------------------------------------------
# residual_norm_sq
# ---------------------------------------------------------------------------


def test_residual_at_joint_solution(iso_small):
    for task in iso_small.tasks:
        assert residual_norm_sq(task, iso_small.joint_solution) <= 1e-18


def test_residual_hand_values():
    t = Task(features=np.array([[1.0, 0.0]]), targets=np.array([0.0]))
    assert residual_norm_sq(t, np.array([1.0, 1.0])) == pytest.approx(1.0, abs=1e-14)
    t2 = Task(features=np.array([[1.0, 0.0], [0.0, 2.0]]), targets=np.zeros(2))
    assert residual_norm_sq(t2, np.array([1.0, 1.0])) == pytest.approx(5.0, abs=1e-14)


def test_residual_dimension_mismatch():
    t = Task(features=np.eye(2), targets=np.zeros(2))
    with pytest.raises(ValueError):
        residual_norm_sq(t, np.zeros(3))


# ---------------------------------------------------------------------------
# run-level invariants
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("kind", ["greedy_md", "greedy_mr", "min_distance", "random_without"])
def test_projection_monotonicity(iso_small, kind):
    # ||w_t - w*|| never increases, and each step obeys the Pythagorean
    # identity to 1e-8 * ||w0 - w*||^2.
    result = run_policy(iso_small, OrderingPolicy(kind=kind, seed=1), log_every=0)
    w_star = iso_small.joint_solution
    tol = 1e-8 * iso_small.norm_ref**2
    iterates = result.state.iterates
    for t in range(1, len(iterates)):
        d_prev = float((iterates[t - 1] - w_star) @ (iterates[t - 1] - w_star))
        d_curr = float((iterates[t] - w_star) @ (iterates[t] - w_star))
        assert d_curr <= d_prev + 1e-12
        step = iterates[t] - iterates[t - 1]
        assert abs((d_prev - d_curr) - float(step @ step)) <= tol


def test_learner_state_bookkeeping(iso_small):
    result = run_policy(iso_small, OrderingPolicy(kind="greedy_md"), log_every=0)
    state = result.state
    assert state.step == len(state.history) == iso_small.n_tasks
    assert len(state.visited) == len(set(state.visited))
    assert set(state.visited) <= set(range(iso_small.n_tasks))


def test_learner_state_keep_iterates_flag(iso_small):
    result = run_policy(
        iso_small, OrderingPolicy(kind="greedy_md"), log_every=0, keep_iterates=False
    )
    assert result.state.iterates is None
