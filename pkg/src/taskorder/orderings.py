"""Task-selection policies: random, greedy, min-distance, and hybrid.

Greedy rules score candidate tasks from the learner's observable residuals:

* Maximum Distance (MD) picks the task inducing the largest step,
  ``||X+ (X w - y)||^2``.
* Maximum Residual (MR) picks the largest raw residual ``||X w - y||^2``.
* MinDistance is MD with argmax replaced by argmin.

Hybrid policies follow the greedy rule while the best score stays at or
above a threshold, then permanently switch to uniform sampling without
replacement over the remaining tasks.

All argmax/argmin ties break toward the smallest index, independent of
iteration order.  Randomness comes from a PCG64 generator seeded per run,
so every (policy, seed, collection) triple is fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .core import LearnerState, ProjectorCache, Task, TaskCollection, residual_norm_sq

__all__ = [
    "OrderingPolicy",
    "HybridState",
    "BetaThreshold",
    "md_score",
    "mr_score",
    "next_index",
    "beta_min_threshold",
    "RANDOM_WITH",
    "RANDOM_WITHOUT",
    "GREEDY_MD",
    "GREEDY_MR",
    "MIN_DISTANCE",
    "HYBRID_MD",
    "HYBRID_MR",
]

RANDOM_WITH = "random_with"
RANDOM_WITHOUT = "random_without"
GREEDY_MD = "greedy_md"
GREEDY_MR = "greedy_mr"
MIN_DISTANCE = "min_distance"
HYBRID_MD = "hybrid_md"
HYBRID_MR = "hybrid_mr"

GREEDY_KINDS = (GREEDY_MD, GREEDY_MR, MIN_DISTANCE)
HYBRID_KINDS = (HYBRID_MD, HYBRID_MR)
RANDOM_KINDS = (RANDOM_WITH, RANDOM_WITHOUT)
ALL_KINDS = RANDOM_KINDS + GREEDY_KINDS + HYBRID_KINDS


@dataclass(frozen=True)
class OrderingPolicy:
    """Immutable descriptor of a selection rule.

    ``repetition`` applies to greedy kinds only (single pass when False).
    ``threshold`` is the absolute hybrid switch level: nominally in
    [0, ||w0 - w*||^2] for hybrid MD and [0, R^2 ||w0 - w*||^2] for
    hybrid MR; larger values simply switch to random immediately.
    ``threshold=None`` on a hybrid policy means the runner should resolve
    it from the collection (see harness presets).
    """

    kind: str
    repetition: bool = False
    threshold: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.repetition and self.kind not in GREEDY_KINDS:
            raise ValueError("repetition flag applies to greedy kinds only")
        if self.threshold is not None:
            if self.kind not in HYBRID_KINDS:
                raise ValueError("threshold applies to hybrid kinds only")
            if self.threshold < 0:
                raise ValueError("threshold must be non-negative")

    @property
    def uses_rng(self) -> bool:
        return self.kind in RANDOM_KINDS or self.kind in HYBRID_KINDS

    @property
    def single_pass(self) -> bool:
        return not (self.kind == RANDOM_WITH or (self.kind in GREEDY_KINDS and self.repetition))

    @property
    def label(self) -> str:
        if self.kind in GREEDY_KINDS and self.repetition:
            return self.kind + "_rep"
        return self.kind


@dataclass
class HybridState:
    """Greedy-phase / random-phase tracker for one hybrid run.

    The phase flips Greedy -> Random at most once; ``switch_step`` is the
    1-based iteration whose selection first fell below the threshold.
    """

    phase: str = "greedy"
    switch_step: Optional[int] = None


class BetaThreshold(NamedTuple):
    """Relative hybrid threshold plus whether its guarantee applies."""

    value: float
    precondition_ok: bool


def md_score(task: Task, cache: ProjectorCache, w: np.ndarray) -> float:
    """Squared step length the task would induce: ||X+ (X w - y)||^2.

    Equals ||(I - P)(w - w*)||^2 on realizable collections, but needs only
    the residual, never w*.
    """
    step = cache.pinv @ task.residual(w)
    step = np.asarray(step).ravel()
    return float(step @ step)


def mr_score(task: Task, w: np.ndarray) -> float:
    """Raw squared residual ||X w - y||^2 of the candidate task."""
    return residual_norm_sq(task, w)


def beta_min_threshold(T: int, C: float, alpha: float) -> BetaThreshold:
    """Smallest relative hybrid threshold that keeps a C/T^alpha rate.

    Returns beta_tilde = (T^alpha - C(1-alpha)) / (C T) together with a flag
    for the guarantee's precondition C/T^alpha <= 1/(2-alpha).  The caller
    scales the value by ||w0 - w*||^2 (MD) or R^2 ||w0 - w*||^2 (MR).
    """
    if C <= 0:
        raise ValueError("C must be positive")
    if not (0 < alpha <= 1):
        raise ValueError("alpha must lie in (0, 1]")
    if T < 1:
        raise ValueError("T must be at least 1")
    value = (T**alpha - C * (1 - alpha)) / (C * T)
    precondition_ok = C / T**alpha <= 1.0 / (2.0 - alpha)
    return BetaThreshold(value=value, precondition_ok=precondition_ok)


def _candidates(policy_allows_repeat: bool, state: LearnerState, n_tasks: int):
    if policy_allows_repeat:
        return range(n_tasks)
    visited = state.visited_set
    return [i for i in range(n_tasks) if i not in visited]


def _best_by_score(collection: TaskCollection, w, candidates, kind: str, maximize: bool):
    """Scan candidates in index order; ties keep the first (smallest) index.

    Scores are memoized by task object identity, so collections that alias
    one Task object many times score it once per step.  Candidate scores are
    independent pure reads and could be computed concurrently; the argmax
    reduction here is sequential.
    """
    best_i = None
    best_v = None
    memo: dict[int, float] = {}
    for i in candidates:
        task = collection.tasks[i]
        key = id(task)
        v = memo.get(key)
        if v is None:
            if kind == "mr":
                v = mr_score(task, w)
            else:
                v = md_score(task, collection.caches[i], w)
            memo[key] = v
        if best_v is None or (v > best_v if maximize else v < best_v):
            best_i, best_v = i, v
    return best_i, best_v


def next_index(
    policy: OrderingPolicy,
    state: LearnerState,
    collection: TaskCollection,
    rng: Optional[np.random.Generator] = None,
    hybrid: Optional[HybridState] = None,
) -> Optional[int]:
    """Select the next task index, or None when the pool is exhausted.

    Greedy kinds take the argmax (argmin for MinDistance) of their score
    over the candidate set: all of [T] when repetition is allowed, the
    unvisited tasks otherwise.  Random kinds draw uniformly.  Hybrid kinds
    apply the greedy rule while its best score >= threshold, then switch
    permanently to uniform without replacement.
    """
    n = collection.n_tasks
    w = state.iterate

    if policy.kind == RANDOM_WITH:
        if rng is None:
            raise ValueError("random policy needs an rng")
        return int(rng.integers(n))

    if policy.kind == RANDOM_WITHOUT:
        if rng is None:
            raise ValueError("random policy needs an rng")
        pool = _candidates(False, state, n)
        if not pool:
            return None
        return int(pool[int(rng.integers(len(pool)))])

    if policy.kind in GREEDY_KINDS:
        cands = _candidates(policy.repetition, state, n)
        if not cands:
            return None
        score_kind = "mr" if policy.kind == GREEDY_MR else "md"
        maximize = policy.kind != MIN_DISTANCE
        best_i, _ = _best_by_score(collection, w, cands, score_kind, maximize)
        return best_i

    # Hybrid kinds.
    if hybrid is None:
        raise ValueError("hybrid policy needs a HybridState")
    if policy.threshold is None:
        raise ValueError("hybrid policy threshold is unresolved")
    pool = _candidates(False, state, n)
    if not pool:
        return None
    if hybrid.phase == "greedy":
        score_kind = "mr" if policy.kind == HYBRID_MR else "md"
        best_i, best_v = _best_by_score(collection, w, pool, score_kind, True)
        if best_v >= policy.threshold:
            return best_i
        hybrid.phase = "random"
        hybrid.switch_step = state.step + 1
    if rng is None:
        raise ValueError("hybrid policy needs an rng for its random phase")
    return int(pool[int(rng.integers(len(pool)))])
