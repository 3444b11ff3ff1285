"""Independent validation machinery: brute force and bound checks.

Everything here deliberately avoids the main code paths it certifies.
Brute-force replay composes materialized projector matrices instead of the
implicit pseudoinverse update; bound checks rerun fresh collections and
compare observed losses against closed-form rates with a small absolute
slack for floating-point accumulation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import LearnerState, TaskCollection
from .generators import gen_adversarial_highdim, gen_isotropic, gen_rank_dminus1
from .metrics import avg_loss
from .orderings import (
    GREEDY_MD,
    HYBRID_MD,
    HYBRID_MR,
    HybridState,
    OrderingPolicy,
    md_score,
    mr_score,
)
from .simulate import run_policy

__all__ = [
    "BoundReport",
    "BOUND_SLACK",
    "GREEDY_REP_CONSTANT",
    "brute_force_best_ordering",
    "replay_permutation",
    "check_rank_dminus1_loss_bound",
    "check_with_repetition_bound",
    "check_adversarial_repetition_bound",
    "repetition_bound_report",
    "check_hybrid_phase_contract",
]

BOUND_SLACK = 1e-10  # absorbs floating-point accumulation; beyond it, fail
GREEDY_REP_CONSTANT = 4.0 * math.exp(8.0 / 3.0) / 3.0  # repetition-rate constant
MAX_BRUTE_FORCE_TASKS = 9

FINAL_DISTANCE_SQ = "final_distance_sq"
FINAL_AVG_LOSS = "final_avg_loss"


@dataclass
class BoundReport:
    """Outcome of one bound check; ``violations`` must be 0 to accept."""

    bound_name: str
    instances_checked: int
    violations: int
    worst_margin: float  # min over instances of (bound - observed)

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def csv_row(self) -> str:
        return (
            f"{self.bound_name},{self.instances_checked},"
            f"{self.violations},{self.worst_margin:.17g}"
        )


def replay_permutation(
    collection: TaskCollection, order, w0: Optional[np.ndarray] = None
) -> np.ndarray:
    """Final iterate of a fixed visiting order, via explicit projectors.

    Composes materialized P_m = I - X+ X on (w - w*) directly; this is the
    independent path used to cross-check the implicit update.
    """
    w_star = collection.joint_solution
    start = collection.w0 if w0 is None else np.asarray(w0, dtype=float)
    projectors = {}
    v = start - w_star
    for idx in order:
        P = projectors.get(idx)
        if P is None:
            P = collection.caches[idx].projector_matrix(collection.tasks[idx])
            projectors[idx] = P
        v = P @ v
    return w_star + v


def brute_force_best_ordering(
    collection: TaskCollection,
    w0: Optional[np.ndarray] = None,
    objective: str = FINAL_DISTANCE_SQ,
) -> Tuple[tuple, float]:
    """Enumerate all T! single-pass orderings and return the best one.

    Ties keep the lexicographically smallest permutation.  Refuses T > 9
    (factorial blow-up).
    """
    T = collection.n_tasks
    if T > MAX_BRUTE_FORCE_TASKS:
        raise ValueError(f"brute force limited to T <= {MAX_BRUTE_FORCE_TASKS}, got {T}")
    if objective not in (FINAL_DISTANCE_SQ, FINAL_AVG_LOSS):
        raise ValueError(f"unknown objective {objective!r}")
    w_star = collection.joint_solution
    start = collection.w0 if w0 is None else np.asarray(w0, dtype=float)
    projectors = [
        collection.caches[i].projector_matrix(collection.tasks[i]) for i in range(T)
    ]
    v0 = start - w_star
    best_perm, best_val = None, None
    for perm in itertools.permutations(range(T)):
        v = v0
        for idx in perm:
            v = projectors[idx] @ v
        if objective == FINAL_DISTANCE_SQ:
            val = float(v @ v) / collection.norm_ref**2
        else:
            val = avg_loss(collection, w_star + v)
        if best_val is None or val < best_val:
            best_perm, best_val = perm, val
    return best_perm, best_val


def check_rank_dminus1_loss_bound(d: int, T: int, trials: int, seed: int) -> BoundReport:
    """Final greedy-MD loss on rank-(d-1) collections stays below 1/(eT)."""
    if d < 2 or T < 1:
        raise ValueError("need d >= 2 and T >= 1")
    bound = 1.0 / (math.e * T)
    violations = 0
    worst = math.inf
    for trial in range(trials):
        collection = gen_rank_dminus1(d, T, seed + trial)
        result = run_policy(
            collection, OrderingPolicy(kind=GREEDY_MD), log_every=0, keep_iterates=False
        )
        loss = avg_loss(collection, result.final_iterate)
        margin = bound - loss
        worst = min(worst, margin)
        if loss > bound + BOUND_SLACK:
            violations += 1
    return BoundReport(
        bound_name=f"rank_dminus1_loss<=1/(eT) d={d} T={T}",
        instances_checked=trials,
        violations=violations,
        worst_margin=worst,
    )


def repetition_bound_report(
    collection: TaskCollection, k_max: int, label: str, seed: int = 0
) -> BoundReport:
    """Greedy-MD-with-repetition loss <= (4 e^{8/3} / 3) (k+1)^{-1/3}, k >= 2."""
    if k_max < 2:
        raise ValueError("need k_max >= 2")
    result = run_policy(
        collection,
        OrderingPolicy(kind=GREEDY_MD, repetition=True, seed=seed),
        iterations=k_max,
        log_every=1,
        keep_iterates=False,
    )
    violations = 0
    worst = math.inf
    checked = 0
    for row in result.metrics:
        if row.iteration < 2:
            continue
        checked += 1
        bound = GREEDY_REP_CONSTANT * (row.iteration + 1) ** (-1.0 / 3.0)
        margin = bound - row.avg_loss
        worst = min(worst, margin)
        if row.avg_loss > bound + BOUND_SLACK:
            violations += 1
    return BoundReport(
        bound_name=label,
        instances_checked=checked,
        violations=violations,
        worst_margin=worst,
    )


def check_with_repetition_bound(
    d: int, r: int, T: int, k_max: int, trials: int, seed: int
) -> BoundReport:
    """Repetition-rate check over fresh isotropic collections."""
    violations = 0
    worst = math.inf
    checked = 0
    for trial in range(trials):
        collection = gen_isotropic(d, r, T, seed + trial)
        rep = repetition_bound_report(collection, k_max, label="inner", seed=seed + trial)
        violations += rep.violations
        worst = min(worst, rep.worst_margin)
        checked += rep.instances_checked
    return BoundReport(
        bound_name=f"greedy_rep_loss<=C(k+1)^(-1/3) d={d} r={r} T={T}",
        instances_checked=checked,
        violations=violations,
        worst_margin=worst,
    )


def check_adversarial_repetition_bound(d: int, k_max: int) -> BoundReport:
    """Same rate on the high-dimensional adversarial family (repetition escapes it)."""
    _, collection, _ = gen_adversarial_highdim(d)
    rep = repetition_bound_report(collection, k_max, label="inner")
    return BoundReport(
        bound_name=f"greedy_rep_loss<=C(k+1)^(-1/3) adversarial d={d}",
        instances_checked=rep.instances_checked,
        violations=rep.violations,
        worst_margin=rep.worst_margin,
    )


def check_hybrid_phase_contract(
    state: LearnerState,
    hybrid: HybridState,
    threshold: float,
    collection: TaskCollection,
    kind: str = HYBRID_MD,
) -> BoundReport:
    """Verify a hybrid run's phase structure from its stored iterates.

    Recomputes the best greedy score over the remaining pool at every step
    and checks: greedy-phase steps all met the threshold, the first random
    draw followed a below-threshold step, and the run visited all of [T].
    """
    if kind not in (HYBRID_MD, HYBRID_MR):
        raise ValueError(f"kind must be a hybrid kind, got {kind!r}")
    if state.iterates is None:
        raise ValueError("run must keep iterates for contract checking")
    T = collection.n_tasks
    switch = hybrid.switch_step  # first random iteration, or None
    violations = 0
    worst = math.inf
    checked = 0
    offending = []

    remaining = set(range(T))
    for rec in state.history:
        w_before = state.iterates[rec.step - 1]
        best = -math.inf
        for i in sorted(remaining):
            if kind == HYBRID_MR:
                s = mr_score(collection.tasks[i], w_before)
            else:
                s = md_score(collection.tasks[i], collection.caches[i], w_before)
            best = max(best, s)
        in_greedy = switch is None or rec.step < switch
        checked += 1
        if in_greedy:
            margin = best - threshold
            worst = min(worst, margin)
            if best < threshold:
                violations += 1
                offending.append(rec.step)
        elif rec.step == switch:
            margin = threshold - best
            worst = min(worst, margin)
            if best >= threshold:
                violations += 1
                offending.append(rec.step)
        remaining.discard(rec.chosen)

    if len(state.history) == T and set(state.visited) != set(range(T)):
        violations += 1
        offending.append(-1)

    name = f"hybrid_phase_contract kind={kind} threshold={threshold:.6g}"
    if offending:
        name += f" offending_steps={offending}"
    return BoundReport(
        bound_name=name,
        instances_checked=checked,
        violations=violations,
        worst_margin=worst,
    )
