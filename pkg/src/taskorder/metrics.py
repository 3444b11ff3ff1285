"""Scalar diagnostics of a continual run: loss, distance, forgetting, regret.

All quantities are normalized by ``norm_ref^2 * R^2`` (loss-like) or
``norm_ref^2`` (distance), where ``norm_ref = ||w0 - w*||`` and R is the
collection radius.  Pass ``normalized=False`` to get raw sums for debugging.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LearnerState, TaskCollection, residual_norm_sq

__all__ = ["MetricsRow", "avg_loss", "distance_sq", "forgetting", "regret"]


@dataclass
class MetricsRow:
    """Metrics logged after one iteration of a run."""

    iteration: int
    avg_loss: float
    distance_sq: float
    decrement: float
    chosen_index: int


def avg_loss(collection: TaskCollection, w: np.ndarray, normalized: bool = True) -> float:
    """Average squared residual over all T tasks.

    Returns (1 / (norm_ref^2 R^2)) * (1/T) * sum_m ||X_m w - y_m||^2,
    which is 0 at w = w*.  Aliased tasks are evaluated once and weighted
    by multiplicity.
    """
    if collection.radius == 0.0:
        raise ValueError("degenerate collection: radius R is 0")
    total = 0.0
    for task, _, count in collection.iter_unique():
        total += count * residual_norm_sq(task, w)
    total /= collection.n_tasks
    if normalized:
        total /= collection.norm_ref**2 * collection.radius**2
    return total


def distance_sq(w: np.ndarray, collection: TaskCollection, normalized: bool = True) -> float:
    """Squared distance ||w - w*||^2 / norm_ref^2 to the joint solution.

    Non-increasing along any projection run; upper bounds ``avg_loss``.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != collection.joint_solution.shape:
        raise ValueError(
            f"w has shape {w.shape}, expected {collection.joint_solution.shape}"
        )
    delta = w - collection.joint_solution
    out = float(delta @ delta)
    if normalized:
        out /= collection.norm_ref**2
    return out


def forgetting(state: LearnerState, collection: TaskCollection, normalized: bool = True) -> float:
    """Average residual of previously seen tasks at the current iterate.

    (1/k) * sum_{t<=k} ||X_{tau(t)} w_k - y_{tau(t)}||^2, over the multiset
    of visited indices, with the same normalization as ``avg_loss``.  For a
    single pass over all T tasks this coincides with ``avg_loss(w_T)``.
    (The degradation form, loss at k minus loss at fit time, is nonzero only
    for inexact fits; with exact minimization it reduces to this.)
    """
    if not state.history:
        raise ValueError("history is empty")
    w = state.iterate
    memo: dict[int, float] = {}
    total = 0.0
    for idx in state.visited:
        key = id(collection.tasks[idx])
        if key not in memo:
            memo[key] = residual_norm_sq(collection.tasks[idx], w)
        total += memo[key]
    total /= len(state.visited)
    if normalized:
        total /= collection.norm_ref**2 * collection.radius**2
    return total


def regret(state: LearnerState, collection: TaskCollection, normalized: bool = True) -> float:
    """Path-averaged pre-fit residual on the consecutive chosen tasks.

    (1/k) * sum_t ||X_{tau(t)} (w_{t-1} - w*)||^2, computed from the
    residuals recorded before each step.
    """
    if not state.history:
        raise ValueError("history is empty")
    total = sum(rec.prefit_residual_sq for rec in state.history) / len(state.history)
    if normalized:
        total /= collection.norm_ref**2 * collection.radius**2
    return total
