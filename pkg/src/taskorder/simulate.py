"""Sequential learning loop: apply a selection policy over a collection.

One run owns its LearnerState (and HybridState, for hybrid policies); the
collection and caches are immutable and may be shared across concurrent runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import LearnerState, TaskCollection, fit_task, residual_norm_sq
from .metrics import MetricsRow, avg_loss, distance_sq
from .orderings import HYBRID_KINDS, HybridState, OrderingPolicy, next_index

__all__ = ["RunResult", "run_policy"]


@dataclass
class RunResult:
    """Outcome of one run: final state plus metric rows at the log cadence."""

    state: LearnerState
    metrics: list = field(default_factory=list)
    hybrid: Optional[HybridState] = None

    @property
    def final_iterate(self) -> np.ndarray:
        return self.state.iterate


def run_policy(
    collection: TaskCollection,
    policy: OrderingPolicy,
    iterations: Optional[int] = None,
    log_every: int = 1,
    keep_iterates: bool = True,
    w0: Optional[np.ndarray] = None,
) -> RunResult:
    """Run ``iterations`` exact-minimization steps under ``policy``.

    ``iterations`` defaults to T (a full single pass).  Metrics are logged
    after every ``log_every``-th step and always at the final step;
    ``log_every=0`` disables metric logging entirely (cheap runs for bound
    checks).  Stops early if a without-repetition pool is exhausted.
    """
    k = collection.n_tasks if iterations is None else int(iterations)
    if k < 1:
        raise ValueError("iterations must be at least 1")
    start = collection.w0 if w0 is None else np.asarray(w0, dtype=float)

    state = LearnerState(start, keep_iterates=keep_iterates)
    rng = np.random.Generator(np.random.PCG64(policy.seed)) if policy.uses_rng else None
    hybrid = HybridState() if policy.kind in HYBRID_KINDS else None

    metrics: list[MetricsRow] = []
    for t in range(1, k + 1):
        idx = next_index(policy, state, collection, rng=rng, hybrid=hybrid)
        if idx is None:
            break
        task = collection.tasks[idx]
        prefit = residual_norm_sq(task, state.iterate)
        w_new = fit_task(state.iterate, task, collection.caches[idx])
        state.advance(idx, w_new, prefit)
        if log_every and (t % log_every == 0 or t == k):
            metrics.append(
                MetricsRow(
                    iteration=t,
                    avg_loss=avg_loss(collection, state.iterate),
                    distance_sq=distance_sq(state.iterate, collection),
                    decrement=state.history[-1].decrement,
                    chosen_index=idx,
                )
            )
    return RunResult(state=state, metrics=metrics, hybrid=hybrid)
