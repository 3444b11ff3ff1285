"""Exact-minimization projection step of continual linear regression.

A learner visits linear regression tasks (X_m, y_m) one at a time, starting
each step from the previous iterate and minimizing the current task's squared
loss exactly.  The resulting closed-form update

    w_t = X+ y + (I - X+ X) w_{t-1}

is an affine orthogonal projection of w_{t-1} onto the task's solution
subspace {w : X w = y}.  This module provides the pseudoinverse, the update,
the minimum-norm joint solution of a task collection, and the containers
shared by the rest of the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Task",
    "TaskCollection",
    "ProjectorCache",
    "LearnerState",
    "StepRecord",
    "pseudoinverse",
    "fit_task",
    "min_norm_joint_solution",
    "residual_norm_sq",
]

DEFAULT_REL_TOL = 1e-12


def _is_sparse(X) -> bool:
    return sp.issparse(X)


def pseudoinverse(X: np.ndarray, rel_tol: float = DEFAULT_REL_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse by SVD with relative truncation.

    Singular values below ``rel_tol * sigma_max`` are treated as zero, making
    the rank decision explicit instead of relying on a library default.

    Parameters
    ----------
    X : np.ndarray
        Matrix of shape (n, d) with finite entries.
    rel_tol : float
        Positive relative truncation threshold.

    Returns
    -------
    np.ndarray
        Pseudoinverse of shape (d, n).  Satisfies the four Penrose
        identities to roughly ``10 * rel_tol * sigma_max``.
    """
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("matrix contains non-finite entries")
    if X.size == 0:
        return X.T.copy()
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(X.T.shape)
    s_inv = np.where(s > rel_tol * s[0], 1.0 / np.where(s > 0, s, 1.0), 0.0)
    return (Vt.T * s_inv) @ U.T


@dataclass(frozen=True)
class Task:
    """One linear regression task (features, targets).

    ``features`` is an (n_m, d) matrix, dense or scipy-sparse;
    ``targets`` has length n_m.  ``orthonormal_rows=True`` declares that the
    rows are orthonormal, in which case the pseudoinverse is the transpose
    (set by generators that construct tasks that way).
    """

    features: object  # (n_m, d) ndarray or sparse matrix
    targets: np.ndarray  # (n_m,)
    orthonormal_rows: bool = False

    def __post_init__(self):
        y = np.asarray(self.targets, dtype=float)
        object.__setattr__(self, "targets", y)
        X = self.features
        if not _is_sparse(X):
            X = np.asarray(X, dtype=float)
            if X.ndim != 2:
                raise ValueError("features must be a 2-D matrix")
            if not np.all(np.isfinite(X)):
                raise ValueError("features contain non-finite entries")
            object.__setattr__(self, "features", X)
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValueError(
                f"targets length {y.shape} does not match feature rows {X.shape[0]}"
            )

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def residual(self, w: np.ndarray) -> np.ndarray:
        """X w - y as a 1-D array."""
        r = self.features @ w - self.targets
        return np.asarray(r).ravel()

    def spectral_norm(self) -> float:
        if self.orthonormal_rows:
            return 1.0
        return float(np.linalg.norm(np.asarray(self.features), 2))

    def dense_features(self) -> np.ndarray:
        X = self.features
        return X.toarray() if _is_sparse(X) else np.asarray(X)


def residual_norm_sq(task: Task, w: np.ndarray) -> float:
    """Squared residual ||X w - y||^2 of one task; 0 iff w solves it."""
    w = np.asarray(w, dtype=float)
    if w.shape != (task.dim,):
        raise ValueError(f"w has shape {w.shape}, expected ({task.dim},)")
    r = task.residual(w)
    return float(r @ r)


@dataclass(frozen=True)
class ProjectorCache:
    """Per-task pseudoinverse, applied implicitly.

    The solution-space projector P = I - X+ X is never materialized on the
    hot path; ``projector_matrix`` builds it on demand for debugging and
    property tests.
    """

    pinv: object  # (d, n_m) ndarray or sparse matrix

    @classmethod
    def from_task(cls, task: Task, rel_tol: float = DEFAULT_REL_TOL) -> "ProjectorCache":
        if task.orthonormal_rows:
            return cls(pinv=task.features.T)
        return cls(pinv=pseudoinverse(np.asarray(task.features), rel_tol))

    def step_from(self, task: Task, w: np.ndarray) -> np.ndarray:
        """One exact-minimization step: w - X+ (X w - y)."""
        correction = self.pinv @ task.residual(w)
        return w - np.asarray(correction).ravel()

    def projector_matrix(self, task: Task) -> np.ndarray:
        """Materialized P = I - X+ X (debug mode; O(d^2) memory)."""
        d = task.dim
        pinv = self.pinv.toarray() if _is_sparse(self.pinv) else np.asarray(self.pinv)
        return np.eye(d) - pinv @ task.dense_features()


def fit_task(w_prev: np.ndarray, task: Task, cache: ProjectorCache) -> np.ndarray:
    """Minimize one task's loss exactly, starting from ``w_prev``.

    Returns the new iterate; the fitted task's residual vanishes and, on
    realizable collections, ``w_t - w* = P (w_{t-1} - w*)``.
    """
    w_prev = np.asarray(w_prev, dtype=float)
    if w_prev.shape != (task.dim,):
        raise ValueError(f"w_prev has shape {w_prev.shape}, expected ({task.dim},)")
    return cache.step_from(task, w_prev)


def min_norm_joint_solution(
    tasks: Sequence[Task], rel_tol: float = DEFAULT_REL_TOL
) -> np.ndarray:
    """Minimum-norm least-squares solution of the vertically stacked system.

    All-zero targets are solved directly (w* = 0); otherwise the stacked
    dense system goes through np.linalg.lstsq with ``rcond=rel_tol``, whose
    solution is the minimum-norm one.
    """
    if len(tasks) == 0:
        raise ValueError("task list is empty")
    d = tasks[0].dim
    for t in tasks:
        if t.dim != d:
            raise ValueError("tasks do not share a dimension")
    if all(np.all(t.targets == 0.0) for t in tasks):
        return np.zeros(d)
    X = np.vstack([t.dense_features() for t in tasks])
    y = np.concatenate([t.targets for t in tasks])
    w, *_ = np.linalg.lstsq(X, y, rcond=rel_tol)
    return w


@dataclass
class TaskCollection:
    """Ordered collection of jointly realizable tasks with cached solvers.

    Attributes
    ----------
    tasks : list of Task
        The T tasks; entries may alias the same Task object.
    dim : int
        Shared feature dimension d.
    radius : float
        R = max_m ||X_m||_2.
    joint_solution : np.ndarray
        Minimum-norm solution w* of the stacked system.
    w0 : np.ndarray
        Starting iterate for runs on this collection (zeros by default).
    norm_ref : float
        ||w0 - w*||, the normalization scale; 1.0 in the degenerate
        w0 == w* case (all losses are then exactly 0).
    realizable : bool
        Whether the stacked residual at w* is within tolerance.
    caches : list of ProjectorCache
        Aligned with ``tasks``; aliased tasks share one cache.
    """

    tasks: list
    dim: int
    radius: float
    joint_solution: np.ndarray
    w0: np.ndarray
    norm_ref: float
    realizable: bool
    stacked_residual: float
    caches: list
    unique_index: np.ndarray  # first position of each distinct task object
    unique_counts: np.ndarray  # multiplicity of each distinct task object
    teacher: Optional[np.ndarray] = None  # generating w_true, when known
    solution_dirs: Optional[np.ndarray] = None  # (T, d) unit v_m for rank-(d-1) tasks
    group_index: Optional[np.ndarray] = None  # task -> construction group id
    extras: dict = field(default_factory=dict)

    @classmethod
    def build(
        cls,
        tasks: Sequence[Task],
        w0: Optional[np.ndarray] = None,
        rel_tol: float = DEFAULT_REL_TOL,
        tol_realize: Optional[float] = None,
        **info,
    ) -> "TaskCollection":
        tasks = list(tasks)
        if not tasks:
            raise ValueError("task list is empty")
        d = tasks[0].dim
        for t in tasks:
            if t.dim != d:
                raise ValueError("tasks do not share a dimension")

        # Deduplicate by object identity so aliased tasks share one cache
        # and metrics can weight by multiplicity.
        first_pos: dict[int, int] = {}
        unique_index: list[int] = []
        unique_counts: list[int] = []
        for i, t in enumerate(tasks):
            key = id(t)
            if key in first_pos:
                unique_counts[first_pos[key]] += 1
            else:
                first_pos[key] = len(unique_index)
                unique_index.append(i)
                unique_counts.append(1)

        cache_by_key = {
            id(tasks[i]): ProjectorCache.from_task(tasks[i], rel_tol)
            for i in unique_index
        }
        caches = [cache_by_key[id(t)] for t in tasks]

        radius = max(tasks[i].spectral_norm() for i in unique_index)
        w_star = min_norm_joint_solution([tasks[i] for i in unique_index], rel_tol)

        if w0 is None:
            w0 = np.zeros(d)
        w0 = np.asarray(w0, dtype=float)
        if w0.shape != (d,):
            raise ValueError(f"w0 has shape {w0.shape}, expected ({d},)")

        if tol_realize is None:
            w_star_norm = float(np.linalg.norm(w_star))
            tol_realize = 1e-8 * radius * w_star_norm if w_star_norm > 0 else 1e-10
        stacked_residual = float(
            np.sqrt(sum(residual_norm_sq(tasks[i], w_star) * unique_counts[j]
                        for j, i in enumerate(unique_index)))
        )
        realizable = stacked_residual <= tol_realize

        norm_ref = float(np.linalg.norm(w0 - w_star))
        if norm_ref == 0.0:
            norm_ref = 1.0

        return cls(
            tasks=tasks,
            dim=d,
            radius=float(radius),
            joint_solution=w_star,
            w0=w0,
            norm_ref=norm_ref,
            realizable=realizable,
            stacked_residual=stacked_residual,
            caches=caches,
            unique_index=np.asarray(unique_index, dtype=int),
            unique_counts=np.asarray(unique_counts, dtype=int),
            teacher=info.pop("teacher", None),
            solution_dirs=info.pop("solution_dirs", None),
            group_index=info.pop("group_index", None),
            extras=info,
        )

    def __len__(self) -> int:
        return len(self.tasks)

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    def iter_unique(self):
        """Yield (task, cache, multiplicity) over distinct task objects."""
        for j, i in enumerate(self.unique_index):
            yield self.tasks[i], self.caches[i], int(self.unique_counts[j])


@dataclass
class StepRecord:
    """One learning step: which task, how far the iterate moved."""

    step: int  # 1-based iteration
    chosen: int  # task index tau(t), 0-based
    decrement: float  # ||w_t - w_{t-1}||^2
    prefit_residual_sq: float  # ||X w_{t-1} - y||^2 of the chosen task


class LearnerState:
    """Mutable per-run state: current iterate plus step history.

    Owned by exactly one run; a run is strictly sequential.  ``visited``
    preserves selection order (a multiset under repetition policies);
    ``iterates`` optionally stores every w_t for recomputation oracles.
    """

    def __init__(self, w0: np.ndarray, keep_iterates: bool = True):
        w0 = np.asarray(w0, dtype=float)
        self.iterate = w0.copy()
        self.step = 0
        self.visited: list[int] = []
        self.history: list[StepRecord] = []
        self.iterates: Optional[list[np.ndarray]] = [w0.copy()] if keep_iterates else None
        self._visited_set: set[int] = set()

    @property
    def visited_set(self) -> set:
        return self._visited_set

    def advance(self, chosen: int, w_new: np.ndarray, prefit_residual_sq: float) -> None:
        delta = w_new - self.iterate
        self.step += 1
        self.history.append(
            StepRecord(
                step=self.step,
                chosen=chosen,
                decrement=float(delta @ delta),
                prefit_residual_sq=float(prefit_residual_sq),
            )
        )
        self.visited.append(chosen)
        self._visited_set.add(chosen)
        self.iterate = np.asarray(w_new, dtype=float)
        if self.iterates is not None:
            self.iterates.append(self.iterate.copy())
