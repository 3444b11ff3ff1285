"""Task-ordering laboratory for continual linear regression.

Exact projection updates over jointly realizable task collections, with
random/greedy/hybrid selection policies, adversarial constructions, bound
checkers, and a reproducible experiment harness.
"""

from .core import (
    LearnerState,
    ProjectorCache,
    Task,
    TaskCollection,
    fit_task,
    min_norm_joint_solution,
    pseudoinverse,
    residual_norm_sq,
)
from .metrics import MetricsRow, avg_loss, distance_sq, forgetting, regret
from .orderings import (
    HybridState,
    OrderingPolicy,
    beta_min_threshold,
    md_score,
    mr_score,
    next_index,
)
from .simulate import RunResult, run_policy

__version__ = "0.1.0"

__all__ = [
    "Task",
    "TaskCollection",
    "ProjectorCache",
    "LearnerState",
    "pseudoinverse",
    "fit_task",
    "min_norm_joint_solution",
    "residual_norm_sq",
    "MetricsRow",
    "avg_loss",
    "distance_sq",
    "forgetting",
    "regret",
    "OrderingPolicy",
    "HybridState",
    "md_score",
    "mr_score",
    "next_index",
    "beta_min_threshold",
    "RunResult",
    "run_policy",
    "__version__",
]
