"""Experiment harness: configs, presets, seeded sweeps, CSV/plot emission.

A config names a generator, a list of ordering strategies, and sweep sizes.
``run_experiment`` generates one collection per repeat (seed = base + repeat),
runs every strategy on it from the collection's w0, and returns flat metric
rows.  Emission is deterministic: the same config always produces
byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .core import TaskCollection
from .generators import (
    gen_adversarial_3d,
    gen_adversarial_highdim,
    gen_anisotropic,
    gen_isotropic,
    gen_rank_dminus1,
)
from .orderings import (
    GREEDY_MD,
    GREEDY_MR,
    HYBRID_KINDS,
    HYBRID_MD,
    HYBRID_MR,
    MIN_DISTANCE,
    RANDOM_WITH,
    RANDOM_WITHOUT,
    OrderingPolicy,
    beta_min_threshold,
)
from .simulate import run_policy

__all__ = [
    "ExperimentConfig",
    "RunRecord",
    "PRESETS",
    "preset_config",
    "run_experiment",
    "emit_csv",
    "emit_plot_data",
    "aggregate",
]

GENERATORS = ("isotropic", "anisotropic", "rank_dminus1", "adversarial3d", "adversarial_highdim")

CSV_HEADER = "strategy,repeat,seed,iteration,avg_loss,distance_sq,decrement,chosen_index"


@dataclass
class ExperimentConfig:
    """One experiment: generator, strategies, sweep sizes, output knobs."""

    generator: str
    d: int = 100
    r: int = 10
    T: int = 50
    K: int = 1000
    strategies: list = field(default_factory=list)
    iterations: Optional[int] = None  # defaults to T (or the family's task count)
    repeats: int = 1
    seed: int = 42
    output_path: Optional[str] = None
    log_cadence: int = 1

    def validate(self) -> None:
        if self.generator not in GENERATORS:
            raise ValueError(f"unknown generator {self.generator!r}")
        if not self.strategies:
            raise ValueError("strategies must be nonempty")
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if self.iterations is not None and self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.log_cadence < 1:
            raise ValueError("log_cadence must be at least 1")
        if self.generator == "adversarial_highdim" and self.repeats > 1:
            raise ValueError("adversarial_highdim is deterministic; use repeats=1")


@dataclass
class RunRecord:
    """One emitted metric row of a sweep."""

    strategy: str
    repeat: int
    seed: int
    iteration: int
    avg_loss: float
    distance_sq: float
    decrement: float
    chosen_index: int


def _make_collection(config: ExperimentConfig, seed: int) -> TaskCollection:
    if config.generator == "isotropic":
        return gen_isotropic(config.d, config.r, config.T, seed)
    if config.generator == "anisotropic":
        return gen_anisotropic(config.d, config.r, config.T, seed)
    if config.generator == "rank_dminus1":
        return gen_rank_dminus1(config.d, config.T, seed)
    if config.generator == "adversarial3d":
        _, collection, _ = gen_adversarial_3d(config.K)
        return collection
    if config.generator == "adversarial_highdim":
        _, collection, _ = gen_adversarial_highdim(config.d)
        return collection
    raise ValueError(f"unknown generator {config.generator!r}")


def _resolve_policy(
    policy: OrderingPolicy, config: ExperimentConfig, collection: TaskCollection, seed: int
) -> OrderingPolicy:
    """Fill in the per-run seed and any auto hybrid threshold."""
    threshold = policy.threshold
    if policy.kind in HYBRID_KINDS and threshold is None:
        if config.generator not in ("isotropic", "anisotropic"):
            raise ValueError(
                "auto hybrid threshold needs a rank parameter; "
                "pass an explicit threshold for this generator"
            )
        C = 2.0 * (config.d - config.r)
        beta = beta_min_threshold(collection.n_tasks, C, 1.0).value
        scale = collection.norm_ref**2
        if policy.kind == HYBRID_MR:
            scale *= collection.radius**2
        threshold = beta * scale
    return replace(policy, threshold=threshold, seed=seed)


def run_experiment(config: ExperimentConfig) -> list:
    """Run the full (strategy x repeat) sweep and return RunRecords.

    Collection seed is base + repeat; each strategy inside a repeat gets its
    own derived stream seed, so the whole sweep is reproducible from the
    config alone.
    """
    config.validate()
    records: list[RunRecord] = []
    for repeat in range(config.repeats):
        seed = config.seed + repeat
        collection = _make_collection(config, seed)
        if not collection.realizable:
            raise RuntimeError(
                f"generated collection not realizable (seed {seed}, "
                f"stacked residual {collection.stacked_residual:.3e})"
            )
        for s_idx, strategy in enumerate(config.strategies):
            policy = _resolve_policy(strategy, config, collection, seed * 1000 + s_idx)
            result = run_policy(
                collection,
                policy,
                iterations=config.iterations,
                log_every=config.log_cadence,
                keep_iterates=False,
            )
            for row in result.metrics:
                records.append(
                    RunRecord(
                        strategy=strategy.label,
                        repeat=repeat,
                        seed=seed,
                        iteration=row.iteration,
                        avg_loss=row.avg_loss,
                        distance_sq=row.distance_sq,
                        decrement=row.decrement,
                        chosen_index=row.chosen_index,
                    )
                )
    records.sort(key=lambda rec: (rec.strategy, rec.repeat, rec.iteration))
    return records


def emit_csv(records: list, path) -> None:
    """Write records as CSV with 17-significant-digit decimals."""
    if not records:
        raise ValueError("no records to emit")
    lines = [CSV_HEADER]
    for rec in records:
        lines.append(
            f"{rec.strategy},{rec.repeat},{rec.seed},{rec.iteration},"
            f"{rec.avg_loss:.17g},{rec.distance_sq:.17g},"
            f"{rec.decrement:.17g},{rec.chosen_index}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def aggregate(records: list):
    """Per (strategy, iteration): mean and standard error over repeats.

    stderr = sample standard deviation / sqrt(n repeats); zero when a single
    repeat is present.  Returns {strategy: [(iteration, mean, stderr), ...]}.
    """
    by_key: dict[tuple, list[float]] = {}
    for rec in records:
        by_key.setdefault((rec.strategy, rec.iteration), []).append(rec.avg_loss)
    out: dict[str, list] = {}
    for (strategy, iteration), values in sorted(by_key.items()):
        n = len(values)
        mean = float(np.mean(values))
        stderr = float(np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        out.setdefault(strategy, []).append((iteration, mean, stderr))
    return out


def emit_plot_data(records: list, out_dir) -> list:
    """One gnuplot-friendly file per strategy: ``iteration, mean, stderr``.

    Zeros are emitted as-is (no clamping); plot on a log scale with care.
    Returns the written paths.
    """
    if not records:
        raise ValueError("no records to emit")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for strategy, rows in aggregate(records).items():
        path = out_dir / f"{strategy}.dat"
        lines = ["# iteration, mean, stderr"]
        for iteration, mean, stderr in rows:
            lines.append(f"{iteration}, {mean:.17g}, {stderr:.17g}")
        path.write_text("\n".join(lines) + "\n")
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# Presets: one-command reproduction recipes
# ---------------------------------------------------------------------------


def _p(kind, **kw):
    return OrderingPolicy(kind=kind, **kw)


PRESETS = {
    # Ordering comparison on isotropic data (dissimilarity-greedy vs random).
    "fig3a": ExperimentConfig(
        generator="isotropic",
        d=100,
        r=10,
        T=50,
        strategies=[
            _p(RANDOM_WITHOUT),
            _p(GREEDY_MD),
            _p(GREEDY_MR),
            _p(MIN_DISTANCE),
        ],
        repeats=10,
        seed=42,
    ),
    # Single greedy pass over the high-dimensional adversarial family.
    "fig5": ExperimentConfig(
        generator="adversarial_highdim",
        d=1000,
        strategies=[_p(GREEDY_MD)],
        repeats=1,
        seed=42,
    ),
    # Repetition effects: greedy with/without repetition, random with/without
    # replacement.
    "fig_rep": ExperimentConfig(
        generator="isotropic",
        d=100,
        r=10,
        T=50,
        iterations=50,
        strategies=[
            _p(GREEDY_MD),
            _p(GREEDY_MD, repetition=True),
            _p(RANDOM_WITHOUT),
            _p(RANDOM_WITH),
        ],
        repeats=10,
        seed=42,
    ),
    # Hybrid greedy-then-random vs its two ingredients; threshold auto-set
    # from the rank-dependent rate with C = 2(d-r), alpha = 1.
    "fig_hybrid": ExperimentConfig(
        generator="isotropic",
        d=100,
        r=10,
        T=50,
        strategies=[
            _p(GREEDY_MD),
            _p(HYBRID_MD),
            _p(RANDOM_WITHOUT),
        ],
        repeats=10,
        seed=42,
    ),
    # Greedy pass over the 3-D adversarial family (group alternation + dip).
    "fig_3d": ExperimentConfig(
        generator="adversarial3d",
        K=1000,
        strategies=[_p(GREEDY_MD)],
        repeats=1,
        seed=42,
    ),
}


def preset_config(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    cfg = PRESETS[name]
    return replace(cfg, strategies=list(cfg.strategies))
