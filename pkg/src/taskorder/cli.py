"""Command-line entry point.

Examples
--------
Reproduce a preset and write CSV plus per-strategy plot data::

    taskorder --preset fig3a --out results/

Custom sweep with flag overrides::

    taskorder --generator isotropic --d 60 --r 5 --T 40 \
        --strategy greedy_md --strategy random_without --repeats 5 --out results/

Exit codes: 0 success, 2 usage error, 3 bound violation (with --verify),
4 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .harness import ExperimentConfig, emit_csv, emit_plot_data, preset_config, run_experiment
from .orderings import ALL_KINDS, GREEDY_KINDS, OrderingPolicy

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BOUND = 3
EXIT_IO = 4


def _parse_strategy(text: str) -> OrderingPolicy:
    """Parse 'kind', 'kind+rep', or 'kind@threshold' strategy descriptors."""
    threshold = None
    repetition = False
    if "@" in text:
        text, raw = text.split("@", 1)
        threshold = float(raw)
    if text.endswith("+rep"):
        text = text[: -len("+rep")]
        repetition = True
    if text not in ALL_KINDS:
        raise argparse.ArgumentTypeError(
            f"unknown strategy {text!r}; choose from {', '.join(ALL_KINDS)}"
        )
    if repetition and text not in GREEDY_KINDS:
        raise argparse.ArgumentTypeError("'+rep' applies to greedy kinds only")
    return OrderingPolicy(kind=text, repetition=repetition, threshold=threshold)


def _load_config_file(path: str) -> dict:
    """Flat ``key = value`` config file; '#' starts a comment."""
    values: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {line!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        values[key] = val
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taskorder",
        description="Continual linear regression task-ordering experiments",
    )
    parser.add_argument("--preset", help="named experiment recipe (e.g. fig3a)")
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--generator", help="isotropic | anisotropic | rank_dminus1 | adversarial3d | adversarial_highdim")
    parser.add_argument("--d", type=int, help="feature dimension")
    parser.add_argument("--r", type=int, help="task rank (rows per block)")
    parser.add_argument("--T", type=int, help="number of tasks")
    parser.add_argument("--K", type=int, help="3-D family group size")
    parser.add_argument(
        "--strategy",
        action="append",
        type=_parse_strategy,
        help="ordering, repeatable; e.g. greedy_md, greedy_md+rep, hybrid_md@0.01",
    )
    parser.add_argument("--iterations", type=int, help="steps per run (default: T)")
    parser.add_argument("--repeats", type=int, help="fresh collections per sweep")
    parser.add_argument("--seed", type=int, help="base seed")
    parser.add_argument("--cadence", type=int, help="log every N iterations")
    parser.add_argument("--out", help="output directory (or $TASKORDER_OUT, default .)")
    parser.add_argument(
        "--verify",
        action="store_true",
        help="run oracle bound checks after the sweep; exit 3 on violation",
    )
    return parser


def _build_config(args) -> ExperimentConfig:
    if args.preset:
        config = preset_config(args.preset)
    else:
        config = ExperimentConfig(generator="isotropic", strategies=[])

    if args.config:
        file_values = _load_config_file(args.config)
        for key in ("generator",):
            if key in file_values:
                setattr(config, key, file_values[key])
        for key in ("d", "r", "T", "K", "iterations", "repeats", "seed", "log_cadence"):
            if key in file_values:
                setattr(config, key, int(file_values[key]))
        if "strategies" in file_values:
            config.strategies = [
                _parse_strategy(tok.strip())
                for tok in file_values["strategies"].split(",")
                if tok.strip()
            ]

    if args.generator:
        config.generator = args.generator
    for key in ("d", "r", "T", "K", "iterations", "repeats", "seed"):
        val = getattr(args, key)
        if val is not None:
            setattr(config, key, val)
    if args.cadence is not None:
        config.log_cadence = args.cadence
    if args.strategy:
        config.strategies = list(args.strategy)
    return config


def _run_verification(config: ExperimentConfig) -> int:
    """Cheap oracle checks appropriate to the configured generator."""
    from .oracle import check_rank_dminus1_loss_bound, check_with_repetition_bound

    reports = [check_rank_dminus1_loss_bound(d=6, T=10, trials=10, seed=config.seed)]
    if config.generator in ("isotropic", "anisotropic"):
        reports.append(
            check_with_repetition_bound(
                d=config.d, r=config.r, T=config.T, k_max=60, trials=2, seed=config.seed
            )
        )
    failures = 0
    for report in reports:
        status = "ok" if report.ok else "VIOLATION"
        print(f"[verify] {report.bound_name}: {status} (worst margin {report.worst_margin:.3e})")
        failures += report.violations
    return failures


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        config = _build_config(args)
        config.validate()
    except (ValueError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out_dir = Path(args.out or os.environ.get("TASKORDER_OUT", "."))

    records = run_experiment(config)

    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / "records.csv"
        emit_csv(records, csv_path)
        plot_paths = emit_plot_data(records, out_dir / "plot")
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO

    print(f"wrote {csv_path} ({len(records)} rows)")
    for path in plot_paths:
        print(f"wrote {path}")

    if args.verify:
        failures = _run_verification(config)
        if failures:
            print(f"verification failed: {failures} bound violation(s)", file=sys.stderr)
            return EXIT_BOUND

    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
