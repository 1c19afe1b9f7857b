"""The iterative experiment loop: oracle labeling, per-round retraining,
stopping criteria, CSV/SVG reporting, and multi-seed comparisons.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import classifier, strategies
from .classifier import MlpConfig
from .dataset import EmbeddingPool, load_pool, round_half_up, split_pool
from .errors import ValidationError
from .rng import Rng, mix
from .strategies import StrategyParams
from .svgplot import render_learning_curves

RUN_CSV_HEADER = "strategy,seed,round,cumulative_labels,test_accuracy,skipped,elapsed_ms"
AGG_CSV_HEADER = "strategy,round,mean_acc,min_acc,max_acc,n_runs"
TARGETS_CSV_HEADER = "strategy,seed,labels_to_target,reached"

TARGET_REACHED = "target_reached"
BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass
class ExperimentConfig:
    strategy: str
    mlp: MlpConfig
    params: StrategyParams = field(default_factory=StrategyParams)
    rounds_max: int = 8
    budget_per_round: int = 64
    target_accuracy: float = 0.90
    test_fraction: float = 0.2
    master_seed: int = 0
    warm_start: bool = False
    timing: bool = False
    data_path: str | None = None
    output_path: str | None = None

    def __post_init__(self):
        if self.rounds_max < 1:
            raise ValidationError("rounds_max must be >= 1")
        if self.budget_per_round < 1:
            raise ValidationError("budget_per_round must be >= 1")
        if not 0.0 <= self.target_accuracy <= 1.0:
            raise ValidationError("target_accuracy must lie in [0, 1]")
        if self.strategy not in strategies.STRATEGIES:
            raise ValidationError(
                f"unknown strategy {self.strategy!r}; valid ids: "
                f"{', '.join(sorted(strategies.STRATEGIES))}"
            )


@dataclass
class RunRow:
    round: int
    cumulative_labels: int
    test_accuracy: float
    skipped: int
    elapsed_ms: float


@dataclass
class RunRecord:
    strategy: str
    seed: int
    rows: list[RunRow]
    status: str
    cluster_histogram: dict[tuple[int, int], int] | None = None

    def labels_to_target(self, target: float) -> tuple[int | None, bool]:
        """Smallest recorded label count whose accuracy reached the target."""
        for row in self.rows:
            if row.test_accuracy >= target:
                return row.cumulative_labels, True
        return None, False


def write_run_csv(record: RunRecord, path, timing: bool = False) -> None:
    """One row per round; elapsed_ms stays 0 unless timing output is enabled
    (measured wall time would break byte-identical reruns)."""
    lines = [RUN_CSV_HEADER]
    for row in record.rows:
        ms = f"{row.elapsed_ms:.3f}" if timing else "0"
        lines.append(
            f"{record.strategy},{record.seed},{row.round},{row.cumulative_labels},"
            f"{row.test_accuracy:.6f},{row.skipped},{ms}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_cluster_histogram_csv(record: RunRecord, path) -> None:
    lines = ["cluster,class,count"]
    for (cluster, cls), count in sorted(record.cluster_histogram.items()):
        lines.append(f"{cluster},{cls},{count}")
    Path(path).write_text("\n".join(lines) + "\n")


def run_experiment(
    cfg: ExperimentConfig,
    pool: EmbeddingPool | None = None,
    round_callback=None,
) -> RunRecord:
    """One full active-learning run, fully determined by cfg.master_seed.

    Per round: retrain the classifier on the labeled set (cold start from
    the seeded initial weights unless warm_start), evaluate on the fixed
    test split, stop on target or round exhaustion, otherwise query the
    strategy and oracle-label its picks.  Round 0 records the untrained
    model.
    """
    if pool is None:
        if cfg.data_path is None:
            raise ValidationError("run_experiment needs a pool or a data path")
        pool = load_pool(cfg.data_path)
    if pool.labels is None:
        raise ValidationError("the experiment pool must be labeled")
    if cfg.mlp.input_dim != pool.dim or cfg.mlp.num_classes != pool.num_classes:
        raise ValidationError("mlp config does not match the pool shape")

    mlp_cfg = classifier.with_weight_seed(cfg.mlp, mix(cfg.master_seed, "weights"))
    model0 = classifier.init_model(mlp_cfg)
    partition = split_pool(pool, cfg.test_fraction, mix(cfg.master_seed, "split"))
    cache: dict = {}

    rows: list[RunRow] = []
    status = BUDGET_EXHAUSTED
    histogram: dict[tuple[int, int], int] = {}
    model = model0
    for rnd in range(cfg.rounds_max + 1):
        t0 = time.perf_counter()
        if partition.labeled.size:
            base = model if cfg.warm_start else model0
            model = classifier.train(
                base, pool, partition.labeled, mix(cfg.master_seed, "train", rnd)
            )
        accuracy = classifier.evaluate_accuracy(model, pool, partition.test)
        labels_now = int(partition.labeled.size)

        if accuracy >= cfg.target_accuracy:
            status = TARGET_REACHED
            rows.append(RunRow(rnd, labels_now, accuracy, 0, _ms_since(t0)))
            break
        if rnd == cfg.rounds_max or partition.unlabeled.size == 0:
            status = BUDGET_EXHAUSTED
            rows.append(RunRow(rnd, labels_now, accuracy, 0, _ms_since(t0)))
            break

        budget = min(cfg.budget_per_round, int(partition.unlabeled.size))
        ctx = strategies.QueryContext(
            pool=pool,
            partition=partition,
            model=model,
            budget=budget,
            params=cfg.params,
            round_seed=mix(cfg.master_seed, "round", rnd),
            run_seed=cfg.master_seed,
            cache=cache,
        )
        batch = strategies.run_strategy(cfg.strategy, ctx)
        for diag in batch.diagnostics:
            if diag.cluster is not None:
                key = (diag.cluster, int(pool.labels[diag.pick]))
                histogram[key] = histogram.get(key, 0) + 1
        partition = partition.with_labeled(batch.picks)  # oracle labeling
        rows.append(
            RunRow(rnd, labels_now, accuracy, len(batch.skipped), _ms_since(t0))
        )
        if round_callback is not None:
            round_callback(rnd, partition, batch)

    record = RunRecord(
        strategy=cfg.strategy,
        seed=cfg.master_seed,
        rows=rows,
        status=status,
        cluster_histogram=histogram if histogram else None,
    )
    if cfg.output_path:
        write_run_csv(record, cfg.output_path, timing=cfg.timing)
        if record.cluster_histogram:
            write_cluster_histogram_csv(
                record, str(cfg.output_path) + ".clusters.csv"
            )
    return record


def _ms_since(t0: float) -> float:
    return (time.perf_counter() - t0) * 1000.0


@dataclass
class ComparisonResult:
    records: list[RunRecord]
    run_paths: list[Path]
    aggregate_path: Path
    targets_path: Path
    svg_path: Path


def compare(
    base_cfg: ExperimentConfig,
    strategy_names: list[str],
    seeds: list[int],
    out_dir,
    pool: EmbeddingPool | None = None,
    jobs: int = 1,
) -> ComparisonResult:
    """Run the strategy x seed grid and emit per-run CSVs, the aggregate
    CSV, the per-run labels-to-target CSV, and the learning-curve SVG."""
    if not strategy_names or not seeds:
        raise ValidationError("compare needs at least one strategy and one seed")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if pool is None:
        if base_cfg.data_path is None:
            raise ValidationError("compare needs a pool or a data path")
        pool = load_pool(base_cfg.data_path)

    grid = [
        replace(
            base_cfg,
            strategy=name,
            master_seed=seed,
            output_path=str(out / f"run_{name}_s{seed}.csv"),
        )
        for name in strategy_names
        for seed in seeds
    ]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            futures = [executor.submit(run_experiment, cfg, pool) for cfg in grid]
        records = []
        first_error = None
        for fut in futures:  # declared order keeps the reduction stable
            err = fut.exception()
            if err is not None:
                first_error = first_error or err
            else:
                records.append(fut.result())
        if first_error is not None:
            raise first_error  # completed runs already wrote their CSVs
    else:
        records = [run_experiment(cfg, pool) for cfg in grid]

    by_strategy: dict[str, list[RunRecord]] = {name: [] for name in strategy_names}
    for rec in records:
        by_strategy[rec.strategy].append(rec)

    agg_lines = [AGG_CSV_HEADER]
    curves: dict[str, list[tuple[float, float, float, float]]] = {}
    for name in strategy_names:
        recs = by_strategy[name]
        max_round = max(r.rows[-1].round for r in recs)
        rows = []
        for rnd in range(max_round + 1):
            accs = [r.rows[rnd].test_accuracy for r in recs if len(r.rows) > rnd]
            labels = [r.rows[rnd].cumulative_labels for r in recs if len(r.rows) > rnd]
            if not accs:
                continue
            mean_acc = sum(accs) / len(accs)
            agg_lines.append(
                f"{name},{rnd},{mean_acc:.6f},{min(accs):.6f},{max(accs):.6f},{len(accs)}"
            )
            rows.append((sum(labels) / len(labels), mean_acc, min(accs), max(accs)))
        curves[name] = rows

    targets_lines = [TARGETS_CSV_HEADER]
    mean_ltt: dict[str, float | None] = {}
    for name in strategy_names:
        reached_values = []
        for rec in by_strategy[name]:
            ltt, reached = rec.labels_to_target(base_cfg.target_accuracy)
            targets_lines.append(
                f"{name},{rec.seed},{ltt if reached else ''},{str(reached).lower()}"
            )
            if reached:
                reached_values.append(ltt)
        mean_ltt[name] = (
            sum(reached_values) / len(reached_values) if reached_values else None
        )

    aggregate_path = out / "aggregate.csv"
    aggregate_path.write_text("\n".join(agg_lines) + "\n")
    targets_path = out / "targets.csv"
    targets_path.write_text("\n".join(targets_lines) + "\n")
    svg_path = out / "curves.svg"
    svg_path.write_text(
        render_learning_curves(curves, base_cfg.target_accuracy, mean_ltt)
    )
    return ComparisonResult(
        records=records,
        run_paths=[Path(cfg.output_path) for cfg in grid],
        aggregate_path=aggregate_path,
        targets_path=targets_path,
        svg_path=svg_path,
    )


def probe(
    pool: EmbeddingPool,
    fraction: float,
    seed: int,
    mlp: MlpConfig,
    test_fraction: float = 0.2,
) -> float:
    """Train on a stratified random fraction of the training split and
    report test accuracy."""
    if not 0.0 < fraction < 1.0:
        raise ValidationError("fraction must lie in (0, 1)")
    if pool.labels is None:
        raise ValidationError("probe needs a labeled pool")
    partition = split_pool(pool, test_fraction, mix(seed, "split"))
    rng = Rng(mix(seed, "probe", f"frac={fraction!r}"))
    train_labels = pool.labels[partition.unlabeled]
    chosen: list[int] = []
    for c in range(pool.num_classes):
        members = partition.unlabeled[train_labels == c]
        want = round_half_up(len(members) * fraction)
        if want < 1:
            raise ValidationError(
                f"fraction {fraction} leaves class {c} without training samples"
            )
        chosen.extend(rng.choose_prefix(members.tolist(), want))
    mlp_cfg = classifier.with_weight_seed(mlp, mix(seed, "weights"))
    model = classifier.init_model(mlp_cfg)
    model = classifier.train(
        model, pool, np.asarray(chosen, dtype=np.int64), mix(seed, "probe-train")
    )
    return classifier.evaluate_accuracy(model, pool, partition.test)
