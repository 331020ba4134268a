import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from dataset import Dataset, load_dataset, normalize, stratified_split
from expr_tree import ExprTree
from fitness import FitnessFunction, FitnessKind, Metrics, collect_outcomes
from gp_engine import GPEngine, RunRecord
from models import MAX_SEED, DatasetProfile, EvolutionParams

logger = logging.getLogger(__name__)

TABLE_HEADER = ("technique", "tp_rate", "tn_rate", "accuracy")


def metrics(tree: ExprTree, test: Dataset) -> Metrics:
    """TP rate, TN rate and accuracy of a tree on a labelled dataset"""
    counts, _ = collect_outcomes(tree, test)
    return Metrics.from_counts(counts)


def run_seed(base_seed: int, run_index: int) -> int:
    """Seed of run `run_index`; wraps around the 64-bit range"""
    return (base_seed + run_index) % (MAX_SEED + 1)


@dataclass(frozen=True)
class ExperimentSummary:
    """All runs of one fitness kind on one dataset"""
    dataset_name: str
    fitness_kind: FitnessKind
    params: EvolutionParams
    runs: Tuple[RunRecord, ...]

    @property
    def mean_metrics(self) -> Metrics:
        rows = np.array([(r.test_metrics.tp_rate, r.test_metrics.tn_rate, r.test_metrics.accuracy)
                         for r in self.runs])
        tp_rate, tn_rate, accuracy = (float(v) for v in rows.mean(axis=0))
        return Metrics(tp_rate=tp_rate, tn_rate=tn_rate, accuracy=accuracy)

    @property
    def label(self) -> str:
        return self.fitness_kind.label


def _prepare(profile: DatasetProfile) -> Dataset:
    data, _ = normalize(load_dataset(profile))
    data.require_both_classes("evolution")
    return data


def _single_run(task: Tuple[Dataset, DatasetProfile, FitnessKind, EvolutionParams, int, int, int]) -> RunRecord:
    data, profile, kind, params, seed, split_seed, engine_jobs = task
    train, test = stratified_split(data, profile.split_spec(split_seed))
    record = GPEngine(params.with_seed(seed), jobs=engine_jobs).evolve(train, FitnessFunction(kind))
    record = record.with_test_metrics(metrics(record.best_tree, test))
    logger.info(
        f"Run finished - Dataset: {profile.name} - Fitness: {kind.value} - Seed: {seed} - "
        f"TP: {record.test_metrics.tp_rate:.3f} - TN: {record.test_metrics.tn_rate:.3f} - "
        f"Accuracy: {record.test_metrics.accuracy:.3f}"
    )
    return record


def _map_runs(tasks: List[tuple], worker, jobs: int) -> List:
    """Run tasks sequentially or in a process pool; results keep task order"""
    if jobs <= 1 or len(tasks) <= 1:
        return [worker(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as executor:
        return list(executor.map(worker, tasks))


def run_protocol(profile: DatasetProfile,
                 kind: FitnessKind,
                 params: EvolutionParams,
                 n_runs: int,
                 jobs: int = 1,
                 fixed_split: bool = False,
                 data: Optional[Dataset] = None) -> ExperimentSummary:
    """
    Repeat split-evolve-test n_runs times.

    Run i uses seed base+i for evolution and, unless fixed_split is set, for
    the stratified split too. Independent runs execute in parallel when
    jobs > 1; records are always ordered by run index.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    data = data if data is not None else _prepare(profile)
    # A lone run spends the workers on fitness evaluation instead
    engine_jobs = jobs if n_runs == 1 else 1
    tasks = []
    for i in range(n_runs):
        seed = run_seed(params.seed, i)
        split_seed = params.seed if fixed_split else seed
        tasks.append((data, profile, kind, params, seed, split_seed, engine_jobs))

    logger.info(
        f"Protocol started - Dataset: {profile.name} - Fitness: {kind.value} - Runs: {n_runs} - Jobs: {jobs}"
    )
    records = _map_runs(tasks, _single_run, jobs)
    summary = ExperimentSummary(profile.name, kind, params, tuple(records))
    mean = summary.mean_metrics
    logger.info(
        f"Protocol finished - Fitness: {kind.value} - Mean TP: {mean.tp_rate:.3f} - "
        f"Mean TN: {mean.tn_rate:.3f} - Mean accuracy: {mean.accuracy:.3f}"
    )
    return summary


@dataclass(frozen=True)
class SweepResult:
    """Mean best fitness per generation for each population size"""
    fitness_kind: FitnessKind
    series: Dict[int, Tuple[float, ...]]      # size -> mean best fitness per generation
    final: Dict[int, float]                   # size -> mean best-of-run fitness

    def rows(self) -> Iterable[Tuple[int, int, float]]:
        for size, values in self.series.items():
            for generation, value in enumerate(values):
                yield size, generation, value


def _sweep_run(task: Tuple[Dataset, DatasetProfile, FitnessKind, EvolutionParams, int, int]) -> RunRecord:
    data, profile, kind, params, seed, split_seed = task
    train, _ = stratified_split(data, profile.split_spec(split_seed))
    return GPEngine(params.with_seed(seed)).evolve(train, FitnessFunction(kind))


def sweep(profile: DatasetProfile,
          kind: FitnessKind,
          population_sizes: Sequence[int],
          params: EvolutionParams,
          n_runs: int,
          jobs: int = 1,
          fixed_split: bool = False,
          data: Optional[Dataset] = None) -> SweepResult:
    """Average training fitness over n_runs for each population size, generations held fixed"""
    if not population_sizes:
        raise ValueError("population_sizes must not be empty")
    data = data if data is not None else _prepare(profile)

    series, final = {}, {}
    for size in population_sizes:
        sized = params.with_population(size)
        tasks = []
        for i in range(n_runs):
            seed = run_seed(params.seed, i)
            tasks.append((data, profile, kind, sized, seed, params.seed if fixed_split else seed))
        records = _map_runs(tasks, _sweep_run, jobs)
        best_traces = np.array([[best for best, _ in r.train_fitness_trace] for r in records])
        series[size] = tuple(float(v) for v in best_traces.mean(axis=0))
        final[size] = float(np.mean([r.best_fitness for r in records]))
        logger.info(
            f"Sweep point finished - Population: {size} - Runs: {n_runs} - "
            f"Mean best fitness: {final[size]:.6f}"
        )
    return SweepResult(kind, series, final)


# -- reporting ----------------------------------------------------------------

def format_rate(value: float) -> str:
    """Three decimals, rounding half up on the shortest decimal form of the value"""
    return str(Decimal(repr(value)).quantize(Decimal("0.001"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class ResultTable:
    csv: str
    text: str


def emit_table(summaries: Sequence[ExperimentSummary]) -> ResultTable:
    """TP rate / TN rate / accuracy table, one row per fitness kind in declaration order"""
    if not summaries:
        raise ValueError("emit_table needs at least one summary")
    order = list(FitnessKind)
    ordered = sorted(summaries, key=lambda s: order.index(s.fitness_kind))

    rows = []
    for summary in ordered:
        mean = summary.mean_metrics
        rows.append((summary.label, format_rate(mean.tp_rate), format_rate(mean.tn_rate),
                     format_rate(mean.accuracy)))

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(TABLE_HEADER)
    writer.writerows(rows)

    titles = ("Technique", "TP Rate", "TN Rate", "Accuracy")
    widths = [max(len(titles[i]), *(len(row[i]) for row in rows)) for i in range(len(titles))]
    lines = ["  ".join(title.ljust(width) for title, width in zip(titles, widths)).rstrip()]
    lines.append("  ".join("-" * width for width in widths))
    for row in rows:
        lines.append("  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip())
    return ResultTable(csv=buffer.getvalue(), text="\n".join(lines) + "\n")


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def runs_dir(output_dir: Path, summary: ExperimentSummary, multiple_kinds: bool) -> Path:
    if multiple_kinds:
        return output_dir / summary.fitness_kind.value / "runs"
    return output_dir / "runs"


def write_run_outputs(summaries: Sequence[ExperimentSummary], output_dir: Path) -> ResultTable:
    """
    Write every artifact of a protocol invocation.

    Per run: run_<i>.csv (generation trace) and run_<i>.tree (s-expression);
    per kind: metrics.csv with each run's seed and test metrics; at the top:
    summary.csv and summary.txt.
    """
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    multiple_kinds = len({s.fitness_kind for s in summaries}) > 1

    for summary in summaries:
        directory = runs_dir(output_dir, summary, multiple_kinds)
        for i, record in enumerate(summary.runs):
            _write_csv(
                directory / f"run_{i}.csv",
                ("generation", "best_fitness", "mean_fitness"),
                ((generation, best, mean) for generation, (best, mean) in enumerate(record.train_fitness_trace)),
            )
            (directory / f"run_{i}.tree").write_text(record.best_tree.to_sexpr() + "\n", encoding="utf-8")
        _write_csv(
            directory / "metrics.csv",
            ("run", "seed", "best_fitness", "tp_rate", "tn_rate", "accuracy"),
            ((i, r.seed, r.best_fitness, r.test_metrics.tp_rate, r.test_metrics.tn_rate, r.test_metrics.accuracy)
             for i, r in enumerate(summary.runs)),
        )

    table = emit_table(summaries)
    (output_dir / "summary.csv").write_text(table.csv, encoding="utf-8")
    (output_dir / "summary.txt").write_text(table.text, encoding="utf-8")
    logger.info(f"Results written - Directory: {output_dir} - Kinds: {len(summaries)}")
    return table


def write_sweep(result: SweepResult, path: Path) -> None:
    """Plot data: one (size, generation, mean_best_fitness) row per point"""
    _write_csv(Path(path), ("size", "generation", "mean_best_fitness"), result.rows())
    logger.info(f"Sweep written - File: {path} - Series: {len(result.series)}")
