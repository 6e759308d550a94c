"""Seed sweeps, reward-curve aggregation and tabular output.

A suite runs every ``(framework, seed)`` pair of a :class:`SuiteConfig`,
aggregates per-episode rewards across seeds into a mean curve with an
interquartile band, and writes:

``runs.csv``     experiment_id, framework, seed, episode, reward
``diag.csv``     experiment_id, framework, seed, step, beta, delta_i, rho
``summary.csv``  framework, final20_mean, auc, episodes_to_threshold, seeds
``pairs.csv``    framework_a, framework_b, wins_a, wins_b, ties, paired_seeds
``curves.csv``   framework, episode, mean, band_low, band_high, count
``columns.json`` column spec for redrawing the reward curves from curves.csv
``suite.json``   experiment id, threshold, frameworks and seeds
``failures.csv`` framework, seed, error
``metadata.json`` wall-clock durations (the only non-reproducible file)
"""

from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .agent import train
from .config import FRAMEWORKS, SuiteConfig, load_config
from .errors import ConfigurationError

logger = logging.getLogger(__name__)

RUNS_HEADER = ["experiment_id", "framework", "seed", "episode", "reward"]
DIAG_HEADER = ["experiment_id", "framework", "seed", "step", "beta", "delta_i", "rho"]
SUMMARY_HEADER = ["framework", "final20_mean", "auc", "episodes_to_threshold", "seeds"]
PAIRS_HEADER = ["framework_a", "framework_b", "wins_a", "wins_b", "ties", "paired_seeds"]
CURVES_HEADER = ["framework", "episode", "mean", "band_low", "band_high", "count"]
FAILURES_HEADER = ["framework", "seed", "error"]
NOT_REACHED = "not reached"


@dataclass
class RunRecord:
    framework: str
    seed: int
    rewards: List[float]
    diag_steps: List[int] = field(default_factory=list)
    betas: List[Optional[float]] = field(default_factory=list)
    deltas: List[Optional[float]] = field(default_factory=list)
    rhos: List[Optional[float]] = field(default_factory=list)
    duration: float = 0.0

    @property
    def auc(self) -> float:
        return float(np.sum(self.rewards))

    @property
    def final20_mean(self) -> float:
        return float(np.mean(self.rewards[-20:]))


@dataclass
class AggregateCurve:
    framework: str
    mean: np.ndarray
    band_low: np.ndarray
    band_high: np.ndarray
    count: int


@dataclass
class Summary:
    framework: str
    final20_mean: float
    auc: float
    episodes_to_threshold: Union[int, str]
    seeds: int


@dataclass
class PairedWins:
    framework_a: str
    framework_b: str
    wins_a: int
    wins_b: int
    ties: int

    @property
    def paired_seeds(self) -> int:
        return self.wins_a + self.wins_b + self.ties


@dataclass
class SuiteResult:
    experiment_id: str
    records: List[RunRecord]
    failures: List[Tuple[str, int, str]] = field(default_factory=list)


def _run_one(suite: SuiteConfig, framework: str, seed: int) -> RunRecord:
    config = suite.config_for(framework, seed)
    start = time.perf_counter()
    result = train(config)
    return RunRecord(
        framework=framework,
        seed=seed,
        rewards=list(result.rewards),
        diag_steps=list(result.diag_steps),
        betas=list(result.betas),
        deltas=list(result.deltas),
        rhos=list(result.rhos),
        duration=time.perf_counter() - start,
    )


def _guarded(args):
    suite, framework, seed = args
    try:
        return _run_one(suite, framework, seed), None
    except Exception as exc:  # one failed run must not sink the suite
        return None, (framework, seed, f"{type(exc).__name__}: {exc}")


def run_suite(
    config: Union[SuiteConfig, str, Path],
    seeds: Optional[Sequence[int]] = None,
    frameworks: Optional[Sequence[str]] = None,
    jobs: Optional[int] = None,
) -> SuiteResult:
    """One :class:`RunRecord` per ``(framework, seed)``; failures are collected."""
    suite = config if isinstance(config, SuiteConfig) else load_config(config)
    seeds = list(suite.seeds if seeds is None else seeds)
    frameworks = list(suite.frameworks if frameworks is None else frameworks)
    for name in frameworks:
        if name not in FRAMEWORKS:
            raise ConfigurationError(
                f"unknown framework {name!r}; valid frameworks: {', '.join(FRAMEWORKS)}"
            )
    jobs = suite.jobs if jobs is None else jobs
    tasks = [(suite, fw, seed) for fw in frameworks for seed in seeds]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_guarded, tasks))
    else:
        outcomes = [_guarded(task) for task in tasks]
    result = SuiteResult(suite.experiment_id, [])
    for record, failure in outcomes:
        if failure is not None:
            logger.error("run %s seed %s failed: %s", *failure)
            result.failures.append(failure)
        else:
            result.records.append(record)
    return result


def aggregate(records: Sequence[RunRecord]) -> AggregateCurve:
    """Per-episode mean and 25th/75th percentiles across seeds."""
    if not records:
        raise ValueError("aggregate needs at least one record")
    lengths = {len(r.rewards) for r in records}
    if len(lengths) != 1:
        raise ValueError(f"records disagree on episode count: {sorted(lengths)}")
    frameworks = {r.framework for r in records}
    if len(frameworks) != 1:
        raise ValueError(f"records mix frameworks: {sorted(frameworks)}")
    # a fixed row order keeps the float sums independent of the input order
    ordered = sorted(records, key=lambda r: r.seed)
    rewards = np.array([r.rewards for r in ordered], dtype=np.float64)
    low, high = np.percentile(rewards, [25, 75], axis=0, method="linear")
    return AggregateCurve(frameworks.pop(), rewards.mean(axis=0), low, high, len(records))


def group_by_framework(records: Iterable[RunRecord]) -> Dict[str, List[RunRecord]]:
    groups: Dict[str, List[RunRecord]] = {}
    for record in records:
        groups.setdefault(record.framework, []).append(record)
    order = {name: i for i, name in enumerate(FRAMEWORKS)}
    return {k: sorted(groups[k], key=lambda r: r.seed) for k in sorted(groups, key=order.get)}


def summarize(curve: AggregateCurve, threshold: float) -> Summary:
    reached = np.flatnonzero(curve.mean >= threshold)
    return Summary(
        framework=curve.framework,
        final20_mean=float(np.mean(curve.mean[-20:])),
        auc=float(np.sum(curve.mean)),
        episodes_to_threshold=int(reached[0]) + 1 if reached.size else NOT_REACHED,
        seeds=curve.count,
    )


def paired_wins(a: Sequence[RunRecord], b: Sequence[RunRecord]) -> PairedWins:
    """Per-seed AUC comparison over the seed labels both frameworks ran."""
    auc_b = {r.seed: r.auc for r in b}
    wins_a = wins_b = ties = 0
    for record in a:
        if record.seed not in auc_b:
            continue
        other = auc_b[record.seed]
        if record.auc > other:
            wins_a += 1
        elif record.auc < other:
            wins_b += 1
        else:
            ties += 1
    return PairedWins(a[0].framework if a else "", b[0].framework if b else "", wins_a, wins_b, ties)


def compare(records: Sequence[RunRecord], threshold: float = 195.0):
    """Summaries per framework plus paired AUC wins for every framework pair."""
    groups = group_by_framework(records)
    curves = {name: aggregate(group) for name, group in groups.items()}
    summaries = [summarize(curve, threshold) for curve in curves.values()]
    names = list(groups)
    pairs = [
        paired_wins(groups[names[i]], groups[names[j]])
        for i in range(len(names))
        for j in range(i + 1, len(names))
    ]
    return summaries, pairs, curves


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _write_csv(path: Path, header: List[str], rows: Iterable[Sequence]) -> None:
    try:
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


COLUMN_SPEC = {
    "file": "curves.csv",
    "x": "episode",
    "y": "mean",
    "band": ["band_low", "band_high"],
    "group": "framework",
    "band_definition": "25th and 75th percentiles across seeds, linear interpolation",
}


def emit(result: SuiteResult, out_dir, threshold: float = 195.0, seeds=None, frameworks=None) -> Path:
    """Write every output file of a suite into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    eid = result.experiment_id
    groups = group_by_framework(result.records)
    records = [r for group in groups.values() for r in group]

    _write_csv(
        out / "runs.csv",
        RUNS_HEADER,
        ((eid, r.framework, r.seed, e, float(x)) for r in records for e, x in enumerate(r.rewards)),
    )
    _write_csv(
        out / "diag.csv",
        DIAG_HEADER,
        (
            (eid, r.framework, r.seed, step, beta, delta, rho)
            for r in records
            for step, beta, delta, rho in zip(r.diag_steps, r.betas, r.deltas, r.rhos)
        ),
    )
    summaries, pairs, curves = compare(records, threshold) if records else ([], [], {})
    _write_csv(
        out / "summary.csv",
        SUMMARY_HEADER,
        ((s.framework, s.final20_mean, s.auc, s.episodes_to_threshold, s.seeds) for s in summaries),
    )
    _write_csv(
        out / "pairs.csv",
        PAIRS_HEADER,
        ((p.framework_a, p.framework_b, p.wins_a, p.wins_b, p.ties, p.paired_seeds) for p in pairs),
    )
    _write_csv(
        out / "curves.csv",
        CURVES_HEADER,
        (
            (c.framework, e, float(c.mean[e]), float(c.band_low[e]), float(c.band_high[e]), c.count)
            for c in curves.values()
            for e in range(len(c.mean))
        ),
    )
    _write_csv(out / "failures.csv", FAILURES_HEADER, result.failures)
    (out / "columns.json").write_text(json.dumps(COLUMN_SPEC, indent=2, sort_keys=True) + "\n")
    suite_info = {
        "experiment_id": eid,
        "success_threshold": threshold,
        "frameworks": list(frameworks) if frameworks is not None else list(groups),
        "seeds": list(seeds) if seeds is not None else sorted({r.seed for r in records}),
    }
    (out / "suite.json").write_text(json.dumps(suite_info, indent=2, sort_keys=True) + "\n")
    metadata = {
        "durations": [
            {"framework": r.framework, "seed": r.seed, "seconds": r.duration} for r in records
        ],
        "total_seconds": sum(r.duration for r in records),
    }
    (out / "metadata.json").write_text(json.dumps(metadata, indent=2) + "\n")
    return out


def _opt_float(raw: str) -> Optional[float]:
    return None if raw == "" else float(raw)


def read_records(in_dir) -> SuiteResult:
    """Rebuild the records (without durations) from ``runs.csv`` and ``diag.csv``."""
    src = Path(in_dir)
    by_key: Dict[Tuple[str, int], RunRecord] = {}
    eid = ""
    with (src / "runs.csv").open(newline="") as handle:
        for row in csv.DictReader(handle):
            eid = row["experiment_id"]
            key = (row["framework"], int(row["seed"]))
            record = by_key.setdefault(key, RunRecord(key[0], key[1], []))
            if int(row["episode"]) != len(record.rewards):
                raise ValueError(f"{src / 'runs.csv'}: episodes out of order for {key}")
            record.rewards.append(float(row["reward"]))
    diag_path = src / "diag.csv"
    if diag_path.exists():
        with diag_path.open(newline="") as handle:
            for row in csv.DictReader(handle):
                key = (row["framework"], int(row["seed"]))
                record = by_key.setdefault(key, RunRecord(key[0], key[1], []))
                record.diag_steps.append(int(row["step"]))
                record.betas.append(_opt_float(row["beta"]))
                record.deltas.append(_opt_float(row["delta_i"]))
                record.rhos.append(_opt_float(row["rho"]))
    failures = []
    failures_path = src / "failures.csv"
    if failures_path.exists():
        with failures_path.open(newline="") as handle:
            failures = [(r["framework"], int(r["seed"]), r["error"]) for r in csv.DictReader(handle)]
    return SuiteResult(eid, list(by_key.values()), failures)


def read_threshold(in_dir, default: float = 195.0) -> float:
    path = Path(in_dir) / "suite.json"
    if not path.exists():
        return default
    return float(json.loads(path.read_text()).get("success_threshold", default))
