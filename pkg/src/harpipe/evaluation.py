"""Split strategies, task construction, experiment runner and reporting.

Two split strategies mirror the two evaluation regimes: population-level
splits keep every user in exactly one of train/validation/test, while
hybrid splits shuffle windows so a user's data can appear in all three.
For each target activity a binary task is built in balanced mode
(negatives downsampled 1:1) or imbalanced mode (all negatives kept).
The runner repeats split -> task -> train -> score R times per report
cell and aggregates mean and population std over the repetitions.
"""

from __future__ import annotations

import json
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .domain import ActivityClass, LabeledWindow
from .metrics import accuracy, auroc, f1_macro
from .network import DEFAULT_LAYERS, NetworkSpec, parse_layer_string
from .trainer import TrainConfig, predict, train_binary

SPLIT_KINDS = ("population", "hybrid")
MODES = ("balanced", "imbalanced")
METRIC_NAMES = ("auroc", "f1_macro", "accuracy")
DEFAULT_FRACTIONS = (0.6, 0.2, 0.2)
PARTITION_NAMES = ("train", "validation", "test")

REPORT_FORMAT_VERSION = 1
REPORT_JSON_FILE = "eval_report.json"


@dataclass(frozen=True)
class MetricSet:
    auroc: float
    f1_macro: float
    accuracy: float

    def __post_init__(self):
        for name in METRIC_NAMES:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")


@dataclass(frozen=True, eq=False)
class TaskPartition:
    windows: tuple[LabeledWindow, ...]
    labels: np.ndarray


@dataclass(frozen=True, eq=False)
class BinaryTask:
    """One activity-vs-rest task over three disjoint partitions."""

    target: ActivityClass
    train: TaskPartition
    validation: TaskPartition
    test: TaskPartition
    mode: str
    split_kind: str

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.split_kind not in SPLIT_KINDS:
            raise ValueError(f"unknown split kind {self.split_kind!r}")
        parts = [self.train, self.validation, self.test]
        ids = [set(w.report_id for w in p.windows) for p in parts]
        for i in range(3):
            for j in range(i + 1, 3):
                if ids[i] & ids[j]:
                    raise ValueError(
                        f"partitions {PARTITION_NAMES[i]} and {PARTITION_NAMES[j]} "
                        "share report ids"
                    )
        if self.split_kind == "population":
            users = [set(w.user_id for w in p.windows) for p in parts]
            for i in range(3):
                for j in range(i + 1, 3):
                    if users[i] & users[j]:
                        raise ValueError(
                            f"population split leaks users between "
                            f"{PARTITION_NAMES[i]} and {PARTITION_NAMES[j]}"
                        )
        for name, p in zip(PARTITION_NAMES, parts):
            n_pos = int(np.sum(p.labels == 1))
            n_neg = int(np.sum(p.labels == 0))
            if self.mode == "balanced" and n_pos != n_neg:
                raise ValueError(
                    f"balanced task has {n_pos} positives vs {n_neg} negatives "
                    f"in {name}"
                )


def _check_fractions(fractions: Sequence[float]) -> tuple[float, float, float]:
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValueError(f"fractions must be three positives, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    return fractions


def split_population(
    windows: Sequence[LabeledWindow],
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    seed: int = 0,
) -> tuple[list[LabeledWindow], list[LabeledWindow], list[LabeledWindow]]:
    """User-disjoint split: shuffle users, cut by cumulative user count.

    All of a user's windows follow the user. Requires >= 3 distinct users.
    """
    fractions = _check_fractions(fractions)
    users = sorted({w.user_id for w in windows})
    if len(users) < 3:
        raise ValueError(f"population split needs >= 3 users, got {len(users)}")
    rng = np.random.default_rng(seed)
    shuffled = [users[i] for i in rng.permutation(len(users))]
    n = len(users)
    c1 = int(np.floor(fractions[0] * n))
    c2 = int(np.floor((fractions[0] + fractions[1]) * n))
    c1 = max(c1, 1)
    c2 = max(c2, c1 + 1)
    if c2 >= n:
        raise ValueError(f"fractions {fractions} leave an empty partition for {n} users")
    assignment = {}
    for i, u in enumerate(shuffled):
        assignment[u] = 0 if i < c1 else (1 if i < c2 else 2)
    parts: tuple[list, list, list] = ([], [], [])
    for w in windows:
        parts[assignment[w.user_id]].append(w)
    return parts


def split_hybrid(
    windows: Sequence[LabeledWindow],
    fractions: Sequence[float] = DEFAULT_FRACTIONS,
    seed: int = 0,
) -> tuple[list[LabeledWindow], list[LabeledWindow], list[LabeledWindow]]:
    """Window-level split: a user's windows may land in every partition."""
    fractions = _check_fractions(fractions)
    n = len(windows)
    if n < 10:
        raise ValueError(f"hybrid split needs >= 10 windows, got {n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    c1 = int(np.floor(fractions[0] * n))
    c2 = int(np.floor((fractions[0] + fractions[1]) * n))
    buckets = (np.sort(perm[:c1]), np.sort(perm[c1:c2]), np.sort(perm[c2:]))
    return tuple([windows[i] for i in idx] for idx in buckets)  # type: ignore[return-value]


def make_task(
    partitions: Sequence[Sequence[LabeledWindow]],
    target: ActivityClass,
    mode: str,
    seed: int = 0,
    split_kind: str = "hybrid",
) -> BinaryTask:
    """Build the activity-vs-rest task over already-split partitions.

    Balanced mode samples exactly as many negatives as there are
    positives, uniformly without replacement from the pooled other
    classes, independently per partition. Raises ValueError naming the
    partition when it has no positive (or too few negative) windows.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    built: list[TaskPartition] = []
    for name, part in zip(PARTITION_NAMES, partitions):
        pos = [w for w in part if w.label == target]
        neg = [w for w in part if w.label != target]
        if not pos:
            raise ValueError(f"no {target.token} windows in {name} partition")
        if mode == "balanced":
            if len(neg) < len(pos):
                raise ValueError(
                    f"{name} partition has {len(neg)} negatives for "
                    f"{len(pos)} {target.token} positives"
                )
            take = np.sort(rng.choice(len(neg), size=len(pos), replace=False))
            neg = [neg[i] for i in take]
        labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
        built.append(TaskPartition(tuple(pos + neg), labels))
    return BinaryTask(
        target=target,
        train=built[0],
        validation=built[1],
        test=built[2],
        mode=mode,
        split_kind=split_kind,
    )


@dataclass(frozen=True)
class ExperimentConfig:
    activities: tuple[ActivityClass, ...] = tuple(ActivityClass)
    split_kinds: tuple[str, ...] = SPLIT_KINDS
    modes: tuple[str, ...] = MODES
    repetitions: int = 10
    base_seed: int = 0
    layers: str = DEFAULT_LAYERS
    train: TrainConfig = field(default_factory=TrainConfig)
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS

    def __post_init__(self):
        if not self.activities:
            raise ValueError("no activities configured")
        if self.repetitions < 1:
            raise ValueError(f"repetitions must be >= 1, got {self.repetitions}")
        for k in self.split_kinds:
            if k not in SPLIT_KINDS:
                raise ValueError(f"unknown split kind {k!r}")
        for m in self.modes:
            if m not in MODES:
                raise ValueError(f"unknown mode {m!r}")
        _check_fractions(self.fractions)


@dataclass
class CellResult:
    """Aggregated metrics for one (activity, split_kind, mode) cell."""

    activity: ActivityClass
    split_kind: str
    mode: str
    seeds: list[list[int]]
    values: dict[str, list[float]]
    absent_reason: Optional[str] = None

    @property
    def absent(self) -> bool:
        return self.absent_reason is not None

    def mean(self, metric: str) -> float:
        return float(np.mean(self.values[metric]))

    def std(self, metric: str) -> float:
        return float(np.std(self.values[metric]))  # population std over reps


@dataclass
class EvalReport:
    repetitions: int
    cells: list[CellResult]

    def cell(self, activity: ActivityClass, split_kind: str, mode: str) -> CellResult:
        for c in self.cells:
            if (c.activity, c.split_kind, c.mode) == (activity, split_kind, mode):
                return c
        raise KeyError((activity, split_kind, mode))


def _job_seeds(
    base_seed: int, activity: ActivityClass, split_kind: str, mode: str, rep: int
) -> tuple[int, int, int]:
    ss = np.random.SeedSequence(
        (base_seed, int(activity), SPLIT_KINDS.index(split_kind), MODES.index(mode), rep)
    )
    split_seed, task_seed, train_seed = (int(v) for v in ss.generate_state(3))
    return split_seed, task_seed, train_seed


def _resolve_spec(layers, input_shape=(3, 600)) -> NetworkSpec:
    if isinstance(layers, NetworkSpec):
        return layers
    return parse_layer_string(layers, input_shape)


def _run_rep(
    windows: Sequence[LabeledWindow],
    cfg: ExperimentConfig,
    activity: ActivityClass,
    split_kind: str,
    mode: str,
    rep: int,
) -> tuple[MetricSet, tuple[int, int, int]]:
    split_seed, task_seed, train_seed = _job_seeds(
        cfg.base_seed, activity, split_kind, mode, rep
    )
    splitter = split_population if split_kind == "population" else split_hybrid
    partitions = splitter(windows, cfg.fractions, split_seed)
    task = make_task(partitions, activity, mode, task_seed, split_kind)
    input_shape = task.train.windows[0].data.shape
    spec = _resolve_spec(cfg.layers, input_shape)
    state, _ = train_binary(task, spec, replace(cfg.train, seed=train_seed))
    scores = predict(state, list(task.test.windows))
    preds = (scores >= 0.5).astype(np.int64)
    y = task.test.labels
    result = MetricSet(
        auroc=auroc(scores, y),
        f1_macro=f1_macro(preds, y),
        accuracy=accuracy(preds, y),
    )
    return result, (split_seed, task_seed, train_seed)


# worker globals populated before forking so the dataset is inherited,
# not pickled per job
_WORKER_DATA: Optional[tuple] = None
_BLAS_LIMIT = None


def _init_worker(data) -> None:
    global _WORKER_DATA
    _WORKER_DATA = data


def _single_threaded_blas() -> None:
    # each pool worker owns one core; stacked BLAS thread pools would
    # spin against each other
    global _BLAS_LIMIT
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return
    _BLAS_LIMIT = threadpool_limits(limits=1)


def _run_job(key):
    windows, cfg = _WORKER_DATA
    activity, split_kind, mode, rep = key
    try:
        result, seeds = _run_rep(windows, cfg, activity, split_kind, mode, rep)
        return key, ("ok", (result.auroc, result.f1_macro, result.accuracy), seeds)
    except ValueError as exc:
        return key, ("err", str(exc), None)


def run_experiment(
    windows: Sequence[LabeledWindow], cfg: ExperimentConfig, jobs: int = 1
) -> EvalReport:
    """Run the full grid; one trained model per (cell, repetition).

    A task-construction failure marks the whole cell absent with its
    reason and the run continues. Deterministic in cfg, independent of
    the jobs count: every repetition derives its seeds from the base
    seed and its grid coordinates, and aggregation is ordered by key.
    """
    if not windows:
        raise ValueError("empty dataset")
    keys = [
        (a, k, m, r)
        for a in cfg.activities
        for k in cfg.split_kinds
        for m in cfg.modes
        for r in range(cfg.repetitions)
    ]

    use_pool = jobs > 1
    ctx = None
    if use_pool:
        try:
            ctx = multiprocessing.get_context("fork")
        except ValueError:
            use_pool = False  # no fork on this platform: run sequentially

    results: dict[tuple, tuple] = {}
    _init_worker((list(windows), cfg))
    # single-threaded BLAS in every path: identical numerics whatever the
    # jobs count, and no spinning thread pools stacked on busy cores
    _single_threaded_blas()
    try:
        if use_pool:
            # workers inherit _WORKER_DATA through fork, nothing is pickled
            with ProcessPoolExecutor(
                max_workers=jobs, mp_context=ctx, initializer=_single_threaded_blas
            ) as ex:
                for key, outcome in ex.map(_run_job, keys, chunksize=1):
                    results[key] = outcome
        else:
            for key in keys:
                results[key] = _run_job(key)[1]
    finally:
        _init_worker(None)
        global _BLAS_LIMIT
        if _BLAS_LIMIT is not None:
            _BLAS_LIMIT.restore_original_limits()
            _BLAS_LIMIT = None

    cells: list[CellResult] = []
    for a in cfg.activities:
        for k in cfg.split_kinds:
            for m in cfg.modes:
                seeds: list[list[int]] = []
                values: dict[str, list[float]] = {n: [] for n in METRIC_NAMES}
                absent = None
                for r in range(cfg.repetitions):
                    status, payload, rep_seeds = results[(a, k, m, r)]
                    if status == "err" and absent is None:
                        absent = payload
                    elif status == "ok":
                        for name, v in zip(METRIC_NAMES, payload):
                            values[name].append(v)
                        seeds.append(list(rep_seeds))
                if absent is not None:
                    cells.append(CellResult(a, k, m, [], {n: [] for n in METRIC_NAMES}, absent))
                else:
                    cells.append(CellResult(a, k, m, seeds, values))
    return EvalReport(repetitions=cfg.repetitions, cells=cells)


def report_to_json(report: EvalReport) -> str:
    cells = []
    for c in report.cells:
        entry = {
            "activity": c.activity.token,
            "split_kind": c.split_kind,
            "mode": c.mode,
            "absent_reason": c.absent_reason,
            "seeds": c.seeds,
            "metrics": {
                name: {
                    "values": c.values[name],
                    "mean": c.mean(name) if not c.absent else None,
                    "std": c.std(name) if not c.absent else None,
                }
                for name in METRIC_NAMES
            },
        }
        cells.append(entry)
    doc = {
        "format_version": REPORT_FORMAT_VERSION,
        "repetitions": report.repetitions,
        "cells": cells,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def report_from_json(text: str) -> EvalReport:
    doc = json.loads(text)
    if doc.get("format_version") != REPORT_FORMAT_VERSION:
        raise ValueError(
            f"unsupported report format version {doc.get('format_version')!r}"
        )
    cells = []
    for e in doc["cells"]:
        cells.append(
            CellResult(
                activity=ActivityClass.from_token(e["activity"]),
                split_kind=e["split_kind"],
                mode=e["mode"],
                seeds=[list(s) for s in e["seeds"]],
                values={n: list(e["metrics"][n]["values"]) for n in METRIC_NAMES},
                absent_reason=e["absent_reason"],
            )
        )
    return EvalReport(repetitions=doc["repetitions"], cells=cells)


def report_csv(report: EvalReport) -> str:
    """CSV with columns activity,split_kind,mode,metric,mean,std,repetitions."""
    lines = ["activity,split_kind,mode,metric,mean,std,repetitions"]
    for c in report.cells:
        for name in METRIC_NAMES:
            if c.absent:
                mean = std = ""
            else:
                mean, std = repr(c.mean(name)), repr(c.std(name))
            lines.append(
                f"{c.activity.token},{c.split_kind},{c.mode},{name},"
                f"{mean},{std},{report.repetitions}"
            )
    return "\n".join(lines) + "\n"


_SPLIT_TITLES = {"population": "Population-level results", "hybrid": "Hybrid results"}


def report_markdown(report: EvalReport) -> str:
    """Two-block tables (balanced, then imbalanced), one row per activity."""
    split_kinds = []
    modes = []
    activities = []
    for c in report.cells:
        if c.split_kind not in split_kinds:
            split_kinds.append(c.split_kind)
        if c.mode not in modes:
            modes.append(c.mode)
        if c.activity not in activities:
            activities.append(c.activity)
    modes = [m for m in MODES if m in modes]

    out: list[str] = []
    for kind in split_kinds:
        out.append(f"## {_SPLIT_TITLES.get(kind, kind)}")
        out.append("")
        head = ["Activity"]
        for m in modes:
            label = m.capitalize()
            head += [
                f"{label} AUROC",
                f"{label} F1",
                f"{label} Accuracy (%)",
            ]
        out.append("| " + " | ".join(head) + " |")
        out.append("|" + "---|" * len(head))
        for a in activities:
            row = [a.display_name]
            for m in modes:
                try:
                    c = report.cell(a, kind, m)
                except KeyError:
                    row += ["-", "-", "-"]
                    continue
                if c.absent:
                    row += [f"absent ({c.absent_reason})", "-", "-"]
                else:
                    row.append(f"{c.mean('auroc'):.2f} ± {c.std('auroc'):.2f}")
                    row.append(f"{c.mean('f1_macro'):.2f} ± {c.std('f1_macro'):.2f}")
                    row.append(
                        f"{100 * c.mean('accuracy'):.1f} ± {100 * c.std('accuracy'):.1f}"
                    )
            out.append("| " + " | ".join(row) + " |")
        out.append("")
    return "\n".join(out)
