"""Acceptance gate: one test per release criterion, each printing a
PASS/FAIL line. Thresholds are fixed here, not tuned at runtime.

The two pipeline criteria train hundreds of small networks and dominate
the suite's runtime (several minutes each on two cores).
"""

import time

import numpy as np

from harpipe import (
    ActivityClass,
    ExperimentConfig,
    SynthConfig,
    TrainConfig,
    accuracy,
    auroc,
    build_dataset,
    f1_macro,
    generate_corpus,
    make_task,
    run_experiment,
    split_population,
)
from harpipe.cli import main
from harpipe.network import init_network, loss_and_grads, parse_layer_string

from oracles import finite_difference_grads, kink_margin, pairwise_auroc
import test_preprocess as pre

JOBS = 2


def _verdict(name: str, ok: bool, detail: str = ""):
    tag = "PASS" if ok else "FAIL"
    print(f"[{tag}] {name}" + (f": {detail}" if detail else ""))
    assert ok, f"{name}: {detail}"


def test_gradient_correctness():
    """>= 20 random small specs, every analytic gradient within 1e-4 of
    central differences; runs in well under a minute."""
    pool = [
        "conv:4:5:2, relu, maxpool:2, conv:6:3:1, relu, gap, dense:1, sigmoid",
        "conv:5:3:1, relu, gap, dense:4, relu, dense:1, sigmoid",
        "maxpool:2, conv:4:4:2, relu, gap, dense:1, sigmoid",
        "conv:3:7:3, gap, dense:2, sigmoid, dense:1, sigmoid",
        "gap, dense:6, relu, dense:1, sigmoid",
        "conv:6:5:1, relu, maxpool:3, gap, dense:1, sigmoid",
    ]
    start = time.time()
    checked = 0
    seed = 0
    worst = 0.0
    while checked < 20:
        spec = parse_layer_string(pool[seed % len(pool)], (3, 20))
        state = init_network(spec, seed)
        rng = np.random.default_rng(seed + 1000)
        X = rng.normal(size=(4, 3, 20))
        y = rng.integers(0, 2, size=4).astype(float)
        seed += 1
        if kink_margin(state, X) < 1e-3:
            continue  # finite differences are invalid next to a kink
        _, grads = loss_and_grads(state, X, y)
        numeric = finite_difference_grads(state, X, y, h=1e-4)
        for g, n in zip(grads, numeric):
            denom = np.maximum(np.maximum(np.abs(g), np.abs(n)), 1e-8)
            worst = max(worst, float(np.max(np.abs(g - n) / denom)))
        checked += 1
    elapsed = time.time() - start
    _verdict(
        "gradient correctness",
        worst < 1e-4 and elapsed < 60.0,
        f"{checked} specs, worst rel err {worst:.2e}, {elapsed:.1f}s",
    )


def test_auroc_oracle_equivalence():
    """Trapezoid AUROC equals the pairwise win-rate on 1000 random
    instances (n <= 50) with ties injected, within 1e-12."""
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 51))
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[rng.integers(0, n)] ^= 1
        if rng.random() < 0.5:
            scores = np.round(rng.random(n), 1)  # heavy tie mass
        else:
            scores = rng.normal(size=n)
        worst = max(worst, abs(auroc(scores, labels) - pairwise_auroc(scores, labels)))
    _verdict("auroc oracle equivalence", worst <= 1e-12, f"max diff {worst:.2e}")


def test_imbalance_pathology_reproduction():
    """All-negative predictor on a 95:5 test set: accuracy exactly 0.95,
    macro F1 ~ 0.487, the high-accuracy/low-F1 mechanism."""
    labels = np.array([0] * 95 + [1] * 5)
    preds = np.zeros(100, dtype=int)
    acc = accuracy(preds, labels)
    f1 = f1_macro(preds, labels)
    _verdict(
        "imbalance pathology reproduction",
        acc == 0.95 and abs(f1 - 0.487) <= 0.001,
        f"accuracy {acc}, macro F1 {f1:.6f}",
    )


def test_preprocessing_exactness():
    """The five handcrafted fixtures produce bit-exact matrices/discards:
    grid identity, midpoint, fill exclusion, presence rule, short coverage."""
    pre.test_resample_identity_on_grid_aligned_samples()
    pre.test_resample_midpoint_and_one_sided_tail()
    pre.test_fill_period_sample_excluded()
    pre.test_presence_rule_discard()
    pre.test_resample_discards_when_samples_stop_early()
    _verdict("preprocessing exactness", True, "5/5 fixtures bit-exact")


def test_split_disjointness_properties():
    """>= 500 random datasets: population splits are user-disjoint and
    balanced tasks are exactly 1:1 per partition."""
    rng = np.random.default_rng(31337)
    from conftest import make_window

    trials = 0
    for trial in range(500):
        n_users = int(rng.integers(3, 10))
        per_user = int(rng.integers(2, 7))
        windows = []
        for u in range(n_users):
            for r in range(per_user):
                label = ActivityClass(int(rng.integers(0, 8)))
                windows.append(
                    make_window(
                        user=f"u{u}", report=f"u{u}-r{r}", label=label,
                        seed=int(rng.integers(0, 2**31)),
                    )
                )
        parts = split_population(windows, seed=trial)
        users = [set(w.user_id for w in p) for p in parts]
        assert not users[0] & users[1]
        assert not users[0] & users[2]
        assert not users[1] & users[2]
        assert sum(len(p) for p in parts) == len(windows)

        target = ActivityClass(int(rng.integers(0, 8)))
        try:
            task = make_task(parts, target, "balanced", seed=trial, split_kind="population")
        except ValueError:
            continue  # some partition had no positives; covered by contract
        for partition in (task.train, task.validation, task.test):
            labels = np.asarray(partition.labels)
            assert (labels == 1).sum() == (labels == 0).sum() > 0
        trials += 1
    _verdict(
        "split disjointness",
        trials > 0,
        f"500 datasets checked, {trials} balanced tasks with exact 1:1 ratios",
    )


def test_pipeline_null():
    """Full evaluate run on a separability-0 corpus (identical class
    laws): every per-activity AUROC mean must sit inside [0.45, 0.55]."""
    start = time.time()
    cfg = SynthConfig(
        users=200, reports_per_user=30, seed=20260812,
        missing_rate=0.02, separability=0.0,
    )
    timelines, _ = generate_corpus(cfg)
    windows, _ = build_dataset(timelines)
    del timelines
    exp = ExperimentConfig(
        split_kinds=("hybrid",),
        modes=("balanced",),
        repetitions=10,
        base_seed=202,
        train=TrainConfig(epochs=6, patience=2),
    )
    report = run_experiment(windows, exp, jobs=JOBS)
    means = {
        a.token: report.cell(a, "hybrid", "balanced").mean("auroc")
        for a in ActivityClass
    }
    elapsed = time.time() - start
    lo, hi = min(means.values()), max(means.values())
    ok = all(0.45 <= m <= 0.55 for m in means.values()) and elapsed < 900.0
    _verdict(
        "pipeline null test",
        ok,
        f"AUROC means in [{lo:.4f}, {hi:.4f}], {elapsed:.0f}s",
    )


def test_pipeline_signal():
    """Separability-1 corpus, 200 users x 50 reports: balanced hybrid
    AUROC >= 0.90 everywhere; balanced population above the null band
    everywhere and <= hybrid for at least 6 of 8 activities."""
    cfg = SynthConfig(
        users=200, reports_per_user=50, seed=20260811, missing_rate=0.02
    )
    timelines, _ = generate_corpus(cfg)
    windows, _ = build_dataset(timelines)
    del timelines
    exp = ExperimentConfig(
        split_kinds=("hybrid", "population"),
        modes=("balanced",),
        repetitions=10,
        base_seed=101,
        train=TrainConfig(epochs=6, patience=2),
    )
    report = run_experiment(windows, exp, jobs=JOBS)
    hybrid = {
        a: report.cell(a, "hybrid", "balanced").mean("auroc") for a in ActivityClass
    }
    population = {
        a: report.cell(a, "population", "balanced").mean("auroc")
        for a in ActivityClass
    }
    ordering = sum(population[a] <= hybrid[a] for a in ActivityClass)
    ok = (
        all(h >= 0.90 for h in hybrid.values())
        and all(p > 0.55 for p in population.values())
        and ordering >= 6
    )
    _verdict(
        "pipeline signal test",
        ok,
        f"min hybrid {min(hybrid.values()):.4f}, "
        f"min population {min(population.values()):.4f}, "
        f"population <= hybrid in {ordering}/8",
    )


def test_end_to_end_determinism(tmp_path):
    """Two runs from the same manifest produce byte-identical report CSVs
    (and the jobs count does not change the bytes)."""
    cfg_text = f"""
seed = 4242
jobs = 1
raw_dir = {tmp_path}/raw
dataset_dir = {tmp_path}/dataset
models_dir = {tmp_path}/models
report_dir = {tmp_path}/report
synth.users = 12
synth.reports_per_user = 10
synth.missing_rate = 0.01
network.layers = conv:6:7:4, relu, gap, dense:1, sigmoid
train.epochs = 2
eval.activities = Sleeping,Sports
eval.split_kinds = hybrid,population
eval.modes = balanced,imbalanced
eval.repetitions = 2
"""
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(cfg_text)
    for command in ("synth", "preprocess", "evaluate", "report"):
        assert main(["--quiet", "--config", str(cfg_path), command]) == 0
    manifest = tmp_path / "report" / "manifest.txt"
    first = (tmp_path / "report" / "report.csv").read_bytes()

    # rerun strictly from the manifest the first run left behind
    assert main(["--quiet", "--config", str(manifest), "evaluate"]) == 0
    assert main(["--quiet", "--config", str(manifest), "report"]) == 0
    second = (tmp_path / "report" / "report.csv").read_bytes()

    # and once more with a different worker count
    assert main(["--quiet", "--config", str(manifest), "--jobs", "2", "evaluate"]) == 0
    assert main(["--quiet", "--config", str(manifest), "--jobs", "2", "report"]) == 0
    third = (tmp_path / "report" / "report.csv").read_bytes()

    _verdict(
        "end-to-end determinism",
        first == second == third,
        f"report.csv identical across reruns ({len(first)} bytes)",
    )
