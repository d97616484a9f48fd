import numpy as np
import pytest

from harpipe import (
    ActivityClass,
    SynthConfig,
    build_dataset,
    generate_corpus,
    separability_pair,
    shuffle_labels,
    summarize_dataset,
)
from harpipe.synthgen import (
    BASE_PROFILE,
    DEFAULT_PROFILES,
    NYQUIST_HZ,
    ClassProfile,
    _blend_profile,
    truth_class_counts,
)


def test_generate_corpus_deterministic():
    cfg = SynthConfig(users=4, reports_per_user=5, seed=77, missing_rate=0.05)
    t1, truth1 = generate_corpus(cfg)
    t2, truth2 = generate_corpus(cfg)
    assert truth1 == truth2
    assert len(t1) == len(t2) == 4
    for a, b in zip(t1, t2):
        assert np.array_equal(a.times, b.times)
        assert np.array_equal(a.values, b.values)
        assert a.reports == b.reports


def test_generate_corpus_empty():
    timelines, truth = generate_corpus(SynthConfig(users=0))
    assert timelines == [] and truth == []


def test_degenerate_class_distribution():
    probs = tuple([1.0] + [0.0] * 7)
    cfg = SynthConfig(users=3, reports_per_user=6, class_probs=probs, seed=1)
    _, truth = generate_corpus(cfg)
    assert all(rec.label is ActivityClass.SLEEPING for rec in truth)


def test_invalid_configs_rejected():
    with pytest.raises(ValueError):
        SynthConfig(class_probs=tuple([0.5] * 8))
    with pytest.raises(ValueError):
        SynthConfig(class_probs=tuple([1.0]))
    with pytest.raises(ValueError):
        SynthConfig(missing_rate=1.5)
    with pytest.raises(ValueError):
        SynthConfig(separability=2.0)
    with pytest.raises(ValueError):
        SynthConfig(users=-1)


def test_profiles_respect_nyquist():
    for profile in DEFAULT_PROFILES.values():
        assert profile.harmonic_freq < NYQUIST_HZ
    with pytest.raises(ValueError, match="harmonic_freq"):
        ClassProfile((0.0, 0.0, 1.0), 0.1, 0.1, 2.0, 0.0)
    with pytest.raises(ValueError, match="unit"):
        ClassProfile((0.0, 0.0, 2.0), 0.1, 0.1, 0.5, 0.0)


def test_zero_separability_collapses_all_profiles():
    for cls, profile in DEFAULT_PROFILES.items():
        assert _blend_profile(BASE_PROFILE, profile, 0.0) == BASE_PROFILE
    blended = _blend_profile(BASE_PROFILE, DEFAULT_PROFILES[ActivityClass.SPORTS], 1.0)
    assert blended.noise_std == DEFAULT_PROFILES[ActivityClass.SPORTS].noise_std


def test_generated_streams_survive_preprocessing(small_corpus):
    # missing_rate == 0 in the fixture: every report must become a window
    outcomes = small_corpus["outcomes"]
    assert all(o.reason is None for o in outcomes)
    assert len(small_corpus["windows"]) == sum(
        len(tl.reports) for tl in small_corpus["timelines"]
    )


def test_bookkeeping_truth_counts_match_dataset_summary(small_corpus):
    summary = summarize_dataset(small_corpus["timelines"], small_corpus["outcomes"])
    assert summary.class_counts == truth_class_counts(small_corpus["truth"])


def test_discard_rate_shrinks_with_missing_rate():
    seeds = SynthConfig(users=6, reports_per_user=10, seed=5)
    lossy = SynthConfig(users=6, reports_per_user=10, seed=5, missing_rate=0.25)
    _, o_clean = build_dataset(generate_corpus(seeds)[0])
    _, o_lossy = build_dataset(generate_corpus(lossy)[0])
    drop_clean = sum(o.reason is not None for o in o_clean)
    drop_lossy = sum(o.reason is not None for o in o_lossy)
    assert drop_clean == 0
    assert drop_lossy > drop_clean


def test_separability_pair_shapes():
    cfg = SynthConfig(users=2, reports_per_user=3, seed=3)
    (sig_tl, sig_truth), (null_tl, null_truth) = separability_pair(cfg, 0.8)
    assert len(sig_truth) == len(null_truth) == 6
    # the null twin's effective profiles are the shared base law modulo
    # the per-user perturbation, identical across classes
    by_user = {}
    for rec in null_truth:
        key = rec.user_id
        params = (rec.orientation, rec.noise_std, rec.harmonic_amp, rec.drift_std)
        if key in by_user:
            assert by_user[key] == params
        else:
            by_user[key] = params


def test_shuffle_labels_preserves_multiset_and_data(small_corpus):
    windows = small_corpus["windows"]
    shuffled = shuffle_labels(windows, seed=4)
    assert len(shuffled) == len(windows)
    assert sorted(int(w.label) for w in shuffled) == sorted(
        int(w.label) for w in windows
    )
    changed = 0
    for a, b in zip(windows, shuffled):
        assert a.data is b.data  # data untouched
        assert a.report_id == b.report_id
        changed += a.label != b.label
    assert changed > 0


def test_shuffle_labels_identity_and_determinism(small_corpus):
    windows = small_corpus["windows"]
    identity = shuffle_labels(windows, seed=None)
    assert [w.label for w in identity] == [w.label for w in windows]
    s1 = shuffle_labels(windows, seed=9)
    s2 = shuffle_labels(windows, seed=9)
    assert [w.label for w in s1] == [w.label for w in s2]
    with pytest.raises(ValueError):
        shuffle_labels([], seed=1)


def test_reports_carry_merge_source_labels(small_corpus):
    raws = {r.raw_activity for tl in small_corpus["timelines"] for r in tl.reports}
    # merged classes rotate through their diary spellings
    assert raws & {"Calling", "Chatting/reading", "Social media",
                   "Reading internet information"}
    from harpipe import map_activity

    assert all(map_activity(r) is not None for r in raws)


def test_stronger_separability_scores_at_least_as_high():
    # Monte-Carlo: mean AUROC at separability 1.0 should dominate 0.3
    from harpipe import ActivityClass, TrainConfig, make_task, predict, split_hybrid, train_binary
    from harpipe.metrics import auroc
    from harpipe.network import parse_layer_string

    spec = parse_layer_string("conv:8:7:3, relu, maxpool:2, gap, dense:1, sigmoid")

    probs = tuple([0.7 / 7] * 6 + [0.3] + [0.7 / 7])  # enough Sports everywhere

    def mean_auroc(separability):
        scores = []
        for seed in range(5):
            cfg = SynthConfig(
                users=12, reports_per_user=16, seed=300 + seed,
                separability=separability, class_probs=probs,
            )
            windows, _ = build_dataset(generate_corpus(cfg)[0])
            parts = split_hybrid(windows, seed=seed)
            task = make_task(parts, ActivityClass.SPORTS, "balanced", seed=seed)
            state, _ = train_binary(task, spec, TrainConfig(epochs=20, seed=seed))
            scores.append(auroc(predict(state, list(task.test.windows)), task.test.labels))
        return float(np.mean(scores))

    assert mean_auroc(1.0) >= mean_auroc(0.3)


def test_sample_cadence_and_preroll(small_corpus):
    tl = small_corpus["timelines"][0]
    rep = tl.reports[0]
    in_window = tl.times[
        (tl.times >= rep.fill_start - 240_000) & (tl.times < rep.fill_start)
    ]
    assert in_window.shape[0] >= 750  # >= 4 minutes at ~300 ms
    gaps = np.diff(in_window)
    assert gaps.max() <= 1000  # resampling coverage preserved
    assert np.all(tl.times[:-1] < tl.times[1:])  # strictly increasing
