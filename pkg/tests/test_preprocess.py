import numpy as np
import pytest

from harpipe import (
    AccelSample,
    ActivityClass,
    build_dataset,
    build_timelines,
    extract_window,
    resample,
)
from harpipe.preprocess import (
    MAX_BRACKET_GAP_MS,
    PRE_WINDOW_MS,
    PRESENCE_HALF_MS,
    DiscardReason,
    RawWindow,
    read_dataset,
    write_dataset,
)

from conftest import report


def timeline_with(samples, reports):
    return build_timelines(samples, reports)[0]


def flat_samples(user, times, x=0.1, y=-0.2, z=9.81):
    return [AccelSample(user, int(t), x, y, z) for t in times]


def oracle_resample(raw: RawWindow):
    """Independent per-grid-point scan: bracket search, 1 s gap rule,
    one-sided nearest at the edges, linear interpolation."""
    times = [int(t) for t in raw.times]
    n = len(times)
    out = np.empty((3, 600))
    for k in range(600):
        t = raw.window_start + 300 * k
        lefts = [i for i in range(n) if times[i] <= t]
        rights = [i for i in range(n) if times[i] >= t]
        li = lefts[-1] if lefts else None
        ri = rights[0] if rights else None
        if ri is not None and times[ri] == t:
            out[:, k] = raw.values[:, ri]
            continue
        if li is None and ri is None:
            return DiscardReason.TOO_FEW_SAMPLES
        if li is None:
            if times[ri] - t > MAX_BRACKET_GAP_MS:
                return DiscardReason.TOO_FEW_SAMPLES
            out[:, k] = raw.values[:, ri]
            continue
        if ri is None:
            if t - times[li] > MAX_BRACKET_GAP_MS:
                return DiscardReason.TOO_FEW_SAMPLES
            out[:, k] = raw.values[:, li]
            continue
        if t - times[li] > MAX_BRACKET_GAP_MS or times[ri] - t > MAX_BRACKET_GAP_MS:
            return DiscardReason.TOO_FEW_SAMPLES
        frac = (t - times[li]) / (times[ri] - times[li])
        vl, vr = raw.values[:, li], raw.values[:, ri]
        out[:, k] = np.clip(
            vl + (vr - vl) * frac, np.minimum(vl, vr), np.maximum(vl, vr)
        )
    return out


def test_selection_interval_arithmetic():
    fill_start = 1_000_000
    rep = report(fill_start=fill_start)
    probe_times = [819_999, 820_000, 900_000, 999_999, 1_000_000, 1_010_000]
    tl = timeline_with(flat_samples("u1", probe_times), [rep])
    raw = extract_window(tl, rep)
    assert isinstance(raw, RawWindow)
    assert raw.window_start == fill_start - PRE_WINDOW_MS == 820_000
    assert list(raw.times) == [820_000, 900_000, 999_999]


def test_fill_period_sample_excluded():
    rep = report(fill_start=1_000_000, fill_len=60_000)
    only_during_fill = flat_samples("u1", [1_010_000])
    tl = timeline_with(only_during_fill, [rep])
    raw = extract_window(tl, rep)
    assert isinstance(raw, RawWindow)  # presence holds: sample within 300 s
    assert raw.times.size == 0
    assert resample(raw) is DiscardReason.TOO_FEW_SAMPLES


def test_presence_rule_discard():
    rep = report(fill_start=1_000_000)
    far = flat_samples("u1", [1_000_000 - 400_000, 1_000_000 + 400_000])
    tl = timeline_with(far, [rep])
    assert extract_window(tl, rep) is DiscardReason.NO_DATA_IN_PRESENCE_WINDOW


def test_presence_window_is_inclusive_and_centered():
    rep = report(fill_start=1_000_000)
    edge = flat_samples("u1", [1_000_000 + PRESENCE_HALF_MS])
    assert isinstance(extract_window(timeline_with(edge, [rep]), rep), RawWindow)
    edge_left = flat_samples("u1", [1_000_000 - PRESENCE_HALF_MS])
    assert isinstance(
        extract_window(timeline_with(edge_left, [rep]), rep), RawWindow
    )


def test_user_mismatch_is_hard_error():
    rep = report(user="u2")
    tl = timeline_with(flat_samples("u1", [999_000]), [])
    with pytest.raises(ValueError):
        extract_window(tl, rep)


def test_resample_identity_on_grid_aligned_samples():
    fill_start = 1_000_000
    rep = report(fill_start=fill_start)
    rng = np.random.default_rng(12)
    grid = [820_000 + 300 * k for k in range(600)]
    samples = [
        AccelSample("u1", t, float(v[0]), float(v[1]), float(v[2]))
        for t, v in zip(grid, rng.normal(size=(600, 3)))
    ]
    tl = timeline_with(samples, [rep])
    raw = extract_window(tl, rep)
    matrix = resample(raw)
    assert isinstance(matrix, np.ndarray)
    assert np.array_equal(matrix, raw.values)  # bit-exact


def test_resample_midpoint_and_one_sided_tail():
    # samples every 600 ms; odd grid points are exact midpoints and the
    # final grid point falls 300 ms after the last sample
    rep = report(fill_start=PRE_WINDOW_MS)  # window_start = 0
    xs = [1.0 + j for j in range(300)]
    samples = [
        AccelSample("u1", 600 * j, xs[j], -0.25, 9.5) for j in range(300)
    ]
    tl = timeline_with(samples, [rep])
    raw = extract_window(tl, rep)
    matrix = resample(raw)
    assert isinstance(matrix, np.ndarray)

    expected = np.empty((3, 600))
    for k in range(599):
        if k % 2 == 0:
            expected[0, k] = 1.0 + k // 2
        else:
            expected[0, k] = 1.0 + k // 2 + 0.5
    expected[0, 599] = xs[-1]  # one-sided nearest within 1 s
    expected[1, :] = -0.25
    expected[2, :] = 9.5
    assert np.array_equal(matrix, expected)  # bit-exact
    # the documented example: 1.0 at 0 ms, 2.0 at 600 ms -> 1.5 at 300 ms
    assert matrix[0, 1] == 1.5


def test_resample_discards_when_samples_stop_early():
    fill_start = 1_000_000
    rep = report(fill_start=fill_start)
    times = range(820_000, fill_start - 30_000, 300)  # stops 30 s early
    tl = timeline_with(flat_samples("u1", times), [rep])
    raw = extract_window(tl, rep)
    assert resample(raw) is DiscardReason.TOO_FEW_SAMPLES


def test_resample_discards_on_interior_gap():
    fill_start = 1_000_000
    rep = report(fill_start=fill_start)
    times = [t for t in range(819_000, fill_start, 300) if not 900_000 < t < 903_000]
    tl = timeline_with(flat_samples("u1", times), [rep])
    raw = extract_window(tl, rep)
    assert resample(raw) is DiscardReason.TOO_FEW_SAMPLES


def test_resample_matches_bruteforce_oracle():
    rng = np.random.default_rng(77)
    for trial in range(8):
        fill_start = 1_000_000
        rep = report(fill_start=fill_start)
        jitter = rng.integers(-120, 120, size=640)
        times = np.sort(818_000 + 300 * np.arange(640) + jitter)
        times = times[np.concatenate([[True], np.diff(times) > 0])]
        drop = rng.random(times.shape[0]) > 0.05
        times = times[drop]
        samples = [
            AccelSample("u1", int(t), float(rng.normal()), float(rng.normal()), 9.8)
            for t in times
        ]
        tl = timeline_with(samples, [rep])
        raw = extract_window(tl, rep)
        got = resample(raw)
        want = oracle_resample(raw)
        if isinstance(want, DiscardReason):
            assert got is want
        else:
            assert isinstance(got, np.ndarray)
            np.testing.assert_allclose(got, want, rtol=0, atol=1e-15)


def test_interpolation_respects_bracket_envelope():
    rng = np.random.default_rng(3)
    fill_start = 1_000_000
    rep = report(fill_start=fill_start)
    times = np.sort(
        rng.choice(np.arange(818_000, fill_start, 100), size=1500, replace=False)
    )
    samples = [
        AccelSample("u1", int(t), float(rng.normal()), float(rng.normal()), 9.8)
        for t in times
    ]
    tl = timeline_with(samples, [rep])
    raw = extract_window(tl, rep)
    matrix = resample(raw)
    assert isinstance(matrix, np.ndarray)
    for k in range(600):
        t = raw.window_start + 300 * k
        li = np.searchsorted(raw.times, t, side="right") - 1
        ri = np.searchsorted(raw.times, t, side="left")
        lo = np.minimum(raw.values[:, max(li, 0)], raw.values[:, min(ri, len(raw.times) - 1)])
        hi = np.maximum(raw.values[:, max(li, 0)], raw.values[:, min(ri, len(raw.times) - 1)])
        assert np.all(matrix[:, k] >= lo) and np.all(matrix[:, k] <= hi)


def test_build_dataset_conservation_and_order(small_corpus):
    outcomes = small_corpus["outcomes"]
    windows = small_corpus["windows"]
    n_reports = sum(len(tl.reports) for tl in small_corpus["timelines"])
    discards = [o for o in outcomes if o.reason is not None]
    assert len(outcomes) == n_reports
    assert len(windows) + len(discards) == n_reports
    keys = [(o.user_id, o.report_id) for o in outcomes]
    assert keys == sorted(keys)  # ordered log


def test_build_dataset_drops_unmapped_labels():
    rep = report(activity="Break")
    tl = timeline_with(flat_samples("u1", range(818_000, 1_001_000, 300)), [rep])
    windows, outcomes = build_dataset([tl])
    assert windows == []
    assert outcomes[0].reason is DiscardReason.DROPPED_CLASS


def test_build_dataset_emits_labeled_window():
    rep = report(activity="Social media")
    tl = timeline_with(flat_samples("u1", range(818_000, 1_001_000, 300)), [rep])
    windows, outcomes = build_dataset([tl])
    assert len(windows) == 1
    w = windows[0]
    assert w.label is ActivityClass.ONLINE_COMMUNICATION
    assert w.data.shape == (3, 600)
    assert w.grid_start_ms == 820_000
    assert outcomes[0].reason is None and outcomes[0].label == int(w.label)


def test_build_dataset_deterministic(small_corpus):
    w1, o1 = build_dataset(small_corpus["timelines"])
    w2, o2 = build_dataset(small_corpus["timelines"])
    assert o1 == o2
    assert len(w1) == len(w2)
    for a, b in zip(w1, w2):
        assert a.report_id == b.report_id and a.label == b.label
        assert np.array_equal(a.data, b.data)  # bit-for-bit


def test_dataset_files_round_trip(tmp_path, small_corpus):
    windows, outcomes = small_corpus["windows"], small_corpus["outcomes"]
    write_dataset(windows, outcomes, tmp_path)
    w2, o2 = read_dataset(tmp_path)
    assert o2 == list(outcomes)
    assert len(w2) == len(windows)
    for a, b in zip(windows, w2):
        assert (a.user_id, a.report_id, a.label, a.grid_start_ms) == (
            b.user_id,
            b.report_id,
            b.label,
            b.grid_start_ms,
        )
        assert np.array_equal(a.data, b.data)
