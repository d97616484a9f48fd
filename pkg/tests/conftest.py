import numpy as np
import pytest

from harpipe import (
    AccelSample,
    ActivityClass,
    LabeledWindow,
    SelfReport,
    SynthConfig,
    build_dataset,
    build_timelines,
    generate_corpus,
)


def make_window(user="u1", report="r1", label=ActivityClass.SLEEPING, seed=0):
    rng = np.random.default_rng(seed)
    return LabeledWindow(
        user_id=user,
        report_id=report,
        data=rng.normal(size=(3, 600)),
        label=label,
    )


def dense_timeline(user="u1", reports=None, start=1_000_000, step_ms=300):
    """A timeline with gap-free 300 ms sampling spanning all its reports."""
    reports = reports or []
    end = max((r.fill_end for r in reports), default=start + 600_000) + 60_000
    times = range(start - 400_000, end, step_ms)
    samples = [
        AccelSample(user, t, 0.1, -0.2, 9.81) for t in times
    ]
    return build_timelines(samples, reports)[0]


def report(user="u1", rid="r1", fill_start=1_000_000, fill_len=30_000, activity="Sleeping"):
    return SelfReport(
        user_id=user,
        report_id=rid,
        fill_start=fill_start,
        fill_end=fill_start + fill_len,
        raw_activity=activity,
    )


@pytest.fixture(scope="session")
def small_corpus():
    """A small eight-class synthetic corpus shared across tests."""
    cfg = SynthConfig(users=20, reports_per_user=18, seed=99, missing_rate=0.0)
    timelines, truth = generate_corpus(cfg)
    windows, outcomes = build_dataset(timelines)
    return {
        "cfg": cfg,
        "timelines": timelines,
        "truth": truth,
        "windows": windows,
        "outcomes": outcomes,
    }
