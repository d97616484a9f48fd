"""Window extraction: from per-user timelines to labeled 3x600 matrices.

For every self-report the pipeline selects the 180 s of accelerometer
data immediately before the fill started, checks that any data exists
within +-300 s of that moment, resamples the selection onto a 300 ms
grid by linear interpolation, and discards reports whose grid cannot be
fully covered. The window is anchored at fill_start, so the fill period
itself is excluded by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .domain import (
    GRID_STEP_MS,
    WINDOW_LENGTH,
    ActivityClass,
    LabeledWindow,
    SelfReport,
    map_activity,
)
from .ingest import UserTimeline

PRE_WINDOW_MS = 180_000
PRESENCE_HALF_MS = 300_000
MAX_BRACKET_GAP_MS = 1_000

DATASET_FORMAT_VERSION = 1
WINDOWS_FILE = "windows.jsonl"
OUTCOMES_FILE = "outcomes.jsonl"


class DiscardReason(Enum):
    """Why a report produced no window."""

    NO_DATA_IN_PRESENCE_WINDOW = "no-data-in-presence-window"
    TOO_FEW_SAMPLES = "too-few-samples"
    DROPPED_CLASS = "dropped-class"


@dataclass(frozen=True, eq=False)
class RawWindow:
    """Samples restricted to [window_start, fill_start), pre-resampling.

    times holds the sample timestamps (ms, strictly increasing) and
    values the matching (3, n) acceleration matrix.
    """

    user_id: str
    report_id: str
    window_start: int
    times: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class ReportOutcome:
    """One line of the per-report outcome log."""

    user_id: str
    report_id: str
    raw_activity: str
    label: Optional[int] = None
    reason: Optional[DiscardReason] = None


def extract_window(timeline: UserTimeline, report: SelfReport):
    """Select the report's pre-fill samples, or flag missing data.

    Returns a RawWindow over [fill_start - 180000, fill_start), or
    DiscardReason.NO_DATA_IN_PRESENCE_WINDOW when the user has no sample
    within +-300 s of fill_start. Raises ValueError on a user mismatch.
    """
    if report.user_id != timeline.user_id:
        raise ValueError(
            f"report user {report.user_id!r} does not match timeline user "
            f"{timeline.user_id!r}"
        )
    return _extract(timeline.times, timeline.values, report)


def _extract(times: np.ndarray, values: np.ndarray, report: SelfReport):
    lo = np.searchsorted(times, report.fill_start - PRESENCE_HALF_MS, side="left")
    hi = np.searchsorted(times, report.fill_start + PRESENCE_HALF_MS, side="right")
    if lo == hi:
        return DiscardReason.NO_DATA_IN_PRESENCE_WINDOW

    window_start = report.fill_start - PRE_WINDOW_MS
    a = np.searchsorted(times, window_start, side="left")
    b = np.searchsorted(times, report.fill_start, side="left")  # fill excluded
    return RawWindow(
        user_id=report.user_id,
        report_id=report.report_id,
        window_start=window_start,
        times=np.asarray(times[a:b], dtype=np.int64),
        values=np.asarray(values[:, a:b], dtype=np.float64),
    )


def resample(raw: RawWindow):
    """Interpolate a RawWindow onto the 600-point, 300 ms grid.

    Each grid point needs bracketing samples within 1000 ms on both
    sides; grid points before the first or after the last sample may use
    the one-sided nearest sample within 1000 ms. Returns the (3, 600)
    matrix, or DiscardReason.TOO_FEW_SAMPLES if any grid point is
    uncovered.
    """
    times = raw.times
    n = times.shape[0]
    if n == 0:
        return DiscardReason.TOO_FEW_SAMPLES

    grid = raw.window_start + GRID_STEP_MS * np.arange(WINDOW_LENGTH, dtype=np.int64)
    right = np.searchsorted(times, grid, side="left")
    left = right - 1

    has_left = left >= 0
    has_right = right < n
    left_c = np.clip(left, 0, n - 1)
    right_c = np.clip(right, 0, n - 1)

    left_gap = np.where(has_left, grid - times[left_c], np.iinfo(np.int64).max)
    right_gap = np.where(has_right, times[right_c] - grid, np.iinfo(np.int64).max)

    exact = has_right & (right_gap == 0)
    interior = has_left & has_right & (left_gap <= MAX_BRACKET_GAP_MS) & (
        right_gap <= MAX_BRACKET_GAP_MS
    )
    head = ~has_left & has_right & (right_gap <= MAX_BRACKET_GAP_MS)
    tail = has_left & ~has_right & (left_gap <= MAX_BRACKET_GAP_MS)

    if not np.all(exact | interior | head | tail):
        return DiscardReason.TOO_FEW_SAMPLES

    vals = raw.values
    vl = vals[:, left_c]
    vr = vals[:, right_c]
    span = np.maximum(times[right_c] - times[left_c], 1).astype(np.float64)
    frac = left_gap.astype(np.float64) / span
    lerped = vl + (vr - vl) * frac
    # interpolation stays inside its bracket even under float rounding
    lerped = np.clip(lerped, np.minimum(vl, vr), np.maximum(vl, vr))

    out = np.where(exact | head, vr, np.where(tail, vl, lerped))
    return np.ascontiguousarray(out)


def build_dataset(
    timelines: Iterable[UserTimeline],
) -> tuple[list[LabeledWindow], list[ReportOutcome]]:
    """Run every report through label mapping, extraction and resampling.

    Returns the emitted windows and an outcome log with exactly one entry
    per input report, ordered by (user_id, fill_start). Deterministic.
    """
    windows: list[LabeledWindow] = []
    outcomes: list[ReportOutcome] = []

    for tl in sorted(timelines, key=lambda t: t.user_id):
        times, values = tl.times, tl.values
        for report in sorted(tl.reports, key=lambda r: (r.fill_start, r.report_id)):
            label = map_activity(report.raw_activity)
            if label is None:
                outcomes.append(
                    _outcome(report, reason=DiscardReason.DROPPED_CLASS)
                )
                continue
            raw = _extract(times, values, report)
            if isinstance(raw, DiscardReason):
                outcomes.append(_outcome(report, reason=raw))
                continue
            matrix = resample(raw)
            if isinstance(matrix, DiscardReason):
                outcomes.append(_outcome(report, reason=matrix))
                continue
            windows.append(
                LabeledWindow(
                    user_id=report.user_id,
                    report_id=report.report_id,
                    data=matrix,
                    label=label,
                    grid_start_ms=raw.window_start,
                )
            )
            outcomes.append(_outcome(report, label=int(label)))

    return windows, outcomes


def _outcome(report: SelfReport, label=None, reason=None) -> ReportOutcome:
    return ReportOutcome(
        user_id=report.user_id,
        report_id=report.report_id,
        raw_activity=report.raw_activity,
        label=label,
        reason=reason,
    )


def write_dataset(
    windows: Sequence[LabeledWindow],
    outcomes: Sequence[ReportOutcome],
    out_dir: Path,
) -> None:
    """Persist a dataset as windows.jsonl plus outcomes.jsonl."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / WINDOWS_FILE, "w", encoding="utf-8", newline="\n") as fh:
        for w in windows:
            fh.write(
                json.dumps(
                    {
                        "user_id": w.user_id,
                        "report_id": w.report_id,
                        "label": int(w.label),
                        "grid_start_ms": w.grid_start_ms,
                        "x": w.data[0].tolist(),
                        "y": w.data[1].tolist(),
                        "z": w.data[2].tolist(),
                    }
                )
                + "\n"
            )
    with open(out_dir / OUTCOMES_FILE, "w", encoding="utf-8", newline="\n") as fh:
        for o in outcomes:
            fh.write(
                json.dumps(
                    {
                        "user_id": o.user_id,
                        "report_id": o.report_id,
                        "raw_activity": o.raw_activity,
                        "status": "window" if o.reason is None else o.reason.value,
                        "label": o.label,
                    }
                )
                + "\n"
            )


def read_dataset(
    in_dir: Path,
) -> tuple[list[LabeledWindow], list[ReportOutcome]]:
    """Load a dataset written by write_dataset. Bit-exact round trip."""
    in_dir = Path(in_dir)
    windows: list[LabeledWindow] = []
    with open(in_dir / WINDOWS_FILE, encoding="utf-8") as fh:
        for line in fh:
            obj = json.loads(line)
            data = np.array([obj["x"], obj["y"], obj["z"]], dtype=np.float64)
            windows.append(
                LabeledWindow(
                    user_id=obj["user_id"],
                    report_id=obj["report_id"],
                    data=data,
                    label=ActivityClass(obj["label"]),
                    grid_start_ms=obj["grid_start_ms"],
                )
            )
    outcomes: list[ReportOutcome] = []
    with open(in_dir / OUTCOMES_FILE, encoding="utf-8") as fh:
        for line in fh:
            obj = json.loads(line)
            status = obj["status"]
            outcomes.append(
                ReportOutcome(
                    user_id=obj["user_id"],
                    report_id=obj["report_id"],
                    raw_activity=obj["raw_activity"],
                    label=obj["label"],
                    reason=None if status == "window" else DiscardReason(status),
                )
            )
    return windows, outcomes
