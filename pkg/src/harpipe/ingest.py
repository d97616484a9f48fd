"""Parsing of raw sensor/report files and per-user timeline assembly.

File formats:

* Accelerometer CSV: header ``user_id,timestamp_ms,x,y,z``, UTF-8,
  ``\\n`` line endings, decimal-point reals.
* Self-report JSON-lines: one object per line with keys ``user_id``,
  ``report_id``, ``fill_start_ms``, ``fill_end_ms``, ``raw_activity``
  and optional ``country``.

Parsers stream line by line (no whole-file reads) and follow a
skip-and-count contract: structurally broken rows are counted, never
fatal; only an unreadable header is a hard error.

Timelines store samples as flat arrays (timestamps plus a 3xN value
matrix); corpora run to millions of samples, so per-sample objects are
materialized only on demand.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

import numpy as np

from .domain import AccelSample, ActivityClass, DatasetSummary, SelfReport

ACCEL_HEADER = "user_id,timestamp_ms,x,y,z"


class ParseError(Exception):
    """Raised when an input stream cannot be interpreted at all."""


@dataclass
class UserTimeline:
    """One user's samples (time-sorted, deduplicated) and reports.

    times is int64 and strictly increasing; values is float64 (3, n)
    with rows x, y, z. The samples property rebuilds AccelSample objects
    for convenience at small scale.
    """

    user_id: str
    times: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    values: np.ndarray = field(default_factory=lambda: np.empty((3, 0)))
    reports: list[SelfReport] = field(default_factory=list)

    @property
    def samples(self) -> list[AccelSample]:
        return [
            AccelSample(
                self.user_id,
                int(t),
                float(self.values[0, i]),
                float(self.values[1, i]),
                float(self.values[2, i]),
            )
            for i, t in enumerate(self.times)
        ]


def _lines(stream: IO) -> Iterator[str]:
    for raw in stream:
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8", errors="replace")
        yield raw.rstrip("\n").rstrip("\r")


def parse_accel_log(stream: IO) -> tuple[list[AccelSample], int]:
    """Parse an accelerometer CSV stream.

    Returns (samples, malformed_row_count). Row order is preserved.
    Raises ParseError if the header line is missing or wrong.
    """
    lines = _lines(stream)
    try:
        header = next(lines)
    except StopIteration:
        raise ParseError("empty accelerometer file: missing header") from None
    if header.strip() != ACCEL_HEADER:
        raise ParseError(
            f"bad accelerometer header {header.strip()!r}, expected {ACCEL_HEADER!r}"
        )

    samples: list[AccelSample] = []
    malformed = 0
    for line in lines:
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            malformed += 1
            continue
        user_id = parts[0].strip()
        try:
            t = int(parts[1])
            x, y, z = (float(p) for p in parts[2:5])
        except ValueError:
            malformed += 1
            continue
        if not user_id or t < 0 or not all(math.isfinite(v) for v in (x, y, z)):
            malformed += 1
            continue
        samples.append(AccelSample(user_id, t, x, y, z))
    return samples, malformed


def parse_report_log(stream: IO) -> tuple[list[SelfReport], int]:
    """Parse a self-report JSON-lines stream.

    Returns (reports, malformed_line_count). Lines that are not valid
    JSON objects, miss required fields, or violate fill_start <= fill_end
    are skipped and counted.
    """
    reports: list[SelfReport] = []
    malformed = 0
    for line in _lines(stream):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            malformed += 1
            continue
        if not isinstance(obj, dict):
            malformed += 1
            continue
        try:
            report = SelfReport(
                user_id=_req_str(obj, "user_id"),
                report_id=_req_str(obj, "report_id"),
                fill_start=_req_int(obj, "fill_start_ms"),
                fill_end=_req_int(obj, "fill_end_ms"),
                raw_activity=_req_str(obj, "raw_activity"),
                country=obj.get("country"),
            )
        except (KeyError, TypeError, ValueError):
            malformed += 1
            continue
        reports.append(report)
    return reports, malformed


def _req_str(obj: dict, key: str) -> str:
    v = obj[key]
    if not isinstance(v, str):
        raise TypeError(f"{key} must be a string")
    return v


def _req_int(obj: dict, key: str) -> int:
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError(f"{key} must be an integer")
    return v


def build_timelines(
    samples: Iterable[AccelSample], reports: Iterable[SelfReport]
) -> list[UserTimeline]:
    """Group samples and reports into one timeline per user.

    Samples are sorted by (t, input order) and deduplicated by
    timestamp, first occurrence winning; reports are sorted by
    fill_start. The result is ordered by user_id.
    """
    per_user: dict[str, list[AccelSample]] = {}
    per_user_reports: dict[str, list[SelfReport]] = {}
    for sample in samples:
        per_user.setdefault(sample.user_id, []).append(sample)
    for report in reports:
        per_user_reports.setdefault(report.user_id, []).append(report)

    timelines = []
    for user_id in sorted(set(per_user) | set(per_user_reports)):
        rows = per_user.get(user_id, [])
        rows.sort(key=lambda s: s.t)  # stable sort keeps input order on ties
        times = np.empty(len(rows), dtype=np.int64)
        values = np.empty((3, len(rows)))
        n = 0
        last_t = None
        for s in rows:
            if s.t == last_t:
                continue
            times[n] = s.t
            values[0, n], values[1, n], values[2, n] = s.x, s.y, s.z
            last_t = s.t
            n += 1
        user_reports = per_user_reports.get(user_id, [])
        user_reports.sort(key=lambda r: (r.fill_start, r.report_id))
        timelines.append(
            UserTimeline(
                user_id=user_id,
                times=times[:n].copy(),
                values=values[:, :n].copy(),
                reports=user_reports,
            )
        )
    return timelines


def summarize_dataset(
    timelines: Iterable[UserTimeline], outcomes: Iterable
) -> DatasetSummary:
    """Tabulate per-label/per-class report counts and discard reasons.

    ``outcomes`` are the per-report records produced by
    preprocess.build_dataset; their ``reason`` is None for reports that
    became windows.
    """
    summary = DatasetSummary()
    for tl in timelines:
        summary.users += 1
        for report in tl.reports:
            key = report.raw_activity.strip()
            summary.raw_label_counts[key] = summary.raw_label_counts.get(key, 0) + 1

    for outcome in outcomes:
        summary.reports_total += 1
        if outcome.reason is None:
            cls = ActivityClass(outcome.label)
            summary.class_counts[cls] = summary.class_counts.get(cls, 0) + 1
        else:
            summary.reports_discarded += 1
            key = outcome.reason.value
            summary.discard_reasons[key] = summary.discard_reasons.get(key, 0) + 1
    return summary
