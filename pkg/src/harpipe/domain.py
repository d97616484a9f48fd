"""Core value types shared by every pipeline stage.

Everything here is an immutable value: accelerometer samples, diary
reports, the closed 8-class activity set, labeled training windows, and
the dataset summary used for descriptive statistics. Construction
validates invariants, so downstream code can assume well-formed values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional

import numpy as np

WINDOW_AXES = 3
WINDOW_LENGTH = 600
GRID_STEP_MS = 300


class ActivityClass(IntEnum):
    """The eight retained activities, with stable serialization codes."""

    SLEEPING = 0
    EATING = 1
    STUDYING = 2
    ATTENDING_LECTURE = 3
    ONLINE_COMMUNICATION = 4
    WATCHING_VIDEOS = 5
    SPORTS = 6
    SHOPPING = 7

    @property
    def display_name(self) -> str:
        return _DISPLAY_NAMES[self]

    @property
    def token(self) -> str:
        """Compact spelling used in config files and CSV columns."""
        return _TOKENS[self]

    @classmethod
    def from_token(cls, token: str) -> "ActivityClass":
        try:
            return _TOKEN_LOOKUP[token.strip().casefold()]
        except KeyError:
            raise ValueError(f"unknown activity: {token!r}") from None


_TOKENS = {
    ActivityClass.SLEEPING: "Sleeping",
    ActivityClass.EATING: "Eating",
    ActivityClass.STUDYING: "Studying",
    ActivityClass.ATTENDING_LECTURE: "AttendingLecture",
    ActivityClass.ONLINE_COMMUNICATION: "OnlineCommunication",
    ActivityClass.WATCHING_VIDEOS: "WatchingVideos",
    ActivityClass.SPORTS: "Sports",
    ActivityClass.SHOPPING: "Shopping",
}

_TOKEN_LOOKUP = {t.casefold(): c for c, t in _TOKENS.items()}

_DISPLAY_NAMES = {
    ActivityClass.SLEEPING: "Sleeping",
    ActivityClass.EATING: "Eating",
    ActivityClass.STUDYING: "Studying",
    ActivityClass.ATTENDING_LECTURE: "Attending lecture",
    ActivityClass.ONLINE_COMMUNICATION: "Online communication",
    ActivityClass.WATCHING_VIDEOS: "Watching videos/TV",
    ActivityClass.SPORTS: "Sport",
    ActivityClass.SHOPPING: "Shopping",
}

# Diary labels that keep their own class.
_IDENTITY_LABELS = {
    "sleeping": ActivityClass.SLEEPING,
    "eating": ActivityClass.EATING,
    "studying": ActivityClass.STUDYING,
    "attending a lecture": ActivityClass.ATTENDING_LECTURE,
    "watching videos/tv": ActivityClass.WATCHING_VIDEOS,
    "sports": ActivityClass.SPORTS,
    "shopping": ActivityClass.SHOPPING,
}

# Diary labels folded into a broader class.
_MERGED_LABELS = {
    "other shopping": ActivityClass.SHOPPING,
    "calling": ActivityClass.ONLINE_COMMUNICATION,
    "chatting/reading": ActivityClass.ONLINE_COMMUNICATION,
    "reading internet information": ActivityClass.ONLINE_COMMUNICATION,
    "social media": ActivityClass.ONLINE_COMMUNICATION,
}

_LABEL_MAP = {**_IDENTITY_LABELS, **_MERGED_LABELS}

# Diary labels documented as dropped (too rare, too broad, or too general).
# Behaviorally identical to unknown labels; kept for bookkeeping and tests.
DROPPED_LABELS = frozenset(
    {
        "travelling",
        "movie, theatre, concert",
        "hobbies",
        "arts",
        "happy hour/drinking",
        "other entertainment",
        "entertainment exhibit, culture",
        "personal care",
        "games",
        "social life",
        "voluntary work",
        "nothing special",
        "break",
        "other",
    }
)


def map_activity(raw_label: str) -> Optional[ActivityClass]:
    """Map a raw diary label to its final class, or None if not retained.

    Matching trims whitespace and case-folds, since labels entered across
    five countries are not byte-identical. Unknown labels map to None
    rather than raising, same as documented dropped labels.
    """
    return _LABEL_MAP.get(raw_label.strip().casefold())


@dataclass(frozen=True)
class AccelSample:
    """One timestamped 3-axis accelerometer reading (m/s^2) for one user."""

    user_id: str
    t: int
    x: float
    y: float
    z: float

    def __post_init__(self):
        if self.t < 0:
            raise ValueError(f"negative timestamp: {self.t}")
        for axis, v in (("x", self.x), ("y", self.y), ("z", self.z)):
            if not math.isfinite(v):
                raise ValueError(f"non-finite {axis} value: {v}")


@dataclass(frozen=True)
class SelfReport:
    """One diary entry: who, when the form was filled, and the raw label."""

    user_id: str
    report_id: str
    fill_start: int
    fill_end: int
    raw_activity: str
    country: Optional[str] = None

    def __post_init__(self):
        if self.fill_start > self.fill_end:
            raise ValueError(
                f"fill_start {self.fill_start} after fill_end {self.fill_end}"
            )
        if not self.raw_activity:
            raise ValueError("empty raw_activity")


@dataclass(frozen=True, eq=False)
class LabeledWindow:
    """A resampled 3x600 acceleration matrix with its activity label.

    Rows are the x, y, z axes; columns are 600 grid points spaced 300 ms
    apart starting at grid_start_ms. This is the unit of learning.
    """

    user_id: str
    report_id: str
    data: np.ndarray
    label: ActivityClass
    grid_start_ms: int = 0

    def __post_init__(self):
        violations = validate_window(self)
        if violations:
            raise ValueError("invalid window: " + "; ".join(violations))


def validate_window(w: LabeledWindow) -> list[str]:
    """Return the list of violated window invariants; empty means valid."""
    violations = []
    data = np.asarray(w.data)
    if data.ndim != 2:
        violations.append(f"rank {data.ndim}, expected 2")
        return violations
    if data.shape[0] != WINDOW_AXES:
        violations.append(f"row count {data.shape[0]}, expected {WINDOW_AXES}")
    if data.shape[1] != WINDOW_LENGTH:
        violations.append(f"column count {data.shape[1]}, expected {WINDOW_LENGTH}")
    if not np.isfinite(data).all():
        violations.append("non-finite value")
    return violations


@dataclass
class DatasetSummary:
    """Descriptive statistics: report counts per label/class and discards."""

    raw_label_counts: dict[str, int] = field(default_factory=dict)
    class_counts: dict[ActivityClass, int] = field(default_factory=dict)
    users: int = 0
    reports_total: int = 0
    reports_discarded: int = 0
    discard_reasons: dict[str, int] = field(default_factory=dict)
