"""Reproducible synthetic accelerometer corpora with tunable class signal.

Every activity class gets a generative profile: a gravity orientation,
a white-noise level, one harmonic component and a slow random-walk
drift. A separability dial in [0, 1] interpolates all class profiles
between a single shared law (0: labels carry no signal, by construction
label-exchangeable) and fully distinct signatures (1). Users perturb
the profiles through one per-user draw (a rotation plus scale factors)
applied identically to every class, which is what makes sample-wise
splits easier than user-wise splits without breaking exchangeability
at separability 0.

Randomness is counter-based (Philox keyed per user and per report), so
corpora are bit-identical regardless of generation order or parallelism.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .domain import ActivityClass, LabeledWindow, SelfReport
from .ingest import UserTimeline

GRAVITY = 9.81
NYQUIST_HZ = 1.665  # half of the 3.33 Hz nominal rate
SAMPLE_STEP_MS = 300
PREROLL_MS = 246_000  # > 4 minutes of data before each fill interval
EPOCH0_MS = 1_599_000_000_000

# raw diary labels emitted per class; merged classes rotate through
# their source labels so ingestion exercises the label mapping
RAW_LABEL_CHOICES: dict[ActivityClass, tuple[str, ...]] = {
    ActivityClass.SLEEPING: ("Sleeping",),
    ActivityClass.EATING: ("Eating",),
    ActivityClass.STUDYING: ("Studying",),
    ActivityClass.ATTENDING_LECTURE: ("Attending a lecture",),
    ActivityClass.ONLINE_COMMUNICATION: (
        "Calling",
        "Chatting/reading",
        "Reading internet information",
        "Social media",
    ),
    ActivityClass.WATCHING_VIDEOS: ("Watching videos/TV",),
    ActivityClass.SPORTS: ("Sports",),
    ActivityClass.SHOPPING: ("Shopping", "Other shopping"),
}


@dataclass(frozen=True)
class ClassProfile:
    """Generative parameters of one activity at full separability."""

    orientation: tuple[float, float, float]
    noise_std: float
    harmonic_amp: float
    harmonic_freq: float
    drift_std: float
    user_orientation_std: float = 0.9  # radians
    user_scale_std: float = 0.5  # log-normal sigma on noise/amp/drift

    def __post_init__(self):
        for name in (
            "noise_std",
            "harmonic_amp",
            "drift_std",
            "user_orientation_std",
            "user_scale_std",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0 < self.harmonic_freq < NYQUIST_HZ:
            raise ValueError(
                f"harmonic_freq must be in (0, {NYQUIST_HZ}), got {self.harmonic_freq}"
            )
        norm = float(np.linalg.norm(self.orientation))
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"orientation must be a unit vector, |v|={norm}")


def _unit(v) -> tuple[float, float, float]:
    arr = np.asarray(v, dtype=np.float64)
    arr = arr / np.linalg.norm(arr)
    return (float(arr[0]), float(arr[1]), float(arr[2]))


# the law every class shares at separability 0: phone flat on a table
BASE_PROFILE = ClassProfile(
    orientation=(0.0, 0.0, 1.0),
    noise_std=0.25,
    harmonic_amp=0.0,
    harmonic_freq=0.5,
    drift_std=0.02,
)

DEFAULT_PROFILES: dict[ActivityClass, ClassProfile] = {
    ActivityClass.SLEEPING: ClassProfile(_unit((0.0, 0.0, 1.0)), 0.05, 0.0, 0.1, 0.0),
    ActivityClass.EATING: ClassProfile(_unit((0.95, 0.0, 0.31)), 0.4, 0.4, 0.8, 0.03),
    ActivityClass.STUDYING: ClassProfile(
        _unit((-0.95, 0.0, 0.31)), 0.18, 0.25, 0.15, 0.02
    ),
    ActivityClass.ATTENDING_LECTURE: ClassProfile(
        _unit((0.0, 0.95, 0.31)), 0.12, 0.15, 0.3, 0.015
    ),
    ActivityClass.ONLINE_COMMUNICATION: ClassProfile(
        _unit((0.0, -0.95, 0.31)), 0.3, 0.35, 0.8, 0.03
    ),
    ActivityClass.WATCHING_VIDEOS: ClassProfile(
        _unit((0.67, 0.67, -0.33)), 0.08, 0.1, 0.06, 0.01
    ),
    ActivityClass.SPORTS: ClassProfile(_unit((-0.67, 0.67, -0.33)), 1.2, 1.2, 1.3, 0.15),
    ActivityClass.SHOPPING: ClassProfile(_unit((0.0, -0.89, -0.45)), 0.7, 0.7, 0.6, 0.08),
}

# harmonic amplitude at separability 0 is always zero (BASE_PROFILE.harmonic_amp)


@dataclass(frozen=True)
class SynthConfig:
    users: int = 20
    reports_per_user: int = 20
    class_probs: tuple[float, ...] = tuple([1.0 / 8] * 8)
    separability: float = 1.0
    missing_rate: float = 0.0
    jitter_ms: float = 40.0
    seed: int = 0

    def __post_init__(self):
        if self.users < 0 or self.reports_per_user < 0:
            raise ValueError("users and reports_per_user must be >= 0")
        probs = tuple(float(p) for p in self.class_probs)
        if len(probs) != len(ActivityClass):
            raise ValueError(f"class_probs needs {len(ActivityClass)} entries")
        if any(p < 0 for p in probs):
            raise ValueError("class_probs must be non-negative")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError(f"class_probs sum to {sum(probs)}, expected 1")
        object.__setattr__(self, "class_probs", probs)
        if not 0.0 <= self.separability <= 1.0:
            raise ValueError(f"separability must be in [0, 1], got {self.separability}")
        if not 0.0 <= self.missing_rate <= 1.0:
            raise ValueError(f"missing_rate must be in [0, 1], got {self.missing_rate}")
        if self.jitter_ms < 0:
            raise ValueError("jitter_ms must be >= 0")


@dataclass(frozen=True)
class TruthRecord:
    """Ground truth for one generated report."""

    user_id: str
    report_id: str
    label: ActivityClass
    orientation: tuple[float, float, float]
    noise_std: float
    harmonic_amp: float
    harmonic_freq: float
    drift_std: float


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, *key))))


def _blend_profile(base: ClassProfile, target: ClassProfile, sep: float) -> ClassProfile:
    if sep == 0.0:
        return base
    return ClassProfile(
        orientation=_unit(
            (1.0 - sep) * np.asarray(base.orientation)
            + sep * np.asarray(target.orientation)
        ),
        noise_std=(1.0 - sep) * base.noise_std + sep * target.noise_std,
        harmonic_amp=(1.0 - sep) * base.harmonic_amp + sep * target.harmonic_amp,
        harmonic_freq=target.harmonic_freq,
        drift_std=(1.0 - sep) * base.drift_std + sep * target.drift_std,
        user_orientation_std=target.user_orientation_std,
        user_scale_std=target.user_scale_std,
    )


def _rotation_matrix(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = axis / np.linalg.norm(axis)
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


@dataclass(frozen=True)
class _UserDraw:
    # one draw per user, applied identically to every class profile:
    # exchangeability at separability 0 depends on this
    rotation: np.ndarray
    noise_mult: float
    amp_mult: float
    drift_mult: float


def _draw_user(profile_ref: ClassProfile, rng: np.random.Generator) -> _UserDraw:
    axis = rng.normal(size=3)
    while np.linalg.norm(axis) < 1e-9:
        axis = rng.normal(size=3)
    angle = rng.normal(0.0, profile_ref.user_orientation_std)
    scales = np.exp(rng.normal(0.0, profile_ref.user_scale_std, size=3))
    return _UserDraw(
        rotation=_rotation_matrix(axis, angle),
        noise_mult=float(scales[0]),
        amp_mult=float(scales[1]),
        drift_mult=float(scales[2]),
    )


def _effective_profile(blended: ClassProfile, user: _UserDraw) -> TruthRecord:
    # returns the per-user effective parameters packed as a TruthRecord
    # shell (user/report/label filled in by the caller)
    orientation = _unit(user.rotation @ np.asarray(blended.orientation))
    return TruthRecord(
        user_id="",
        report_id="",
        label=ActivityClass.SLEEPING,
        orientation=orientation,
        noise_std=blended.noise_std * user.noise_mult,
        harmonic_amp=blended.harmonic_amp * user.amp_mult,
        harmonic_freq=blended.harmonic_freq,
        drift_std=blended.drift_std * user.drift_mult,
    )


def generate_corpus(
    cfg: SynthConfig,
    profiles: Optional[dict[ActivityClass, ClassProfile]] = None,
) -> tuple[list[UserTimeline], list[TruthRecord]]:
    """Generate per-user timelines plus the ground-truth draw log.

    Deterministic in cfg.seed. Each report gets > 4 minutes of nominal
    300 ms sampling (with timing jitter and missing-data dropout) ending
    at its fill_start, so presence and coverage checks pass unless
    dropout opens a gap.
    """
    profiles = dict(DEFAULT_PROFILES if profiles is None else profiles)
    blended = {
        cls: _blend_profile(BASE_PROFILE, profiles[cls], cfg.separability)
        for cls in ActivityClass
    }
    probs = np.asarray(cfg.class_probs)

    timelines: list[UserTimeline] = []
    truth: list[TruthRecord] = []

    for ui in range(cfg.users):
        user_id = f"u{ui:04d}"
        user_rng = _rng(cfg.seed, 1, ui)
        user_draw = _draw_user(BASE_PROFILE, user_rng)
        day_offset = int(user_rng.integers(0, 3_600_000))

        user_times: list[np.ndarray] = []
        user_values: list[np.ndarray] = []
        reports: list[SelfReport] = []
        for ri in range(cfg.reports_per_user):
            rng = _rng(cfg.seed, 2, ui, ri)
            report_id = f"u{ui:04d}-r{ri:04d}"
            label = ActivityClass(int(rng.choice(len(probs), p=probs)))
            raw_choices = RAW_LABEL_CHOICES[label]
            raw_activity = raw_choices[int(rng.integers(0, len(raw_choices)))]

            fill_start = (
                EPOCH0_MS + day_offset + ri * 3_600_000 + int(rng.integers(0, 60_000))
            )
            fill_end = fill_start + int(rng.integers(20_000, 90_000))

            eff = _effective_profile(blended[label], user_draw)
            truth.append(
                replace(eff, user_id=user_id, report_id=report_id, label=label)
            )

            n = PREROLL_MS // SAMPLE_STEP_MS
            base_t = fill_start - PREROLL_MS + SAMPLE_STEP_MS * np.arange(n)
            if cfg.jitter_ms > 0:
                t = base_t + np.rint(rng.normal(0.0, cfg.jitter_ms, size=n)).astype(
                    np.int64
                )
            else:
                t = base_t.astype(np.int64)
            t = np.sort(t)
            keep = (t >= 0) & (t < fill_start)
            if cfg.missing_rate > 0:
                keep &= rng.random(n) >= cfg.missing_rate
            t = t[keep]
            t = t[np.concatenate([[True], np.diff(t) > 0])]  # dedupe collisions

            t_sec = (t - fill_start).astype(np.float64) / 1000.0
            gravity = GRAVITY * np.asarray(eff.orientation)[:, None]
            phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
            harmonic = eff.harmonic_amp * np.sin(
                2.0 * np.pi * eff.harmonic_freq * t_sec[None, :] + phases[:, None]
            )
            noise = eff.noise_std * rng.normal(size=(3, t.shape[0]))
            drift = np.cumsum(
                eff.drift_std * rng.normal(size=(3, t.shape[0])), axis=1
            )
            values = gravity + harmonic + noise + drift

            user_times.append(t)
            user_values.append(values)
            reports.append(
                SelfReport(
                    user_id=user_id,
                    report_id=report_id,
                    fill_start=fill_start,
                    fill_end=fill_end,
                    raw_activity=raw_activity,
                )
            )

        # report segments are an hour apart, so per-report blocks are
        # already disjoint and in increasing time order
        times = (
            np.concatenate(user_times) if user_times else np.empty(0, dtype=np.int64)
        )
        values = np.concatenate(user_values, axis=1) if user_values else np.empty((3, 0))
        timelines.append(
            UserTimeline(
                user_id=user_id, times=times, values=values, reports=reports
            )
        )

    return timelines, truth


def separability_pair(
    cfg: SynthConfig, separability: float
) -> tuple[
    tuple[list[UserTimeline], list[TruthRecord]],
    tuple[list[UserTimeline], list[TruthRecord]],
]:
    """A signal corpus at the given separability and its matched null twin."""
    if not 0.0 <= separability <= 1.0:
        raise ValueError(f"separability must be in [0, 1], got {separability}")
    signal = generate_corpus(replace(cfg, separability=separability))
    null = generate_corpus(replace(cfg, separability=0.0))
    return signal, null


def shuffle_labels(
    windows: Sequence[LabeledWindow], seed: Optional[int]
) -> list[LabeledWindow]:
    """Permute labels across windows; data untouched, multiset preserved.

    seed None applies the identity permutation (test hook).
    """
    if not windows:
        raise ValueError("empty dataset")
    if seed is None:
        return list(windows)
    perm = np.random.default_rng(seed).permutation(len(windows))
    return [
        replace(w, label=windows[perm[i]].label) for i, w in enumerate(windows)
    ]


def truth_class_counts(truth: Iterable[TruthRecord]) -> dict[ActivityClass, int]:
    counts: dict[ActivityClass, int] = {}
    for rec in truth:
        counts[rec.label] = counts.get(rec.label, 0) + 1
    return counts
