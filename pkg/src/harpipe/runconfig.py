"""Flat ``key = value`` run configuration and manifests.

The format is deliberately trivial: one assignment per line, ``#``
starts a comment, lists are comma-separated. A manifest is just the
fully-expanded config written back out, so any run can be reproduced by
pointing --config at the manifest a previous run left behind.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from .domain import ActivityClass
from .evaluation import MODES, SPLIT_KINDS
from .network import DEFAULT_LAYERS, parse_layer_string
from .synthgen import SynthConfig
from .trainer import AdamHyper, TrainConfig


class ConfigError(Exception):
    """One or more invalid config fields; message lists every problem."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass
class RunConfig:
    seed: int = 0
    jobs: int = 0  # 0 = all available cores
    raw_dir: Path = Path("data/raw")
    dataset_dir: Path = Path("data/dataset")
    models_dir: Path = Path("data/models")
    report_dir: Path = Path("data/report")

    synth_users: int = 20
    synth_reports_per_user: int = 20
    synth_class_probs: tuple[float, ...] = tuple([1.0 / 8] * 8)
    synth_separability: float = 1.0
    synth_missing_rate: float = 0.0
    synth_jitter_ms: float = 40.0

    network_layers: str = DEFAULT_LAYERS

    train_epochs: int = 30
    train_batch_size: int = 32
    train_learning_rate: float = 1e-3
    train_beta1: float = 0.9
    train_beta2: float = 0.999
    train_epsilon: float = 1e-8
    train_patience: int = 5

    eval_activities: tuple[ActivityClass, ...] = tuple(ActivityClass)
    eval_split_kinds: tuple[str, ...] = SPLIT_KINDS
    eval_modes: tuple[str, ...] = MODES
    eval_repetitions: int = 10

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            users=self.synth_users,
            reports_per_user=self.synth_reports_per_user,
            class_probs=self.synth_class_probs,
            separability=self.synth_separability,
            missing_rate=self.synth_missing_rate,
            jitter_ms=self.synth_jitter_ms,
            seed=self.seed,
        )

    def train_config(self, seed: Optional[int] = None) -> TrainConfig:
        return TrainConfig(
            epochs=self.train_epochs,
            batch_size=self.train_batch_size,
            adam=AdamHyper(
                self.train_learning_rate,
                self.train_beta1,
                self.train_beta2,
                self.train_epsilon,
            ),
            patience=self.train_patience,
            seed=self.seed if seed is None else seed,
        )


# key name in files -> RunConfig attribute
_KEY_TO_FIELD = {
    "seed": "seed",
    "jobs": "jobs",
    "raw_dir": "raw_dir",
    "dataset_dir": "dataset_dir",
    "models_dir": "models_dir",
    "report_dir": "report_dir",
    "synth.users": "synth_users",
    "synth.reports_per_user": "synth_reports_per_user",
    "synth.class_probs": "synth_class_probs",
    "synth.separability": "synth_separability",
    "synth.missing_rate": "synth_missing_rate",
    "synth.jitter_ms": "synth_jitter_ms",
    "network.layers": "network_layers",
    "train.epochs": "train_epochs",
    "train.batch_size": "train_batch_size",
    "train.learning_rate": "train_learning_rate",
    "train.beta1": "train_beta1",
    "train.beta2": "train_beta2",
    "train.epsilon": "train_epsilon",
    "train.patience": "train_patience",
    "eval.activities": "eval_activities",
    "eval.split_kinds": "eval_split_kinds",
    "eval.modes": "eval_modes",
    "eval.repetitions": "eval_repetitions",
}
_FIELD_TO_KEY = {v: k for k, v in _KEY_TO_FIELD.items()}


def parse_config_text(text: str) -> dict[str, str]:
    """Raw key/value pairs from config text; raises ConfigError."""
    problems: list[str] = []
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key in pairs:
            problems.append(f"line {lineno}: duplicate key {key!r}")
            continue
        pairs[key] = value
    if problems:
        raise ConfigError(problems)
    return pairs


def _parse_value(value: str, kind):
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    if kind == "path":
        return Path(value)
    if kind == "str":
        return value
    if kind == "probs":
        if value.strip().lower() == "equal":
            return tuple([1.0 / len(ActivityClass)] * len(ActivityClass))
        return tuple(float(p) for p in value.split(","))
    if kind == "activities":
        if value.strip().lower() == "all":
            return tuple(ActivityClass)
        return tuple(ActivityClass.from_token(tok) for tok in value.split(","))
    if kind == "strlist":
        return tuple(item.strip() for item in value.split(",") if item.strip())
    raise AssertionError(kind)


_FIELD_KINDS = {
    "seed": "int",
    "jobs": "int",
    "raw_dir": "path",
    "dataset_dir": "path",
    "models_dir": "path",
    "report_dir": "path",
    "synth_users": "int",
    "synth_reports_per_user": "int",
    "synth_class_probs": "probs",
    "synth_separability": "float",
    "synth_missing_rate": "float",
    "synth_jitter_ms": "float",
    "network_layers": "str",
    "train_epochs": "int",
    "train_batch_size": "int",
    "train_learning_rate": "float",
    "train_beta1": "float",
    "train_beta2": "float",
    "train_epsilon": "float",
    "train_patience": "int",
    "eval_activities": "activities",
    "eval_split_kinds": "strlist",
    "eval_modes": "strlist",
    "eval_repetitions": "int",
}


def config_from_text(text: str) -> RunConfig:
    """Parse and validate a full RunConfig; every problem is reported."""
    pairs = parse_config_text(text)
    problems: list[str] = []
    values: dict = {}
    for key, value in pairs.items():
        if key not in _KEY_TO_FIELD:
            problems.append(f"unknown key {key!r}")
            continue
        name = _KEY_TO_FIELD[key]
        try:
            values[name] = _parse_value(value, _FIELD_KINDS[name])
        except ValueError as exc:
            problems.append(f"{key}: {exc}")
    if problems:
        raise ConfigError(problems)

    cfg = RunConfig(**values)
    _validate(cfg, problems)
    if problems:
        raise ConfigError(problems)
    return cfg


def _validate(cfg: RunConfig, problems: list[str]) -> None:
    def check(cond: bool, key: str, msg: str):
        if not cond:
            problems.append(f"{key}: {msg}")

    check(cfg.jobs >= 0, "jobs", "must be >= 0")
    check(cfg.synth_users >= 0, "synth.users", "must be >= 0")
    check(cfg.synth_reports_per_user >= 0, "synth.reports_per_user", "must be >= 0")
    check(
        len(cfg.synth_class_probs) == len(ActivityClass)
        and all(p >= 0 for p in cfg.synth_class_probs)
        and abs(sum(cfg.synth_class_probs) - 1.0) <= 1e-9,
        "synth.class_probs",
        f"must be {len(ActivityClass)} non-negative values summing to 1",
    )
    check(0.0 <= cfg.synth_separability <= 1.0, "synth.separability", "must be in [0, 1]")
    check(0.0 <= cfg.synth_missing_rate <= 1.0, "synth.missing_rate", "must be in [0, 1]")
    check(cfg.synth_jitter_ms >= 0, "synth.jitter_ms", "must be >= 0")
    try:
        parse_layer_string(cfg.network_layers)
    except ValueError as exc:
        problems.append(f"network.layers: {exc}")
    check(cfg.train_epochs >= 1, "train.epochs", "must be >= 1")
    check(cfg.train_batch_size >= 1, "train.batch_size", "must be >= 1")
    check(cfg.train_learning_rate > 0, "train.learning_rate", "must be > 0")
    check(0 < cfg.train_beta1 < 1, "train.beta1", "must be in (0, 1)")
    check(0 < cfg.train_beta2 < 1, "train.beta2", "must be in (0, 1)")
    check(cfg.train_epsilon > 0, "train.epsilon", "must be > 0")
    check(cfg.train_patience >= 1, "train.patience", "must be >= 1")
    check(len(cfg.eval_activities) > 0, "eval.activities", "must not be empty")
    for k in cfg.eval_split_kinds:
        check(k in SPLIT_KINDS, "eval.split_kinds", f"unknown split kind {k!r}")
    for m in cfg.eval_modes:
        check(m in MODES, "eval.modes", f"unknown mode {m!r}")
    check(len(cfg.eval_split_kinds) > 0, "eval.split_kinds", "must not be empty")
    check(len(cfg.eval_modes) > 0, "eval.modes", "must not be empty")
    check(cfg.eval_repetitions >= 1, "eval.repetitions", "must be >= 1")


def config_from_file(path: Path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file not found: {path}"])
    return config_from_text(path.read_text(encoding="utf-8"))


def _format_value(cfg: RunConfig, name: str) -> str:
    value = getattr(cfg, name)
    kind = _FIELD_KINDS[name]
    if kind == "probs":
        return ",".join(repr(p) for p in value)
    if kind == "activities":
        return ",".join(a.token for a in value)
    if kind == "strlist":
        return ",".join(value)
    if kind == "float":
        return repr(value)
    return str(value)


def config_to_text(cfg: RunConfig, header_comments: tuple[str, ...] = ()) -> str:
    """Serialize the fully-expanded config; output is itself valid config."""
    lines = [f"# {c}" for c in header_comments]
    for f in fields(RunConfig):
        lines.append(f"{_FIELD_TO_KEY[f.name]} = {_format_value(cfg, f.name)}")
    return "\n".join(lines) + "\n"
