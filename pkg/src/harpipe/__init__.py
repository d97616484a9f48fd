"""Activity recognition from smartphone accelerometer logs.

Pipeline: ingest raw logs -> per-user timelines -> labeled 3x600
windows -> per-activity binary 1D-conv classifiers -> repeated-split
evaluation under population/hybrid x balanced/imbalanced protocols.
"""

from .domain import (
    AccelSample,
    ActivityClass,
    DatasetSummary,
    LabeledWindow,
    SelfReport,
    map_activity,
    validate_window,
)
from .evaluation import (
    BinaryTask,
    EvalReport,
    ExperimentConfig,
    MetricSet,
    make_task,
    run_experiment,
    split_hybrid,
    split_population,
)
from .ingest import (
    UserTimeline,
    build_timelines,
    parse_accel_log,
    parse_report_log,
    summarize_dataset,
)
from .metrics import accuracy, auroc, f1_macro
from .network import (
    AdamHyper,
    NetworkSpec,
    NetworkState,
    adam_step,
    default_spec,
    forward,
    init_network,
    load_model,
    loss_and_grads,
    parse_layer_string,
    save_model,
)
from .preprocess import (
    DiscardReason,
    RawWindow,
    ReportOutcome,
    build_dataset,
    extract_window,
    read_dataset,
    resample,
    write_dataset,
)
from .synthgen import (
    ClassProfile,
    SynthConfig,
    TruthRecord,
    generate_corpus,
    separability_pair,
    shuffle_labels,
)
from .trainer import (
    ConvNetBinaryClassifier,
    TrainConfig,
    TrainHistory,
    predict,
    train_binary,
)

__version__ = "0.1.0"

__all__ = [
    "AccelSample",
    "ActivityClass",
    "AdamHyper",
    "BinaryTask",
    "ClassProfile",
    "ConvNetBinaryClassifier",
    "DatasetSummary",
    "DiscardReason",
    "EvalReport",
    "ExperimentConfig",
    "LabeledWindow",
    "MetricSet",
    "NetworkSpec",
    "NetworkState",
    "RawWindow",
    "ReportOutcome",
    "SelfReport",
    "SynthConfig",
    "TrainConfig",
    "TrainHistory",
    "TruthRecord",
    "UserTimeline",
    "accuracy",
    "adam_step",
    "auroc",
    "build_dataset",
    "build_timelines",
    "default_spec",
    "extract_window",
    "f1_macro",
    "forward",
    "generate_corpus",
    "init_network",
    "load_model",
    "loss_and_grads",
    "make_task",
    "map_activity",
    "parse_accel_log",
    "parse_layer_string",
    "parse_report_log",
    "predict",
    "read_dataset",
    "resample",
    "run_experiment",
    "save_model",
    "separability_pair",
    "shuffle_labels",
    "split_hybrid",
    "split_population",
    "summarize_dataset",
    "train_binary",
    "validate_window",
    "write_dataset",
]
