"""Command-line pipeline: synth/ingest -> preprocess -> train/evaluate -> report.

Every stage reads its predecessor's declared file format and writes its
own, plus a manifest (the fully-expanded config) so reruns are
bit-reproducible. Exit codes are a stable scripting contract:
0 success, 2 usage/config error, 3 total experiment failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .domain import ActivityClass, DatasetSummary
from .evaluation import (
    ExperimentConfig,
    make_task,
    report_csv,
    report_from_json,
    report_markdown,
    report_to_json,
    run_experiment,
    split_hybrid,
    split_population,
    REPORT_JSON_FILE,
)
from .evaluation import _job_seeds  # shared seed derivation for cmd_train
from .ingest import (
    ParseError,
    UserTimeline,
    build_timelines,
    parse_accel_log,
    parse_report_log,
    ACCEL_HEADER,
)
from .network import MODEL_FORMAT_VERSION, parse_layer_string, save_model
from .preprocess import (
    DATASET_FORMAT_VERSION,
    ReportOutcome,
    build_dataset,
    read_dataset,
    write_dataset,
    OUTCOMES_FILE,
)
from .runconfig import ConfigError, RunConfig, config_from_file, config_to_text
from .synthgen import generate_corpus
from .trainer import train_binary, write_history

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ALL_FAILED = 3

TRUTH_FILE = "truth.jsonl"
MANIFEST_FILE = "manifest.txt"


def _info(args, message: str) -> None:
    if not args.quiet:
        print(message, file=sys.stderr)


def _warn(message: str) -> None:
    print(f"warning: {message}", file=sys.stderr)


def _load_config(args) -> RunConfig:
    if args.config is None:
        cfg = RunConfig()
    else:
        cfg = config_from_file(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.jobs is not None:
        if args.jobs < 0:
            raise ConfigError(["jobs: must be >= 0"])
        cfg.jobs = args.jobs
    return cfg


def _resolve_jobs(cfg: RunConfig) -> int:
    import os

    return cfg.jobs if cfg.jobs > 0 else (os.cpu_count() or 1)


def _write_manifest(cfg: RunConfig, out_dir: Path) -> None:
    text = config_to_text(
        cfg,
        header_comments=(
            f"manifest written by harpipe {__version__}",
            f"dataset_format_version = {DATASET_FORMAT_VERSION}",
            f"model_format_version = {MODEL_FORMAT_VERSION}",
        ),
    )
    (out_dir / MANIFEST_FILE).write_text(text, encoding="utf-8", newline="\n")


def _write_raw_corpus(timelines: list[UserTimeline], out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "accel.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(ACCEL_HEADER + "\n")
        for tl in timelines:
            user = tl.user_id
            times = tl.times
            x, y, z = tl.values
            for i in range(times.shape[0]):
                fh.write(
                    f"{user},{times[i]},{float(x[i])!r},{float(y[i])!r},{float(z[i])!r}\n"
                )
    with open(out_dir / "reports.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for tl in timelines:
            for r in tl.reports:
                obj = {
                    "user_id": r.user_id,
                    "report_id": r.report_id,
                    "fill_start_ms": r.fill_start,
                    "fill_end_ms": r.fill_end,
                    "raw_activity": r.raw_activity,
                }
                if r.country is not None:
                    obj["country"] = r.country
                fh.write(json.dumps(obj) + "\n")


def _read_raw_corpus(raw_dir: Path):
    accel = raw_dir / "accel.csv"
    reports = raw_dir / "reports.jsonl"
    for path in (accel, reports):
        if not path.is_file():
            raise FileNotFoundError(path)
    with open(accel, encoding="utf-8") as fh:
        samples, bad_rows = parse_accel_log(fh)
    with open(reports, encoding="utf-8") as fh:
        report_list, bad_lines = parse_report_log(fh)
    return samples, report_list, bad_rows, bad_lines


def cmd_ingest(args) -> int:
    for path in (args.accel, args.reports):
        if not Path(path).is_file():
            print(f"error: input file not found: {path}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        with open(args.accel, encoding="utf-8") as fh:
            samples, bad_rows = parse_accel_log(fh)
        with open(args.reports, encoding="utf-8") as fh:
            reports, bad_lines = parse_report_log(fh)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    timelines = build_timelines(samples, reports)
    out_dir = Path(args.out)
    _write_raw_corpus(timelines, out_dir)
    print(f"malformed accelerometer rows: {bad_rows}", file=sys.stderr)
    print(f"malformed report lines: {bad_lines}", file=sys.stderr)
    _info(args, f"wrote {len(timelines)} user timelines to {out_dir}")
    return EXIT_OK


def _summary_from_outcomes(outcomes: list[ReportOutcome]) -> DatasetSummary:
    # rebuilt from the outcome log alone, so `users` counts only users
    # that contributed at least one report
    summary = DatasetSummary()
    users = set()
    for o in outcomes:
        users.add(o.user_id)
        summary.reports_total += 1
        key = o.raw_activity.strip()
        summary.raw_label_counts[key] = summary.raw_label_counts.get(key, 0) + 1
        if o.reason is None:
            cls = ActivityClass(o.label)
            summary.class_counts[cls] = summary.class_counts.get(cls, 0) + 1
        else:
            summary.reports_discarded += 1
            k = o.reason.value
            summary.discard_reasons[k] = summary.discard_reasons.get(k, 0) + 1
    summary.users = len(users)
    return summary


def _summary_table(summary: DatasetSummary) -> str:
    width = max(
        [len("(none)")]
        + [len(k) for k in summary.raw_label_counts]
        + [len(c.display_name) for c in summary.class_counts]
        + [len(k) for k in summary.discard_reasons]
    )
    out = ["Reports per raw label:"]
    if not summary.raw_label_counts:
        out.append(f"  {'(none)'.ljust(width)}  0")
    for k in sorted(summary.raw_label_counts):
        out.append(f"  {k.ljust(width)}  {summary.raw_label_counts[k]}")
    out.append("Reports per final class:")
    for cls in ActivityClass:
        count = summary.class_counts.get(cls, 0)
        out.append(f"  {cls.display_name.ljust(width)}  {count}")
    out.append("Discarded reports by reason:")
    if not summary.discard_reasons:
        out.append(f"  {'(none)'.ljust(width)}  0")
    for k in sorted(summary.discard_reasons):
        out.append(f"  {k.ljust(width)}  {summary.discard_reasons[k]}")
    out.append(f"Users (with reports): {summary.users}")
    out.append(f"Reports total:        {summary.reports_total}")
    out.append(f"Reports discarded:    {summary.reports_discarded}")
    return "\n".join(out)


def _summary_csv(summary: DatasetSummary) -> str:
    lines = ["section,key,count"]
    for k in sorted(summary.raw_label_counts):
        lines.append(f"raw_label,{k},{summary.raw_label_counts[k]}")
    for cls in ActivityClass:
        lines.append(f"class,{cls.token},{summary.class_counts.get(cls, 0)}")
    for k in sorted(summary.discard_reasons):
        lines.append(f"discard,{k},{summary.discard_reasons[k]}")
    lines.append(f"total,users,{summary.users}")
    lines.append(f"total,reports,{summary.reports_total}")
    lines.append(f"total,discarded,{summary.reports_discarded}")
    return "\n".join(lines) + "\n"


def cmd_stats(args) -> int:
    dataset_dir = Path(args.dataset)
    if not (dataset_dir / OUTCOMES_FILE).is_file():
        print(f"error: no dataset at {dataset_dir}", file=sys.stderr)
        return EXIT_CONFIG
    _, outcomes = read_dataset(dataset_dir)
    summary = _summary_from_outcomes(outcomes)
    print(_summary_table(summary))
    csv_path = dataset_dir / "summary.csv"
    csv_path.write_text(_summary_csv(summary), encoding="utf-8", newline="\n")
    _info(args, f"wrote {csv_path}")
    return EXIT_OK


def cmd_synth(args, cfg: RunConfig) -> int:
    timelines, truth = generate_corpus(cfg.synth_config())
    out_dir = Path(cfg.raw_dir)
    _write_raw_corpus(timelines, out_dir)
    with open(out_dir / TRUTH_FILE, "w", encoding="utf-8", newline="\n") as fh:
        for rec in truth:
            fh.write(
                json.dumps(
                    {
                        "user_id": rec.user_id,
                        "report_id": rec.report_id,
                        "label": rec.label.token,
                        "orientation": list(rec.orientation),
                        "noise_std": rec.noise_std,
                        "harmonic_amp": rec.harmonic_amp,
                        "harmonic_freq": rec.harmonic_freq,
                        "drift_std": rec.drift_std,
                    }
                )
                + "\n"
            )
    _write_manifest(cfg, out_dir)
    _info(args, f"wrote synthetic corpus ({len(truth)} reports) to {out_dir}")
    return EXIT_OK


def cmd_preprocess(args, cfg: RunConfig) -> int:
    try:
        samples, reports, bad_rows, bad_lines = _read_raw_corpus(Path(cfg.raw_dir))
    except FileNotFoundError as exc:
        print(f"error: input file not found: {exc.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if bad_rows or bad_lines:
        _warn(f"skipped {bad_rows} malformed rows, {bad_lines} malformed lines")
    timelines = build_timelines(samples, reports)
    windows, outcomes = build_dataset(timelines)
    out_dir = Path(cfg.dataset_dir)
    write_dataset(windows, outcomes, out_dir)
    _write_manifest(cfg, out_dir)
    discarded = sum(1 for o in outcomes if o.reason is not None)
    _info(
        args,
        f"wrote {len(windows)} windows ({discarded} reports discarded) to {out_dir}",
    )
    return EXIT_OK


def _load_dataset(cfg: RunConfig):
    dataset_dir = Path(cfg.dataset_dir)
    if not (dataset_dir / OUTCOMES_FILE).is_file():
        raise FileNotFoundError(dataset_dir)
    return read_dataset(dataset_dir)


def cmd_train(args, cfg: RunConfig) -> int:
    try:
        windows, _ = _load_dataset(cfg)
    except FileNotFoundError as exc:
        print(f"error: no dataset at {exc.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    if not windows:
        print(f"error: dataset at {cfg.dataset_dir} has no windows", file=sys.stderr)
        return EXIT_CONFIG
    models_dir = Path(cfg.models_dir)
    models_dir.mkdir(parents=True, exist_ok=True)
    split_kind = cfg.eval_split_kinds[0]
    mode = cfg.eval_modes[0]
    failures = 0
    for activity in cfg.eval_activities:
        split_seed, task_seed, train_seed = _job_seeds(
            cfg.seed, activity, split_kind, mode, rep=0
        )
        try:
            splitter = split_population if split_kind == "population" else split_hybrid
            parts = splitter(windows, seed=split_seed)
            task = make_task(parts, activity, mode, task_seed, split_kind)
            spec = parse_layer_string(
                cfg.network_layers, windows[0].data.shape
            )
            state, history = train_binary(task, spec, cfg.train_config(train_seed))
        except ValueError as exc:
            _warn(f"{activity.token}: {exc}")
            failures += 1
            continue
        save_model(state, models_dir / f"{activity.token}.harm")
        write_history(history, models_dir / f"{activity.token}_history.csv")
        _info(
            args,
            f"{activity.token}: best val AUROC "
            f"{history.val_auroc[history.selected_epoch]:.3f} "
            f"at epoch {history.selected_epoch}",
        )
    _write_manifest(cfg, models_dir)
    if failures == len(cfg.eval_activities):
        return EXIT_ALL_FAILED
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig) -> int:
    try:
        windows, _ = _load_dataset(cfg)
    except FileNotFoundError as exc:
        print(f"error: no dataset at {exc.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    if not windows:
        print(f"error: dataset at {cfg.dataset_dir} has no windows", file=sys.stderr)
        return EXIT_CONFIG
    exp = ExperimentConfig(
        activities=cfg.eval_activities,
        split_kinds=cfg.eval_split_kinds,
        modes=cfg.eval_modes,
        repetitions=cfg.eval_repetitions,
        base_seed=cfg.seed,
        layers=cfg.network_layers,
        train=cfg.train_config(),
    )
    report = run_experiment(windows, exp, jobs=_resolve_jobs(cfg))
    out_dir = Path(cfg.report_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / REPORT_JSON_FILE).write_text(
        report_to_json(report), encoding="utf-8", newline="\n"
    )
    _write_manifest(cfg, out_dir)
    absent = [c for c in report.cells if c.absent]
    for c in absent:
        _warn(
            f"cell {c.activity.token}/{c.split_kind}/{c.mode} absent: {c.absent_reason}"
        )
    _info(args, f"wrote {out_dir / REPORT_JSON_FILE} ({len(report.cells)} cells)")
    if absent and len(absent) == len(report.cells):
        return EXIT_ALL_FAILED
    return EXIT_OK


def cmd_report(args, cfg: RunConfig) -> int:
    report_path = Path(cfg.report_dir) / REPORT_JSON_FILE
    if not report_path.is_file():
        print(f"error: no evaluation report at {report_path}", file=sys.stderr)
        return EXIT_CONFIG
    report = report_from_json(report_path.read_text(encoding="utf-8"))
    out_dir = Path(cfg.report_dir)
    csv_text = report_csv(report)
    md_text = report_markdown(report)
    (out_dir / "report.csv").write_text(csv_text, encoding="utf-8", newline="\n")
    (out_dir / "report.md").write_text(md_text, encoding="utf-8", newline="\n")
    _write_manifest(cfg, out_dir)
    if not args.quiet:
        print(md_text)
    _info(args, f"wrote {out_dir / 'report.csv'} and {out_dir / 'report.md'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="harpipe",
        description="Activity recognition pipeline for accelerometer diaries",
    )
    parser.add_argument("--config", type=Path, default=None, help="run config file")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument(
        "--jobs", type=int, default=None, help="max concurrent training jobs (0 = auto)"
    )
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse raw logs into a normalized corpus")
    p.add_argument("accel", type=Path, help="accelerometer CSV")
    p.add_argument("reports", type=Path, help="self-report JSON-lines")
    p.add_argument("out", type=Path, help="output directory")

    p = sub.add_parser("stats", help="descriptive statistics of a dataset")
    p.add_argument("dataset", type=Path, help="preprocessed dataset directory")

    for name, help_text in (
        ("synth", "generate a synthetic corpus into raw_dir"),
        ("preprocess", "build labeled windows from raw_dir into dataset_dir"),
        ("train", "train one model per activity into models_dir"),
        ("evaluate", "run the experiment grid into report_dir"),
        ("report", "render report CSV and markdown tables"),
    ):
        sub.add_parser(name, help=help_text)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "ingest":
            return cmd_ingest(args)
        if args.command == "stats":
            return cmd_stats(args)
        cfg = _load_config(args)
        handler = {
            "synth": cmd_synth,
            "preprocess": cmd_preprocess,
            "train": cmd_train,
            "evaluate": cmd_evaluate,
            "report": cmd_report,
        }[args.command]
        return handler(args, cfg)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
