"""Command-line interface: the pipeline as subcommands over a JSON config.

Exit codes: 0 success, 1 validation/usage error, 2 I/O error.  Every
command that produces files writes the resolved configuration next to
them as ``resolved_config.json``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from . import evaluation as eval_mod
from . import fdnn as fdnn_mod
from . import kan as kan_mod
from . import pipeline
from .checkpoint import CheckpointError
from .config import ConfigError, RunConfig, dump_config, kan_grid_configs, load_config
from .evaluation import MetricTable, ReportBundle, TrajectoryTrace
from .features import (
    FeatureError,
    apply_standardizer,
    build_selection_report,
    load_frames,
    load_segment,
    save_frames,
    save_segment,
    split_sequences,
    tti_targets,
)
from .sisfall import (
    IngestError,
    TrialId,
    annotate_trial,
    load_subjects,
    load_trial,
    read_annotation_spans,
    require_profile,
    verify_corpus,
)
from .streaming import StreamError, stream_trial, write_events_csv
from .synthetic import write_synthetic_corpus

SUBCOMMANDS = ("verify", "features", "select", "train-fdnn", "eval-fdnn",
               "train-kan", "cv-kan", "eval-kan", "trace", "stream",
               "synth", "report")


class CliError(ValueError):
    pass


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve_config(args) -> RunConfig:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    return load_config(getattr(args, "config", None), overrides)


def _write_resolved(config: RunConfig, out: Path) -> None:
    dump_config(config, out / "resolved_config.json")


def _trial_files(root: Path) -> list[Path]:
    if not root.is_dir():
        raise CliError(f"corpus root {root} is not a directory")
    files = sorted(root.glob("S[AE]*/[FD]*_S*_R*.txt"))
    if not files:
        raise CliError(f"no trial files under {root}")
    return files


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _cmd_verify(args) -> int:
    summary = verify_corpus(args.root, deep=args.deep)
    print(f"ADL trials:  {summary.adl_trials}")
    print(f"Fall trials: {summary.fall_trials}")
    print(f"Total:       {summary.total_trials}")
    for activity in sorted(summary.per_activity):
        print(f"  {activity}: {summary.per_activity[activity]}")
    for w in summary.warnings:
        print(f"warning: {w}")
    for u in summary.unreadable:
        print(f"unreadable: {u}")
    return 0


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------

def _feature_worker(task):
    path_str, span, profile, config = task
    trial = load_trial(path_str, config.calibration.to_spec())
    annotated = annotate_trial(trial, span)
    frames = pipeline.orient_and_frame(
        annotated, profile,
        filter_config=config.orientation.filter_config(),
        body_up=config.orientation.body_up_vector(),
        deriv_order=config.orientation.deriv_order,
        accel_source=config.orientation.accel_source)
    segment = None
    if annotated.fall_span() is not None:
        segment = pipeline.collect_fall_segments(
            [(annotated, frames)],
            stillness_window_ms=config.segment.stillness_window_ms,
            stillness_threshold_g=config.segment.stillness_threshold_g,
            feature_names=tuple(config.selection.kan_features))[0]
    return frames, segment


def _cmd_features(args) -> int:
    config = _resolve_config(args)
    out = _out_dir(args)
    root = Path(args.root)
    profiles = load_subjects(args.subjects)
    spans = read_annotation_spans(args.annotations) if args.annotations else {}

    frames_dir = out / "frames"
    segments_dir = out / "segments"
    frames_dir.mkdir(exist_ok=True)
    segments_dir.mkdir(exist_ok=True)

    tasks = []
    for path in _trial_files(root):
        tid = TrialId.parse(path.name)
        profile = require_profile(profiles, tid)
        tasks.append((str(path), spans.get(str(tid)), profile, config))

    if args.jobs > 1:
        with Pool(args.jobs) as pool:
            results = pool.map(_feature_worker, tasks)
    else:
        results = [_feature_worker(t) for t in tasks]

    index_rows = ["trial_id,subject,activity,repetition,n_samples,has_fall"]
    for frames, segment in results:
        tid = frames.trial_id
        save_frames(frames_dir / f"{tid}.npz", frames)
        has_fall = int(np.any(frames.labels == 1))
        index_rows.append(f"{tid},{tid.subject},{tid.activity},"
                          f"{tid.repetition},{len(frames)},{has_fall}")
        if segment is not None:
            save_segment(segments_dir / f"{tid}.json", segment)
    (out / "index.csv").write_text("\n".join(index_rows) + "\n")
    _write_resolved(config, out)
    print(f"wrote {len(results)} trials to {out}")
    return 0


def _read_index(features_dir: Path) -> list[dict]:
    index = features_dir / "index.csv"
    if not index.is_file():
        raise CliError(f"{features_dir} has no index.csv (run features first)")
    rows = []
    lines = index.read_text().strip().splitlines()
    for line in lines[1:]:
        tid, subject, activity, rep, n, has_fall = line.split(",")
        rows.append({"trial_id": TrialId.parse(tid), "subject": subject,
                     "activity": activity, "repetition": int(rep),
                     "n_samples": int(n), "has_fall": bool(int(has_fall))})
    return rows


def _load_all_segments(features_dir: Path) -> list:
    seg_dir = features_dir / "segments"
    return [load_segment(p) for p in sorted(seg_dir.glob("*.json"))]


# ---------------------------------------------------------------------------
# select
# ---------------------------------------------------------------------------

def _cmd_select(args) -> int:
    config = _resolve_config(args)
    out = _out_dir(args)
    features_dir = Path(args.features)
    from .features import FEATURE_NAMES, fit_standardizer

    rows, targets = [], []
    for seg in _load_all_segments(features_dir):
        frames = load_frames(features_dir / "frames" / f"{seg.trial_id}.npz")
        rows.append(frames.data[seg.start_index:seg.end_index + 1, :])
        targets.append(tti_targets(len(seg)))
    if not rows:
        raise CliError("no fall segments found; run features on fall trials")
    matrix = np.vstack(rows)
    target = np.concatenate(targets)
    matrix = apply_standardizer(fit_standardizer(matrix), matrix)

    report = build_selection_report(
        matrix, target, FEATURE_NAMES,
        corr_threshold=config.selection.corr_threshold,
        mrmr_k=config.selection.mrmr_k,
        bins=config.selection.bins,
        chosen=tuple(config.selection.kan_features))
    report.to_csv(out / "selection.csv")
    _write_resolved(config, out)
    print(f"correlation-selected: {report.correlation_selected}")
    print(f"mrmr ranking: {[s.name for s in report.mrmr]}")
    print(f"chosen set: {list(report.chosen)}")
    return 0


# ---------------------------------------------------------------------------
# train / eval FDNN
# ---------------------------------------------------------------------------

def _load_frame_sets(features_dir: Path, ids) -> list:
    return [load_frames(features_dir / "frames" / f"{tid}.npz")
            for tid in ids]


def _cmd_train_fdnn(args) -> int:
    config = _resolve_config(args)
    out = _out_dir(args)
    features_dir = Path(args.features)
    index = _read_index(features_dir)

    fall_ids = [r["trial_id"] for r in index if r["has_fall"]]
    if not fall_ids:
        raise CliError("no fall trials in the feature set")
    split = split_sequences(fall_ids, config.split.ratios, config.split.seed)

    train_frames = _load_frame_sets(features_dir, split.train)
    val_frames = _load_frame_sets(features_dir, split.validation)
    stats = pipeline.fit_frame_standardizer(train_frames)
    train_set = [pipeline.frames_to_example(f, stats) for f in train_frames]
    val_set = [pipeline.frames_to_example(f, stats) for f in val_frames]

    params, log = fdnn_mod.train(config.fdnn, train_set, val_set)
    fdnn_mod.save_checkpoint(out / "fdnn.ckpt", params, config.fdnn, stats)
    fdnn_mod.write_training_log(out / "train_log.csv", log)
    (out / "split.json").write_text(json.dumps({
        "train": [str(t) for t in split.train],
        "validation": [str(t) for t in split.validation],
        "test": [str(t) for t in split.test],
    }, indent=2) + "\n")
    _write_resolved(config, out)
    best = max(l.val_accuracy for l in log)
    print(f"trained {config.fdnn.epochs} epochs; "
          f"best validation accuracy {best:.4f}")
    return 0


def _cmd_eval_fdnn(args) -> int:
    config = _resolve_config(args)
    out = _out_dir(args)
    features_dir = Path(args.features)
    params, fcfg, stats, _ = fdnn_mod.load_checkpoint(args.checkpoint)
    index = _read_index(features_dir)

    fall_ids = None
    if args.split_file:
        split = json.loads(Path(args.split_file).read_text())
        fall_ids = [TrialId.parse(t) for t in split[args.split]]
    else:
        fall_ids = [r["trial_id"] for r in index if r["has_fall"]]

    fall_scores = [
        pipeline.score_trial(params, fcfg, stats, f)
        for f in _load_frame_sets(features_dir, fall_ids)]
    adl_ids = [r["trial_id"] for r in index
               if not r["trial_id"].is_fall]
    adl_scores = [
        pipeline.score_trial(params, fcfg, stats, f)
        for f in _load_frame_sets(features_dir, adl_ids)]

    fall_tpr = eval_mod.metric_table(pipeline.tpr_entries(fall_scores))
    fall_tnr = eval_mod.metric_table(pipeline.tnr_entries(fall_scores))
    adl_tnr = eval_mod.metric_table(pipeline.tnr_entries(adl_scores)) \
        if adl_scores else None

    fall_tpr.to_csv(out / "fall_tpr.csv")
    fall_tnr.to_csv(out / "fall_tnr.csv")
    if adl_tnr is not None:
        adl_tnr.to_csv(out / "adl_tnr.csv")
    fall_pooled = pipeline.pooled_rates(fall_scores)
    adl_pooled = pipeline.pooled_rates(adl_scores) if adl_scores \
        else (None, None)
    metrics = {
        "fall_tpr_avg": fall_tpr.average(),
        "fall_tnr_avg": fall_tnr.average(),
        "adl_tnr_avg": adl_tnr.average() if adl_tnr else None,
        "fall_tpr_pooled": fall_pooled[0],
        "fall_tnr_pooled": fall_pooled[1],
        "adl_tnr_pooled": adl_pooled[1],
        "n_fall_trials": len(fall_scores),
        "n_adl_trials": len(adl_scores),
    }
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
    _write_resolved(config, out)
    print(json.dumps(metrics, indent=2))
    return 0


# ---------------------------------------------------------------------------
# train / cv / eval KAN
# ---------------------------------------------------------------------------

def _plan_and_segments(features_dir: Path, config: RunConfig):
    segments = _load_all_segments(features_dir)
    if not segments:
        raise CliError("no fall segments found")
    plan = kan_mod.build_cv_plan([s.trial_id for s in segments],
                                 seed=config.split.seed)
    return plan, segments


def _cmd_train_kan(args) -> int:
    config = _resolve_config(args)
    out = _out_dir(args)
    plan, segments = _plan_and_segments(Path(args.features), config)
    train_segs = [s for s in segments
                  if plan.role_of(s.trial_id) == "train"]
    val_segs = [s for s in segments
                if plan.role_of(s.trial_id) == "validation"]
    model, log = kan_mod.fit(config.kan, train_segs, val_segs)
    kan_mod.save_checkpoint(out / "kan.ckpt", model)
    kan_mod.write_fit_log(out / "fit_log.csv", log)
    (out / "plan.json").write_text(json.dumps({
        f"{s}_{a}": roles for (s, a), roles in plan.assignments.items()
    }, indent=2, sort_keys=True) + "\n")
    _write_resolved(config, out)
    print(f"fit {config.kan.epochs} epochs; "
          f"best validation RMSE {min(l.val_rmse for l in log):.2f} ms")
    return 0


def _cmd_cv_kan(args) -> int:
    config = _resolve_config(args)
    out = _out_dir(args)
    plan, segments = _plan_and_segments(Path(args.features), config)
    grid = kan_grid_configs(config)
    best, results = kan_mod.cross_validate(grid, plan, segments)
    kan_mod.write_cv_table(out / "cv_table.csv", results)
    (out / "best_config.json").write_text(
        json.dumps(dataclasses.asdict(best), indent=2) + "\n")
    _write_resolved(config, out)
    print(f"best: n={best.n_inner_nodes} q={best.q_outer_nodes} "
          f"mu={best.mu} w={best.window_ms} ms")
    return 0


def _cmd_eval_kan(args) -> int:
    config = _resolve_config(args)
    out = _out_dir(args)
    plan, segments = _plan_and_segments(Path(args.features), config)
    model = kan_mod.load_checkpoint(args.checkpoint)
    test_segs = [s for s in segments if plan.role_of(s.trial_id) == "test"]
    if not test_segs:
        raise CliError("no test-fold segments")
    preds = pipeline.segment_predictions(model, test_segs)
    heatmap = eval_mod.rmse_by_group(preds)
    heatmap.table.to_csv(out / "rmse_heatmap.csv")
    metrics = {"tti_rmse_ms": heatmap.global_rmse,
               "n_segments": len(test_segs)}
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n")
    _write_resolved(config, out)
    print(json.dumps(metrics, indent=2))
    return 0


def _cmd_trace(args) -> int:
    config = _resolve_config(args)
    out = _out_dir(args)
    features_dir = Path(args.features)
    model = kan_mod.load_checkpoint(args.checkpoint)
    tid = TrialId.parse(args.trial)
    seg_path = features_dir / "segments" / f"{tid}.json"
    if not seg_path.is_file():
        raise CliError(f"no segment for trial {tid}")
    segment = load_segment(seg_path)
    trace = eval_mod.trajectory(model, segment)
    trace.to_csv(out / f"trajectory_{tid}.csv")
    (out / f"trajectory_{tid}.svg").write_text(
        eval_mod.svg_trajectory(trace, f"Time of impact: {tid}"))
    _write_resolved(config, out)
    print(f"trace over {len(trace.t_s)} samples; "
          f"truth starts at {trace.truth_ms[0]:.0f} ms")
    return 0


# ---------------------------------------------------------------------------
# stream
# ---------------------------------------------------------------------------

def _cmd_stream(args) -> int:
    config = _resolve_config(args)
    out = _out_dir(args)
    profiles = load_subjects(args.subjects)
    trial_path = Path(args.trial)
    trial = load_trial(trial_path, config.calibration.to_spec())
    subject = require_profile(profiles, trial.trial_id)
    events, report = stream_trial(
        args.fdnn, args.kan, trial, subject,
        mode=args.mode,
        filter_config=config.orientation.filter_config(),
        body_up=config.orientation.body_up_vector(),
        deriv_order=config.orientation.deriv_order,
        deadline_us=config.stream.deadline_us,
        kan_gating=config.stream.kan_gating)
    write_events_csv(out / "events.csv", events)
    (out / "latency.json").write_text(json.dumps({
        "mean_us": report.mean_us, "p99_us": report.p99_us,
        "max_us": report.max_us, "deadline_misses": report.deadline_misses,
        "deadline_us": report.deadline_us, "samples": report.count,
    }, indent=2) + "\n")
    _write_resolved(config, out)
    falling = sum(1 for e in events if e.decision)
    print(f"{report.count} samples, {falling} flagged falling, "
          f"latency mean {report.mean_us:.0f} us / p99 {report.p99_us:.0f} us")
    return 0


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def _cmd_synth(args) -> int:
    config = _resolve_config(args)
    out = _out_dir(args)
    corpus = write_synthetic_corpus(
        out,
        subjects=config.synth.subjects,
        falls_per_subject=config.synth.falls_per_subject,
        adls_per_subject=config.synth.adls_per_subject,
        repetitions=config.synth.repetitions,
        duration_s=config.synth.duration_s,
        noise_g=config.synth.noise_g,
        seed=config.seed,
        calibration=config.calibration.to_spec())
    _write_resolved(config, out)
    summary = verify_corpus(corpus)
    print(f"synthetic corpus at {corpus}: {summary.fall_trials} falls, "
          f"{summary.adl_trials} ADLs")
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def _load_table(path: Path) -> MetricTable | None:
    return MetricTable.from_csv(path) if path.is_file() else None


def _cmd_report(args) -> int:
    config = _resolve_config(args)
    out = _out_dir(args)
    bundle = ReportBundle()
    if args.fdnn_eval:
        d = Path(args.fdnn_eval)
        bundle.fall_tpr = _load_table(d / "fall_tpr.csv")
        bundle.fall_tnr = _load_table(d / "fall_tnr.csv")
        bundle.adl_tnr = _load_table(d / "adl_tnr.csv")
    if args.kan_eval:
        d = Path(args.kan_eval)
        table = _load_table(d / "rmse_heatmap.csv")
        global_rmse = None
        metrics = d / "metrics.json"
        if metrics.is_file():
            global_rmse = json.loads(metrics.read_text()).get("tti_rmse_ms")
        if table is not None:
            bundle.rmse = eval_mod.RmseHeatmap(table=table,
                                               global_rmse=global_rmse)
    for trace_csv in args.trace or []:
        p = Path(trace_csv)
        tid = TrialId.parse(p.stem.replace("trajectory_", ""))
        rows = np.loadtxt(p, delimiter=",", skiprows=1, ndmin=2)
        bundle.trajectories.append(TrajectoryTrace(
            trial_id=tid, t_s=rows[:, 0], truth_ms=rows[:, 1],
            predicted_ms=rows[:, 2]))
    files = eval_mod.render_report(bundle, out)
    _write_resolved(config, out)
    print(f"wrote {len(files)} report files to {out}")
    return 0


# ---------------------------------------------------------------------------
# Parser and dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fallsense",
        description="Waist-IMU fall detection and impact-time estimation")
    sub = parser.add_subparsers(dest="command")

    def common(p, out=True):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override the global seed")
        if out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("verify", help="count and sanity-check a corpus")
    p.add_argument("root")
    p.add_argument("--deep", action="store_true",
                   help="fully parse every trial file")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("features",
                       help="calibrate, orient, and build feature frames")
    common(p)
    p.add_argument("--root", required=True, help="corpus root")
    p.add_argument("--subjects", required=True, help="subject metadata CSV")
    p.add_argument("--annotations", help="normalized fall-span CSV")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="parallel trial workers (default: all cores)")
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("select", help="correlation + mRMR feature audit")
    common(p)
    p.add_argument("--features", required=True,
                   help="features output directory")
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("train-fdnn", help="train the fall detector")
    common(p)
    p.add_argument("--features", required=True)
    p.set_defaults(func=_cmd_train_fdnn)

    p = sub.add_parser("eval-fdnn", help="score the detector into tables")
    common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split-file", help="split.json from train-fdnn")
    p.add_argument("--split", default="test",
                   choices=["train", "validation", "test"])
    p.set_defaults(func=_cmd_eval_fdnn)

    p = sub.add_parser("train-kan", help="fit the impact-time model")
    common(p)
    p.add_argument("--features", required=True)
    p.set_defaults(func=_cmd_train_kan)

    p = sub.add_parser("cv-kan", help="cross-validate hyperparameters")
    common(p)
    p.add_argument("--features", required=True)
    p.set_defaults(func=_cmd_cv_kan)

    p = sub.add_parser("eval-kan", help="test-fold RMSE heatmap")
    common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=_cmd_eval_kan)

    p = sub.add_parser("trace", help="trajectory for one fall segment")
    common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--trial", required=True, help="trial id, e.g. F03_SA18_R03")
    p.set_defaults(func=_cmd_trace)

    p = sub.add_parser("stream", help="replay a trial through both models")
    common(p)
    p.add_argument("--fdnn", required=True, help="detector checkpoint")
    p.add_argument("--kan", required=True, help="impact-model checkpoint")
    p.add_argument("--trial", required=True, help="trial file path")
    p.add_argument("--subjects", required=True)
    p.add_argument("--mode", default="fast", choices=["fast", "realtime"])
    p.set_defaults(func=_cmd_stream)

    p = sub.add_parser("synth", help="write a synthetic corpus")
    common(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("report", help="render CSV/SVG/JSON reports")
    common(p)
    p.add_argument("--fdnn-eval", help="eval-fdnn output directory")
    p.add_argument("--kan-eval", help="eval-kan output directory")
    p.add_argument("--trace", action="append",
                   help="trajectory CSV (repeatable)")
    p.set_defaults(func=_cmd_report)

    return parser


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    if not argv:
        parser.print_usage()
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    if not hasattr(args, "func"):
        parser.print_usage()
        return 1
    try:
        return args.func(args)
    except (CliError, ConfigError, IngestError, FeatureError,
            fdnn_mod.FdnnError, kan_mod.KanError, StreamError,
            CheckpointError, eval_mod.EvaluationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
