"""Command-line interface: ``tsseg {synth,train,eval,gen-labels}``.

Exit codes: 0 success, 2 usage or configuration error, 3 data or
compatibility error, 4 numerical failure during training.
"""
import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, io
from .errors import (AnnotationError, ConfigError, DataError, FormatError, NumericalError,
                     ShapeError)
from .gcn import VARIANTS, generate_labels
from .graph import EDGE_MODES, build_graph
from .metrics import accuracy, evaluate, format_csv, format_table, segments_from_labels
from .segmenter import predict, tcn_forward
from .synthetic import SynthConfig, config_dict, synth_dataset
from .trainer import RunRecord, ScheduleConfig, run

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


def _default_workers():
    raw = os.environ.get("TSSEG_WORKERS")
    if raw is None:
        return 1
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"TSSEG_WORKERS must be an integer, got {raw!r}")


def _write_metrics(scores, out_dir, title):
    table = format_table(scores, title)
    (out_dir / "metrics.txt").write_text(table)
    (out_dir / "metrics.csv").write_text(format_csv(scores))
    print(table, end="")


# -- synth ---------------------------------------------------------------------

def cmd_synth(args):
    cfg = SynthConfig(num_videos=args.num_videos, num_classes=args.num_classes,
                      feature_dim=args.feature_dim, segment_len_range=(args.min_len, args.max_len),
                      segments_per_video=(args.min_segments, args.max_segments),
                      noise_sigma=args.noise_sigma, boundary_blur=args.boundary_blur,
                      seed=args.seed, test_videos=args.test_videos)
    out = Path(args.out)
    manifest = synth_dataset(out, cfg)
    (out / "synth_config.json").write_text(json.dumps(config_dict(cfg), indent=2, sort_keys=True) + "\n")
    print(manifest.read_text(), end="")
    return EXIT_OK


# -- train -----------------------------------------------------------------------

def schedule_from_args(args):
    base = ScheduleConfig.synthetic_preset() if args.preset == "synthetic" else ScheduleConfig()
    overrides = {f.name: getattr(args, f.name) for f in fields(ScheduleConfig)
                 if getattr(args, f.name, None) is not None}
    return ScheduleConfig(**{**asdict(base), **overrides})


def cmd_train(args):
    config = schedule_from_args(args)
    dataset = io.load_dataset(args.manifest, timestamp_seed=args.sample_timestamps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"version": __version__, "manifest": str(args.manifest)}
    if not args.no_timestamps:
        meta["started"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    with open(out / "run.log", "w", newline="\n") as log_stream:
        try:
            record, seg, gcn = run(config, dataset, log_stream)
        except NumericalError:
            _write_run_json(out, RunRecord(asdict(config), config.seed), meta, "diverged")
            raise
    io.save_tcn(seg, out / "segmenter.tstc")
    if gcn is not None:
        io.save_gcn(gcn, out / "gcn.tsgc")
    _write_run_json(out, record, meta, "complete")
    if record.final_metrics is not None:
        _write_metrics(record.final_metrics, out, "final segmenter")
    else:
        print("training complete; no ground truth to evaluate against")
    return EXIT_OK


def _write_run_json(out, record, meta, status):
    doc = json.loads(record.to_json())
    doc.update(meta, status=status)
    (out / "run.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# -- eval --------------------------------------------------------------------------

def _check_compatible(config, dataset):
    if config.num_classes != dataset.num_classes:
        raise DataError(f"checkpoint predicts {config.num_classes} classes, "
                        f"dataset has {dataset.num_classes}")
    if config.input_dim != dataset.feature_dim:
        raise DataError(f"checkpoint expects {config.input_dim}-dim features, "
                        f"dataset has {dataset.feature_dim}")


def cmd_eval(args):
    dataset = io.load_dataset(args.manifest, require_gt=True, need_timestamps=False)
    videos = dataset.eval_videos if args.split == "auto" else dataset.split(args.split)
    if not videos:
        raise DataError(f"no videos in split {args.split!r}")
    if args.checkpoint:
        params = io.load_tcn(args.checkpoint)
        _check_compatible(params.config, dataset)
        preds = [predict(params, v.features.frames) for v in videos]
    else:
        preds = []
        for v in videos:
            y = io.read_labels(Path(args.pred_dir) / f"{v.video_id}.txt")
            if y.size != v.num_frames:
                raise DataError(f"{v.video_id}: {y.size} predicted labels for {v.num_frames} frames")
            preds.append(y)
    out = Path(args.out)
    (out / "predictions").mkdir(parents=True, exist_ok=True)
    (out / "timelines").mkdir(exist_ok=True)
    for v, y in zip(videos, preds):
        io.write_labels(y, out / "predictions" / f"{v.video_id}.txt")
        io.write_timeline(segments_from_labels(y), out / "timelines" / f"{v.video_id}.csv")
    scores = evaluate(zip(preds, (v.gt for v in videos)))
    _write_metrics(scores, out, f"{len(videos)} videos")
    return EXIT_OK


# -- gen-labels ----------------------------------------------------------------------

def cmd_gen_labels(args):
    dataset = io.load_dataset(args.manifest, timestamp_seed=args.sample_timestamps)
    seg = io.load_tcn(args.segmenter)
    gcn = io.load_gcn(args.gcn)
    _check_compatible(seg.config, dataset)
    if gcn.num_classes != dataset.num_classes or gcn.d_in != seg.config.num_feature_maps:
        raise DataError(f"GCN checkpoint ({gcn.d_in} -> {gcn.num_classes}) does not fit a "
                        f"segmenter with {seg.config.num_feature_maps} feature maps and "
                        f"{dataset.num_classes} classes")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    accs = []
    for v in dataset.videos:
        feats = tcn_forward(seg, v.features.frames).penultimate
        graph = build_graph(feats, args.window, args.edge_mode)
        labels = generate_labels(gcn, graph, feats, v.timestamps)
        io.write_labels(labels, out / f"{v.video_id}.txt")
        if v.gt is not None:
            accs.append(accuracy(labels, v.gt))
    print(f"wrote {len(dataset.videos)} label files to {out}")
    if accs:
        print(f"generated-label accuracy vs ground truth: {np.mean(accs):.2f}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="tsseg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"tsseg {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    d = SynthConfig()
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--num-videos", type=int, default=d.num_videos)
    p.add_argument("--test-videos", type=int, default=d.test_videos, help="extra held-out videos")
    p.add_argument("--num-classes", type=int, default=d.num_classes)
    p.add_argument("--feature-dim", type=int, default=d.feature_dim)
    p.add_argument("--min-len", type=int, default=d.segment_len_range[0])
    p.add_argument("--max-len", type=int, default=d.segment_len_range[1])
    p.add_argument("--min-segments", type=int, default=d.segments_per_video[0])
    p.add_argument("--max-segments", type=int, default=d.segments_per_video[1])
    p.add_argument("--noise-sigma", type=float, default=d.noise_sigma)
    p.add_argument("--boundary-blur", type=int, default=d.boundary_blur)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="alternating training from timestamps")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="directory for checkpoints and logs")
    p.add_argument("--preset", choices=("full", "synthetic"), default="full",
                   help="synthetic uses 60 GCN epochs per refinement iteration")
    p.add_argument("--init-epochs", dest="init_epochs", type=int)
    p.add_argument("--refine-iters", dest="refine_iters", type=int)
    p.add_argument("--gcn-epochs", dest="gcn_epochs_per_iter", type=int)
    p.add_argument("--seg-epochs", dest="seg_epochs_per_iter", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--seg-lr", dest="seg_lr", type=float)
    p.add_argument("--gcn-lr", dest="gcn_lr", type=float)
    p.add_argument("--gcn-weight-decay", dest="gcn_weight_decay", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--precision", type=int, choices=(32, 64))
    p.add_argument("--window", type=int)
    p.add_argument("--edge-mode", dest="edge_mode", choices=EDGE_MODES)
    p.add_argument("--gcn-variant", dest="gcn_variant", choices=VARIANTS)
    p.add_argument("--gcn-hidden", dest="gcn_hidden", type=int)
    p.add_argument("--gcn-reinit", dest="gcn_reinit", action="store_true", default=None,
                   help="fresh GCN weights at every refinement iteration")
    p.add_argument("--num-stages", dest="num_stages", type=int)
    p.add_argument("--layers", dest="layers_per_stage", type=int)
    p.add_argument("--feature-maps", dest="num_feature_maps", type=int)
    p.add_argument("--conf-stages", dest="conf_stages", choices=("all", "last"))
    p.add_argument("--no-shuffle", dest="shuffle", action="store_false", default=None)
    p.add_argument("--workers", type=int, help="worker threads (default: $TSSEG_WORKERS or 1)")
    p.add_argument("--sample-timestamps", type=int, metavar="SEED",
                   help="sample timestamps from ground truth instead of reading them")
    p.add_argument("--no-timestamps", action="store_true",
                   help="omit wall-clock times from run.json (byte-reproducible output)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint", help="segmenter checkpoint to predict with")
    src.add_argument("--pred-dir", help="directory of <video_id>.txt predicted label files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="auto", help="train, test or auto (test if present)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen-labels", help="write GCN-generated dense labels")
    p.add_argument("--segmenter", required=True)
    p.add_argument("--gcn", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=ScheduleConfig.window)
    p.add_argument("--edge-mode", choices=EDGE_MODES, default=ScheduleConfig.edge_mode)
    p.add_argument("--sample-timestamps", type=int, metavar="SEED")
    p.set_defaults(func=cmd_gen_labels)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "train" and args.workers is None:
            args.workers = _default_workers()
        return args.func(args)
    except ConfigError as exc:
        print(f"tsseg: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FormatError, ShapeError, AnnotationError) as exc:
        print(f"tsseg: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"tsseg: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
