import json
import logging
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd
from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from app.segmentation.exceptions import SchemaError, SkillSegError
from app.segmentation.heuristic import HeuristicConfig, heuristic_segment
from app.segmentation.metrics import (
    edge_distance_accuracy,
    frame_metrics,
    plot_edge_accuracy,
    plot_sf1_curves,
    segment_report,
    threshold_grid,
)
from app.segmentation.mlp import (
    N_INPUTS,
    ProbSequence,
    TrainConfig,
    evaluate,
    init_model,
    load_model,
    predict_sequence,
    save_model,
    train,
    write_loss_history,
)
from app.segmentation.pose import (
    VideoMeta,
    assemble_frames,
    load_annotation,
    load_features,
    load_video_features,
    save_features,
    split_dataset,
    verify_checksum,
)
from app.segmentation.render import hold_times, render_svg, text_strip
from app.segmentation.storage import (
    list_inputs,
    read_probs,
    read_timeline,
    write_csv,
    write_json,
    write_probs,
    write_timeline,
)
from app.segmentation.synth import SynthConfig, gen_bundle, write_bundle
from app.segmentation.timeline import N_CLASSES, Timeline, labels_to_segments, segments_to_labels
from app.segmentation.viterbi import TransitionModel, viterbi_decode

logger = logging.getLogger("app.segmentation")

METHODS = ("raw", "heuristic", "viterbi")

# --verbosity 2 and 3 raise the package logger above its SKILLSEG_LOG level.
_VERBOSITY_LEVELS = {2: logging.INFO, 3: logging.DEBUG}


def _existing(path: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file or directory: {path}")
    return path


def _dims(raw: str) -> Tuple[int, ...]:
    try:
        return tuple(int(part) for part in raw.split(",") if part.strip())
    except ValueError:
        raise CommandError(f'invalid layer widths "{raw}"', returncode=4) from None


def _keyed_timelines(path: Path) -> Dict[str, Timeline]:
    timelines: Dict[str, Timeline] = {}
    for p in list_inputs(path, ".json"):
        timeline = read_timeline(p)
        key = timeline.video_id or p.stem
        if key in timelines:
            raise SchemaError(f"duplicate video_id \"{key}\" in {p.name}")
        timelines[key] = timeline
    return timelines


class Command(BaseCommand):
    help = "Ingest poses, train the frame classifier, segment, evaluate, synthesize and render skill timelines"

    def add_arguments(self, parser):
        conf = settings.SKILLSEG
        subparsers = parser.add_subparsers(dest="subcommand", required=True)

        ingest = subparsers.add_parser("ingest", help="keypoint directory or zip -> feature cache (.npz)")
        ingest.add_argument("input")
        ingest.add_argument("output")
        ingest.add_argument("--video-id", default="")
        ingest.add_argument("--width", type=float, help="frame width in pixels; overrides meta.json")
        ingest.add_argument("--height", type=float)
        ingest.add_argument("--fps", type=float)
        ingest.add_argument("--video", help="source video, checked against --annotation's md5")
        ingest.add_argument("--annotation")

        trainer = subparsers.add_parser("train", help="feature caches + annotations -> model file + loss CSV")
        trainer.add_argument("features", help="directory of <video>.npz feature caches")
        trainer.add_argument("annotations", help="directory of <video>.json ground-truth timelines")
        trainer.add_argument("output", help="model file (.npz)")
        trainer.add_argument("--loss-csv")
        trainer.add_argument("--report-csv", help="per-class frame report on the test split")
        trainer.add_argument("--seed", type=int, default=conf["SEED"])
        trainer.add_argument("--epochs", type=int, default=conf["EPOCHS"])
        trainer.add_argument("--batch-size", type=int, default=conf["BATCH_SIZE"])
        trainer.add_argument("--learning-rate", type=float, default=conf["LEARNING_RATE"])
        trainer.add_argument("--activation", default=conf["ACTIVATION"])
        trainer.add_argument("--hidden", default=",".join(str(d) for d in conf["HIDDEN"]))
        trainer.add_argument("--split-ratio", type=float, default=conf["SPLIT_RATIO"])

        predict = subparsers.add_parser("predict", help="model + feature caches -> ProbSequence files")
        predict.add_argument("model")
        predict.add_argument("input", help="feature cache or directory of them")
        predict.add_argument("output", help="ProbSequence file, or directory when input is a directory")

        segment = subparsers.add_parser("segment", help="ProbSequence files -> Timeline files")
        segment.add_argument("input", help="ProbSequence file or directory of them")
        segment.add_argument("output", help="Timeline file, or directory when input is a directory")
        segment.add_argument("--method", choices=METHODS, default="viterbi")
        segment.add_argument("--epsilon", type=float, default=conf["EPSILON"])
        segment.add_argument("--m", type=int, default=conf["HEURISTIC_M"])
        segment.add_argument("--stride", type=int, default=conf["HEURISTIC_STRIDE"])
        segment.add_argument("--fnr-radius", type=int, default=conf["FNR_RADIUS"])

        evaluator = subparsers.add_parser("eval", help="predicted + ground-truth Timelines -> reports")
        evaluator.add_argument("pred", help="Timeline file or directory")
        evaluator.add_argument("gt", help="Timeline file or directory")
        evaluator.add_argument("--out", help="report directory")
        evaluator.add_argument("--method", default="pred", help="row name in the ASF1 table")
        evaluator.add_argument("--thresholds", type=int, default=conf["THRESHOLDS"])
        evaluator.add_argument("--bins", type=int, default=conf["EDGE_BIN_WIDTH"])
        evaluator.add_argument("--plot", action="store_true", help="also write SVG figures to --out")

        synth = subparsers.add_parser("synth", help="synthetic ground truth + simulated classifier outputs")
        synth.add_argument("output")
        synth.add_argument("--videos", type=int, default=10)
        synth.add_argument("--min-frames", type=int, default=600)
        synth.add_argument("--max-frames", type=int, default=1200)
        synth.add_argument("--min-segment", type=int, default=72)
        synth.add_argument("--max-segment", type=int, default=208)
        synth.add_argument("--noise", type=float, default=0.05)
        synth.add_argument("--alpha", type=float, default=0.8)
        synth.add_argument("--edge-biased", action="store_true")
        synth.add_argument("--seed", type=int, default=conf["SEED"])
        synth.add_argument("--fps", type=float, default=conf["FPS"])

        render = subparsers.add_parser("render", help="Timelines -> text strip, SVG strip, hold-time listing")
        render.add_argument("inputs", nargs="+", help="Timeline files, drawn top to bottom")
        render.add_argument("--svg")
        render.add_argument("--csv", help="hold-time listing as CSV")
        render.add_argument("--fps", type=float, help="override the timelines' frame rate")

    def handle(self, *args, **options):
        level = _VERBOSITY_LEVELS.get(options["verbosity"])
        if level is not None and level < logger.getEffectiveLevel():
            logger.setLevel(level)
        subcommand = options["subcommand"]
        resolved = {k: v for k, v in options.items() if k not in {"stdout", "stderr", "skip_checks"}}
        logger.warning("skillseg %s: %s", subcommand, json.dumps(resolved, default=str, sort_keys=True))
        try:
            getattr(self, f"handle_{subcommand}")(options)
        except FileNotFoundError as exc:
            message = f"no such file or directory: {exc.filename}" if exc.filename else str(exc)
            raise CommandError(message, returncode=2) from exc
        except SchemaError as exc:
            raise CommandError(str(exc), returncode=3) from exc
        except SkillSegError as exc:
            raise CommandError(str(exc), returncode=4) from exc

    def _video_meta(self, source: Path, options):
        """Explicit flags, else the meta.json shipped with the frames, else settings."""

        flags = (options["width"], options["height"], options["fps"])
        shipped = source / "meta.json" if source.is_dir() else source.with_suffix(".meta.json")
        if all(flag is None for flag in flags) and shipped.exists():
            return None
        conf = settings.SKILLSEG
        defaults = (conf["FRAME_WIDTH"], conf["FRAME_HEIGHT"], conf["FPS"])
        return VideoMeta(*(default if flag is None else flag for flag, default in zip(flags, defaults)))

    def handle_ingest(self, options):
        source = _existing(options["input"])
        meta = self._video_meta(source, options)
        if options["video"] and options["annotation"]:
            gt = load_annotation(_existing(options["annotation"]))
            if verify_checksum(gt, _existing(options["video"])):
                self.stdout.write(self.style.SUCCESS(f"Checksum verified for {gt.video_id}"))
        sequence = load_video_features(source, meta, options["video_id"])
        save_features(options["output"], sequence)
        missed = int((~sequence.detected).sum())
        if missed:
            self.stdout.write(self.style.WARNING(f"{missed} of {len(sequence)} frames without a detected person"))
        self.stdout.write(self.style.SUCCESS(f"Ingested {sequence.video_id}: {len(sequence)} frames"))

    def handle_train(self, options):
        features = {}
        for path in list_inputs(_existing(options["features"]), ".npz"):
            sequence = load_features(path)
            features[sequence.video_id or path.stem] = sequence
        annotations = {}
        for path in list_inputs(_existing(options["annotations"]), ".json"):
            gt = load_annotation(path)
            annotations[gt.video_id] = gt
        ids = sorted(set(features) & set(annotations))
        for orphan in sorted(set(features) ^ set(annotations)):
            self.stdout.write(self.style.WARNING(f"Skipping {orphan}: no matching feature cache or annotation"))
        if not ids:
            raise SkillSegError("empty dataset: no video has both features and an annotation")

        split = split_dataset(ids, options["split_ratio"], options["seed"])
        hidden = _dims(options["hidden"])
        cfg = TrainConfig(
            batch_size=options["batch_size"],
            epochs=options["epochs"],
            learning_rate=options["learning_rate"],
            seed=options["seed"],
            activation=options["activation"],
            hidden=hidden,
        )
        x, y = assemble_frames(features, annotations, split.train)
        model = init_model((N_INPUTS, *hidden, N_CLASSES), cfg.activation, cfg.seed)
        model, history = train(model, x, y, cfg)
        save_model(options["output"], model)
        if options["loss_csv"]:
            write_loss_history(options["loss_csv"], history)
        self.stdout.write(
            self.style.SUCCESS(
                f"Trained on {len(split.train)} videos ({y.size} frames), final loss {history[-1]:.4f}"
            )
        )
        if not split.test:
            self.stdout.write(self.style.WARNING("No test videos left by the split; skipping evaluation"))
            return
        report = evaluate(model, *assemble_frames(features, annotations, split.test))
        if options["report_csv"]:
            write_csv(options["report_csv"], report.to_frame())
        summary = ", ".join(f"{key} {value:.4f}" for key, value in report.summary().items())
        self.stdout.write(self.style.SUCCESS(f"Test split ({len(split.test)} videos): {summary}"))

    def handle_predict(self, options):
        model = load_model(_existing(options["model"]))
        source = _existing(options["input"])
        inputs = list_inputs(source, ".npz")
        for path in inputs:
            sequence = load_features(path)
            probs = predict_sequence(model, sequence)
            video_id = sequence.video_id or path.stem
            target = Path(options["output"]) / f"{video_id}.json" if source.is_dir() else options["output"]
            write_probs(target, video_id, probs.fps, probs.probs)
        self.stdout.write(self.style.SUCCESS(f"Predicted {len(inputs)} videos"))

    def _segment(self, probs: ProbSequence, options) -> Timeline:
        method = options["method"]
        if method == "viterbi":
            model = TransitionModel(probs.probs.shape[1], options["epsilon"])
            return labels_to_segments(viterbi_decode(probs, model), probs.video_id)
        labels = probs.argmax_labels()
        if method == "heuristic":
            cfg = HeuristicConfig(m=options["m"], stride=options["stride"], fnr_radius=options["fnr_radius"])
            return heuristic_segment(labels, cfg, probs.video_id)
        return labels_to_segments(labels, probs.video_id)

    def handle_segment(self, options):
        source = _existing(options["input"])
        inputs = list_inputs(source, ".json")
        for path in inputs:
            video_id, fps, rows = read_probs(path)
            timeline = self._segment(ProbSequence(rows, video_id, fps), options)
            target = Path(options["output"]) / f"{video_id}.json" if source.is_dir() else options["output"]
            write_timeline(target, timeline)
            logger.info("%s: %d segments (%s)", video_id, len(timeline), options["method"])
        self.stdout.write(self.style.SUCCESS(f"Segmented {len(inputs)} videos with {options['method']}"))

    def handle_eval(self, options):
        pred = _keyed_timelines(_existing(options["pred"]))
        gt = _keyed_timelines(_existing(options["gt"]))
        if len(pred) == 1 and len(gt) == 1:
            # A single pair is compared whatever its ids.
            pred = {key: next(iter(pred.values())) for key in gt}
        keys = sorted(gt)
        report = segment_report(pred, gt, threshold_grid(options["thresholds"]))
        frames = frame_metrics(
            np.concatenate([segments_to_labels(pred[k]).labels for k in keys]),
            np.concatenate([segments_to_labels(gt[k]).labels for k in keys]),
        )
        edges = edge_distance_accuracy(
            [segments_to_labels(pred[k]) for k in keys], [gt[k] for k in keys], options["bins"]
        )

        if options["out"]:
            out = Path(options["out"])
            write_csv(out / "frame_report.csv", frames.to_frame())
            write_csv(out / "asf1.csv", pd.DataFrame([report.to_row(options["method"])]))
            write_csv(out / "sf1_curve.csv", report.curves, index=True)
            write_csv(out / "edge_accuracy.csv", edges)
            write_json(
                out / "summary.json",
                {
                    "method": options["method"],
                    "videos": len(keys),
                    **frames.summary(),
                    "mASF1": report.masf1,
                    "ASF1": report.asf1,
                },
            )
            if options["plot"]:
                plot_sf1_curves({options["method"]: report.curves}, out / "sf1_curve.svg")
                plot_edge_accuracy(edges, out / "edge_accuracy.svg")
        self.stdout.write(f"frame accuracy {frames.accuracy:.4f}")
        for name, score in sorted(report.asf1.items()):
            self.stdout.write(f"ASF1 {name:<5} {score:.3f}")
        self.stdout.write(self.style.SUCCESS(f"mASF1 {report.masf1:.3f}"))

    def handle_synth(self, options):
        cfg = SynthConfig(
            n_videos=options["videos"],
            frames=(options["min_frames"], options["max_frames"]),
            segment_frames=(options["min_segment"], options["max_segment"]),
            noise=options["noise"],
            alpha=options["alpha"],
            seed=options["seed"],
            fps=options["fps"],
            edge_biased=options["edge_biased"],
        )
        bundle = gen_bundle(cfg)
        gt_dir, probs_dir = write_bundle(options["output"], bundle)
        self.stdout.write(self.style.SUCCESS(f"Wrote {len(bundle)} videos to {gt_dir} and {probs_dir}"))

    def handle_render(self, options):
        named: List[Tuple[str, Timeline]] = []
        for raw in options["inputs"]:
            path = _existing(raw)
            timeline = read_timeline(path)
            if options["fps"]:
                timeline = Timeline(timeline.segments, timeline.n_frames, options["fps"], timeline.video_id)
            named.append((timeline.video_id or path.stem, timeline))
        self.stdout.write(text_strip(named), ending="")
        listing = pd.concat([hold_times(t) for _, t in named], ignore_index=True)
        for row in listing.to_dict("records"):
            self.stdout.write(f"{row['video_id']} {row['class']} {row['seconds']:.2f} s")
        if options["csv"]:
            write_csv(options["csv"], listing)
        if options["svg"]:
            render_svg(named, options["svg"])
            self.stdout.write(self.style.SUCCESS(f"Rendered {len(named)} timelines to {options['svg']}"))
