"""Command-line front end.

Every stage reads the previous stage's ``dataset.csv`` (path, class, split)
and writes its own into ``--out``, so the recipe chains as::

    simulate -> extract -> refine -> augment -> train -> eval / infer

Each run also leaves ``run_<command>.json`` describing what produced the
outputs. Exit codes: 1 usage, 2 invalid input, 3 file system errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import statistics
import sys
import time
import tracemalloc
from pathlib import Path

import numpy as np

from . import __version__
from .core import CLASS_NAMES, ConfigError, GestureClass, RadarConfig, load_config
from .dataset import AugmentConfig, LabelConfig, LabeledSequence, NoConfidentFrame, refine_label, split_train_val
from .evaluation import EvalConfig, EvalReport, confusion_rows, evaluate_sequence, extract_events, summary_line
from .formats import (
    FormatError,
    atomic_write,
    read_annotations_csv,
    read_dataset_manifest,
    read_features_csv,
    read_labels_csv,
    read_lfs,
    read_probs_csv,
    read_rfr,
    write_annotations_csv,
    write_dataset_manifest,
    write_features_csv,
    write_labels_csv,
    write_lfs,
    write_probs_csv,
    write_profiles_csv,
    write_rfr,
    write_table_csv,
)
from .model import TrainConfig, WeightFileError, load_params, predict, save_params, train
from .pipeline import DetectionConfig, extract_sequence, process_frame
from .sim import PointTarget, SampleSpec, background_sample, gesture_sample, synthesize_frame
from .workflow import Corpus, augment_corpus, crop_active

log = logging.getLogger("gesture_radar")

EXIT_USAGE, EXIT_INVALID, EXIT_IO = 1, 2, 3
DATASET = "dataset.csv"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _slug(gesture: GestureClass) -> str:
    return gesture.name.lower()


def _rel(path: Path, base: Path) -> str:
    return Path(os.path.relpath(Path(path).resolve(), Path(base).resolve())).as_posix()


def _portable(value, base: Path):
    """Existing paths relative to ``base``, so manifests do not depend on where a run happened."""
    if isinstance(value, (list, tuple)):
        return [_portable(v, base) for v in value]
    if isinstance(value, (str, Path)) and str(value) and Path(value).exists():
        return _rel(Path(value), base)
    return value


def _write_run_manifest(args, config: RadarConfig, inputs, outputs):
    out = Path(args.out)
    skip = ("func", "command", "out", "config", "seed", "quiet")
    record = {
        "subcommand": args.command,
        "tool_version": __version__,
        "seed": args.seed,
        "config": config.to_dict(),
        "arguments": {k: _portable(v, out) for k, v in sorted(vars(args).items()) if k not in skip},
        "inputs": [_rel(Path(p), out) for p in inputs],
        "outputs": sorted(_rel(Path(p), out) for p in outputs),
    }
    atomic_write(out / f"run_{args.command}.json", json.dumps(record, indent=2, sort_keys=True, default=str) + "\n")


def _dataset_rows(paths):
    """Rows of one or more dataset manifests, in the order given."""
    rows = []
    for p in paths:
        rows.extend(read_dataset_manifest(p))
    if not rows:
        raise FormatError("no rows in the given dataset manifests")
    return rows


def _write_dataset(out: Path, rows):
    write_dataset_manifest(out / DATASET, [(_rel(Path(p), out), c, s) for p, c, s in rows])
    return out / DATASET


# ------------------------------------------------------------- subcommands


def cmd_simulate(args, config):
    out = Path(args.out)
    rng = np.random.default_rng(args.seed)
    if args.background == (args.gesture is not None):
        raise UsageError("give exactly one of --class or --background")
    gesture = GestureClass.BACKGROUND if args.background else GestureClass.parse(args.gesture)
    spec = SampleSpec(sigma_noise=args.noise_sigma)
    if args.frames:
        spec = SampleSpec(frames=args.frames, sigma_noise=args.noise_sigma)
    written, rows = [], []
    for i in range(args.count):
        if gesture == GestureClass.BACKGROUND:
            frames, ann = background_sample(config, rng, spec)
        else:
            frames, ann = gesture_sample(gesture, config, rng, spec)
        stem = out / f"{args.prefix}{_slug(gesture)}_{i:03d}"
        write_rfr(stem.with_suffix(".rfr"), frames)
        write_annotations_csv(f"{stem}_annotations.csv", ann.classes, ann.targets)
        written += [stem.with_suffix(".rfr"), Path(f"{stem}_annotations.csv")]
        rows.append((stem.with_suffix(".rfr"), gesture, ""))
        log.info("wrote %s (%d frames)", stem.with_suffix(".rfr").name, len(frames))
    rows = _merge_rows(out, rows)
    written.append(_write_dataset(out, rows))
    return [], written


def _merge_rows(out: Path, rows):
    """Keep rows already listed in ``out/dataset.csv`` that this run does not replace."""
    path = out / DATASET
    if not path.exists():
        return rows
    fresh = {Path(p).resolve() for p, _, _ in rows}
    kept = [r for r in read_dataset_manifest(path) if Path(r[0]).resolve() not in fresh]
    return kept + rows


def _raw_inputs(args):
    if args.manifest:
        return [(Path(p), c, s) for p, c, s in _dataset_rows(args.manifest)]
    if not args.inputs:
        raise UsageError("give RFR files or --manifest")
    return [(Path(p), None, "") for p in args.inputs]


def cmd_extract(args, config):
    out = Path(args.out)
    det = DetectionConfig(noise_sigma=args.noise_sigma, detection_threshold=args.threshold)
    written, rows, inputs = [], [], []
    for path, cls, split in _raw_inputs(args):
        frames = read_rfr(path, config.frame_shape)
        feats, profiles = extract_sequence(frames, det, config, with_profiles=True)
        target = out / f"{path.stem}_features.csv"
        write_features_csv(target, feats)
        written.append(target)
        inputs.append(path)
        if args.profiles:
            write_profiles_csv(out / f"{path.stem}_profiles.csv", profiles)
            written.append(out / f"{path.stem}_profiles.csv")
        if args.plots:
            from .plotting import plot_features, plot_profiles

            written.append(plot_features(feats, out / f"{path.stem}_features.png", frame_rate=config.frame_rate))
            if args.profiles:
                written.append(
                    plot_profiles(profiles, out / f"{path.stem}_profiles.png", config.range_resolution, config.frame_rate, feats[:, 0])
                )
        if cls is not None:
            rows.append((target, cls, split))
        log.info("%s: %d frames", path.name, len(feats))
    if rows:
        written.append(_write_dataset(out, rows))
    return inputs, written


def cmd_refine(args, config):
    out = Path(args.out)
    label_cfg = LabelConfig(amplitude_threshold=args.threshold, label_len=args.label_len, noise_sigma=args.noise_sigma)
    if args.manifest:
        items = _dataset_rows(args.manifest)
    elif args.inputs and args.gesture:
        items = [(Path(p), GestureClass.parse(args.gesture), "") for p in args.inputs]
    else:
        raise UsageError("give --manifest, or feature CSVs together with --class")
    sequences, sources = [], []
    for path, cls, _ in items:
        feats = read_features_csv(path)
        if cls == GestureClass.BACKGROUND:
            labels = np.full(len(feats), int(GestureClass.BACKGROUND))
        else:
            try:
                labels = refine_label(feats, cls, label_cfg, config)
            except NoConfidentFrame:
                log.warning("%s: no frame above the amplitude threshold, skipped", Path(path).name)
                continue
        stem = Path(path).stem.removesuffix("_features")
        sequences.append(LabeledSequence(feats, labels, name=stem))
        sources.append(cls)
    if not sequences:
        raise FormatError("no sequence could be labelled")
    train_set, val_set = split_train_val(list(range(len(sequences))), tuple(args.ratio), args.seed, key=lambda i: int(sources[i]))
    split = {i: "train" for i in train_set} | {i: "val" for i in val_set}
    written, rows = [], []
    for i, seq in enumerate(sequences):
        target = out / f"{seq.name}.lfs"
        write_lfs(target, seq)
        write_labels_csv(out / f"{seq.name}_labels.csv", seq.labels)
        written += [target, out / f"{seq.name}_labels.csv"]
        rows.append((target, sources[i], split[i]))
    written.append(_write_dataset(out, rows))
    log.info("labelled %d sequences (%d train, %d val)", len(sequences), len(train_set), len(val_set))
    return [p for p, _, _ in items], written


def cmd_augment(args, config):
    """Blend raw gesture crops from the training split into raw background windows."""
    out = Path(args.out)
    labelled = _dataset_rows(args.manifest)
    raw_rows = _dataset_rows(args.raw)
    raw_by_stem = {Path(p).stem: p for p, _, _ in raw_rows}
    train_stems = [(Path(p).stem, c) for p, c, s in labelled if s == "train"]
    if not train_stems:
        raise FormatError("the dataset has no training rows to augment from")
    raw, classes = [], []
    for stem, cls in train_stems:
        if stem not in raw_by_stem:
            raise FormatError(f"no raw recording for {stem} in the --raw manifest")
        path = Path(raw_by_stem[stem])
        frames = read_rfr(path, config.frame_shape).astype(np.float32)
        ann = path.with_name(f"{stem}_annotations.csv")
        if cls != GestureClass.BACKGROUND and ann.exists():
            frames = crop_active(frames, read_annotations_csv(ann)[0], args.margin)
        raw.append(frames)
        classes.append(cls)
    aug = AugmentConfig(tukey_alpha=args.alpha, min_gap=args.min_gap, gestures_per_sequence=tuple(args.per_sequence), seed=args.seed)
    label_cfg = LabelConfig(label_len=args.label_len, noise_sigma=args.noise_sigma)
    det = DetectionConfig(noise_sigma=args.noise_sigma)
    made = augment_corpus(Corpus([], raw, classes), args.count, config, np.random.default_rng(args.seed), aug, label_cfg, det)
    written, rows = [], list(labelled)
    for k, seq in enumerate(made):
        target = out / f"augmented_{k:04d}.lfs"
        write_lfs(target, seq)
        written.append(target)
        rows.append((target, seq.gesture, "train"))
    written.append(_write_dataset(out, rows))
    log.info("wrote %d augmented sequences", len(made))
    return [Path(p) for p in args.manifest + args.raw], written


def _load_sequences(paths):
    """(sequence, split) pairs from dataset manifests or bare LFS files."""
    out = []
    for p in paths:
        p = Path(p)
        if p.suffix == ".lfs":
            out.append((read_lfs(p), ""))
        else:
            out.extend((read_lfs(q), s) for q, _, s in read_dataset_manifest(p))
    if not out:
        raise FormatError("no labelled sequences found")
    return out


def cmd_train(args, config):
    out = Path(args.out)
    seqs = _load_sequences(args.inputs)
    train_set = [s for s, split in seqs if split in ("train", "")]
    val_set = [s for s, split in seqs if split == "val"]
    if not val_set:
        train_set, val_set = split_train_val(train_set, (3, 1), args.seed)
    cfg = TrainConfig(learning_rate=args.lr, batch_size=args.batch_size, epochs=args.epochs, seed=args.seed)

    def report(epoch, train_loss, acc):
        if not args.quiet:
            print(f"epoch {epoch:3d} train_loss {train_loss:.5f} val_accuracy {acc:.5f}", flush=True)

    res = train(train_set, val_set, cfg, config, callback=report)
    weights = out / args.weights_name
    save_params(res.params, weights)
    write_table_csv(out / "history.csv", ("epoch", "train_loss", "val_accuracy"), ([e, f"{l:.9g}", f"{a:.9g}"] for e, l, a in res.history))
    written = [weights, out / "history.csv"]
    if args.plots:
        from .plotting import plot_history

        written.append(plot_history(res.history, out / "history.png"))
    if not args.quiet:
        print(f"best epoch {res.best_epoch} val_accuracy {res.best_val_accuracy:.5f}")
    return [Path(p) for p in args.inputs], written


def cmd_eval(args, config):
    out = Path(args.out)
    eval_cfg = EvalConfig(prob_threshold=args.prob_threshold, debounce=args.debounce, frame_rate=config.frame_rate)
    report = EvalReport()
    if args.probs:
        if not args.labels or len(args.labels) != len(args.probs):
            raise UsageError("--probs needs one --labels file per probability file")
        for p, lab in zip(args.probs, args.labels):
            report = report + evaluate_sequence(read_probs_csv(p), read_labels_csv(lab), eval_cfg)
        inputs = args.probs + args.labels
    elif args.weights and args.inputs:
        params = load_params(args.weights)
        for seq, split in _load_sequences(args.inputs):
            if args.split and split != args.split:
                continue
            report = report + evaluate_sequence(predict(seq.features, params, config)[0], seq.labels, eval_cfg)
        inputs = [args.weights] + args.inputs
    else:
        raise UsageError("give --probs/--labels, or --weights with labelled sequences")
    header, rows = confusion_rows(report)
    write_table_csv(out / "confusion.csv", header, rows)
    atomic_write(out / "summary.txt", summary_line(report) + "\n")
    written = [out / "confusion.csv", out / "summary.txt"]
    if args.plots:
        from .plotting import plot_confusion

        written.append(plot_confusion(report, out / "confusion.png"))
    if not args.quiet:
        width = max(len(h) for h in header)
        print(" ".join(h.rjust(width) for h in header))
        for row in rows:
            print(" ".join(str(v).rjust(width) for v in row))
        print(f"precision {report.precision:.4f} recall {report.recall:.4f} F1 {report.summary()['f1']:.4f}")
    print(summary_line(report))
    return [Path(p) for p in inputs], written


def cmd_infer(args, config):
    out = Path(args.out)
    params = load_params(args.weights)
    eval_cfg = EvalConfig(prob_threshold=args.prob_threshold, debounce=args.debounce, frame_rate=config.frame_rate)
    h = None
    written = []
    offset = 0
    for path in args.inputs:
        feats = read_features_csv(path)
        probs, hidden = predict(feats, params, config, h0=h if args.stream else None)
        if args.stream:
            h = hidden[-1]
        target = out / f"{Path(path).stem.removesuffix('_features')}_probs.csv"
        write_probs_csv(target, probs)
        written.append(target)
        for e in extract_events(probs, eval_cfg):
            frame = e.frame + offset if args.stream else e.frame
            print(f"{Path(path).name} frame {frame} {CLASS_NAMES[e.gesture]}")
        if args.stream:
            offset += len(feats)
    return [Path(args.weights)] + [Path(p) for p in args.inputs], written


def cmd_bench(args, config):
    """Median per-frame extraction time and peak transient allocation."""
    out = Path(args.out)
    rng = np.random.default_rng(args.seed)
    det = DetectionConfig()
    det.threshold(config)  # calibrate outside the timed region
    frames = [
        synthesize_frame([PointTarget(range=rng.uniform(0.2, 1.0), velocity=rng.uniform(-2, 2))], config, 0.1, rng) for _ in range(args.frames)
    ]
    times = []
    for frame in frames:
        t0 = time.perf_counter()
        process_frame(frame, det, config)
        times.append(time.perf_counter() - t0)
    tracemalloc.start()
    process_frame(frames[0], det, config)
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    rd_map = config.num_rx * config.num_chirps * config.num_range_bins * 16
    median_ms = statistics.median(times) * 1e3
    print(f"median_ms={median_ms:.4f} peak_bytes={peak} frame_bytes={frames[0].nbytes} range_doppler_map_bytes={rd_map}")
    write_table_csv(out / "bench.csv", ("median_ms", "peak_bytes", "frames"), [[f"{median_ms:.6f}", peak, args.frames]])
    return [], [out / "bench.csv"]


# ------------------------------------------------------------------ parser


def _global_flags(parser, suppress=False):
    # subcommands repeat the global flags; SUPPRESS keeps them from resetting
    # values given before the subcommand name
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=default(None), help="radar configuration file (key = value lines)")
    parser.add_argument("--seed", type=int, default=default(0), help="random seed (default 0)")
    parser.add_argument("--out", default=default("."), help="output directory (default: current)")
    parser.add_argument("--quiet", action="store_true", default=default(False), help="only print results and errors")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    _global_flags(common, suppress=True)
    parser = _Parser(prog="gesture-radar", description="FMCW radar gesture recognition toolkit")
    _global_flags(parser)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help):
        p = sub.add_parser(name, help=help, parents=[common])
        p.set_defaults(func=func)
        return p

    def plots(p):
        p.add_argument("--no-plots", dest="plots", action="store_false", help="skip PNG rendering")

    p = add("simulate", cmd_simulate, "simulate raw recordings")
    p.add_argument("--class", dest="gesture", help="gesture class name")
    p.add_argument("--background", action="store_true", help="background-only recordings")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--frames", type=int, default=None, help="frames per recording (default 100)")
    p.add_argument("--noise-sigma", type=float, default=0.1)
    p.add_argument("--prefix", default="", help="file name prefix")

    p = add("extract", cmd_extract, "raw recordings to feature CSVs")
    p.add_argument("inputs", nargs="*", help="RFR1 files")
    p.add_argument("--manifest", nargs="+", help="dataset manifests listing RFR1 files")
    p.add_argument("--profiles", action="store_true", help="also write integrated range profiles")
    p.add_argument("--noise-sigma", type=float, default=0.1, help="noise level the detection threshold is calibrated for")
    p.add_argument("--threshold", type=float, default=None, help="fixed detection threshold")
    plots(p)

    p = add("refine", cmd_refine, "label feature sequences and split train/val")
    p.add_argument("inputs", nargs="*", help="feature CSVs (with --class)")
    p.add_argument("--manifest", nargs="+", help="dataset manifests listing feature CSVs")
    p.add_argument("--class", dest="gesture")
    p.add_argument("--label-len", type=int, default=10)
    p.add_argument("--threshold", type=float, default=None, help="amplitude gate (default: calibrated)")
    p.add_argument("--noise-sigma", type=float, default=0.1)
    p.add_argument("--ratio", type=int, nargs=2, default=(3, 1), metavar=("TRAIN", "VAL"))

    p = add("augment", cmd_augment, "inject raw gesture crops into raw backgrounds")
    p.add_argument("--manifest", nargs="+", required=True, help="labelled dataset (refine output)")
    p.add_argument("--raw", nargs="+", required=True, help="raw dataset manifests (simulate output)")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--alpha", type=float, default=0.5, help="Tukey taper fraction")
    p.add_argument("--min-gap", type=int, default=5)
    p.add_argument("--per-sequence", type=int, nargs=2, default=(1, 3), metavar=("MIN", "MAX"))
    p.add_argument("--margin", type=int, default=8, help="frames kept around the active gesture")
    p.add_argument("--label-len", type=int, default=10)
    p.add_argument("--noise-sigma", type=float, default=0.1)

    p = add("train", cmd_train, "train the GRU classifier")
    p.add_argument("inputs", nargs="+", help="dataset manifests or LFS1 files")
    p.add_argument("--epochs", type=int, default=TrainConfig.epochs)
    p.add_argument("--lr", type=float, default=TrainConfig.learning_rate)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--weights-name", default="weights.grw")
    plots(p)

    p = add("eval", cmd_eval, "event-level scoring")
    p.add_argument("inputs", nargs="*", help="dataset manifests or LFS1 files (with --weights)")
    p.add_argument("--weights")
    p.add_argument("--split", default=None, help="only rows of this split (e.g. val)")
    p.add_argument("--probs", nargs="+")
    p.add_argument("--labels", nargs="+")
    p.add_argument("--prob-threshold", type=float, default=0.7)
    p.add_argument("--debounce", type=int, default=3)
    plots(p)

    p = add("infer", cmd_infer, "frame probabilities and gesture events")
    p.add_argument("inputs", nargs="+", help="feature CSVs")
    p.add_argument("--weights", required=True)
    p.add_argument("--stream", action="store_true", help="carry the hidden state across inputs")
    p.add_argument("--prob-threshold", type=float, default=0.7)
    p.add_argument("--debounce", type=int, default=3)

    p = add("bench", cmd_bench, "time the per-frame pipeline")
    p.add_argument("--frames", type=int, default=200)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s", force=True)
    try:
        config = load_config(args.config) if args.config else RadarConfig()
        Path(args.out).mkdir(parents=True, exist_ok=True)
        inputs, outputs = args.func(args, config)
        _write_run_manifest(args, config, inputs, outputs)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, WeightFileError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
