"""Synthetic end-to-end recipe: simulate, extract, label, compose, evaluate."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import GESTURES, GestureClass, RadarConfig
from .dataset import AugmentConfig, LabelConfig, LabeledSequence, NoConfidentFrame, compose_sequence, refine_label, split_train_val
from .evaluation import EvalConfig, EvalReport, evaluate_sequence
from .model import GruParams, predict
from .pipeline import DetectionConfig, extract_sequence
from .sim import SampleSpec, background_sample, background_sequence, gesture_sample, render_sequence

log = logging.getLogger(__name__)


@dataclass
class SimulatedSample:
    gesture: GestureClass
    frames: np.ndarray | None  # raw float32 frames (cropped around the gesture if requested)
    features: np.ndarray  # [T, 5]
    truth: np.ndarray  # [T, 4] hand ground truth, NaN where absent


def crop_active(frames, classes, margin):
    """Frames of the non-background span widened by ``margin`` (whole input if none)."""
    active = np.flatnonzero(np.asarray(classes) != GestureClass.BACKGROUND)
    if margin is None or not len(active):
        return frames
    return frames[max(0, active[0] - margin) : min(len(frames), active[-1] + 1 + margin)]


def simulate_samples(gesture, count, config, rng, spec=None, det=None, keep_raw=False, crop_margin=None):
    """Simulate ``count`` single-gesture windows and extract their features.

    With ``keep_raw`` the raw frames are kept as float32; ``crop_margin``
    keeps only the active gesture span plus that many frames on each side.
    """
    det = det or DetectionConfig(noise_sigma=(spec or SampleSpec()).sigma_noise)
    out = []
    for _ in range(count):
        if gesture == GestureClass.BACKGROUND:
            frames, ann = background_sample(config, rng, spec)
        else:
            frames, ann = gesture_sample(gesture, config, rng, spec)
        feats = extract_sequence(frames, det, config)
        raw = crop_active(frames, ann.classes, crop_margin).astype(np.float32) if keep_raw else None
        out.append(SimulatedSample(GestureClass(gesture), raw, feats, ann.targets))
    return out


def label_sample(sample: SimulatedSample, label_cfg: LabelConfig | None = None, config=None) -> LabeledSequence:
    if sample.gesture == GestureClass.BACKGROUND:
        labels = np.full(len(sample.features), int(GestureClass.BACKGROUND))
    else:
        labels = refine_label(sample.features, sample.gesture, label_cfg, config)
    return LabeledSequence(sample.features, labels, name=sample.gesture.label)


@dataclass
class Corpus:
    """Labelled windows plus the raw material the augmentation step needs."""

    sequences: list  # LabeledSequence per window
    raw: list  # float32 gesture crops, or whole background windows
    classes: list  # GestureClass per window

    def subset(self, idx):
        return Corpus([self.sequences[i] for i in idx], [self.raw[i] for i in idx], [self.classes[i] for i in idx])

    def split(self, ratio=(3, 1), seed=0):
        tr, va = split_train_val(range(len(self.classes)), ratio, seed, key=lambda i: int(self.classes[i]))
        return self.subset(tr), self.subset(va)


def build_corpus(per_class, backgrounds, config, rng, spec=None, label_cfg=None, crop_margin=8, keep_raw=True) -> Corpus:
    """Simulate and label ``per_class`` windows per gesture plus background windows.

    Windows without a confident frame are dropped.
    """
    corpus = Corpus([], [], [])
    rejected = 0
    for gesture in list(GESTURES) + [GestureClass.BACKGROUND]:
        count = backgrounds if gesture == GestureClass.BACKGROUND else per_class
        for sample in simulate_samples(gesture, count, config, rng, spec, keep_raw=keep_raw, crop_margin=crop_margin):
            try:
                seq = label_sample(sample, label_cfg, config)
            except NoConfidentFrame:
                rejected += 1
                continue
            corpus.sequences.append(seq)
            corpus.raw.append(sample.frames)
            corpus.classes.append(sample.gesture)
    if rejected:
        log.info("dropped %d windows without a confident gesture frame", rejected)
    return corpus


def build_training_set(per_class, backgrounds, config, rng, spec=None, label_cfg=None):
    """Labelled windows only (no raw frames kept)."""
    return build_corpus(per_class, backgrounds, config, rng, spec, label_cfg, keep_raw=False).sequences


def label_composition(comp, features, label_cfg=None, config=None):
    """Refine each injected span of a composition on the re-extracted features."""
    labels = np.full(len(features), int(GestureClass.BACKGROUND), dtype=np.int64)
    for start, stop, gesture, _ in comp.spans:
        try:
            labels[start:stop] = refine_label(features[start:stop], gesture, label_cfg, config)
        except NoConfidentFrame:
            log.warning("composed span at frame %d has no confident frame; left unlabelled", start)
    return labels


def augment_corpus(corpus: Corpus, count, config, rng, aug=None, label_cfg=None, det=None, spec=None) -> list:
    """``count`` new windows: gesture crops blended into raw background windows.

    Each window takes a random background recording from the corpus and
    1..n random gesture crops (``aug.gestures_per_sequence``); features are
    re-extracted from the blended raw frames and labels refined per span.
    """
    aug = aug or AugmentConfig()
    det = det or DetectionConfig(noise_sigma=(spec or SampleSpec()).sigma_noise)
    gestures = [i for i, c in enumerate(corpus.classes) if c != GestureClass.BACKGROUND]
    backgrounds = [i for i, c in enumerate(corpus.classes) if c == GestureClass.BACKGROUND]
    if not gestures or not backgrounds:
        raise ValueError("augmentation needs both gesture and background windows")
    lo, hi = aug.gestures_per_sequence
    out = []
    for k in range(count):
        bg = corpus.raw[backgrounds[int(rng.integers(len(backgrounds)))]]
        n = int(rng.integers(lo, hi + 1))
        picks = rng.choice(gestures, size=n, replace=False)
        samples = [(corpus.raw[i], corpus.classes[i]) for i in picks]
        while sum(len(f) for f, _ in samples) + aug.min_gap * (len(samples) - 1) > len(bg):
            samples.pop()
        comp = compose_sequence(bg, samples, aug, rng)
        features = extract_sequence(comp.frames, det, config)
        out.append(LabeledSequence(features, label_composition(comp, features, label_cfg, config), name=f"augmented-{k}"))
    return out


def build_test_sequence(n_gestures, config, rng, spec=None, aug=None, label_cfg=None, slack_per_gesture=20):
    """Compose ``n_gestures`` random gesture windows into one long background.

    Reference labels come from refining each injected span on the features
    extracted from the composed sequence.
    """
    spec = spec or SampleSpec()
    aug = aug or AugmentConfig()
    det = DetectionConfig(noise_sigma=spec.sigma_noise)
    samples = []
    for _ in range(n_gestures):
        gesture = GESTURES[int(rng.integers(len(GESTURES)))]
        frames, _ = gesture_sample(gesture, config, rng, spec)
        samples.append((frames.astype(np.float32), gesture))
    total = n_gestures * (spec.frames + aug.min_gap + slack_per_gesture)
    scene = background_sequence(total, spec.body, spec.sigma_noise, rng, config)
    background, _ = render_sequence([], scene, config, rng)
    comp = compose_sequence(background.astype(np.float32), samples, aug, rng)
    del background, samples
    features = extract_sequence(comp.frames, det, config)
    labels = label_composition(comp, features, label_cfg, config)
    return LabeledSequence(features, labels, name="composed"), comp.spans


def evaluate_params(params: GruParams, sequences, config=None, eval_cfg=None) -> EvalReport:
    """Run each sequence through the network from a zero state and pool the event counts."""
    eval_cfg = eval_cfg or EvalConfig(frame_rate=(config or RadarConfig()).frame_rate)
    report = EvalReport()
    for seq in sequences:
        probs, _ = predict(seq.features, params, config)
        report = report + evaluate_sequence(probs, seq.labels, eval_cfg)
    return report
