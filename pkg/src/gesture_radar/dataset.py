"""Training material: label refinement, raw-level augmentation and splitting."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.signal.windows import tukey

from .core import NUM_FEATURES, GestureClass, RadarConfig
from .pipeline import noise_statistics

LABEL_NOISE_FACTOR = 8.0
BACKGROUND = int(GestureClass.BACKGROUND)
RANGE, MAGNITUDE = 0, 4


@dataclass
class LabeledSequence:
    features: np.ndarray  # [T, 5]
    labels: np.ndarray  # [T] class indices
    name: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[1] != NUM_FEATURES:
            raise ValueError(f"features must be [T, {NUM_FEATURES}], got {self.features.shape}")
        if len(self.labels) != len(self.features):
            raise ValueError("features and labels differ in length")
        if np.any((self.labels < 0) | (self.labels > BACKGROUND)):
            raise ValueError("labels outside the class range")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def gesture(self) -> GestureClass:
        """First gesture class present, Background if none."""
        fg = self.labels[self.labels != BACKGROUND]
        return GestureClass(int(fg[0])) if len(fg) else GestureClass.BACKGROUND


@dataclass(frozen=True)
class LabelConfig:
    amplitude_threshold: float | None = None  # None: calibrate from simulator noise
    label_len: int = 10
    noise_sigma: float = 0.1

    def __post_init__(self):
        if self.label_len < 1:
            raise ValueError("label_len must be >= 1")
        if self.amplitude_threshold is not None and self.amplitude_threshold < 0:
            raise ValueError("amplitude_threshold must be non-negative")

    def threshold(self, config: RadarConfig | None = None) -> float:
        if self.amplitude_threshold is not None:
            return self.amplitude_threshold
        return LABEL_NOISE_FACTOR * noise_statistics(config or RadarConfig(), self.noise_sigma)[1]


@dataclass(frozen=True)
class AugmentConfig:
    tukey_alpha: float = 0.5
    min_gap: int = 5
    gestures_per_sequence: tuple[int, int] = (1, 3)
    seed: int = 0
    additive: bool = False

    def __post_init__(self):
        if not 0.0 <= self.tukey_alpha <= 1.0:
            raise ValueError("tukey_alpha must lie in [0, 1]")
        if self.min_gap < 0:
            raise ValueError("min_gap must be non-negative")


class NoConfidentFrame(ValueError):
    pass


def refine_label(features: np.ndarray, gesture: GestureClass, cfg: LabelConfig | None = None, config: RadarConfig | None = None) -> np.ndarray:
    """Label ``label_len`` frames starting at the closest amplitude-gated frame."""
    cfg = cfg or LabelConfig()
    gesture = GestureClass(gesture)
    if gesture == GestureClass.BACKGROUND:
        raise ValueError("refine_label needs a gesture class")
    features = np.asarray(features)
    T = len(features)
    if T < cfg.label_len:
        raise ValueError(f"sequence of {T} frames shorter than label length {cfg.label_len}")
    gated = np.flatnonzero(features[:, MAGNITUDE] >= cfg.threshold(config))
    if len(gated) == 0:
        raise NoConfidentFrame("no confident gesture frame above the amplitude threshold")
    # np.argmin returns the first minimum: ties go to the earliest frame
    start = int(gated[np.argmin(features[gated, RANGE])])
    labels = np.full(T, BACKGROUND, dtype=np.int64)
    labels[start : start + cfg.label_len] = int(gesture)
    return labels


def tukey_window(n: int, alpha: float) -> np.ndarray:
    if n < 2:
        raise ValueError("window length must be >= 2")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    w = tukey(n, alpha, sym=True)
    # scipy's taper can differ by an ulp between the two ends; mirror the leading half
    w[n - n // 2 :] = w[: n // 2][::-1]
    return w


def inject_gesture(background: np.ndarray, gesture: np.ndarray, position: int, cfg: AugmentConfig | None = None) -> np.ndarray:
    """Crossfade raw gesture frames into a copy of the background at ``position``."""
    cfg = cfg or AugmentConfig()
    n = len(gesture)
    if position < 0 or position + n > len(background):
        raise ValueError(f"span [{position}, {position + n}) exceeds background of {len(background)} frames")
    if gesture.shape[1:] != background.shape[1:]:
        raise ValueError("gesture and background frame shapes differ")
    return _inject_inplace(np.array(background, copy=True), gesture, position, cfg)


def place_spans(lengths, total: int, min_gap: int, rng: np.random.Generator) -> list[int]:
    """Random non-overlapping start positions, in the given order along the timeline.

    The free frames are split into ``k + 1`` random shares (stars and bars), so
    every feasible request succeeds without rejection.
    """
    lengths = list(lengths)
    k = len(lengths)
    if k == 0:
        return []
    needed = sum(lengths) + (k - 1) * min_gap
    slack = total - needed
    if slack < 0:
        raise ValueError(
            f"cannot place {k} gestures ({sum(lengths)} frames + {(k - 1) * min_gap} gap frames) "
            f"into {total} frames: {-slack} frames over"
        )
    cuts = np.sort(rng.integers(0, slack + 1, size=k))
    extras = np.diff(np.concatenate([[0], cuts]))
    starts = []
    pos = 0
    for i, (length, extra) in enumerate(zip(lengths, extras)):
        pos += int(extra) + (min_gap if i else 0)
        starts.append(pos)
        pos += length
    return starts


@dataclass
class Composition:
    frames: np.ndarray
    spans: list = field(default_factory=list)  # (start, stop, class, sample index)


def compose_sequence(background: np.ndarray, samples, cfg: AugmentConfig | None = None, rng: np.random.Generator | None = None) -> Composition:
    """Inject ``[(gesture_frames, class), ...]`` at random non-overlapping positions."""
    cfg = cfg or AugmentConfig()
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    order = rng.permutation(len(samples))
    lengths = [len(samples[i][0]) for i in order]
    starts = place_spans(lengths, len(background), cfg.min_gap, rng)
    out = np.array(background, copy=True)
    spans = []
    for start, idx in zip(starts, order):
        frames, gesture = samples[idx]
        out = _inject_inplace(out, frames, start, cfg)
        spans.append((start, start + len(frames), GestureClass(gesture), int(idx)))
    return Composition(out, spans)


def _inject_inplace(out: np.ndarray, gesture: np.ndarray, position: int, cfg: AugmentConfig) -> np.ndarray:
    n = len(gesture)
    w = tukey_window(n, cfg.tukey_alpha).reshape((n,) + (1,) * (gesture.ndim - 1))
    span = out[position : position + n]
    if cfg.additive:
        span += w * gesture
    else:
        span[...] = (1.0 - w) * span + w * gesture
    return out


def sequence_class(seq) -> int:
    return int(seq.gesture) if hasattr(seq, "gesture") else int(seq)


def split_train_val(sequences, ratio=(3, 1), seed: int = 0, stratify: bool = True, key=sequence_class):
    """Seeded split; the validation share is ``floor(n * v / (t + v))`` but at least one."""
    sequences = list(sequences)
    n = len(sequences)
    if n == 0:
        raise ValueError("cannot split an empty set")
    t_share, v_share = ratio
    if t_share < 0 or v_share <= 0:
        raise ValueError("ratio must be (train, val) with a positive validation share")
    n_val = max(1, (n * v_share) // (t_share + v_share))
    if n_val >= n and n > 1:
        n_val = n - 1
    rng = np.random.default_rng(seed)
    if not stratify:
        perm = rng.permutation(n)
        val_idx = set(perm[:n_val].tolist())
    else:
        groups = defaultdict(list)
        for i, seq in enumerate(sequences):
            groups[key(seq)].append(i)
        keys = sorted(groups)
        quotas = {k: len(groups[k]) * n_val / n for k in keys}
        take = {k: int(np.floor(q)) for k, q in quotas.items()}
        # largest remainder, ties broken by class key
        for k in sorted(keys, key=lambda k: (-(quotas[k] - take[k]), k))[: n_val - sum(take.values())]:
            take[k] += 1
        val_idx = set()
        for k in keys:
            members = np.array(groups[k])[rng.permutation(len(groups[k]))]
            val_idx.update(members[: take[k]].tolist())
    train = [s for i, s in enumerate(sequences) if i not in val_idx]
    val = [s for i, s in enumerate(sequences) if i in val_idx]
    return train, val
