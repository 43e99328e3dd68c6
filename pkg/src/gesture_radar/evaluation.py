"""Event extraction from frame probabilities and windowed event matching."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import CLASS_NAMES, GESTURES, GestureClass

BACKGROUND = int(GestureClass.BACKGROUND)
MISS = BACKGROUND  # column index used for "no prediction" (false negative)


@dataclass(frozen=True)
class EvalConfig:
    prob_threshold: float = 0.7
    debounce: int = 3
    window_before: float = 0.150
    window_after: float = 0.300
    frame_rate: float = 33.3

    def __post_init__(self):
        if not 0.0 < self.prob_threshold < 1.0:
            raise ValueError("prob_threshold must lie in (0, 1)")
        if self.debounce < 1:
            raise ValueError("debounce must be >= 1")
        if self.window_before < 0 or self.window_after < 0:
            raise ValueError("matching windows must be non-negative")

    @property
    def window_frames(self) -> tuple[int, int]:
        return round(self.window_before * self.frame_rate), round(self.window_after * self.frame_rate)


@dataclass(frozen=True, order=True)
class GestureEvent:
    frame: int
    gesture: GestureClass


@dataclass
class EvalReport:
    """Event counts; rows are reference classes (last row: background, i.e. false
    positives), columns are predicted classes (last column: missed)."""

    confusion: np.ndarray = field(default_factory=lambda: np.zeros((6, 6), dtype=np.int64))

    @property
    def tp(self) -> int:
        return int(np.trace(self.confusion[:BACKGROUND, :BACKGROUND]))

    @property
    def fp(self) -> int:
        # every gesture prediction that is not on the diagonal
        return int(self.confusion[:, :BACKGROUND].sum()) - self.tp

    @property
    def fn(self) -> int:
        return int(self.confusion[:BACKGROUND, :].sum()) - self.tp

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    def __add__(self, other: "EvalReport") -> "EvalReport":
        return EvalReport(self.confusion + other.confusion)

    def summary(self) -> dict:
        return dict(tp=self.tp, fp=self.fp, fn=self.fn, precision=self.precision, recall=self.recall, f1=f1_score(self))


def f1_score(report: EvalReport) -> float:
    p, r = report.precision, report.recall
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def extract_events(probs: np.ndarray, cfg: EvalConfig | None = None) -> list[GestureEvent]:
    """One event per run of ``>= debounce`` frames at or above the threshold,
    stamped with the first frame of the run."""
    cfg = cfg or EvalConfig()
    probs = np.asarray(probs)
    if probs.ndim != 2 or probs.shape[1] != len(GestureClass):
        raise ValueError(f"expected probabilities of shape [T, {len(GestureClass)}], got {probs.shape}")
    if len(probs) and not np.allclose(probs.sum(axis=1), 1.0, atol=1e-3):
        raise ValueError("probability rows must sum to 1")
    events = []
    for cls in GESTURES:
        above = probs[:, int(cls)] >= cfg.prob_threshold
        padded = np.concatenate([[False], above, [False]])
        edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
        for start, stop in zip(edges[::2], edges[1::2]):
            if stop - start >= cfg.debounce:
                events.append(GestureEvent(int(start), cls))
    return sorted(events)


def references_from_labels(labels) -> list[tuple[int, GestureClass]]:
    """Start frames of every non-background label run."""
    labels = np.asarray(labels)
    refs = []
    prev = BACKGROUND
    for t, lab in enumerate(labels):
        if lab != BACKGROUND and lab != prev:
            refs.append((t, GestureClass(int(lab))))
        prev = lab
    return refs


def match_events(pred, refs, cfg: EvalConfig | None = None) -> EvalReport:
    """Greedy one-to-one matching of predictions to reference windows.

    A reference takes the earliest same-class prediction in its window, or
    failing that the earliest wrong-class one (a confusion). Unused references
    are misses; unused predictions are false positives.
    """
    cfg = cfg or EvalConfig()
    before, after = cfg.window_frames
    pred = sorted(GestureEvent(int(e.frame), GestureClass(e.gesture)) for e in pred)
    refs = sorted((int(f), GestureClass(c)) for f, c in refs)
    for (f0, _), (f1, _) in zip(refs, refs[1:]):
        if f1 - before <= f0 + after:
            raise ValueError(f"reference windows around frames {f0} and {f1} overlap")
    report = EvalReport()
    used = [False] * len(pred)
    for frame, cls in refs:
        inside = [i for i, e in enumerate(pred) if not used[i] and frame - before <= e.frame <= frame + after]
        hit = next((i for i in inside if pred[i].gesture == cls), inside[0] if inside else None)
        if hit is None:
            report.confusion[cls, MISS] += 1
        else:
            used[hit] = True
            report.confusion[cls, pred[hit].gesture] += 1
    for i, e in enumerate(pred):
        if not used[i]:
            report.confusion[BACKGROUND, e.gesture] += 1
    return report


def evaluate_sequence(probs, labels, cfg: EvalConfig | None = None) -> EvalReport:
    return match_events(extract_events(probs, cfg), references_from_labels(labels), cfg)


def confusion_rows(report: EvalReport):
    """Header and rows of the confusion matrix as printable/CSV-ready lists."""
    header = ["reference"] + [CLASS_NAMES[c] for c in GESTURES] + ["Missed"]
    rows = []
    for cls in GestureClass:
        name = CLASS_NAMES[cls] if cls != GestureClass.BACKGROUND else "Background"
        rows.append([name] + [int(v) for v in report.confusion[int(cls)]])
    return header, rows


def summary_line(report: EvalReport) -> str:
    s = report.summary()
    return " ".join(f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}" for k, v in s.items())
