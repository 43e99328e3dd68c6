"""On-disk formats: RFR1 raw sequences, LFS1 labelled features and CSV exports.

All binary formats are little-endian.

RFR1::

    char[4] "RFR1"; u32 version; u32 R; u32 C; u32 S; u32 frame_count
    f32 samples[frame_count][R][C][S]

LFS1::

    char[4] "LFS1"; u32 version; u32 T; u32 feature_count (5)
    f32 features[T][5]; u8 labels[T]
"""

from __future__ import annotations

import csv
import io
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .core import CLASS_NAMES, NUM_FEATURES, GestureClass
from .dataset import LabeledSequence

RFR_MAGIC = b"RFR1"
LFS_MAGIC = b"LFS1"
VERSION = 1
_RFR_HEADER = struct.Struct("<4sIIIII")
_LFS_HEADER = struct.Struct("<4sIII")

FEATURE_COLUMNS = ("frame", "range_m", "velocity_mps", "azimuth_rad", "elevation_rad", "magnitude")


class FormatError(ValueError):
    """Malformed or mismatching input file."""


def atomic_write(path, data: bytes | str) -> None:
    """Write via a temporary file in the same directory and rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode() if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(value: float) -> str:
    return format(float(value), ".9g")


# ------------------------------------------------------------------- RFR1


def encode_rfr(frames: np.ndarray) -> bytes:
    frames = np.asarray(frames)
    if frames.ndim != 4:
        raise FormatError(f"expected [frames, R, C, S], got shape {frames.shape}")
    T, R, C, S = frames.shape
    return _RFR_HEADER.pack(RFR_MAGIC, VERSION, R, C, S, T) + frames.astype("<f4").tobytes()


def write_rfr(path, frames: np.ndarray) -> None:
    atomic_write(path, encode_rfr(frames))


def read_rfr(path, expect_shape: tuple[int, int, int] | None = None) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _RFR_HEADER.size:
        raise FormatError(f"{path}: file too short for an RFR1 header")
    magic, version, R, C, S, T = _RFR_HEADER.unpack_from(data)
    if magic != RFR_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {RFR_MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported RFR1 version {version}")
    if expect_shape is not None and (R, C, S) != tuple(expect_shape):
        raise FormatError(f"{path}: frame shape {(R, C, S)} does not match config {tuple(expect_shape)}")
    expected = T * R * C * S * 4
    payload = data[_RFR_HEADER.size :]
    if len(payload) != expected:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, header implies {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(T, R, C, S).astype(np.float64)


# ------------------------------------------------------------------- LFS1


def encode_lfs(seq: LabeledSequence) -> bytes:
    T = len(seq)
    return (
        _LFS_HEADER.pack(LFS_MAGIC, VERSION, T, NUM_FEATURES)
        + seq.features.astype("<f4").tobytes()
        + seq.labels.astype(np.uint8).tobytes()
    )


def write_lfs(path, seq: LabeledSequence) -> None:
    atomic_write(path, encode_lfs(seq))


def read_lfs(path) -> LabeledSequence:
    data = Path(path).read_bytes()
    if len(data) < _LFS_HEADER.size:
        raise FormatError(f"{path}: file too short for an LFS1 header")
    magic, version, T, nf = _LFS_HEADER.unpack_from(data)
    if magic != LFS_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {LFS_MAGIC!r}")
    if version != VERSION or nf != NUM_FEATURES:
        raise FormatError(f"{path}: unsupported LFS1 layout (version {version}, {nf} features)")
    body = data[_LFS_HEADER.size :]
    if len(body) != T * nf * 4 + T:
        raise FormatError(f"{path}: payload size does not match T={T}")
    feats = np.frombuffer(body[: T * nf * 4], dtype="<f4").reshape(T, nf).astype(np.float64)
    labels = np.frombuffer(body[T * nf * 4 :], dtype=np.uint8).astype(np.int64)
    try:
        return LabeledSequence(feats, labels, name=Path(path).stem)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


# -------------------------------------------------------------------- CSV


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def features_csv(features: np.ndarray) -> str:
    return _csv_text(FEATURE_COLUMNS, ([i] + [fmt(v) for v in row] for i, row in enumerate(features)))


def write_features_csv(path, features: np.ndarray) -> None:
    atomic_write(path, features_csv(features))


def read_features_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != FEATURE_COLUMNS:
            raise FormatError(f"{path}: expected header {','.join(FEATURE_COLUMNS)}")
        try:
            rows = [[float(v) for v in row[1:]] for row in reader if row]
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from None
    return np.array(rows, dtype=float).reshape(-1, NUM_FEATURES)


def write_profiles_csv(path, profiles: np.ndarray) -> None:
    header = ["frame"] + [f"bin{i}" for i in range(profiles.shape[1])]
    atomic_write(path, _csv_text(header, ([i] + [fmt(v) for v in row] for i, row in enumerate(profiles))))


def write_labels_csv(path, labels) -> None:
    atomic_write(path, _csv_text(("frame", "class"), ([i, CLASS_NAMES[GestureClass(int(c))]] for i, c in enumerate(labels))))


def read_labels_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or list(reader.fieldnames) != ["frame", "class"]:
            raise FormatError(f"{path}: expected header frame,class")
        try:
            return np.array([int(GestureClass.parse(row["class"])) for row in reader], dtype=np.int64)
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from None


ANNOTATION_HEADER = ("frame_index", "class", "range", "velocity", "azimuth", "elevation")


def write_annotations_csv(path, classes, targets) -> None:
    rows = (
        [i, CLASS_NAMES[GestureClass(int(c))]] + [fmt(v) for v in row]
        for i, (c, row) in enumerate(zip(classes, targets))
    )
    atomic_write(path, _csv_text(ANNOTATION_HEADER, rows))


def read_annotations_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != ANNOTATION_HEADER:
            raise FormatError(f"{path}: expected header {','.join(ANNOTATION_HEADER)}")
        rows = list(reader)
    classes = np.array([int(GestureClass.parse(r["class"])) for r in rows], dtype=np.int64)
    targets = np.array([[float(r[k]) for k in ANNOTATION_HEADER[2:]] for r in rows]).reshape(-1, 4)
    return classes, targets


def write_probs_csv(path, probs: np.ndarray) -> None:
    header = ["frame"] + [CLASS_NAMES[c] for c in GestureClass]
    atomic_write(path, _csv_text(header, ([i] + [fmt(v) for v in row] for i, row in enumerate(probs))))


def read_probs_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["frame"] + [CLASS_NAMES[c] for c in GestureClass]
        if header != expected:
            raise FormatError(f"{path}: expected header {','.join(expected)}")
        try:
            rows = [[float(v) for v in row[1:]] for row in reader if row]
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from None
    return np.array(rows, dtype=float).reshape(-1, len(GestureClass))


def write_table_csv(path, header, rows) -> None:
    atomic_write(path, _csv_text(header, rows))


MANIFEST_HEADER = ("path", "class", "split")


def write_dataset_manifest(path, entries) -> None:
    """``entries`` are (path, class, split) triples; paths are stored as given."""
    rows = ([str(p), CLASS_NAMES[GestureClass(c)], split] for p, c, split in entries)
    atomic_write(path, _csv_text(MANIFEST_HEADER, rows))


def read_dataset_manifest(path):
    base = Path(path).parent
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != MANIFEST_HEADER:
            raise FormatError(f"{path}: expected header {','.join(MANIFEST_HEADER)}")
        rows = list(reader)
    out = []
    for row in rows:
        p = Path(row["path"])
        out.append((p if p.is_absolute() else base / p, GestureClass.parse(row["class"]), row["split"]))
    return out

