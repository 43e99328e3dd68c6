import struct

import numpy as np
import pytest

from gesture_radar.core import GestureClass
from gesture_radar.dataset import LabeledSequence
from gesture_radar.formats import (
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
    write_rfr,
)


def f32(a):
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def test_rfr_round_trip(tmp_path):
    frames = f32(np.random.default_rng(0).normal(size=(4, 3, 32, 64)))
    write_rfr(tmp_path / "a.rfr", frames)
    data = (tmp_path / "a.rfr").read_bytes()
    assert data[:4] == b"RFR1"
    assert struct.unpack_from("<IIIII", data, 4) == (1, 3, 32, 64, 4)
    assert np.array_equal(read_rfr(tmp_path / "a.rfr", (3, 32, 64)), frames)


def test_rfr_rejects_mismatch(tmp_path):
    path = tmp_path / "a.rfr"
    write_rfr(path, np.zeros((2, 3, 16, 64)))
    with pytest.raises(FormatError, match="shape"):
        read_rfr(path, (3, 32, 64))
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(FormatError, match="payload"):
        read_rfr(path)
    path.write_bytes(b"XXXX" + bytes(20))
    with pytest.raises(FormatError, match="magic"):
        read_rfr(path)


def test_lfs_round_trip(tmp_path):
    labels = np.full(30, 5)
    labels[10:20] = 2
    seq = LabeledSequence(f32(np.random.default_rng(1).normal(size=(30, 5))), labels)
    write_lfs(tmp_path / "s.lfs", seq)
    back = read_lfs(tmp_path / "s.lfs")
    assert np.array_equal(back.features, seq.features)
    assert np.array_equal(back.labels, labels)
    raw = bytearray((tmp_path / "s.lfs").read_bytes())
    raw[-1] = 9  # not a class index
    (tmp_path / "bad.lfs").write_bytes(raw)
    with pytest.raises(FormatError):
        read_lfs(tmp_path / "bad.lfs")


def test_feature_csv_round_trip(tmp_path):
    feats = np.random.default_rng(2).normal(size=(10, 5)) * [1, 3, 1, 1, 1000]
    write_features_csv(tmp_path / "f.csv", feats)
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "frame,range_m,velocity_mps,azimuth_rad,elevation_rad,magnitude"
    np.testing.assert_allclose(read_features_csv(tmp_path / "f.csv"), feats, rtol=1e-8)


def test_labels_and_probs_csv(tmp_path):
    labels = np.array([5, 5, 0, 0, 4, 5])
    write_labels_csv(tmp_path / "l.csv", labels)
    assert "SwipeLeft" in (tmp_path / "l.csv").read_text()
    assert np.array_equal(read_labels_csv(tmp_path / "l.csv"), labels)
    probs = np.random.default_rng(3).dirichlet(np.ones(6), size=7)
    write_probs_csv(tmp_path / "p.csv", probs)
    np.testing.assert_allclose(read_probs_csv(tmp_path / "p.csv"), probs, rtol=1e-8)
    (tmp_path / "bad.csv").write_text("frame,foo\n0,1\n")
    with pytest.raises(FormatError):
        read_probs_csv(tmp_path / "bad.csv")


def test_annotations_csv(tmp_path):
    classes = np.array([5, 4, 4])
    targets = np.array([[np.nan] * 4, [0.5, 1.0, 0.1, -0.1], [0.45, -1.0, 0.1, -0.1]])
    write_annotations_csv(tmp_path / "a.csv", classes, targets)
    c, t = read_annotations_csv(tmp_path / "a.csv")
    assert np.array_equal(c, classes)
    np.testing.assert_allclose(t, targets, equal_nan=True)


def test_manifest_relative_paths(tmp_path):
    sub = tmp_path / "data"
    write_dataset_manifest(sub / "manifest.csv", [("x/0.lfs", GestureClass.PUSH, "train"), ("1.lfs", 5, "val")])
    rows = read_dataset_manifest(sub / "manifest.csv")
    assert rows[0] == (sub / "x/0.lfs", GestureClass.PUSH, "train")
    assert rows[1][1] is GestureClass.BACKGROUND


def test_atomic_write_leaves_no_temp_files(tmp_path):
    atomic_write(tmp_path / "out.txt", "hello")
    atomic_write(tmp_path / "out.txt", b"bye")
    assert (tmp_path / "out.txt").read_bytes() == b"bye"
    assert [p.name for p in tmp_path.iterdir()] == ["out.txt"]
