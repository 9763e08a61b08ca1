import os
from pathlib import Path

import numpy as np
import pytest

import sidwatch

DATA = Path(os.environ.get("SIDWATCH_TEST_DATA", Path(__file__).resolve().parents[1] / "data"))


def read_pgm(path):
    raw = path.read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while not raw[end : end + 1].isspace():
            end += 1
        fields.append(raw[pos:end])
        pos = end
    w, h = int(fields[1]), int(fields[2])
    return np.frombuffer(raw[pos + 1 :], dtype=np.uint8).reshape(h, w)


def test_phash_golden_from_array():
    img = read_pgm(DATA / "phash" / "checkerboard32.pgm")
    assert sidwatch.phash(img) == 0xF343F343530303FC
    assert sidwatch.phash(np.full((40, 48), 137, dtype=np.uint8)) == 0


def test_phash_rejects_bad_shapes():
    with pytest.raises(ValueError):
        sidwatch.phash(np.zeros((10, 10, 4), dtype=np.uint8))
    with pytest.raises(ValueError):
        sidwatch.phash(np.zeros((4, 4), dtype=np.uint8))


def test_hamming_and_index():
    assert sidwatch.hamming_similarity(0, (1 << 19) - 1) == 0.703125
    ix = sidwatch.NearDupIndex()
    ix.insert("near", (1 << 5) - 1)
    ix.insert("far", (1 << 20) - 1)
    assert len(ix) == 2 and "near" in ix
    assert ix.query(0, 0.7) == [("near", 0.921875)]


def test_metrics():
    assert sidwatch.auc([0.2, 0.8], [0.5, 0.9]) == 0.75
    assert sidwatch.eer_threshold([0.6], [0.4]) == 0.5
    assert sidwatch.balanced_accuracy([0.6, 0.2], [0.7, 0.3], 0.5) == 0.5
    assert round(sidwatch.relative_diff(55.1, 48.2), 1) == -12.5
    with pytest.raises(ValueError):
        sidwatch.relative_diff(0.0, 1.0)


def test_resolve_scores():
    out = sidwatch.resolve_scores({"a": (0, 0.2), "b": (0, 0.8)}, {"copy": (0, 0.1), "lone": (~0 & (2**64 - 1), 0.9)})
    assert out["copy"] == (0.5, "retrieved", ["a", "b"])
    assert out["lone"] == (0.9, "direct", [])
    assert out["a"] == (0.2, "direct", [])


def test_manifest_summary():
    rows = sidwatch.manifest_summary(str(DATA / "tiny" / "manifest.jsonl"))
    assert [r["subset"] for r in rows] == ["Alpha", "Beta", "Total"]
    assert rows[-1]["total_urls"] == sum(r["total_urls"] for r in rows[:-1])
