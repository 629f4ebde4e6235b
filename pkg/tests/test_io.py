import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsseg import io
from tsseg.data import TimestampAnnotation
from tsseg.errors import DataError, FormatError
from tsseg.gcn import gcn_init
from tsseg.metrics import Segment
from tsseg.segmenter import TcnConfig, tcn_init


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 40), st.integers(1, 12), st.integers(0, 10**6))
def test_features_round_trip_bitwise(T, D, seed):
    frames = np.random.default_rng(seed).normal(size=(T, D)).astype(np.float32)
    buf = io.encode_features(frames)
    assert len(buf) == 16 + 4 * T * D
    seq = io.decode_features(buf)
    assert seq.frames.dtype == np.float32
    assert seq.frames.tobytes() == frames.tobytes()
    assert io.encode_features(seq.frames) == buf


def test_feature_header_layout():
    buf = io.encode_features(np.zeros((3, 2), np.float32))
    assert buf[:4] == b"TSAF"
    assert buf[4:16] == bytes([1, 0, 0, 0, 3, 0, 0, 0, 2, 0, 0, 0])


def test_feature_file_round_trip(tmp_path):
    frames = np.random.default_rng(0).normal(size=(7, 5)).astype(np.float32)
    io.write_features(frames, tmp_path / "a.tsaf")
    seq = io.read_features(tmp_path / "a.tsaf")
    assert seq.video_id == "a" and seq.frames.tobytes() == frames.tobytes()
    io.write_features(seq, tmp_path / "b.tsaf")
    assert (tmp_path / "a.tsaf").read_bytes() == (tmp_path / "b.tsaf").read_bytes()


def test_feature_format_errors():
    good = io.encode_features(np.ones((2, 2), np.float32))
    with pytest.raises(FormatError, match="truncated"):
        io.decode_features(good[:-1])
    with pytest.raises(FormatError, match="magic") as exc:
        io.decode_features(b"XXXX" + good[4:])
    assert exc.value.offset == 0
    with pytest.raises(FormatError, match="version"):
        io.decode_features(good[:4] + b"\x02\0\0\0" + good[8:])
    with pytest.raises(FormatError, match="frame count") as exc:
        io.decode_features(good[:8] + b"\0\0\0\0" + good[12:])
    assert exc.value.offset == 8
    with pytest.raises(FormatError, match="trailing"):
        io.decode_features(good + b"\0")
    nan = good[:16] + np.array([np.nan], "<f4").tobytes() + good[20:]
    with pytest.raises(FormatError, match="non-finite"):
        io.decode_features(nan)


def test_format_error_message_carries_offset(tmp_path):
    p = tmp_path / "x.tsaf"
    p.write_bytes(b"TSAF\x01\0\0\0")
    with pytest.raises(FormatError) as exc:
        io.read_features(p)
    assert "byte 8" in str(exc.value) and "x.tsaf" in str(exc.value)


def test_missing_file_is_data_error(tmp_path):
    with pytest.raises(DataError):
        io.read_features(tmp_path / "nope.tsaf")


def test_label_and_timestamp_files(tmp_path):
    labels = np.array([0, 0, 3, 3, 1])
    io.write_labels(labels, tmp_path / "l.txt")
    assert (tmp_path / "l.txt").read_text() == "0\n0\n3\n3\n1\n"
    np.testing.assert_array_equal(io.read_labels(tmp_path / "l.txt"), labels)
    stamps = TimestampAnnotation([0, 4], [0, 1])
    io.write_timestamps(stamps, tmp_path / "t.txt")
    assert (tmp_path / "t.txt").read_text() == "1,0\n5,1\n"
    back = io.read_timestamps(tmp_path / "t.txt")
    np.testing.assert_array_equal(back.frames, [0, 4])
    io.write_timestamps(back, tmp_path / "t2.txt")
    assert (tmp_path / "t.txt").read_bytes() == (tmp_path / "t2.txt").read_bytes()


def test_text_format_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("0\n1\nx\n")
    with pytest.raises(FormatError, match="line 3") as exc:
        io.read_labels(p)
    assert exc.value.offset == 4
    p.write_text("0,1\n")
    with pytest.raises(FormatError, match="1-based"):
        io.read_timestamps(p)
    p.write_text("3,1\n2,0\n")
    with pytest.raises(FormatError, match="increasing"):
        io.read_timestamps(p)
    p.write_text("")
    with pytest.raises(FormatError):
        io.read_labels(p)


def test_timeline_is_one_based(tmp_path):
    io.write_timeline([Segment(2, 0, 3), Segment(0, 4, 4)], tmp_path / "tl.csv")
    assert (tmp_path / "tl.csv").read_text() == "2,1,4\n0,5,5\n"


@pytest.mark.parametrize("variant", ["gcn", "mlp"])
def test_gcn_checkpoint_round_trip(tmp_path, variant):
    p = gcn_init(6, 4, 3, variant=variant, seed=2)
    io.save_gcn(p, tmp_path / "g.tsgc")
    q = io.load_gcn(tmp_path / "g.tsgc")
    assert q.variant == variant
    assert q.w1.tobytes() == p.w1.tobytes() and q.w2.tobytes() == p.w2.tobytes()
    io.save_gcn(q, tmp_path / "g2.tsgc")
    assert (tmp_path / "g.tsgc").read_bytes() == (tmp_path / "g2.tsgc").read_bytes()


def test_tcn_checkpoint_round_trip(tmp_path):
    cfg = TcnConfig(input_dim=5, num_classes=3, num_stages=2, layers_per_stage=2, num_feature_maps=4)
    p = tcn_init(cfg, seed=1)
    buf = io.encode_tcn(p)
    assert len(buf) == 4 + 24 + 8 * cfg.param_count()
    q = io.decode_tcn(buf)
    assert q.config == cfg
    assert all(q[k].tobytes() == p[k].tobytes() for k in p.tensors)
    assert io.encode_tcn(q) == buf


def test_checkpoint_precision(tmp_path):
    p = gcn_init(4, 3, 2, seed=0)
    q = io.decode_gcn(io.encode_gcn(p), precision=32)
    assert q.w1.dtype == np.float32


def _corpus():
    cfg = TcnConfig(input_dim=3, num_classes=2, num_stages=1, layers_per_stage=1, num_feature_maps=2)
    return [
        (io.decode_features, io.encode_features(np.ones((3, 2), np.float32))),
        (io.decode_gcn, io.encode_gcn(gcn_init(3, 2, 2, seed=0))),
        (io.decode_tcn, io.encode_tcn(tcn_init(cfg, seed=0))),
    ]


def test_fuzz_truncations_and_bit_flips():
    """1000 corrupted buffers per format: each either decodes or raises FormatError."""
    rng = np.random.default_rng(0)
    for decode, good in _corpus():
        outcomes = {"ok": 0, "error": 0}
        for k in range(1000):
            if k % 2 == 0:
                buf = good[:int(rng.integers(0, len(good)))]
            else:
                b = bytearray(good)
                pos = int(rng.integers(0, len(b)))
                b[pos] ^= 1 << int(rng.integers(0, 8))
                buf = bytes(b)
            try:
                decode(buf)
                outcomes["ok"] += 1
            except FormatError:
                outcomes["error"] += 1
        # every truncation must be rejected
        assert outcomes["error"] >= 500


def _write_small_dataset(tmp_path, labels_len=6):
    io.write_features(np.zeros((6, 2), np.float32), tmp_path / "v.tsaf")
    io.write_labels([0] * 3 + [1] * (labels_len - 3), tmp_path / "v.txt")
    io.write_timestamps(TimestampAnnotation([1, 4], [0, 1]), tmp_path / "v.ts")
    entry = {"id": "v", "features": "v.tsaf", "labels": "v.txt", "timestamps": "v.ts"}
    return io.write_manifest(tmp_path / "m.json", "tiny", 2, 2, [entry])


def test_manifest_load(tmp_path):
    _write_small_dataset(tmp_path)
    ds = io.load_dataset(tmp_path / "m.json")
    assert ds.num_classes == 2 and ds.videos[0].num_frames == 6
    np.testing.assert_array_equal(ds.videos[0].timestamps.frames, [1, 4])
    resampled = io.load_dataset(tmp_path / "m.json", timestamp_seed=3)
    f = resampled.videos[0].timestamps.frames
    assert 0 <= f[0] <= 2 and 3 <= f[1] <= 5


def test_manifest_validation(tmp_path):
    _write_small_dataset(tmp_path, labels_len=5)
    with pytest.raises(DataError, match="5 labels for 6 frames"):
        io.load_dataset(tmp_path / "m.json")
    doc = json.loads((tmp_path / "m.json").read_text())
    doc["videos"][0]["labels"] = None
    doc["feature_dim"] = 3
    (tmp_path / "m.json").write_text(json.dumps(doc))
    with pytest.raises(DataError, match="3"):
        io.load_dataset(tmp_path / "m.json")
    (tmp_path / "m.json").write_text("{")
    with pytest.raises(FormatError):
        io.read_manifest(tmp_path / "m.json")
    (tmp_path / "m.json").write_text(json.dumps({"format": "other"}))
    with pytest.raises(FormatError):
        io.read_manifest(tmp_path / "m.json")


def test_manifest_timestamp_beyond_video(tmp_path):
    _write_small_dataset(tmp_path)
    (tmp_path / "v.ts").write_text("1,0\n9,1\n")
    with pytest.raises(DataError, match="outside"):
        io.load_dataset(tmp_path / "m.json")
