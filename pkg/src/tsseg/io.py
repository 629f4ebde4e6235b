"""On-disk formats.

Feature file (little-endian)::

    b"TSAF" | u32 version=1 | u32 T | u32 D | T*D float32, row-major

Label file: one integer class id per line. Timestamp file: ``frame,class``
per line with 1-based frames. Timeline file: ``class,start,end`` per line,
1-based inclusive. The manifest is JSON; its paths are relative to the
manifest's directory.

Checkpoints (little-endian, weights as float64 row-major)::

    GCN:       b"TSGC" | u32 version=1 | u32 d_in | u32 d_hidden | u32 C | u8 variant | w1 | w2
    segmenter: b"TSTC" | u32 version=1 | u32 input_dim | u32 C | u32 stages | u32 layers
               | u32 maps | tensors in segmenter.tensor_names() order
"""
import json
import os
import struct
from pathlib import Path

import numpy as np

from .data import Dataset, FeatureSequence, TimestampAnnotation, Video, sample_timestamps
from .errors import ConfigError, DataError, FormatError
from .gcn import GCN_LR, GCN_WEIGHT_DECAY, VARIANTS, GcnParams
from .numerics import AdamState, dtype_for
from .segmenter import TcnConfig, attach_optimizer, tensor_names, tensor_shapes

FEATURE_MAGIC = b"TSAF"
GCN_MAGIC = b"TSGC"
TCN_MAGIC = b"TSTC"
FORMAT_VERSION = 1
MANIFEST_FORMAT = "tsseg-manifest"
# caps on header dimensions so a corrupt header cannot request absurd allocations
MAX_DIM = 1 << 24


class _Reader:
    def __init__(self, buf, path=None):
        self.buf = memoryview(buf)
        self.pos = 0
        self.path = path

    def error(self, message, offset=None):
        return FormatError(message, self.pos if offset is None else offset, self.path)

    def take(self, n, what):
        if n < 0 or self.pos + n > len(self.buf):
            raise self.error(f"truncated file: expected {n} bytes of {what}, "
                             f"{len(self.buf) - self.pos} available")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]

    def u8(self, what):
        return self.take(1, what)[0]

    def magic(self, expected):
        got = bytes(self.take(len(expected), "magic"))
        if got != expected:
            raise self.error(f"bad magic {got!r}, expected {expected!r}", 0)

    def version(self):
        start = self.pos
        v = self.u32("version")
        if v != FORMAT_VERSION:
            raise self.error(f"unsupported format version {v}", start)

    def dim(self, what, minimum=1):
        start = self.pos
        v = self.u32(what)
        if v < minimum or v > MAX_DIM:
            raise self.error(f"invalid {what} {v}", start)
        return v

    def floats(self, shape, dtype, what):
        count = int(np.prod(shape))
        start = self.pos
        raw = self.take(count * np.dtype(dtype).itemsize, what)
        arr = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
        if not np.all(np.isfinite(arr)):
            raise self.error(f"non-finite values in {what}", start)
        return arr

    def finish(self):
        if self.pos != len(self.buf):
            raise self.error(f"{len(self.buf) - self.pos} trailing bytes")


def _write_bytes(path, data):
    with open(path, "wb") as fh:
        fh.write(data)


def _read_bytes(path):
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc


# -- features ---------------------------------------------------------------

def encode_features(frames):
    frames = np.asarray(frames)
    if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
        raise FormatError(f"features must be a non-empty T x D matrix, got {frames.shape}")
    head = FEATURE_MAGIC + struct.pack("<III", FORMAT_VERSION, *frames.shape)
    return head + np.ascontiguousarray(frames, dtype="<f4").tobytes()


def decode_features(buf, video_id="", path=None):
    r = _Reader(buf, path)
    r.magic(FEATURE_MAGIC)
    r.version()
    T = r.dim("frame count T")
    D = r.dim("feature dimension D")
    frames = r.floats((T, D), "<f4", "feature values")
    r.finish()
    return FeatureSequence(video_id, frames.astype(np.float32))


def write_features(seq, path):
    frames = getattr(seq, "frames", seq)
    _write_bytes(path, encode_features(frames))


def read_features(path, video_id=None):
    path = Path(path)
    vid = video_id if video_id is not None else path.stem
    return decode_features(_read_bytes(path), vid, path)


# -- label, timestamp and timeline text files ---------------------------------

def _lines(path):
    data = _read_bytes(path)
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise FormatError("label files must be ASCII", exc.start, path) from exc
    offset = 0
    for lineno, line in enumerate(text.splitlines(keepends=True), start=1):
        stripped = line.strip()
        if stripped:
            yield lineno, offset, stripped
        offset += len(line)


def write_labels(labels, path):
    with open(path, "w", newline="\n") as fh:
        fh.writelines(f"{int(v)}\n" for v in np.asarray(labels).reshape(-1))


def read_labels(path):
    out = []
    for lineno, offset, line in _lines(path):
        try:
            out.append(int(line))
        except ValueError:
            raise FormatError(f"line {lineno}: expected an integer class id, got {line!r}", offset, path)
    if not out:
        raise FormatError("label file is empty", 0, path)
    return np.array(out, dtype=np.int64)


def write_timestamps(stamps, path):
    with open(path, "w", newline="\n") as fh:
        fh.writelines(f"{int(f) + 1},{int(c)}\n" for f, c in zip(stamps.frames, stamps.classes))


def read_timestamps(path):
    frames, classes = [], []
    for lineno, offset, line in _lines(path):
        parts = line.split(",")
        try:
            frame, cls = (int(p) for p in parts)
        except ValueError:
            raise FormatError(f"line {lineno}: expected 'frame,class', got {line!r}", offset, path)
        if frame < 1:
            raise FormatError(f"line {lineno}: frames are 1-based, got {frame}", offset, path)
        frames.append(frame - 1)
        classes.append(cls)
    if not frames:
        raise FormatError("timestamp file is empty", 0, path)
    try:
        return TimestampAnnotation(np.array(frames), np.array(classes))
    except ValueError as exc:
        raise FormatError(str(exc), 0, path) from exc


def write_timeline(segments, path):
    with open(path, "w", newline="\n") as fh:
        fh.writelines(f"{s.label},{s.start + 1},{s.end + 1}\n" for s in segments)


# -- checkpoints ---------------------------------------------------------------

def _f64(arr):
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def encode_gcn(params):
    head = GCN_MAGIC + struct.pack("<IIIIB", FORMAT_VERSION, params.d_in, params.d_hidden,
                                   params.num_classes, VARIANTS.index(params.variant))
    return head + _f64(params.w1) + _f64(params.w2)


def decode_gcn(buf, path=None, precision=64):
    r = _Reader(buf, path)
    r.magic(GCN_MAGIC)
    r.version()
    d_in = r.dim("d_in")
    d_hidden = r.dim("d_hidden")
    C = r.dim("num_classes")
    start = r.pos
    variant = r.u8("variant")
    if variant >= len(VARIANTS):
        raise r.error(f"unknown GCN variant byte {variant}", start)
    dtype = dtype_for(precision)
    w1 = r.floats((d_in, d_hidden), "<f8", "w1").astype(dtype)
    w2 = r.floats((d_hidden, C), "<f8", "w2").astype(dtype)
    r.finish()
    hyper = dict(lr=GCN_LR, weight_decay=GCN_WEIGHT_DECAY)
    return GcnParams(w1, w2, VARIANTS[variant], AdamState.zeros_like(w1, **hyper),
                     AdamState.zeros_like(w2, **hyper))


def encode_tcn(params):
    c = params.config
    head = TCN_MAGIC + struct.pack("<IIIIII", FORMAT_VERSION, c.input_dim, c.num_classes,
                                   c.num_stages, c.layers_per_stage, c.num_feature_maps)
    return head + b"".join(_f64(params.tensors[n]) for n in tensor_names(c))


def decode_tcn(buf, path=None, precision=64):
    r = _Reader(buf, path)
    r.magic(TCN_MAGIC)
    r.version()
    start = r.pos
    dims = [r.dim(name) for name in
            ("input_dim", "num_classes", "num_stages", "layers_per_stage", "num_feature_maps")]
    try:
        config = TcnConfig(*dims)
        if config.layers_per_stage > 30:
            raise ConfigError("layers_per_stage too large")
    except ConfigError as exc:
        raise r.error(f"invalid segmenter config: {exc}", start) from exc
    expected = config.param_count() * 8
    if len(buf) - r.pos != expected:
        raise r.error(f"weight block is {len(buf) - r.pos} bytes, config implies {expected}")
    dtype = dtype_for(precision)
    shapes = tensor_shapes(config)
    tensors = {n: r.floats(shapes[n], "<f8", n).astype(dtype) for n in tensor_names(config)}
    r.finish()
    return attach_optimizer(config, tensors)


def save_gcn(params, path):
    _write_bytes(path, encode_gcn(params))


def load_gcn(path, precision=64):
    return decode_gcn(_read_bytes(path), Path(path), precision)


def save_tcn(params, path):
    _write_bytes(path, encode_tcn(params))


def load_tcn(path, precision=64):
    return decode_tcn(_read_bytes(path), Path(path), precision)


# -- manifest --------------------------------------------------------------------

def write_manifest(path, name, num_classes, feature_dim, entries, class_names=None):
    """``entries`` are dicts with ``id``, ``features`` and optional ``labels``,
    ``timestamps`` and ``split`` (paths relative to the manifest)."""
    doc = {
        "format": MANIFEST_FORMAT,
        "version": FORMAT_VERSION,
        "name": name,
        "num_classes": int(num_classes),
        "class_names": list(class_names or [f"class{c}" for c in range(num_classes)]),
        "feature_dim": int(feature_dim),
        "videos": entries,
    }
    with open(path, "w", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    return doc


def read_manifest(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest is not valid JSON: {exc.msg}", exc.pos, path) from exc
    if not isinstance(doc, dict) or doc.get("format") != MANIFEST_FORMAT:
        raise FormatError("not a tsseg manifest", 0, path)
    for key in ("name", "num_classes", "videos"):
        if key not in doc:
            raise FormatError(f"manifest lacks '{key}'", 0, path)
    if not doc["videos"]:
        raise DataError(f"manifest {path} lists no videos")
    return doc


def load_dataset(manifest_path, timestamp_seed=None, require_gt=False, need_timestamps=True):
    """Read and cross-validate every file a manifest references.

    When ``timestamp_seed`` is given, timestamps are sampled from the ground
    truth (seeded per video position) instead of read from disk. With
    ``need_timestamps=False`` videos lacking both get ``timestamps=None``.
    """
    manifest_path = Path(manifest_path)
    doc = read_manifest(manifest_path)
    root = manifest_path.parent
    C = int(doc["num_classes"])
    dim = doc.get("feature_dim")
    videos = []
    for k, entry in enumerate(doc["videos"]):
        vid = entry.get("id", f"video{k}")
        feats = read_features(root / entry["features"], vid)
        if dim is not None and feats.dim != dim:
            raise DataError(f"{vid}: features are {feats.dim}-dim, manifest says {dim}")
        gt = None
        if entry.get("labels"):
            gt = read_labels(root / entry["labels"])
            if gt.size != feats.num_frames:
                raise DataError(f"{vid}: {gt.size} labels for {feats.num_frames} frames")
            if gt.min() < 0 or gt.max() >= C:
                raise DataError(f"{vid}: label outside [0, {C})")
        elif require_gt:
            raise DataError(f"{vid}: no ground-truth labels")
        if entry.get("timestamps") and timestamp_seed is None:
            stamps = read_timestamps(root / entry["timestamps"])
        elif gt is not None and timestamp_seed is not None:
            stamps = sample_timestamps(gt, timestamp_seed + k)
        elif not need_timestamps:
            stamps = None
        else:
            raise DataError(f"{vid}: no timestamps and no ground truth to sample them from")
        if stamps is not None:
            try:
                stamps.validate(feats.num_frames, C)
            except ValueError as exc:
                raise DataError(f"{vid}: {exc}") from exc
        videos.append(Video(feats, stamps, gt, entry.get("split", "train")))
    return Dataset(doc["name"], C, videos, doc.get("class_names", []))


def relpath(path, start):
    return os.path.relpath(path, start).replace(os.sep, "/")
