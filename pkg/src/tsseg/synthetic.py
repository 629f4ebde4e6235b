"""Synthetic segmentation datasets with a known answer.

Every class owns a unit-norm mean vector; class means are drawn by rejection
so that every pair has cosine similarity below ``MAX_MEAN_COSINE``. A video
is a sequence of segments (consecutive segments differ in class) whose frames
are the class mean plus isotropic Gaussian noise. Within ``boundary_blur``
frames of each boundary the mean is linearly interpolated between the two
neighbouring classes, so those frames are ambiguous on their own and only
their temporal context tells them apart.
"""
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, FeatureSequence, Video, sample_timestamps
from .errors import ConfigError
from .io import relpath, write_features, write_labels, write_manifest, write_timestamps

MAX_MEAN_COSINE = 0.3
MAX_REJECTIONS = 1000


@dataclass(frozen=True)
class SynthConfig:
    num_videos: int = 20
    num_classes: int = 5
    feature_dim: int = 64
    segment_len_range: tuple = (20, 60)
    segments_per_video: tuple = (4, 8)
    noise_sigma: float = 0.4
    boundary_blur: int = 3
    seed: int = 0
    test_videos: int = 0

    def __post_init__(self):
        for name in ("num_videos", "num_classes", "feature_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        lo, hi = self.segment_len_range
        if lo < 1 or hi < lo:
            raise ConfigError(f"bad segment length range {self.segment_len_range}")
        slo, shi = self.segments_per_video
        if slo < 1 or shi < slo:
            raise ConfigError(f"bad segments-per-video range {self.segments_per_video}")
        if slo > 1 and self.num_classes < 2:
            raise ConfigError("multi-segment videos need at least two classes")
        if self.noise_sigma < 0 or self.boundary_blur < 0 or self.test_videos < 0:
            raise ConfigError("noise, blur and test-video count must be non-negative")


def class_means(rng, num_classes, dim):
    means = []
    for c in range(num_classes):
        for _ in range(MAX_REJECTIONS):
            v = rng.standard_normal(dim)
            v /= np.linalg.norm(v)
            if all(v @ m < MAX_MEAN_COSINE for m in means):
                means.append(v)
                break
        else:
            raise ConfigError(
                f"could not place class mean {c}: {num_classes} classes do not fit in {dim} dimensions")
    return np.array(means)


def _segment_layout(rng, cfg):
    n_seg = int(rng.integers(cfg.segments_per_video[0], cfg.segments_per_video[1] + 1))
    classes = [int(rng.integers(cfg.num_classes))]
    for _ in range(n_seg - 1):
        nxt = int(rng.integers(cfg.num_classes - 1))
        classes.append(nxt if nxt < classes[-1] else nxt + 1)
    lengths = rng.integers(cfg.segment_len_range[0], cfg.segment_len_range[1] + 1, size=n_seg)
    return classes, [int(n) for n in lengths]


def _frame_means(means, classes, lengths, blur):
    gt = np.repeat(classes, lengths).astype(np.int64)
    mu = means[gt].copy()
    if blur == 0:
        return gt, mu
    bounds = np.cumsum(lengths)[:-1]
    for k, b in enumerate(bounds):
        left, right = classes[k], classes[k + 1]
        lo = max(b - blur, b - lengths[k] // 2)
        hi = min(b + blur, b + lengths[k + 1] // 2)
        for t in range(lo, hi):
            w = (t - (b - blur) + 0.5) / (2 * blur)
            mu[t] = (1.0 - w) * means[left] + w * means[right]
    return gt, mu


def generate(cfg=SynthConfig()):
    """Build the dataset in memory; returns ``(dataset, class_means)``."""
    rng = np.random.default_rng(cfg.seed)
    means = class_means(rng, cfg.num_classes, cfg.feature_dim)
    videos = []
    for k in range(cfg.num_videos + cfg.test_videos):
        classes, lengths = _segment_layout(rng, cfg)
        gt, mu = _frame_means(means, classes, lengths, cfg.boundary_blur)
        frames = (mu + cfg.noise_sigma * rng.standard_normal(mu.shape)).astype(np.float32)
        stamps = sample_timestamps(gt, int(rng.integers(2**31)))
        split = "train" if k < cfg.num_videos else "test"
        videos.append(Video(FeatureSequence(f"video{k:03d}", frames), stamps, gt, split))
    names = [f"action{c}" for c in range(cfg.num_classes)]
    return Dataset("synthetic", cfg.num_classes, videos, names), means


def write_dataset(dataset, out_dir):
    """Write features, labels, timestamps and ``manifest.json`` under ``out_dir``."""
    out = Path(out_dir)
    for sub in ("features", "labels", "timestamps"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    entries = []
    for v in dataset.videos:
        paths = {
            "features": out / "features" / f"{v.video_id}.tsaf",
            "labels": out / "labels" / f"{v.video_id}.txt",
            "timestamps": out / "timestamps" / f"{v.video_id}.txt",
        }
        write_features(v.features, paths["features"])
        write_labels(v.gt, paths["labels"])
        write_timestamps(v.timestamps, paths["timestamps"])
        entry = {"id": v.video_id}
        entry.update({k: relpath(p, out) for k, p in paths.items()})
        entry["split"] = v.split
        entries.append(entry)
    manifest = out / "manifest.json"
    write_manifest(manifest, dataset.name, dataset.num_classes, dataset.feature_dim, entries,
                   dataset.class_names)
    return manifest


def synth_dataset(out_dir, cfg=SynthConfig()):
    dataset, _ = generate(cfg)
    return write_dataset(dataset, out_dir)


def nearest_mean_labels(frames, means):
    """Label each frame by its closest class mean (Euclidean)."""
    d = ((frames[:, None, :].astype(np.float64) - means[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d, axis=1)


def config_dict(cfg):
    d = asdict(cfg)
    d["segment_len_range"] = list(cfg.segment_len_range)
    d["segments_per_video"] = list(cfg.segments_per_video)
    return d
