"""In-memory containers for videos, annotations and datasets.

Frame positions are 0-based everywhere in memory. The on-disk timestamp and
timeline formats are 1-based; conversion happens only in :mod:`tsseg.io`.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import AnnotationError, ShapeError
from .metrics import segments_from_labels

UNLABELED = -1


@dataclass
class FeatureSequence:
    video_id: str
    frames: np.ndarray  # T x D

    def __post_init__(self):
        if self.frames.ndim != 2:
            raise ShapeError(f"features must be T x D, got shape {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise ShapeError("a feature sequence needs at least one frame")

    @property
    def num_frames(self):
        return self.frames.shape[0]

    @property
    def dim(self):
        return self.frames.shape[1]


@dataclass
class TimestampAnnotation:
    """One labelled frame per action segment, in temporal order."""

    frames: np.ndarray
    classes: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.int64).reshape(-1)
        self.classes = np.asarray(self.classes, dtype=np.int64).reshape(-1)
        if self.frames.shape != self.classes.shape:
            raise AnnotationError("timestamp frames and classes differ in length")
        if len(self.frames) == 0:
            raise AnnotationError("at least one timestamp is required")
        if np.any(np.diff(self.frames) <= 0):
            raise AnnotationError("timestamp frames must be strictly increasing")
        if self.frames[0] < 0:
            raise AnnotationError("timestamp frames must be non-negative")

    def __len__(self):
        return len(self.frames)

    def validate(self, num_frames, num_classes=None):
        if self.frames[-1] >= num_frames:
            raise AnnotationError(
                f"timestamp at frame {self.frames[-1]} lies outside a {num_frames}-frame video")
        if num_classes is not None and (self.classes.min() < 0 or self.classes.max() >= num_classes):
            raise AnnotationError(f"timestamp class outside [0, {num_classes})")

    def sparse_labels(self, num_frames):
        """Length-T label vector with ``UNLABELED`` everywhere except timestamps."""
        self.validate(num_frames)
        labels = np.full(num_frames, UNLABELED, dtype=np.int64)
        labels[self.frames] = self.classes
        return labels


def sample_timestamps(gt_labels, seed):
    """Draw one frame uniformly from every ground-truth segment."""
    gt_labels = np.asarray(gt_labels)
    if gt_labels.size < 1:
        raise AnnotationError("cannot sample timestamps from an empty labelling")
    rng = np.random.default_rng(seed)
    frames, classes = [], []
    for seg in segments_from_labels(gt_labels):
        frames.append(int(rng.integers(seg.start, seg.end + 1)))
        classes.append(seg.label)
    return TimestampAnnotation(np.array(frames), np.array(classes))


@dataclass
class Video:
    features: FeatureSequence
    timestamps: TimestampAnnotation
    gt: np.ndarray = None
    split: str = "train"

    @property
    def video_id(self):
        return self.features.video_id

    @property
    def num_frames(self):
        return self.features.num_frames


@dataclass
class Dataset:
    name: str
    num_classes: int
    videos: list
    class_names: list = field(default_factory=list)

    @property
    def feature_dim(self):
        return self.videos[0].features.dim

    def split(self, name):
        return [v for v in self.videos if v.split == name]

    @property
    def train_videos(self):
        return self.split("train")

    @property
    def eval_videos(self):
        """Held-out videos when the dataset has them, otherwise the training set."""
        return self.split("test") or self.train_videos
