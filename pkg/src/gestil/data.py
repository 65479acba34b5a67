"""Landmark sample types, JSON Lines I/O, subject splits and synthetic data.

The on-disk format is one JSON object per line:
    {"subject": "s1", "label": "fist", "hand": "Right", "landmarks": [[x,y,z], ...]}
with exactly 21 landmark triples per record (index 0 is the wrist).
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

N_LANDMARKS = 21
COORD_MIN = -0.5
COORD_MAX = 1.5
_HANDS = ("Left", "Right")
_SPLITS = ("train", "val", "test")


class DataError(ValueError):
    """Raised for malformed landmark files or invalid sample data."""


@dataclass(frozen=True)
class HandFrame:
    """One labeled hand pose: 21 (x, y, z) landmarks plus metadata.

    x, y are normalized image coordinates (detectors may report slightly
    out-of-frame points, so [-0.5, 1.5] is tolerated); z is wrist-relative.
    """

    landmarks: tuple[tuple[float, float, float], ...]
    handedness: str
    subject: str
    label: str

    def __post_init__(self):
        if len(self.landmarks) != N_LANDMARKS:
            raise DataError(
                f"expected {N_LANDMARKS} landmarks, got {len(self.landmarks)}"
            )
        for i, pt in enumerate(self.landmarks):
            if len(pt) != 3:
                raise DataError(f"landmark {i}: expected (x, y, z) triple")
            x, y, z = pt
            if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
                raise DataError(f"landmark {i}: non-finite coordinate")
            if not (COORD_MIN <= x <= COORD_MAX and COORD_MIN <= y <= COORD_MAX):
                raise DataError(
                    f"landmark {i}: x/y outside [{COORD_MIN}, {COORD_MAX}]"
                )
        if self.handedness not in _HANDS:
            raise DataError(f"handedness must be one of {_HANDS}")

    def points(self) -> np.ndarray:
        """Landmarks as a (21, 3) float64 array."""
        return np.asarray(self.landmarks, dtype=np.float64)

    def translated(self, dx: float, dy: float) -> "HandFrame":
        """Copy shifted in the image plane (test helper; skips range checks
        by clamping is deliberately NOT done - caller must stay in range)."""
        pts = tuple((x + dx, y + dy, z) for x, y, z in self.landmarks)
        return HandFrame(pts, self.handedness, self.subject, self.label)


class GestureDataset:
    """Immutable collection of HandFrames with a dense class registry.

    Class ids follow first appearance order so incremental arrival order
    stays meaningful.
    """

    def __init__(self, frames, classes=None):
        self.frames: tuple[HandFrame, ...] = tuple(frames)
        if classes is None:
            classes = {}
            for f in self.frames:
                if f.label not in classes:
                    classes[f.label] = len(classes)
        else:
            classes = dict(classes)
            ids = sorted(classes.values())
            if ids != list(range(len(ids))):
                raise DataError("class ids must be dense 0..C-1")
            for f in self.frames:
                if f.label not in classes:
                    raise DataError(f"frame label {f.label!r} not in registry")
        self.classes: dict[str, int] = classes
        self.subjects: frozenset[str] = frozenset(f.subject for f in self.frames)

    def __len__(self):
        return len(self.frames)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def class_names(self) -> list[str]:
        """Class names ordered by id."""
        return [name for name, _ in sorted(self.classes.items(), key=lambda kv: kv[1])]

    def frames_of(self, label: str) -> list[HandFrame]:
        return [f for f in self.frames if f.label == label]

    def __eq__(self, other):
        if not isinstance(other, GestureDataset):
            return NotImplemented
        return self.frames == other.frames and self.classes == other.classes


@dataclass(frozen=True)
class SubjectSplit:
    """Maps each subject id to one of train/val/test."""

    assignment: dict[str, str]

    def __post_init__(self):
        for subj, part in self.assignment.items():
            if part not in _SPLITS:
                raise DataError(f"subject {subj!r}: invalid split {part!r}")


@dataclass(frozen=True)
class SynthConfig:
    """Parameters for the deterministic synthetic gesture generator."""

    n_classes: int
    samples_per_class: int
    jitter_std: float = 0.02
    n_subjects: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise DataError("n_classes must be >= 2")
        if self.samples_per_class < 1:
            raise DataError("samples_per_class must be >= 1")
        if self.jitter_std < 0:
            raise DataError("jitter_std must be >= 0")
        if self.n_subjects < 1:
            raise DataError("n_subjects must be >= 1")


def load_dataset(path, mirror_left: bool = False) -> GestureDataset:
    """Parse a JSON Lines landmark file.

    With mirror_left=True, left-hand frames are mirrored to right-hand
    canonical form (x -> 1 - x, handedness relabeled Right).
    """
    frames = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: invalid JSON ({e})") from e
            try:
                frames.append(_frame_from_record(rec, mirror_left))
            except (DataError, KeyError, TypeError) as e:
                raise DataError(f"{path}:{lineno}: {e}") from e
    return GestureDataset(frames)


def _frame_from_record(rec: dict, mirror_left: bool) -> HandFrame:
    for key in ("subject", "label", "hand", "landmarks"):
        if key not in rec:
            raise DataError(f"missing field {key!r}")
    lms = rec["landmarks"]
    if not isinstance(lms, list) or len(lms) != N_LANDMARKS:
        raise DataError(f"expected {N_LANDMARKS} landmark triples, got {len(lms)}")
    hand = rec["hand"]
    pts = [tuple(float(v) for v in pt) for pt in lms]
    if mirror_left and hand == "Left":
        pts = [(1.0 - x, y, z) for x, y, z in pts]
        hand = "Right"
    return HandFrame(tuple(pts), hand, str(rec["subject"]), str(rec["label"]))


def save_dataset(dataset: GestureDataset, path) -> None:
    """Write a dataset in the JSON Lines landmark format (atomic)."""
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        for f in dataset.frames:
            rec = {
                "subject": f.subject,
                "label": f.label,
                "hand": f.handedness,
                "landmarks": [list(pt) for pt in f.landmarks],
            }
            fh.write(json.dumps(rec) + "\n")
    os.replace(tmp, path)


def split_by_subject(dataset: GestureDataset, split: SubjectSplit):
    """Route frames into (train, val, test) datasets by subject assignment.

    All three outputs share the input's class registry.
    """
    missing = sorted(dataset.subjects - set(split.assignment))
    if missing:
        raise DataError(f"subjects missing from split: {missing}")
    parts = {p: [] for p in _SPLITS}
    for f in dataset.frames:
        parts[split.assignment[f.subject]].append(f)
    return tuple(
        GestureDataset(parts[p], classes=dataset.classes) for p in _SPLITS
    )


def default_split(dataset: GestureDataset) -> SubjectSplit:
    """Cycle sorted subjects through train/val/test."""
    assignment = {
        subj: _SPLITS[i % 3] for i, subj in enumerate(sorted(dataset.subjects))
    }
    return SubjectSplit(assignment)


def synth_gestures(config: SynthConfig) -> GestureDataset:
    """Deterministic synthetic dataset: one random prototype per class plus
    Gaussian jitter, subjects assigned round-robin within each class."""
    rng = np.random.default_rng(config.seed)
    frames = []
    for c in range(config.n_classes):
        proto = rng.uniform(0.1, 0.9, size=(N_LANDMARKS, 2))
        for s in range(config.samples_per_class):
            xy = proto + rng.normal(0.0, config.jitter_std, size=(N_LANDMARKS, 2))
            xy = np.clip(xy, COORD_MIN, COORD_MAX)
            pts = tuple((float(x), float(y), 0.0) for x, y in xy)
            frames.append(
                HandFrame(
                    pts,
                    "Right",
                    f"s{s % config.n_subjects}",
                    f"class{c:02d}",
                )
            )
    return GestureDataset(frames)
