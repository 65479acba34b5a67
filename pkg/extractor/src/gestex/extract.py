"""Walk an image tree and emit hand-landmark records as JSON Lines.

Expected layout: <root>/<subject>/<label>/<image files>. Subject and label
are taken from the directory names; each image with a confident hand
detection yields one record

    {"subject": ..., "label": ..., "hand": "Left"|"Right",
     "landmarks": [[x, y, z], ...]}   # exactly 21 triples

which is the format the gesture-learning package loads unchanged. Images
with no detection, a detection below the confidence threshold, or that
cannot be decoded are skipped and counted.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")
N_LANDMARKS = 21

# detectors may place points slightly outside the frame; anything within
# this window is kept (and clamped to it), matching the loader's tolerance
COORD_LO, COORD_HI = -0.5, 1.5


@dataclass(frozen=True)
class Detection:
    """One detected hand: normalized landmarks plus metadata."""

    landmarks: np.ndarray  # (21, 3), x/y in normalized image coordinates
    handedness: str        # "Left" or "Right"
    score: float           # detector confidence in [0, 1]


@dataclass(frozen=True)
class ExtractionJob:
    input_root: str
    output_path: str
    min_confidence: float = 0.5
    mirror_left: bool = False

    def __post_init__(self):
        if not os.path.isdir(self.input_root):
            raise ValueError(f"input root {self.input_root!r} is not a directory")
        if not 0.0 <= self.min_confidence <= 1.0:
            raise ValueError("min_confidence must be in [0, 1]")


@dataclass(frozen=True)
class ExtractionSummary:
    written: int
    skipped: int
    output_path: str


def iter_images(root):
    """Yield (subject, label, image_path) in sorted order."""
    for subject in sorted(os.listdir(root)):
        sdir = os.path.join(root, subject)
        if not os.path.isdir(sdir):
            continue
        for label in sorted(os.listdir(sdir)):
            ldir = os.path.join(sdir, label)
            if not os.path.isdir(ldir):
                continue
            for name in sorted(os.listdir(ldir)):
                if name.lower().endswith(IMAGE_EXTENSIONS):
                    yield subject, label, os.path.join(ldir, name)


def _load_image(path):
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"))


def _best_detection(detections, min_confidence):
    kept = [d for d in detections if d.score >= min_confidence]
    if not kept:
        return None
    return max(kept, key=lambda d: d.score)


def _record_from(detection, subject, label, mirror_left):
    lm = np.asarray(detection.landmarks, dtype=np.float64)
    if lm.shape != (N_LANDMARKS, 3) or not np.isfinite(lm).all():
        return None
    hand = detection.handedness
    if hand not in ("Left", "Right"):
        return None
    if mirror_left and hand == "Left":
        lm = lm.copy()
        lm[:, 0] = 1.0 - lm[:, 0]
        hand = "Right"
    lm[:, :2] = np.clip(lm[:, :2], COORD_LO, COORD_HI)
    return {
        "subject": subject,
        "label": label,
        "hand": hand,
        "landmarks": [[float(v) for v in row] for row in lm],
    }


def extract_landmarks(job: ExtractionJob, detector) -> ExtractionSummary:
    """Run the detector over every image under the job's root.

    detector: any object with detect(image: (h, w, 3) uint8 array)
    -> list[Detection]. The highest-confidence hand at or above the
    threshold is kept; everything else counts as a skip.
    """
    written = 0
    skipped = 0
    lines = []
    for subject, label, path in iter_images(job.input_root):
        try:
            image = _load_image(path)
        except OSError:
            skipped += 1
            continue
        best = _best_detection(detector.detect(image), job.min_confidence)
        record = (
            _record_from(best, subject, label, job.mirror_left)
            if best is not None
            else None
        )
        if record is None:
            skipped += 1
            continue
        lines.append(json.dumps(record))
        written += 1

    tmp = f"{job.output_path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")
    os.replace(tmp, job.output_path)
    return ExtractionSummary(written, skipped, job.output_path)
