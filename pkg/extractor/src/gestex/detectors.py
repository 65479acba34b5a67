"""Hand-pose detector backends.

The extractor only needs an object with detect(image) -> list[Detection].
The MediaPipe backend is the intended production detector; it is imported
lazily so the rest of the tool works (and tests run) without the optional
dependency installed.
"""
from __future__ import annotations

import numpy as np

from .extract import Detection


class MediaPipeDetector:
    """MediaPipe Hands wrapper (install the 'mediapipe' extra to use)."""

    def __init__(self, max_hands=2, model_complexity=1):
        try:
            import mediapipe as mp
        except ImportError as e:
            raise ImportError(
                "mediapipe is not installed; install gestex[mediapipe] "
                "or supply another detector"
            ) from e
        self._hands = mp.solutions.hands.Hands(
            static_image_mode=True,
            max_num_hands=max_hands,
            model_complexity=model_complexity,
        )

    def detect(self, image):
        result = self._hands.process(np.ascontiguousarray(image))
        if not result.multi_hand_landmarks:
            return []
        detections = []
        for lm_list, handed in zip(
            result.multi_hand_landmarks, result.multi_handedness
        ):
            pts = np.array(
                [[p.x, p.y, p.z] for p in lm_list.landmark], dtype=np.float64
            )
            top = handed.classification[0]
            detections.append(Detection(pts, top.label, float(top.score)))
        return detections

    def close(self):
        self._hands.close()


def build_detector(name):
    if name == "mediapipe":
        return MediaPipeDetector()
    raise ValueError(f"unknown detector {name!r}")
