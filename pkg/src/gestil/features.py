"""Feature encodings for 21-landmark hand frames.

Six encodings over the landmark set (index 0 = wrist), all but the raw
ones built from coordinate differences so they are translation invariant.
Distance-based encodings use only x, y; depth is kept only by raw3d.
"""
from __future__ import annotations

import numpy as np

from .data import N_LANDMARKS, HandFrame

# Fixed pair enumeration: the 210 unordered pairs i < j in row-major
# order. alldiff emits (dx, dy) per pair (420 values), alleuclidean the
# distance per pair (210 values). The pair order and the combined
# concatenation order are frozen: model weights depend on them.
_PAIR_I, _PAIR_J = np.triu_indices(N_LANDMARKS, k=1)

ENCODINGS = {
    "raw2d": 42,
    "raw3d": 63,
    "wristdiff": 40,
    "wristeuclidean": 20,
    "alleuclidean": 210,
    "alldiff": 420,
    "combined": 670,
}


def encoding_dim(encoding: str) -> int:
    try:
        return ENCODINGS[encoding]
    except KeyError:
        raise ValueError(
            f"unknown encoding {encoding!r}; choose from {sorted(ENCODINGS)}"
        ) from None


def encode(frame: HandFrame, encoding: str) -> np.ndarray:
    """Encode one frame; returns a float64 vector of the encoding's length."""
    return _encode_points(frame.points(), encoding)


def encode_batch(frames, encoding: str) -> np.ndarray:
    """Encode a sequence of frames into an (n, dim) matrix."""
    out = np.empty((len(frames), encoding_dim(encoding)))
    for k, f in enumerate(frames):
        out[k] = _encode_points(f.points(), encoding)
    return out


def _encode_points(pts: np.ndarray, encoding: str) -> np.ndarray:
    xy = pts[:, :2]
    if encoding == "raw2d":
        return xy.ravel().copy()
    if encoding == "raw3d":
        return pts.ravel().copy()
    if encoding == "wristdiff":
        return _wrist_diff(xy)
    if encoding == "wristeuclidean":
        d = xy[1:] - xy[0]
        return np.hypot(d[:, 0], d[:, 1])
    if encoding == "alldiff":
        return _all_diff(xy)
    if encoding == "alleuclidean":
        return _all_euclidean(xy)
    if encoding == "combined":
        return np.concatenate(
            [_all_euclidean(xy), _wrist_diff(xy), _all_diff(xy)]
        )
    encoding_dim(encoding)  # raises
    raise AssertionError


def _wrist_diff(xy: np.ndarray) -> np.ndarray:
    return (xy[1:] - xy[0]).ravel()


def _all_diff(xy: np.ndarray) -> np.ndarray:
    return (xy[_PAIR_I] - xy[_PAIR_J]).ravel()


def _all_euclidean(xy: np.ndarray) -> np.ndarray:
    d = xy[_PAIR_I] - xy[_PAIR_J]
    return np.hypot(d[:, 0], d[:, 1])
