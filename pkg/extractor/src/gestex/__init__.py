from .extract import (
    Detection,
    ExtractionJob,
    ExtractionSummary,
    extract_landmarks,
    iter_images,
)

__all__ = [
    "Detection",
    "ExtractionJob",
    "ExtractionSummary",
    "extract_landmarks",
    "iter_images",
]
