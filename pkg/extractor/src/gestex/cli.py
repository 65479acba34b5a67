"""Command-line entry point: gestex extract.

Exit codes: 0 success, 2 usage error, 1 runtime error.
"""
from __future__ import annotations

import argparse
import os
import sys

from .detectors import build_detector
from .extract import ExtractionJob, extract_landmarks


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gestex",
        description="Convert gesture images to 21-point hand landmark JSONL",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser(
        "extract",
        help="walk <root>/<subject>/<label>/<image> and write landmark records",
    )
    p.add_argument("--in", dest="input_root", required=True,
                   help="image tree root: <subject>/<label>/<image files>")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.add_argument("--min-confidence", type=float, default=0.5)
    p.add_argument("--mirror-left", action="store_true",
                   help="reflect left hands so all records read as Right")
    p.add_argument("--detector", default="mediapipe")
    p.add_argument("--force", action="store_true")
    return parser


def cmd_extract(args, detector=None):
    if os.path.exists(args.out) and not args.force:
        raise FileExistsError(f"refusing to overwrite {args.out} (use --force)")
    job = ExtractionJob(
        input_root=args.input_root,
        output_path=args.out,
        min_confidence=args.min_confidence,
        mirror_left=args.mirror_left,
    )
    if detector is None:
        detector = build_detector(args.detector)
    summary = extract_landmarks(job, detector)
    print(f"wrote {summary.written} records to {summary.output_path} "
          f"({summary.skipped} images skipped)")
    return 0


def main(argv=None, detector=None):
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on usage errors
    try:
        return cmd_extract(args, detector=detector)
    except (ValueError, OSError, ImportError, FileExistsError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
