"""Command-line entry point.

Exit status: 0 on success, 1 when some inputs failed or validation found
problems, 2 on unusable input (bad flags, unreadable or unparseable files).
Diagnostics go to stderr; data goes to stdout or the requested files.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from . import __version__
from .angles import AngleScheme, bin_angle, encode_angle_regression, representative_angle, wrap_angle
from .annotations import FORMATS, AnnotationError, LoadResult, convert, load_annotations, validate
from .evaluation import (DEFAULT_NMS_IOU, DEFAULT_THRESHOLDS, IOU_MODES, InputError, evaluate,
                         format_report_table, parse_detections, rotated_nms, write_detections)
from .stats import split, summarize

EXIT_OK, EXIT_PARTIAL, EXIT_INPUT = 0, 1, 2

log = logging.getLogger("oawdkit")


def _unit_interval(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1], got {text}")
    return value


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text}")
    return value


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _write_or_print(text: str, path: Optional[str]) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8", newline="\n")


def _load(args, path: str, fmt: str) -> LoadResult:
    size = (args.image_width, args.image_height) if args.image_width and args.image_height else None
    result = load_annotations(path, fmt, strict=args.strict, image_size=size, jobs=args.jobs)
    for failed, reason in result.failures:
        print(f"error: {failed}: {reason}", file=sys.stderr)
    return result


def cmd_convert(args) -> int:
    result = _load(args, args.input, args.in_format)
    total = len(result.annotations) + len(result.failures)
    if total == 0:
        print(f"warning: no {args.in_format} annotations found in {args.input}", file=sys.stderr)
    written = convert(result.annotations, args.out_format, args.output, AngleScheme(args.angle_scheme))
    print(f"converted {len(result.annotations)}/{total} files, wrote {len(written)} files")
    return EXIT_PARTIAL if result.failures else EXIT_OK


def cmd_validate(args) -> int:
    result = _load(args, args.input, args.in_format)
    report = validate(result.annotations).to_dict()
    report["unreadable"] = [{"path": p, "error": e} for p, e in result.failures]
    report["ok"] = report["ok"] and not result.failures
    sys.stdout.write(_dump(report))
    return EXIT_OK if report["ok"] else EXIT_PARTIAL


def cmd_evaluate(args) -> int:
    result = _load(args, args.gt, args.gt_format)
    if result.failures:
        return EXIT_INPUT
    with open(args.detections, encoding="utf-8") as fh:
        dets = parse_detections(fh)
    thresholds = args.iou or list(DEFAULT_THRESHOLDS)
    reports = evaluate(dets, result.annotations, thresholds, args.iou_mode, jobs=args.jobs)
    payload = _dump({"reports": [r.to_dict() for r in reports]})
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8", newline="\n")
    sys.stdout.write(format_report_table(reports))
    if not args.out:
        sys.stdout.write(payload)
    return EXIT_OK


def cmd_stats(args) -> int:
    result = _load(args, args.input, args.in_format)
    if result.failures:
        return EXIT_INPUT
    scheme = AngleScheme(args.angle_scheme)
    summary = summarize(result.annotations, scheme)
    payload = summary.to_dict()
    if args.seed is not None:
        train, test = split(result.annotations, args.train_fraction, args.seed)
        payload["split"] = {
            "seed": args.seed,
            "train_fraction": args.train_fraction,
            "train": summarize(train, scheme).to_dict(),
            "test": summarize(test, scheme).to_dict(),
        }
    _write_or_print(_dump(payload), args.out_json)
    if args.out_csv:
        Path(args.out_csv).write_text(summary.chart_csv(), encoding="utf-8", newline="\n")
    return EXIT_OK


def cmd_nms(args) -> int:
    with open(args.detections, encoding="utf-8") as fh:
        dets = parse_detections(fh)
    kept = rotated_nms(dets, args.nms_iou)
    if args.out in (None, "-"):
        write_detections(kept, sys.stdout)
    else:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            write_detections(kept, fh)
    print(f"kept {len(kept)} of {len(dets)} detections", file=sys.stderr)
    return EXIT_OK


def cmd_bin_angles(args) -> int:
    scheme = AngleScheme(args.angle_scheme)
    values: List[str] = list(args.angles)
    if not values:
        values = sys.stdin.read().split()
    for text in values:
        try:
            theta = float(text)
        except ValueError:
            print(f"error: not an angle: {text!r}", file=sys.stderr)
            return EXIT_INPUT
        c = bin_angle(theta, scheme)
        record = {
            "theta": theta,
            "wrapped": wrap_angle(theta),
            "scheme": scheme.value,
            "index": c.index,
            "representative": representative_angle(c),
            "regression": encode_angle_regression(theta),
        }
        sys.stdout.write(json.dumps(record) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oawdkit", description="Oriented weapon annotation and evaluation tools")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--strict", action="store_true", help="abort on the first bad file or unknown class")
    common.add_argument("--jobs", type=int, default=1, help="worker threads for file reading")
    common.add_argument("--image-width", type=int, help="image width for YOLO labels without sizes.csv")
    common.add_argument("--image-height", type=int, help="image height for YOLO labels without sizes.csv")
    scheme = argparse.ArgumentParser(add_help=False)
    scheme.add_argument("--angle-scheme", choices=[s.value for s in AngleScheme], default="model")

    p = sub.add_parser("convert", parents=[common, scheme], help="convert between annotation formats")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--in-format", choices=FORMATS, required=True)
    p.add_argument("--out-format", choices=FORMATS, required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("validate", parents=[common], help="report annotation invariant violations")
    p.add_argument("input")
    p.add_argument("--in-format", choices=FORMATS, required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("evaluate", parents=[common], help="mAP of detections at several IoU thresholds")
    p.add_argument("--gt", required=True, help="ground-truth directory (or CSV file)")
    p.add_argument("--gt-format", "--in-format", dest="gt_format", choices=FORMATS, default="rolabelimg")
    p.add_argument("--detections", required=True, help="line-delimited JSON detections")
    p.add_argument("--iou", type=_unit_interval, action="append", help="IoU threshold (repeatable)")
    p.add_argument("--iou-mode", choices=IOU_MODES, default="rotated")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", parents=[common, scheme], help="dataset statistics")
    p.add_argument("input")
    p.add_argument("--in-format", choices=FORMATS, required=True)
    p.add_argument("--out-json", help="summary JSON path (default stdout)")
    p.add_argument("--out-csv", help="chart data CSV path")
    p.add_argument("--seed", type=int, help="also summarize a seeded train/test split")
    p.add_argument("--train-fraction", type=_fraction, default=0.8)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("nms", help="rotated non-maximum suppression")
    p.add_argument("detections")
    p.add_argument("--nms-iou", type=_unit_interval, default=DEFAULT_NMS_IOU)
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=cmd_nms)

    p = sub.add_parser("bin-angles", parents=[scheme], help="map angles in degrees to angle classes")
    p.add_argument("angles", nargs="*", help="angles in degrees; read from stdin when omitted")
    p.set_defaults(func=cmd_bin_angles)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (AnnotationError, InputError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
