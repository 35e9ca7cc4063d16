"""``kittieval`` command line: evaluate, pr-export, loss-check.

Exit status: 0 success, 1 evaluation failure or loss mismatch, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from ._jit import backend_name
from .eval_core import DEFAULT_IOU_THRESHOLDS, ConfigError, EvalConfig
from .kitti_io import KittiFormatError, load_dataset
from .metrics import METRIC_KINDS, METRIC_TITLES, OVERALL, EvalReport, build_pr_curve, evaluate
from .regularization import (
    FocalParams,
    SmoothL1Params,
    cross_entropy,
    focal_loss,
    smooth_l1,
    total_loss,
)

log = logging.getLogger("kittieval")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
LOSS_TOLERANCE = 1e-9
DEFAULT_CLASSES = ("Pedestrian", "Cyclist", "Car")


class UsageError(Exception):
    pass


def _csv_list(text: str) -> list[str]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise argparse.ArgumentTypeError("empty list")
    return items


def _difficulties(text: str) -> list[int]:
    try:
        levels = [int(t) for t in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"difficulties must be integers: {text!r}") from None
    if any(d not in (0, 1, 2) for d in levels):
        raise argparse.ArgumentTypeError("difficulties must be drawn from 0,1,2")
    return levels


def _metrics(text: str) -> list[str]:
    items = [t.lower() for t in _csv_list(text)]
    bad = [t for t in items if t not in METRIC_KINDS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown metric(s): {','.join(bad)}")
    return items


def _iou_pair(text: str) -> tuple[str, float]:
    name, sep, value = text.partition("=")
    try:
        thr = float(value)
    except ValueError:
        thr = float("nan")
    if not sep or not name or not 0.0 < thr <= 1.0:
        raise argparse.ArgumentTypeError(f"expected <class>=<threshold in (0,1]>, got {text!r}")
    return name, thr


def _add_data_args(p):
    p.add_argument("--gt", required=True, type=Path, help="directory of ground-truth label files")
    p.add_argument("--det", required=True, type=Path, help="directory of detection files")
    p.add_argument("--iou", action="append", type=_iou_pair, default=[], metavar="CLASS=THR",
                   help="per-class IoU threshold override (repeatable)")
    p.add_argument("--ap-points", type=int, choices=(11, 40), default=11)
    p.add_argument("--recall-samples", type=int, default=40)
    p.add_argument("--difficulty-mode", choices=("cumulative", "literal"), default="cumulative")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kittieval", description="KITTI-style detection evaluation and loss checks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("evaluate", help="AP/AOS tables for a detection directory")
    _add_data_args(ev)
    ev.add_argument("--classes", type=_csv_list, default=list(DEFAULT_CLASSES))
    ev.add_argument("--metrics", type=_metrics, default=list(METRIC_KINDS))
    ev.add_argument("--difficulties", type=_difficulties, default=[0, 1, 2])
    ev.add_argument("--format", choices=("text", "json", "csv"), default="text")
    ev.add_argument("--out", type=Path, help="output file (default: stdout)")
    ev.add_argument("--timestamp", action="store_true", help="embed the run time in the metadata block")
    ev.add_argument("--dump-config", action="store_true",
                    help="print the effective configuration as JSON and exit")

    pr = sub.add_parser("pr-export", help="precision/recall points of one cell as CSV")
    _add_data_args(pr)
    pr.add_argument("--class", dest="class_name", required=True)
    pr.add_argument("--difficulty", type=int, choices=(0, 1, 2), required=True)
    pr.add_argument("--metric", type=str.lower, choices=METRIC_KINDS, required=True)
    pr.add_argument("--out", type=Path)

    lc = sub.add_parser("loss-check", help="verify loss values listed in a CSV file")
    lc.add_argument("--input", required=True, type=Path)
    return parser


def _thresholds(args) -> dict[str, float]:
    table = dict(DEFAULT_IOU_THRESHOLDS)
    table.update(dict(args.iou))
    return table


def _config_dict(args) -> dict:
    return {
        "classes": list(args.classes),
        "metrics": list(args.metrics),
        "difficulties": list(args.difficulties),
        "iou_thresholds": {c: _thresholds(args).get(c) for c in args.classes},
        "ap_points": args.ap_points,
        "recall_samples": args.recall_samples,
        "difficulty_mode": args.difficulty_mode,
    }


def _load(args):
    for label, path in (("ground-truth", args.gt), ("detection", args.det)):
        if not path.is_dir():
            raise UsageError(f"{label} directory does not exist: {path}")
    skipped: list[str] = []
    frames = load_dataset(args.gt, args.det, skipped=skipped)
    for name in skipped:
        log.warning("skipped detection file without ground truth: %s", name)
    return frames


def render_text(report: EvalReport) -> str:
    lines = []
    name_w = max(len(OVERALL), *(len(c) for c in report.classes))
    for metric in report.metrics:
        lines.append(f"{METRIC_TITLES[metric]} Results")
        lines.append("difficulty".ljust(name_w) + "".join(f"{d:>9d}" for d in report.difficulties))
        for name in [*report.classes, OVERALL]:
            cells = "".join(f"{report.get(metric, name, d):9.2f}" for d in report.difficulties)
            lines.append(name.ljust(name_w) + cells)
        lines.append("")
    return "\n".join(lines)


def render_json(report: EvalReport, metadata: dict) -> str:
    payload = {"metadata": metadata, **report.to_dict()}
    return json.dumps(payload, indent=2, sort_keys=False) + "\n"


def render_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "class", "difficulty", "value"])
    for metric, name, d, value in report.rows():
        w.writerow([metric, name, d, repr(value)])
    return buf.getvalue()


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def cmd_evaluate(args) -> int:
    config = _config_dict(args)
    if args.dump_config:
        _emit(json.dumps(config, indent=2) + "\n", None)
        return EXIT_OK
    frames = _load(args)
    try:
        report = evaluate(
            frames,
            classes=args.classes,
            difficulties=args.difficulties,
            metrics=args.metrics,
            iou_thresholds=_thresholds(args),
            ap_points=args.ap_points,
            recall_samples=args.recall_samples,
            difficulty_mode=args.difficulty_mode,
        )
    except ConfigError as exc:
        raise UsageError(str(exc)) from None

    if args.format == "json":
        metadata = {"tool": "kittieval", "version": __version__, "frames": len(frames), "config": config}
        if args.timestamp:
            metadata["timestamp"] = datetime.now(timezone.utc).isoformat()
        text = render_json(report, metadata)
    elif args.format == "csv":
        text = render_csv(report)
    else:
        text = render_text(report)
    _emit(text, args.out)
    return EXIT_OK


def cmd_pr_export(args) -> int:
    frames = _load(args)
    kind = "2d" if args.metric == "aos" else args.metric
    threshold = _thresholds(args).get(args.class_name)
    if threshold is None:
        raise UsageError(f"no IoU threshold for class {args.class_name!r}; pass --iou {args.class_name}=<thr>")
    try:
        cfg = EvalConfig(
            class_name=args.class_name,
            difficulty_level=args.difficulty,
            iou_kind=kind,
            iou_threshold=threshold,
            recall_samples=args.recall_samples,
            ap_points=args.ap_points,
            difficulty_mode=args.difficulty_mode,
        )
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["threshold", "precision", "recall", "similarity"])
    for p in build_pr_curve(frames, cfg):
        w.writerow([f"{p.threshold:.6f}", f"{p.precision:.6f}", f"{p.recall:.6f}", f"{p.similarity:.6f}"])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _vector(text: str) -> list[float]:
    return [float(t) for t in text.replace(";", " ").split()]


def evaluate_loss_row(fields: list[str]) -> tuple[float, float]:
    """Return ``(actual, expected)`` for one ``kind,args...,expected`` row.

    Kinds and argument lists::

        focal,p,y[,alpha,gamma],expected
        smoothl1,x,y[,beta],expected
        ce,pred_1;pred_2;...,truth_1;truth_2;...,expected
        total,cls,reg,dir,expected
    """
    kind, args, expected = fields[0].strip().lower(), fields[1:-1], float(fields[-1])
    if kind == "focal" and len(args) in (2, 4):
        params = FocalParams(float(args[2]), float(args[3])) if len(args) == 4 else FocalParams()
        y = int(args[1])
        return focal_loss(float(args[0]), y, params), expected
    if kind in ("smoothl1", "smooth_l1") and len(args) in (2, 3):
        params = SmoothL1Params(float(args[2])) if len(args) == 3 else SmoothL1Params()
        return smooth_l1(float(args[0]), float(args[1]), params), expected
    if kind in ("ce", "cross_entropy") and len(args) == 2:
        return cross_entropy(_vector(args[0]), _vector(args[1])), expected
    if kind == "total" and len(args) == 3:
        return total_loss(*(float(a) for a in args)), expected
    raise ValueError(f"unknown kind or wrong argument count: {','.join(fields)}")


def cmd_loss_check(args) -> int:
    try:
        text = args.input.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {args.input}: {exc.strerror}") from None

    results = []
    for line_no, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        if line_no == 1 and row[0].strip().lower() == "kind":
            continue
        try:
            actual, expected = evaluate_loss_row(row)
        except (ValueError, IndexError) as exc:
            raise UsageError(f"{args.input}:{line_no}: malformed row: {exc}") from None
        results.append((line_no, row, actual, expected))

    failures = 0
    for line_no, row, actual, expected in results:
        ok = math.isfinite(actual) and abs(actual - expected) <= LOSS_TOLERANCE
        failures += not ok
        status = "ok" if ok else "MISMATCH"
        print(f"line {line_no}: {status} {row[0]} actual={actual!r} expected={expected!r}")
    print(f"{len(results) - failures}/{len(results)} rows within {LOSS_TOLERANCE:g}")
    return EXIT_OK if failures == 0 else EXIT_FAIL


COMMANDS = {"evaluate": cmd_evaluate, "pr-export": cmd_pr_export, "loss-check": cmd_loss_check}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    log.debug("kernel backend: %s", backend_name())
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"kittieval: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KittiFormatError, OSError) as exc:
        print(f"kittieval: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - contract: internal failures exit 1
        log.debug("evaluation failed", exc_info=True)
        print(f"kittieval: evaluation failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
