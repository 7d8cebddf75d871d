"""Detection scoring: greedy matching, all-points AP, multi-threshold mAP and rotated NMS."""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, TextIO, Tuple

from .annotations import Annotation, AnnotationSet, format_number
from .geometry import OrientedBox, envelope, horizontal_iou, rotated_iou
from .targets import OBJECT_CLASSES, WeaponClass

DEFAULT_THRESHOLDS = (0.25, 0.5, 0.75)
DEFAULT_NMS_IOU = 0.5
IOU_MODES = ("rotated", "horizontal")


class InputError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class Detection:
    image_name: str
    label: WeaponClass
    score: float
    box: OrientedBox

    def __post_init__(self):
        if self.label not in OBJECT_CLASSES:
            raise ValueError(f"detection class must be Gun or Pistol, got {self.label}")
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise ValueError(f"score must lie in [0, 1], got {self.score}")

    def to_json(self) -> str:
        b = self.box
        record = {"image_name": self.image_name, "class": self.label.value, "score": float(self.score),
                  "cx": float(b.cx), "cy": float(b.cy), "w": float(b.w), "h": float(b.h),
                  "theta_deg": float(b.theta)}
        return json.dumps(record)


def parse_detections(lines: Iterable[str]) -> List[Detection]:
    """Read line-delimited JSON detections; blank lines are skipped."""
    dets = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            det = Detection(
                str(rec["image_name"]),
                WeaponClass.parse(str(rec["class"])),
                float(rec["score"]),
                OrientedBox(float(rec["cx"]), float(rec["cy"]), float(rec["w"]), float(rec["h"]),
                            float(rec.get("theta_deg", 0.0))),
            )
        except json.JSONDecodeError as exc:
            raise InputError(f"line {lineno}: invalid JSON: {exc.msg}") from None
        except KeyError as exc:
            raise InputError(f"line {lineno}: missing or unknown value {exc}") from None
        except (TypeError, ValueError) as exc:
            raise InputError(f"line {lineno}: {exc}") from None
        dets.append(det)
    return dets


def write_detections(dets: Iterable[Detection], out: TextIO) -> None:
    for d in dets:
        out.write(d.to_json() + "\n")


def iou_function(iou_mode: str) -> Callable[[OrientedBox, OrientedBox], float]:
    if iou_mode == "rotated":
        return rotated_iou
    if iou_mode == "horizontal":
        return lambda a, b: horizontal_iou(envelope(a), envelope(b))
    raise ValueError(f"iou_mode must be one of {IOU_MODES}, got {iou_mode!r}")


def _score_order(dets: Sequence[Detection]) -> List[int]:
    return sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))


def _greedy(order: Sequence[int], labels: Sequence[WeaponClass], gt_labels: Sequence[WeaponClass],
            ious: Sequence[Sequence[float]], threshold: float) -> Dict[int, bool]:
    matched = [False] * len(gt_labels)
    flags = {}
    for i in order:
        best_j, best_iou = -1, -1.0
        for j, gt_label in enumerate(gt_labels):
            if matched[j] or gt_label is not labels[i]:
                continue
            if ious[i][j] > best_iou:
                best_j, best_iou = j, ious[i][j]
        if best_j >= 0 and best_iou >= threshold:
            matched[best_j] = True
            flags[i] = True
        else:
            flags[i] = False
    return flags


def match_detections(dets: Sequence[Detection], gts: Annotation, iou_threshold: float,
                     iou_mode: str = "rotated") -> List[bool]:
    """TP/FP flag for each detection, in input order.

    Detections are visited by descending score (ties by input order) and
    each claims the unmatched same-class ground truth it overlaps most.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must lie in (0, 1], got {iou_threshold}")
    for d in dets:
        if d.image_name != gts.image_name:
            raise InputError(f"detection for {d.image_name!r} scored against {gts.image_name!r}")
    iou = iou_function(iou_mode)
    ious = [[iou(d.box, box) for _, box in gts.objects] for d in dets]
    flags = _greedy(_score_order(dets), [d.label for d in dets], [lbl for lbl, _ in gts.objects],
                    ious, iou_threshold)
    return [flags[i] for i in range(len(dets))]


def precision_recall(flags: Sequence[bool], num_gt: int) -> List[Tuple[float, float]]:
    """Cumulative (recall, precision) after each score-ordered detection."""
    if num_gt < 0:
        raise ValueError("num_gt must be non-negative")
    curve = []
    tp = 0
    for n, flag in enumerate(flags, start=1):
        tp += bool(flag)
        curve.append((tp / num_gt if num_gt else 0.0, tp / n))
    return curve


def average_precision(curve: Sequence[Tuple[float, float]]) -> float:
    """Area under the non-increasing precision envelope, all recall points."""
    if not curve:
        return 0.0
    recall = [0.0] + [r for r, _ in curve] + [1.0]
    precision = [0.0] + [p for _, p in curve] + [0.0]
    for i in range(len(precision) - 2, -1, -1):
        precision[i] = max(precision[i], precision[i + 1])
    ap = 0.0
    for i in range(1, len(recall)):
        if recall[i] != recall[i - 1]:
            ap += (recall[i] - recall[i - 1]) * precision[i]
    return ap


@dataclass
class ClassCounts:
    num_gt: int = 0
    num_det: int = 0
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass
class EvalReport:
    """Per-class AP and their mean at one IoU threshold.

    ``map`` averages only classes that have at least one ground truth;
    ``map`` is 0.0 when no class does.
    """

    iou_threshold: float
    per_class_ap: Dict[WeaponClass, float]
    map: float
    counts: Dict[WeaponClass, ClassCounts] = field(default_factory=dict)
    iou_mode: str = "rotated"

    def to_dict(self) -> dict:
        return {
            "iou_threshold": self.iou_threshold,
            "iou_mode": self.iou_mode,
            "map": self.map,
            "per_class_ap": {c.value: ap for c, ap in self.per_class_ap.items()},
            "counts": {c.value: vars(n) for c, n in self.counts.items()},
        }


def _image_ious(dets: Sequence[Detection], ann: Optional[Annotation], iou_mode: str) -> List[List[float]]:
    if ann is None:
        return [[] for _ in dets]
    iou = iou_function(iou_mode)
    return [[iou(d.box, box) if d.label is lbl else 0.0 for lbl, box in ann.objects] for d in dets]


def evaluate(dets: Sequence[Detection], gts: AnnotationSet, thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
             iou_mode: str = "rotated", jobs: int = 1) -> List[EvalReport]:
    """Score detections against ground truth at each threshold.

    Per-class AP pools every image. IoUs are computed per image, optionally
    in a thread pool; the reduction runs in a fixed order so results do not
    depend on ``jobs``.
    """
    thresholds = list(thresholds)
    if not thresholds:
        raise ValueError("at least one IoU threshold is required")
    for t in thresholds:
        if not 0.0 < t <= 1.0:
            raise ValueError(f"IoU threshold must lie in (0, 1], got {t}")
    iou_function(iou_mode)

    by_name = {}
    for a in gts:
        if a.image_name in by_name:
            raise InputError(f"duplicate ground-truth image {a.image_name!r}")
        by_name[a.image_name] = a
    per_image: Dict[str, List[int]] = {}
    for i, d in enumerate(dets):
        if d.image_name not in by_name:
            raise InputError(f"detection references unknown image {d.image_name!r}")
        per_image.setdefault(d.image_name, []).append(i)

    names = list(per_image)

    def work(name: str) -> List[List[float]]:
        return _image_ious([dets[i] for i in per_image[name]], by_name[name], iou_mode)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            iou_tables = dict(zip(names, pool.map(work, names)))
    else:
        iou_tables = {name: work(name) for name in names}

    num_gt = {c: 0 for c in OBJECT_CLASSES}
    for a in gts:
        for lbl, _ in a.objects:
            num_gt[lbl] += 1
    global_order = _score_order(dets)

    reports = []
    for t in thresholds:
        flags: Dict[int, bool] = {}
        for name in names:
            idx = per_image[name]
            local = [dets[i] for i in idx]
            gt_labels = [lbl for lbl, _ in by_name[name].objects]
            local_flags = _greedy(_score_order(local), [d.label for d in local], gt_labels, iou_tables[name], t)
            for k, i in enumerate(idx):
                flags[i] = local_flags[k]
        per_class_ap, counts = {}, {}
        for c in OBJECT_CLASSES:
            class_flags = [flags[i] for i in global_order if dets[i].label is c]
            tp = sum(class_flags)
            counts[c] = ClassCounts(num_gt[c], len(class_flags), tp, len(class_flags) - tp, num_gt[c] - tp)
            per_class_ap[c] = average_precision(precision_recall(class_flags, num_gt[c])) if num_gt[c] else 0.0
        present = [per_class_ap[c] for c in OBJECT_CLASSES if num_gt[c] > 0]
        mean_ap = sum(present) / len(present) if present else 0.0
        reports.append(EvalReport(t, per_class_ap, mean_ap, counts, iou_mode))
    return reports


def format_report_table(reports: Sequence[EvalReport]) -> str:
    """Plain-text table with one column per threshold, values in percent."""
    headers = [f"map@{format_number(r.iou_threshold)}" for r in reports]
    rows = [(c.value, [r.per_class_ap[c] for r in reports]) for c in OBJECT_CLASSES]
    rows.append(("mAP", [r.map for r in reports]))
    width = max([len(h) for h in headers] + [6])
    lines = [f"{'Class':<8}" + "".join(f"{h:>{width + 2}}" for h in headers)]
    for label, values in rows:
        lines.append(f"{label:<8}" + "".join(f"{100.0 * v:>{width + 2}.1f}" for v in values))
    if reports:
        lines.append(f"(IoU mode: {reports[0].iou_mode}; mAP averages classes with ground truth)")
    return "\n".join(lines) + "\n"


def rotated_nms(dets: Sequence[Detection], nms_threshold: float = DEFAULT_NMS_IOU) -> List[Detection]:
    """Greedy per-image, per-class NMS on rotated IoU.

    A lower-scored detection is dropped when its IoU with a kept one reaches
    ``nms_threshold``. Kept detections come back by descending score, ties
    in input order.
    """
    if not 0.0 < nms_threshold <= 1.0:
        raise ValueError(f"nms_threshold must lie in (0, 1], got {nms_threshold}")
    order = _score_order(dets)
    kept_by_group: Dict[Tuple[str, WeaponClass], List[Detection]] = {}
    kept = []
    for i in order:
        d = dets[i]
        group = kept_by_group.setdefault((d.image_name, d.label), [])
        if any(rotated_iou(k.box, d.box) >= nms_threshold for k in group):
            continue
        group.append(d)
        kept.append(d)
    return kept
