"""Proposal labeling, box-offset encoding and the scalar loss kernels."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from .geometry import HorizontalBox, horizontal_iou

POSITIVE_IOU = 0.7
TOP_PROPOSALS = 300


class WeaponClass(enum.Enum):
    GUN = "Gun"
    PISTOL = "Pistol"
    BACKGROUND = "Background"

    @classmethod
    def parse(cls, name: str) -> "WeaponClass":
        """Case-insensitive lookup of an object class (never Background)."""
        key = name.strip().lower()
        for member in (cls.GUN, cls.PISTOL):
            if member.value.lower() == key:
                return member
        raise KeyError(name)

    def __str__(self):
        return self.value


OBJECT_CLASSES = (WeaponClass.GUN, WeaponClass.PISTOL)


@dataclass(frozen=True, slots=True)
class BoxOffsets:
    tx: float
    ty: float
    tw: float
    th: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self):
            raise ValueError(f"non-finite offsets {tuple(self)}")

    def __iter__(self):
        return iter((self.tx, self.ty, self.tw, self.th))


@dataclass(frozen=True, slots=True)
class LabeledProposal:
    box: HorizontalBox
    label: WeaponClass
    matched_gt_index: Optional[int]
    overlap: float

    def __post_init__(self):
        if self.label is not WeaponClass.BACKGROUND and (
            self.matched_gt_index is None or self.overlap < POSITIVE_IOU
        ):
            raise ValueError("object label requires a matched ground truth with IoU >= 0.7")


def rpn_label(proposal: HorizontalBox, gts: Sequence[Tuple[WeaponClass, HorizontalBox]]) -> LabeledProposal:
    """Label a proposal Gun/Pistol when its best IoU reaches 0.7, else Background.

    Ties in IoU go to the lower ground-truth index. ``overlap`` is the best
    IoU even for background proposals.
    """
    best_index, best_iou = None, 0.0
    for i, (_, gt_box) in enumerate(gts):
        iou = horizontal_iou(proposal, gt_box)
        if iou > best_iou:
            best_index, best_iou = i, iou
    if best_index is not None and best_iou >= POSITIVE_IOU:
        return LabeledProposal(proposal, gts[best_index][0], best_index, best_iou)
    return LabeledProposal(proposal, WeaponClass.BACKGROUND, best_index, best_iou)


def select_top_proposals(labeled: Sequence[LabeledProposal], k: int = TOP_PROPOSALS) -> List[LabeledProposal]:
    """Keep proposals whose overlap exceeds 0.7, best ``k`` first (stable)."""
    if k <= 0:
        raise ValueError("k must be positive")
    kept = [p for p in labeled if p.overlap > POSITIVE_IOU]
    # sorted() is stable, so equal overlaps keep input order
    return sorted(kept, key=lambda p: -p.overlap)[:k]


def _center_size(b: HorizontalBox) -> Tuple[float, float, float, float]:
    cx, cy = b.center
    return cx, cy, b.width, b.height


def encode_box_offsets(anchor: HorizontalBox, gt: HorizontalBox) -> BoxOffsets:
    ax, ay, aw, ah = _center_size(anchor)
    gx, gy, gw, gh = _center_size(gt)
    return BoxOffsets((gx - ax) / aw, (gy - ay) / ah, math.log(gw / aw), math.log(gh / ah))


def decode_box_offsets(anchor: HorizontalBox, t: BoxOffsets) -> HorizontalBox:
    ax, ay, aw, ah = _center_size(anchor)
    cx = ax + t.tx * aw
    cy = ay + t.ty * ah
    w = aw * math.exp(t.tw)
    h = ah * math.exp(t.th)
    if not (w > 0 and h > 0):
        raise ValueError(f"decoded box has non-positive size ({w}, {h})")
    return HorizontalBox(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)


def smooth_l1(y: float) -> float:
    ay = abs(y)
    return 0.5 * y * y if ay < 1.0 else ay - 0.5


def box_regression_loss(t: BoxOffsets, v: BoxOffsets) -> float:
    return sum(smooth_l1(a - b) for a, b in zip(t, v))


def softmax(a: Sequence[float]) -> List[float]:
    if len(a) == 0:
        raise ValueError("softmax of an empty vector")
    top = max(a)
    exps = [math.exp(x - top) for x in a]
    total = math.fsum(exps)
    return [e / total for e in exps]


def relu(x: float) -> float:
    return x if x > 0.0 else 0.0
