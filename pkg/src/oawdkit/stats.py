"""Dataset summaries (class counts, angle histogram, objects per image) and the seeded split."""
from __future__ import annotations

import csv
import io
import math
import random
from dataclasses import dataclass
from typing import Dict, List, Tuple

from .angles import NUM_CLASSES, AngleScheme, bin_angle
from .annotations import AnnotationSet
from .targets import OBJECT_CLASSES, WeaponClass


@dataclass(frozen=True)
class DatasetSummary:
    total_images: int
    per_class_objects: Dict[WeaponClass, int]
    total_objects: int
    angle_histogram: Tuple[int, ...]
    scheme: AngleScheme
    min_per_image: int
    max_per_image: int
    mean_per_image: float

    @property
    def mean_text(self) -> str:
        return f"{self.mean_per_image:.2f}"

    def to_dict(self) -> dict:
        return {
            "total_images": self.total_images,
            "per_class_objects": {c.value: n for c, n in self.per_class_objects.items()},
            "total_objects": self.total_objects,
            "angle_scheme": self.scheme.value,
            "angle_histogram": list(self.angle_histogram),
            "weapons_per_image": {
                "min": self.min_per_image,
                "max": self.max_per_image,
                "mean": self.mean_text,
            },
        }

    def chart_csv(self) -> str:
        """Long-form rows for bar/pie charts: ``chart,label,count``."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["chart", "label", "count"])
        for c, n in self.per_class_objects.items():
            writer.writerow(["class", c.value, n])
        for i, n in enumerate(self.angle_histogram):
            writer.writerow(["angle_class", i, n])
        return buf.getvalue()


def summarize(annotations: AnnotationSet, scheme: AngleScheme = AngleScheme.MODEL) -> DatasetSummary:
    per_class = {c: 0 for c in OBJECT_CLASSES}
    histogram = [0] * NUM_CLASSES
    per_image = []
    for a in annotations:
        per_image.append(len(a.objects))
        for label, box in a.objects:
            per_class[label] = per_class.get(label, 0) + 1
            histogram[bin_angle(box.theta, scheme).index] += 1
    total = sum(per_class.values())
    return DatasetSummary(
        total_images=len(per_image),
        per_class_objects=per_class,
        total_objects=total,
        angle_histogram=tuple(histogram),
        scheme=scheme,
        min_per_image=min(per_image, default=0),
        max_per_image=max(per_image, default=0),
        mean_per_image=total / len(per_image) if per_image else 0.0,
    )


def split(annotations: AnnotationSet, train_fraction: float = 0.8, seed: int = 0) -> Tuple[AnnotationSet, AnnotationSet]:
    """Image-level random split.

    Indices are shuffled with ``random.Random(seed).shuffle``; the first
    ``round(train_fraction * N)`` (halves rounded up) go to training. Both
    halves keep the input order.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    items = list(annotations)
    indices = list(range(len(items)))
    random.Random(seed).shuffle(indices)
    n_train = math.floor(train_fraction * len(items) + 0.5)
    train_idx = set(indices[:n_train])
    train: List = [a for i, a in enumerate(items) if i in train_idx]
    test: List = [a for i, a in enumerate(items) if i not in train_idx]
    fmt = annotations.source_format
    return AnnotationSet(train, fmt), AnnotationSet(test, fmt)
