"""Seeded synthetic annotation corpora."""
import random

from oawdkit.annotations import Annotation, AnnotationSet
from oawdkit.geometry import OrientedBox
from oawdkit.targets import WeaponClass


def random_annotation(rng: random.Random, name: str, max_objects: int = 4) -> Annotation:
    width, height = rng.choice([(640, 480), (1280, 720), (300, 200)])
    objects = []
    for _ in range(rng.randint(1, max_objects)):
        box = OrientedBox(
            rng.uniform(0.25 * width, 0.75 * width),
            rng.uniform(0.25 * height, 0.75 * height),
            rng.uniform(2, 0.2 * width),
            rng.uniform(2, 0.2 * height),
            rng.uniform(0, 180),
        )
        objects.append((rng.choice([WeaponClass.GUN, WeaponClass.PISTOL]), box))
    return Annotation(name, width, height, objects)


def random_corpus(seed: int, n: int = 100, fmt: str = "rolabelimg") -> AnnotationSet:
    rng = random.Random(seed)
    return AnnotationSet([random_annotation(rng, f"img_{i:04d}.jpg") for i in range(n)], fmt)


def angle_close(a: float, b: float, tol: float) -> bool:
    d = abs(a - b) % 180.0
    return min(d, 180.0 - d) <= tol


def same_annotation(a: Annotation, b: Annotation, px_tol: float = 1e-6, deg_tol: float = 1e-6) -> bool:
    if (a.image_name, a.image_width, a.image_height) != (b.image_name, b.image_width, b.image_height):
        return False
    if len(a.objects) != len(b.objects):
        return False
    for (la, ba), (lb, bb) in zip(a.objects, b.objects):
        if la is not lb:
            return False
        if any(abs(x - y) > px_tol for x, y in zip((ba.cx, ba.cy, ba.w, ba.h), (bb.cx, bb.cy, bb.w, bb.h))):
            return False
        if not angle_close(ba.theta, bb.theta, deg_tol):
            return False
    return True


def reference_training_set() -> AnnotationSet:
    """5149 images holding 4341 Gun and 3206 Pistol objects (7547 total).

    2398 images carry two objects and 2751 carry one.
    """
    labels = [WeaponClass.GUN] * 4341 + [WeaponClass.PISTOL] * 3206
    box = OrientedBox(50, 50, 20, 10, 0)
    annotations, k = [], 0
    for i in range(5149):
        n = 2 if i < 2398 else 1
        annotations.append(Annotation(f"train_{i:05d}.jpg", 100, 100, [(lbl, box) for lbl in labels[k:k + n]]))
        k += n
    assert k == len(labels)
    return AnnotationSet(annotations, "rolabelimg")


# per-bin counts in the 11.25-offset scheme; bins 0, 4 and 7 are the reported ones
ANGLE_BIN_COUNTS = (2654, 1200, 310, 45, 17, 52, 930, 2804)


def angle_histogram_set() -> AnnotationSet:
    """One object per image at the center angle of its dataset-scheme bin."""
    annotations = []
    for index, count in enumerate(ANGLE_BIN_COUNTS):
        box = OrientedBox(50, 50, 20, 10, index * 22.5)
        for j in range(count):
            annotations.append(Annotation(f"a{index}_{j:05d}.jpg", 100, 100, [(WeaponClass.GUN, box)]))
    return AnnotationSet(annotations, "rolabelimg")


def mean_140_set() -> AnnotationSet:
    """Five images with 1, 1, 1, 2, 2 objects: 7 / 5 = 1.40 per image."""
    box = OrientedBox(50, 50, 20, 10, 0)
    counts = (1, 1, 1, 2, 2)
    return AnnotationSet(
        [Annotation(f"m{i}.jpg", 100, 100, [(WeaponClass.PISTOL, box)] * n) for i, n in enumerate(counts)],
        "rolabelimg",
    )
