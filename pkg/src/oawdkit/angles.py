"""The two 8-bin angle schemes and the [0, 1) angle-regression target."""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

from .geometry import wrap_degrees

NUM_CLASSES = 8
BIN_WIDTH = 22.5


class AngleScheme(enum.Enum):
    """Bin layouts; both are 22.5 degrees wide and differ only in offset.

    ``DATASET`` bins are centered on multiples of 22.5 (first bin starts at
    -11.25). ``MODEL`` bins start at -10, so bin 0 is [-10, 12.5).
    """

    MODEL = "model"
    DATASET = "dataset"

    @property
    def start(self) -> float:
        return -10.0 if self is AngleScheme.MODEL else -11.25


@dataclass(frozen=True, slots=True)
class AngleClass:
    scheme: AngleScheme
    index: int

    def __post_init__(self):
        if not isinstance(self.index, int) or not 0 <= self.index < NUM_CLASSES:
            raise ValueError(f"angle class index must be in 0..7, got {self.index!r}")

    @property
    def bounds(self) -> tuple[float, float]:
        lo = self.scheme.start + self.index * BIN_WIDTH
        return lo, lo + BIN_WIDTH


def wrap_angle(theta: float) -> float:
    return wrap_degrees(theta)


def bin_angle(theta: float, scheme: AngleScheme = AngleScheme.MODEL) -> AngleClass:
    """Discretize an angle in degrees. Bins are half-open, lower bound inclusive."""
    # shift so the scheme's first boundary sits at 0, then re-wrap
    offset = wrap_degrees(wrap_degrees(theta) - scheme.start)
    index = int(offset // BIN_WIDTH)
    return AngleClass(scheme, min(index, NUM_CLASSES - 1))


def representative_angle(c: AngleClass) -> float:
    """Fixed angle drawn for a class: 0, 22.5, ..., 157.5 degrees."""
    return c.index * BIN_WIDTH


def encode_angle_regression(theta: float) -> float:
    """Normalize an angle to [0, 1) by the 180 degree range."""
    t = wrap_degrees(theta) / 180.0
    return t if t < 1.0 else 0.0


def decode_angle_regression(t: float) -> float:
    """Inverse of :func:`encode_angle_regression`.

    Values outside [0, 1) are wrapped modulo 1 and a ``RuntimeWarning`` is
    emitted.
    """
    if not math.isfinite(t):
        raise ValueError(f"non-finite regression target {t!r}")
    if not 0.0 <= t < 1.0:
        warnings.warn(f"angle regression target {t} outside [0, 1); wrapped", RuntimeWarning, stacklevel=2)
        t = t % 1.0
        if t >= 1.0:
            t = 0.0
    return wrap_degrees(t * 180.0)
