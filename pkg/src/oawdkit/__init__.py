"""Oriented-box geometry, annotation formats and detection scoring for weapon datasets."""

__version__ = "0.1.0"

from .angles import AngleClass, AngleScheme, bin_angle, decode_angle_regression, encode_angle_regression, representative_angle, wrap_angle
from .annotations import Annotation, AnnotationSet, convert, load_annotations, validate
from .evaluation import Detection, EvalReport, evaluate, match_detections, rotated_nms
from .geometry import HorizontalBox, OrientedBox, Point2D, QuadPolygon, corners, envelope, horizontal_iou, rotated_iou
from .stats import DatasetSummary, split, summarize
from .targets import WeaponClass
