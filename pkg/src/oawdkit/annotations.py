"""Reading, writing and converting weapon annotations.

Four on-disk layouts are handled:

* ``rolabelimg``: one XML per image, ``object/robndbox`` with ``cx, cy, w, h``
  and ``angle`` in radians.
* ``voc``: one Pascal-VOC XML per image, ``object/bndbox`` horizontal boxes.
* ``yolo``: one text file per image, ``class_idx cx cy w h [angle_norm]``
  normalized by the image size, with a ``sizes.csv`` sidecar carrying the
  image names and dimensions.
* ``csv``: a single ``annotations.csv`` with one row per object and the
  angle quantized to an 8-way class.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import os
import xml.etree.ElementTree as ET
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .angles import AngleClass, AngleScheme, bin_angle, decode_angle_regression, encode_angle_regression, representative_angle
from .geometry import HorizontalBox, OrientedBox, envelope
from .targets import OBJECT_CLASSES, WeaponClass

log = logging.getLogger(__name__)

FORMATS = ("rolabelimg", "voc", "yolo", "csv")
CSV_HEADER = ["image_name", "width", "height", "x1", "y1", "x2", "y2", "class", "angle_class"]
CSV_FILENAME = "annotations.csv"
YOLO_SIZES_FILENAME = "sizes.csv"
YOLO_CLASSES = (WeaponClass.GUN, WeaponClass.PISTOL)

AnnotatedObject = Tuple[WeaponClass, OrientedBox]


class AnnotationError(ValueError):
    """Base class for annotation parsing errors."""


class XMLSyntaxError(AnnotationError):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class FieldError(AnnotationError):
    pass


class ClassNameError(AnnotationError):
    pass


class RangeError(AnnotationError):
    pass


class LineError(AnnotationError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class FormatError(AnnotationError):
    pass


@dataclass(frozen=True)
class Annotation:
    image_name: str
    image_width: int
    image_height: int
    objects: Tuple[AnnotatedObject, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))


@dataclass(frozen=True)
class AnnotationSet:
    annotations: Tuple[Annotation, ...] = ()
    source_format: str = ""

    def __post_init__(self):
        object.__setattr__(self, "annotations", tuple(self.annotations))

    def __len__(self):
        return len(self.annotations)

    def __iter__(self):
        return iter(self.annotations)

    def by_name(self) -> Dict[str, Annotation]:
        return {a.image_name: a for a in self.annotations}


def format_number(value: float) -> str:
    """Shortest text that parses back to the same float; integers without ``.0``."""
    value = float(value)
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


# -- shared checks -----------------------------------------------------------

def _image_size(width_text, height_text, where: str) -> Tuple[int, int]:
    try:
        w, h = float(width_text), float(height_text)
    except (TypeError, ValueError):
        raise FieldError(f"{where}: image width/height missing or not numeric") from None
    if not (w.is_integer() and h.is_integer()) or w <= 0 or h <= 0:
        raise RangeError(f"{where}: image size must be positive integers, got {width_text}x{height_text}")
    return int(w), int(h)


def _inside_image(box: OrientedBox, width: int, height: int) -> bool:
    env = envelope(box)
    return env.xmax > 0 and env.ymax > 0 and env.xmin < width and env.ymin < height


def _make_box(cx, cy, w, h, theta, where: str, width: int, height: int) -> OrientedBox:
    try:
        box = OrientedBox(cx, cy, w, h, theta)
    except ValueError as exc:
        raise RangeError(f"{where}: {exc}") from None
    if not _inside_image(box, width, height):
        raise RangeError(f"{where}: box lies outside the {width}x{height} image")
    return box


def _class_or_skip(name: str, where: str, strict: bool) -> Optional[WeaponClass]:
    try:
        return WeaponClass.parse(name)
    except KeyError:
        if strict:
            raise ClassNameError(f"{where}: unknown class {name!r}") from None
        log.warning("%s: skipping unknown class %r", where, name)
        return None


# -- XML ---------------------------------------------------------------------

def _parse_xml(xml_text: Union[str, bytes]) -> ET.Element:
    try:
        return ET.fromstring(xml_text)
    except ET.ParseError as exc:
        line = exc.position[0] if exc.position else None
        raise XMLSyntaxError(f"malformed XML: {exc}", line) from None


def _float_field(parent: ET.Element, tag: str, where: str) -> float:
    text = parent.findtext(tag)
    if text is None or not text.strip():
        raise FieldError(f"{where}: missing field {tag!r}")
    try:
        value = float(text)
    except ValueError:
        raise FieldError(f"{where}: field {tag!r} is not a number: {text!r}") from None
    if not math.isfinite(value):
        raise FieldError(f"{where}: field {tag!r} is not finite")
    return value


def _xml_header(root: ET.Element, source: Optional[str]) -> Tuple[str, int, int]:
    name = (root.findtext("filename") or "").strip()
    if not name:
        if source is None:
            raise FieldError("annotation has no filename")
        name = source
    size = root.find("size")
    if size is None:
        raise FieldError(f"{name}: missing size element")
    width, height = _image_size(size.findtext("width"), size.findtext("height"), name)
    return name, width, height


def parse_rolabelimg(xml_text: Union[str, bytes], strict: bool = True, source: Optional[str] = None) -> Annotation:
    """Parse one roLabelImg XML document.

    Objects stored by the tool as plain ``bndbox`` (unrotated) are read with
    angle 0. ``source`` stands in for a missing ``filename`` element.
    """
    root = _parse_xml(xml_text)
    name, width, height = _xml_header(root, source)
    objects = []
    for index, obj in enumerate(root.findall("object")):
        where = f"{name}: object {index}"
        label = _class_or_skip(obj.findtext("name") or "", where, strict)
        if label is None:
            continue
        rbox = obj.find("robndbox")
        if rbox is not None:
            cx, cy, w, h, angle = (_float_field(rbox, tag, where) for tag in ("cx", "cy", "w", "h", "angle"))
            box = _make_box(cx, cy, w, h, math.degrees(angle), where, width, height)
        elif obj.find("bndbox") is not None:
            box = _voc_box(obj.find("bndbox"), where, width, height)
        else:
            raise FieldError(f"{where}: missing robndbox")
        objects.append((label, box))
    return Annotation(name, width, height, objects)


def _voc_box(bnd: ET.Element, where: str, width: int, height: int) -> OrientedBox:
    xmin, ymin, xmax, ymax = (_float_field(bnd, tag, where) for tag in ("xmin", "ymin", "xmax", "ymax"))
    if xmin >= xmax or ymin >= ymax:
        raise FieldError(f"{where}: empty bndbox ({xmin}, {ymin}, {xmax}, {ymax})")
    return _make_box((xmin + xmax) / 2.0, (ymin + ymax) / 2.0, xmax - xmin, ymax - ymin, 0.0, where, width, height)


def parse_voc_horizontal(xml_text: Union[str, bytes], strict: bool = True, source: Optional[str] = None) -> Annotation:
    root = _parse_xml(xml_text)
    name, width, height = _xml_header(root, source)
    objects = []
    for index, obj in enumerate(root.findall("object")):
        where = f"{name}: object {index}"
        label = _class_or_skip(obj.findtext("name") or "", where, strict)
        if label is None:
            continue
        bnd = obj.find("bndbox")
        if bnd is None:
            raise FieldError(f"{where}: missing bndbox")
        objects.append((label, _voc_box(bnd, where, width, height)))
    return Annotation(name, width, height, objects)


def _xml_skeleton(a: Annotation) -> ET.Element:
    root = ET.Element("annotation")
    ET.SubElement(root, "folder").text = ""
    ET.SubElement(root, "filename").text = a.image_name
    size = ET.SubElement(root, "size")
    ET.SubElement(size, "width").text = str(a.image_width)
    ET.SubElement(size, "height").text = str(a.image_height)
    ET.SubElement(size, "depth").text = "3"
    ET.SubElement(root, "segmented").text = "0"
    return root


def _xml_object(root: ET.Element, label: WeaponClass, kind: str) -> ET.Element:
    obj = ET.SubElement(root, "object")
    if kind == "robndbox":
        ET.SubElement(obj, "type").text = "robndbox"
    ET.SubElement(obj, "name").text = label.value
    ET.SubElement(obj, "pose").text = "Unspecified"
    ET.SubElement(obj, "truncated").text = "0"
    ET.SubElement(obj, "difficult").text = "0"
    return ET.SubElement(obj, kind)


def _xml_text(root: ET.Element) -> str:
    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


def serialize_rolabelimg(a: Annotation) -> str:
    """roLabelImg XML; the angle is written in radians to 9 significant digits."""
    root = _xml_skeleton(a)
    for label, box in a.objects:
        rbox = _xml_object(root, label, "robndbox")
        for tag, value in (("cx", box.cx), ("cy", box.cy), ("w", box.w), ("h", box.h)):
            ET.SubElement(rbox, tag).text = format_number(value)
        ET.SubElement(rbox, "angle").text = format(math.radians(box.theta), ".9g")
    return _xml_text(root)


def serialize_voc(a: Annotation) -> str:
    """Pascal-VOC XML of each object's horizontal envelope."""
    root = _xml_skeleton(a)
    for label, box in a.objects:
        env = envelope(box)
        bnd = _xml_object(root, label, "bndbox")
        for tag in ("xmin", "ymin", "xmax", "ymax"):
            ET.SubElement(bnd, tag).text = format_number(getattr(env, tag))
    return _xml_text(root)


# -- YOLO --------------------------------------------------------------------

def parse_yolo(lines: Union[str, Iterable[str]], image_width: int, image_height: int,
               image_name: str = "", strict: bool = True) -> Annotation:
    """Parse YOLO label lines, with an optional sixth angle token in [0, 1]."""
    if isinstance(lines, str):
        lines = lines.splitlines()
    width, height = _image_size(image_width, image_height, image_name or "yolo")
    objects = []
    for lineno, line in enumerate(lines, start=1):
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) not in (5, 6):
            raise LineError(f"expected 5 or 6 tokens, got {len(tokens)}", lineno)
        try:
            class_idx = int(tokens[0])
            values = [float(t) for t in tokens[1:]]
        except ValueError:
            raise LineError(f"non-numeric token in {line.strip()!r}", lineno) from None
        if not all(math.isfinite(v) and 0.0 <= v <= 1.0 for v in values):
            raise RangeError(f"line {lineno}: normalized values must lie in [0, 1]")
        if not 0 <= class_idx < len(YOLO_CLASSES):
            if strict:
                raise ClassNameError(f"line {lineno}: unknown class index {class_idx}")
            log.warning("%s line %d: skipping unknown class index %d", image_name, lineno, class_idx)
            continue
        cx, cy, w, h = values[:4]
        theta = decode_angle_regression(values[4]) if len(values) == 5 else 0.0
        box = _make_box(cx * width, cy * height, w * width, h * height, theta,
                        f"line {lineno}", width, height)
        objects.append((YOLO_CLASSES[class_idx], box))
    return Annotation(image_name, width, height, objects)


def serialize_yolo(a: Annotation) -> str:
    out = []
    for label, box in a.objects:
        if label not in YOLO_CLASSES:
            raise ClassNameError(f"{a.image_name}: class {label} has no YOLO index")
        fields = [
            str(YOLO_CLASSES.index(label)),
            repr(box.cx / a.image_width),
            repr(box.cy / a.image_height),
            repr(box.w / a.image_width),
            repr(box.h / a.image_height),
            repr(encode_angle_regression(box.theta)),
        ]
        out.append(" ".join(fields) + "\n")
    return "".join(out)


# -- CSV ---------------------------------------------------------------------

def parse_csv_records(csv_text: str, strict: bool = True) -> AnnotationSet:
    """Parse the per-object CSV; rows sharing an image name merge into one annotation.

    ``x1, y1, x2, y2`` is the unrotated extent of the box; ``angle_class`` is
    turned back into an angle through its representative value.
    """
    reader = csv.reader(io.StringIO(csv_text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != CSV_HEADER:
        raise FormatError(f"CSV header must be {','.join(CSV_HEADER)}")
    grouped: Dict[str, List] = {}
    sizes: Dict[str, Tuple[int, int]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(CSV_HEADER):
            raise LineError(f"expected {len(CSV_HEADER)} fields, got {len(row)}", lineno)
        name, width_text, height_text, *coords, class_name, angle_text = (c.strip() for c in row)
        where = f"line {lineno}"
        width, height = _image_size(width_text, height_text, where)
        if sizes.setdefault(name, (width, height)) != (width, height):
            raise FormatError(f"{where}: image {name!r} listed with two different sizes")
        try:
            x1, y1, x2, y2 = (float(c) for c in coords)
        except ValueError:
            raise FieldError(f"{where}: box coordinates must be numeric") from None
        if not (x1 < x2 and y1 < y2):
            raise FieldError(f"{where}: empty box ({x1}, {y1}, {x2}, {y2})")
        try:
            angle_index = int(angle_text)
        except ValueError:
            raise RangeError(f"{where}: angle_class must be an integer 0..7, got {angle_text!r}") from None
        if not 0 <= angle_index < 8:
            raise RangeError(f"{where}: angle_class {angle_index} outside 0..7")
        grouped.setdefault(name, [])
        label = _class_or_skip(class_name, where, strict)
        if label is None:
            continue
        theta = representative_angle(AngleClass(AngleScheme.MODEL, angle_index))
        box = _make_box((x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1, theta, where, width, height)
        grouped[name].append((label, box))
    annotations = [Annotation(name, *sizes[name], objs) for name, objs in grouped.items()]
    return AnnotationSet(annotations, "csv")


def serialize_csv(annotations: Iterable[Annotation], scheme: AngleScheme = AngleScheme.MODEL) -> str:
    """One row per object; images without objects cannot be represented and are dropped."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for a in annotations:
        for label, box in a.objects:
            writer.writerow([
                a.image_name, a.image_width, a.image_height,
                format_number(box.cx - box.w / 2.0), format_number(box.cy - box.h / 2.0),
                format_number(box.cx + box.w / 2.0), format_number(box.cy + box.h / 2.0),
                label.value, bin_angle(box.theta, scheme).index,
            ])
    return buf.getvalue()


# -- directories -------------------------------------------------------------

@dataclass
class LoadResult:
    annotations: AnnotationSet
    failures: List[Tuple[str, str]] = field(default_factory=list)


def _stem(image_name: str) -> str:
    return Path(image_name).stem or image_name


def _read_sizes(path: Path) -> Dict[str, Tuple[str, int, int]]:
    sizes = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["image_name", "width", "height"]:
            raise FormatError(f"{path}: header must be image_name,width,height")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise LineError("expected image_name,width,height", lineno)
            width, height = _image_size(row[1], row[2], f"{path.name} line {lineno}")
            sizes[_stem(row[0])] = (row[0], width, height)
    return sizes


def load_annotations(path: Union[str, os.PathLike], fmt: str, strict: bool = False,
                     image_size: Optional[Tuple[int, int]] = None, jobs: int = 1) -> LoadResult:
    """Read a directory (or, for ``csv``, a file or directory) of annotations.

    Files are visited in sorted order. Per-file failures are collected in
    ``failures``; with ``strict`` the first one is raised instead.
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}")
    path = Path(path)
    if fmt == "csv":
        csv_path = path / CSV_FILENAME if path.is_dir() else path
        if path.is_dir() and not csv_path.exists():
            return LoadResult(AnnotationSet((), "csv"))
        try:
            parsed = parse_csv_records(csv_path.read_text(encoding="utf-8"), strict=strict)
        except (AnnotationError, OSError, UnicodeDecodeError) as exc:
            if strict:
                raise
            return LoadResult(AnnotationSet((), "csv"), [(str(csv_path), str(exc))])
        return LoadResult(parsed)

    if not path.is_dir():
        raise NotADirectoryError(f"{path} is not a directory")
    suffix = ".txt" if fmt == "yolo" else ".xml"
    files = sorted(p for p in path.iterdir() if p.suffix.lower() == suffix and p.is_file())
    sizes: Dict[str, Tuple[str, int, int]] = {}
    if fmt == "yolo":
        sidecar = path / YOLO_SIZES_FILENAME
        if sidecar.exists():
            sizes = _read_sizes(sidecar)
        elif image_size is None:
            raise FormatError(f"{path}: YOLO labels need {YOLO_SIZES_FILENAME} or an explicit image size")

    def read_one(p: Path) -> Annotation:
        text = p.read_text(encoding="utf-8")
        if fmt == "rolabelimg":
            return parse_rolabelimg(text, strict=strict, source=p.stem)
        if fmt == "voc":
            return parse_voc_horizontal(text, strict=strict, source=p.stem)
        if p.stem in sizes:
            name, width, height = sizes[p.stem]
        elif image_size is not None:
            name, (width, height) = p.stem + ".jpg", image_size
        else:
            raise FormatError(f"{p.name}: no entry in {YOLO_SIZES_FILENAME}")
        return parse_yolo(text, width, height, image_name=name, strict=strict)

    def guarded(p: Path):
        try:
            return read_one(p), None
        except (AnnotationError, OSError, UnicodeDecodeError) as exc:
            if strict:
                raise
            return None, (str(p), str(exc))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(guarded, files))
    else:
        results = [guarded(p) for p in files]
    annotations = [a for a, _ in results if a is not None]
    failures = [f for _, f in results if f is not None]
    return LoadResult(AnnotationSet(annotations, fmt), failures)


def convert(annotations: Union[AnnotationSet, Sequence[Annotation]], target_format: str,
            out_dir: Union[str, os.PathLike], scheme: AngleScheme = AngleScheme.MODEL) -> List[Path]:
    """Write ``annotations`` to ``out_dir`` in ``target_format``; returns written paths.

    Horizontal targets receive each box's envelope. An empty set writes nothing.
    """
    if target_format not in FORMATS:
        raise ValueError(f"unknown format {target_format!r}")
    items = list(annotations)
    if not items:
        return []
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if target_format == "csv":
        target = out / CSV_FILENAME
        target.write_text(serialize_csv(items, scheme), encoding="utf-8", newline="\n")
        return [target]

    stems = Counter(_stem(a.image_name) for a in items)
    clashes = sorted(s for s, n in stems.items() if n > 1)
    if clashes:
        raise FormatError(f"image names collide on file stem: {', '.join(clashes)}")

    writers = {"rolabelimg": (serialize_rolabelimg, ".xml"), "voc": (serialize_voc, ".xml"),
               "yolo": (serialize_yolo, ".txt")}
    serialize, suffix = writers[target_format]
    written = []
    for a in items:
        target = out / (_stem(a.image_name) + suffix)
        target.write_text(serialize(a), encoding="utf-8", newline="\n")
        written.append(target)
    if target_format == "yolo":
        sidecar = out / YOLO_SIZES_FILENAME
        rows = ["image_name,width,height\n"] + [f"{a.image_name},{a.image_width},{a.image_height}\n" for a in items]
        sidecar.write_text("".join(rows), encoding="utf-8", newline="\n")
        written.append(sidecar)
    return written


# -- validation --------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    image_name: str
    object_index: Optional[int]
    kind: str
    message: str


@dataclass
class ValidationReport:
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def counts(self) -> Dict[str, int]:
        return dict(sorted(Counter(v.kind for v in self.violations).items()))

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "counts": self.counts,
            "violations": [
                {"image_name": v.image_name, "object_index": v.object_index, "kind": v.kind, "message": v.message}
                for v in self.violations
            ],
        }


def validate(annotations: Iterable[Annotation]) -> ValidationReport:
    """Report every invariant violation instead of stopping at the first."""
    report = ValidationReport()
    seen: Counter = Counter()
    for a in annotations:
        seen[a.image_name] += 1
        if seen[a.image_name] == 2:
            report.violations.append(Violation(a.image_name, None, "duplicate image name",
                                               f"{a.image_name!r} appears more than once"))
        size_ok = isinstance(a.image_width, int) and isinstance(a.image_height, int) \
            and a.image_width > 0 and a.image_height > 0
        if not size_ok:
            report.violations.append(Violation(a.image_name, None, "non-positive image size",
                                               f"image size {a.image_width}x{a.image_height}"))
        for i, (label, box) in enumerate(a.objects):
            if label not in OBJECT_CLASSES:
                report.violations.append(Violation(a.image_name, i, "unknown class", f"class {label}"))
            problems = box.problems()
            for problem in problems:
                kind = "non-positive box size" if problem.startswith("non-positive") else problem
                report.violations.append(Violation(a.image_name, i, kind, problem))
            if not problems and size_ok and not _inside_image(box, a.image_width, a.image_height):
                report.violations.append(Violation(a.image_name, i, "box outside image",
                                                   "envelope does not intersect the image"))
    return report
