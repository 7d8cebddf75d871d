"""Exit criteria for the package, one test per criterion.

Run ``pytest tests/test_acceptance.py`` to see one PASS/FAIL line per
criterion in the terminal summary.
"""
import json
import math
import random
import time
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from oawdkit.angles import (AngleClass, AngleScheme, bin_angle, decode_angle_regression, encode_angle_regression,
                            representative_angle)
from oawdkit.annotations import (Annotation, AnnotationSet, parse_csv_records, parse_rolabelimg, parse_voc_horizontal,
                                 parse_yolo, serialize_csv, serialize_rolabelimg, serialize_voc, serialize_yolo)
from oawdkit.cli import build_parser, main
from oawdkit.evaluation import DEFAULT_NMS_IOU, Detection, evaluate, rotated_nms
from oawdkit.geometry import OrientedBox, Point2D, corners, envelope, polygon_area, rotate_point, rotated_iou
from oawdkit.stats import summarize
from oawdkit.targets import WeaponClass, smooth_l1, softmax

from oracles import brute_force_evaluate, monte_carlo_iou, shapely_iou
from synth import (ANGLE_BIN_COUNTS, angle_histogram_set, mean_140_set, random_annotation, same_annotation,
                   reference_training_set)

GUN, PISTOL = WeaponClass.GUN, WeaponClass.PISTOL
THRESHOLDS = (0.25, 0.5, 0.75)


def test_ac1_rotated_iou_matches_monte_carlo():
    """AC1 rotated IoU within 0.02 of a 100k-sample Monte-Carlo estimate on 1000 pairs, <= 60 s"""
    rng = np.random.default_rng(20240601)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        c = rng.uniform(0, 100, 2)
        a = (c[0], c[1], *rng.uniform(1, 100, 2), rng.uniform(0, 180))
        off = rng.uniform(-50, 50, 2)
        b = (c[0] + off[0], c[1] + off[1], *rng.uniform(1, 100, 2), rng.uniform(0, 180))
        got = rotated_iou(OrientedBox(*a), OrientedBox(*b))
        worst = max(worst, abs(got - monte_carlo_iou(a, b, rng, samples=100_000)))
    elapsed = time.perf_counter() - start
    print(f"worst |iou - mc| = {worst:.4f}, {elapsed:.1f} s")
    assert worst <= 0.02
    assert elapsed <= 60


def test_ac2_geometry_exactness():
    """AC2 corner-polygon area = w*h (1e-9 rel) on 10k boxes; inverse rotation round trip (1e-9 abs)"""
    rng = np.random.default_rng(2)
    for _ in range(10_000):
        cx, cy = rng.uniform(-1000, 1000, 2)
        w, h = rng.uniform(0.5, 500, 2)
        box = OrientedBox(cx, cy, w, h, rng.uniform(0, 180))
        assert abs(polygon_area(corners(box)) - w * h) <= 1e-9 * w * h
        p = Point2D(*rng.uniform(-1000, 1000, 2))
        c = Point2D(*rng.uniform(-1000, 1000, 2))
        theta = rng.uniform(-360, 360)
        back = rotate_point(rotate_point(p, c, theta), c, -theta)
        assert abs(back.x - p.x) <= 1e-9 and abs(back.y - p.y) <= 1e-9


def test_ac3_angle_codec():
    """AC3 bin(representative(i)) = i for both schemes; model bins tile [0,180) on a 0.01 deg grid; regression round trip"""
    for scheme in AngleScheme:
        for i in range(8):
            assert bin_angle(representative_angle(AngleClass(scheme, i)), scheme).index == i
    # intervals written out independently of the binning arithmetic
    intervals = [(-10.0, 12.5), (12.5, 35.0), (35.0, 57.5), (57.5, 80.0),
                 (80.0, 102.5), (102.5, 125.0), (125.0, 147.5), (147.5, 170.0)]
    for k in range(18_000):
        theta = k / 100
        hits = [i for i, (lo, hi) in enumerate(intervals)
                if any(lo <= theta + shift < hi for shift in (-180.0, 0.0, 180.0))]
        assert len(hits) == 1
        assert bin_angle(theta, AngleScheme.MODEL).index == hits[0]
    rng = np.random.default_rng(3)
    for t in rng.uniform(0, 1, 1000):
        assert abs(encode_angle_regression(decode_angle_regression(t)) - t) <= 1e-9
    for theta in rng.uniform(-1000, 1000, 1000):
        d = abs(decode_angle_regression(encode_angle_regression(theta)) - theta % 180)
        assert min(d, 180 - d) <= 1e-9


def test_ac4_loss_kernels():
    """AC4 smooth L1 on the fixed grid is exact; softmax sums to 1 and is shift-invariant within 1e-12"""
    grid = [-3, -1, -0.5, 0, 0.5, 1, 3]
    assert [smooth_l1(y) for y in grid] == [2.5, 0.5, 0.125, 0, 0.125, 0.5, 2.5]
    rng = np.random.default_rng(4)
    for k in range(1000):
        size = int(rng.integers(1, 12))
        scale = 1000.0 if k % 2 else rng.uniform(0.1, 50)
        a = list(rng.uniform(-scale, scale, size))
        if k % 4 == 1:
            a[0] = 1000.0
        p = softmax(a)
        assert abs(math.fsum(p) - 1.0) <= 1e-12
        c = float(rng.uniform(-1000, 1000))
        shifted = softmax([x + c for x in a])
        assert max(abs(x - y) for x, y in zip(p, shifted)) <= 1e-12


def _constructed_instance(seed):
    rng = random.Random(seed)
    images, dets = {}, []
    for i in range(rng.randint(1, 3)):
        name = f"img{i}"
        gts = []
        for _ in range(rng.randint(1, 4)):
            gts.append((rng.choice([GUN, PISTOL]), (rng.uniform(20, 80), rng.uniform(20, 80),
                                                    rng.uniform(8, 30), rng.uniform(8, 30), rng.uniform(0, 180))))
        images[name] = gts
        for _ in range(rng.randint(0, 8)):
            if gts and rng.random() < 0.75:
                lbl, (cx, cy, w, h, t) = rng.choice(gts)
                if rng.random() < 0.1:
                    lbl = PISTOL if lbl is GUN else GUN
                box = (cx + rng.uniform(-6, 6), cy + rng.uniform(-6, 6), w * rng.uniform(0.7, 1.3),
                       h * rng.uniform(0.7, 1.3), t + rng.uniform(-25, 25))
            else:
                lbl = rng.choice([GUN, PISTOL])
                box = (rng.uniform(10, 90), rng.uniform(10, 90), rng.uniform(5, 30), rng.uniform(5, 30), rng.uniform(0, 180))
            dets.append((name, lbl, round(rng.random(), 2), box))
    return images, dets


def test_ac5_evaluator_matches_brute_force():
    """AC5 evaluate equals an exhaustive-assignment oracle to 1e-12 on 20 instances; mAP monotone in threshold"""
    for seed in range(20):
        images, raw = _constructed_instance(seed)
        gts = AnnotationSet([Annotation(n, 100, 100, [(l, OrientedBox(*b)) for l, b in objs]) for n, objs in images.items()])
        dets = [Detection(n, l, s, OrientedBox(*b)) for n, l, s, b in raw]
        reports = evaluate(dets, gts, THRESHOLDS)
        for report in reports:
            want_map, want_aps = brute_force_evaluate(images, raw, report.iou_threshold, shapely_iou)
            assert abs(report.map - want_map) <= 1e-12, (seed, report.iou_threshold)
            for lbl, ap in want_aps.items():
                assert abs(report.per_class_ap[lbl] - ap) <= 1e-12
        maps = [r.map for r in reports]
        assert maps[0] >= maps[1] >= maps[2], (seed, maps)


def _exact_corpus(seed, n, *, zero_angle=False, representative=False):
    rng = random.Random(seed)
    out = []
    for i in range(n):
        a = random_annotation(rng, f"f{i:03d}.jpg")
        objs = []
        for lbl, b in a.objects:
            theta = 0.0 if zero_angle else (22.5 * rng.randrange(8) if representative else b.theta)
            objs.append((lbl, OrientedBox(b.cx, b.cy, b.w, b.h, theta)))
        out.append(Annotation(a.image_name, a.image_width, a.image_height, objs))
    return out


def test_ac6_format_round_trips():
    """AC6 parse(serialize(a)) = a within 1e-6 on 100-file corpora per format; oriented->VOC equals envelopes exactly"""
    for a in _exact_corpus(61, 100):
        assert same_annotation(parse_rolabelimg(serialize_rolabelimg(a)), a)
        back = parse_yolo(serialize_yolo(a), a.image_width, a.image_height, image_name=a.image_name)
        assert same_annotation(back, a)
    for a in _exact_corpus(62, 100, zero_angle=True):
        back = parse_voc_horizontal(serialize_voc(a))
        assert same_annotation(back, a)
        assert (back.image_width, back.image_height) == (a.image_width, a.image_height)
    corpus = _exact_corpus(63, 100, representative=True)
    parsed = parse_csv_records(serialize_csv(corpus)).annotations
    assert len(parsed) == 100
    for a, b in zip(corpus, parsed):
        assert same_annotation(b, a)
        assert type(b.image_width) is int and type(b.image_height) is int
    for a in _exact_corpus(64, 100):
        root = ET.fromstring(serialize_voc(a))
        for (_, box), obj in zip(a.objects, root.findall("object")):
            bnd = obj.find("bndbox")
            env = envelope(box)
            written = tuple(float(bnd.findtext(t)) for t in ("xmin", "ymin", "xmax", "ymax"))
            assert written == (env.xmin, env.ymin, env.xmax, env.ymax)


def test_ac7_statistics_fixtures():
    """AC7 reference training counts 5149/4341/3206/7547; angle bins 2654/17/2804; mean prints 1.40"""
    s = summarize(reference_training_set())
    assert (s.total_images, s.per_class_objects[GUN], s.per_class_objects[PISTOL], s.total_objects) == (5149, 4341, 3206, 7547)
    h = summarize(angle_histogram_set(), AngleScheme.DATASET).angle_histogram
    assert h == ANGLE_BIN_COUNTS and (h[0], h[4], h[7]) == (2654, 17, 2804)
    assert summarize(mean_140_set()).mean_text == "1.40"


def test_ac8_nms():
    """AC8 NMS is idempotent, reproduces the chain trace, and defaults to IoU 0.5"""
    def box(dx):
        return OrientedBox(50 + dx, 50, 10, 10, 0)

    a, b, c = (Detection("x", GUN, s, box(dx)) for s, dx in ((0.9, 0), (0.8, 3), (0.7, 6)))
    assert rotated_iou(a.box, b.box) >= 0.5 and rotated_iou(b.box, c.box) >= 0.5 and rotated_iou(a.box, c.box) < 0.5
    assert rotated_nms([b, c, a]) == [a, c]
    rng = random.Random(8)
    for _ in range(200):
        dets = [Detection(rng.choice("pq"), rng.choice([GUN, PISTOL]), rng.random(),
                          OrientedBox(rng.uniform(30, 70), rng.uniform(30, 70), rng.uniform(5, 20),
                                      rng.uniform(5, 20), rng.uniform(0, 180)))
                for _ in range(rng.randint(0, 15))]
        once = rotated_nms(dets)
        assert rotated_nms(once) == once
    assert DEFAULT_NMS_IOU == 0.5
    assert rotated_nms.__defaults__ == (0.5,)
    assert build_parser().parse_args(["nms", "d.jsonl"]).nms_iou == 0.5


def _run_thrice(tmp_path, argv_for, outputs_for, capsys):
    blobs = []
    for run, jobs in enumerate(("1", "1", "4")):
        out_dir = tmp_path / f"run{run}"
        out_dir.mkdir()
        assert main(argv_for(out_dir) + ["--jobs", jobs]) == 0
        stdout = capsys.readouterr().out
        blobs.append((stdout, [p.read_bytes() for p in outputs_for(out_dir)]))
    return blobs


def test_ac9_determinism(tmp_path, capsys):
    """AC9 convert/stats/evaluate are byte-identical across repeated and parallel runs"""
    from oawdkit.annotations import convert
    from oawdkit.evaluation import write_detections

    corpus = AnnotationSet(_exact_corpus(91, 40))
    src = tmp_path / "src"
    convert(corpus, "rolabelimg", src)
    rng = random.Random(9)
    dets = [Detection(a.image_name, lbl, round(rng.random(), 3),
                      OrientedBox(b.cx + rng.uniform(-3, 3), b.cy, b.w, b.h, b.theta + rng.uniform(-10, 10)))
            for a in corpus for lbl, b in a.objects]
    with open(tmp_path / "dets.jsonl", "w", encoding="utf-8") as fh:
        write_detections(dets, fh)

    def sorted_files(d):
        return sorted(p for p in d.rglob("*") if p.is_file())

    for fmt in ("csv", "voc", "yolo"):
        (tmp_path / fmt).mkdir()
        runs = _run_thrice(tmp_path / fmt, lambda d: ["convert", str(src), str(d / "out"), "--in-format",
                                                     "rolabelimg", "--out-format", fmt], sorted_files, capsys)
        assert runs[0] == runs[1] == runs[2]
    (tmp_path / "stats").mkdir()
    runs = _run_thrice(tmp_path / "stats", lambda d: ["stats", str(src), "--in-format", "rolabelimg", "--seed", "3",
                                                     "--out-json", str(d / "s.json"), "--out-csv", str(d / "c.csv")],
                      sorted_files, capsys)
    assert runs[0] == runs[1] == runs[2]
    (tmp_path / "eval").mkdir()
    runs = _run_thrice(tmp_path / "eval", lambda d: ["evaluate", "--gt", str(src), "--detections",
                                                    str(tmp_path / "dets.jsonl"), "--out", str(d / "r.json")],
                      sorted_files, capsys)
    assert runs[0] == runs[1] == runs[2]
    assert json.loads(runs[0][1][0])["reports"][0]["iou_threshold"] == 0.25
