import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spatialctx.core import PointPattern, Window
from spatialctx.errors import InvalidArgumentError
from spatialctx.infer_eval import (
    Prediction,
    Scores,
    evaluate,
    extract_cells,
    label_components,
    match_points,
    merge_reports,
)

from oracles import flood_fill_components, optimal_matching_size


def plant(shape, blobs, n_classes=3, rng=None):
    """Likelihood and class maps with one filled square per ``(row, col, half, cls)``."""
    lk = np.zeros(shape, dtype=np.float32)
    cm = np.zeros(shape + (n_classes,), dtype=np.float32)
    for r, c, h, k in blobs:
        lk[r - h : r + h + 1, c - h : c + h + 1] = 0.9
        cm[r - h : r + h + 1, c - h : c + h + 1, k] = 0.8
    if rng is not None:
        lk += (rng.random(shape) * 0.4).astype(np.float32) * (lk == 0)
        cm += (rng.random(cm.shape) * 0.3).astype(np.float32)
    return lk, cm


# -- components ---------------------------------------------------------------------


def test_empty_mask_has_no_components():
    assert label_components(np.zeros((5, 5), dtype=np.uint8)).n_components == 0


def test_square_centroid():
    m = np.zeros((40, 40), dtype=np.uint8)
    m[20:23, 10:13] = 1  # rows 20..22, cols 10..12
    comp = label_components(m)
    assert comp.n_components == 1
    assert comp.centroids.tolist() == [[11.0, 21.0]]
    assert comp.sizes.tolist() == [9]


def test_diagonal_pixels_connect():
    m = np.eye(4, dtype=np.uint8)
    assert label_components(m).n_components == 1


def test_components_against_flood_fill():
    rng = np.random.default_rng(51)
    for _ in range(30):
        m = rng.random((30, 40)) < rng.uniform(0.05, 0.5)
        comp = label_components(m)
        ref = flood_fill_components(m)
        assert comp.n_components == len(ref)
        assert sorted(comp.sizes.tolist()) == sorted(len(c) for c in ref)
        # same partition: every reference component carries a single label
        for c in ref:
            rows, cols = zip(*c)
            assert len(set(comp.label_map[rows, cols].tolist())) == 1


# -- extraction ---------------------------------------------------------------------


def test_uniform_low_map_gives_nothing():
    lk = np.full((20, 20), 0.3, dtype=np.float32)
    assert extract_cells(lk, np.zeros((20, 20, 3), dtype=np.float32)) == []


def test_four_pixel_blob_dropped():
    lk = np.zeros((20, 20), dtype=np.float32)
    lk[5:7, 5:7] = 0.9
    cm = np.zeros((20, 20, 2), dtype=np.float32)
    assert extract_cells(lk, cm, 0.5, 5) == []
    lk[7, 5] = 0.9
    assert len(extract_cells(lk, cm, 0.5, 5)) == 1


def test_threshold_is_inclusive():
    lk = np.zeros((10, 10), dtype=np.float32)
    lk[2:5, 2:5] = 0.5
    assert len(extract_cells(lk, np.zeros((10, 10, 1), np.float32))) == 1


def test_planted_blobs_recovered():
    rng = np.random.default_rng(52)
    blobs = []
    for i in range(10):
        r, c = 15 + 30 * (i // 5), 15 + 30 * (i % 5)
        blobs.append((r, c, int(rng.integers(1, 4)), int(rng.integers(0, 3))))
    lk, cm = plant((60, 150), blobs, rng=rng)
    preds = extract_cells(lk, cm)
    assert sorted((p.y, p.x, p.cls, p.size) for p in preds) == sorted(
        (float(r), float(c), k, (2 * h + 1) ** 2) for r, c, h, k in blobs
    )


def test_extract_shape_mismatch():
    with pytest.raises(InvalidArgumentError):
        extract_cells(np.zeros((5, 5), np.float32), np.zeros((5, 6, 2), np.float32))


# -- matching ------------------------------------------------------------------------


def test_matching_identity():
    pts = np.random.default_rng(53).random((30, 2)) * 100
    m = match_points(pts, pts, 6)
    assert m.tp == 30 and m.fp == 0 and m.fn == 0
    assert all(i == j for i, j in m.pairs)


def test_matching_worked_example():
    m = match_points([(0, 0), (10, 10)], [(0, 5), (50, 50)], 6)
    assert m.pairs == [(0, 0)]
    assert (m.tp, m.fp, m.fn) == (1, 1, 1)
    s = Scores(m.tp, m.fp, m.fn)
    assert s.precision == s.recall == s.f == 0.5


def test_matching_radius_inclusive_and_ties():
    m = match_points([(0, 0)], [(6, 0)], 6)
    assert m.tp == 1
    # equal distances: the lower gt index wins, then the lower pred index
    m = match_points([(0, 0)], [(3, 0), (-3, 0)], 6)
    assert m.pairs == [(0, 0)]
    m = match_points([(3, 0), (-3, 0)], [(0, 0)], 6)
    assert m.pairs == [(0, 0)]


def test_matching_greedy_is_valid_and_near_optimal():
    rng = np.random.default_rng(54)
    agree = 0
    for _ in range(150):
        p = rng.random((int(rng.integers(0, 9)), 2)) * 20
        g = rng.random((int(rng.integers(0, 9)), 2)) * 20
        m = match_points(p, g, 6)
        assert len({i for i, _ in m.pairs}) == len(m.pairs) == len({j for _, j in m.pairs})
        for i, j in m.pairs:
            assert math.dist(p[i], g[j]) <= 6
        assert m.tp + m.fp == len(p) and m.tp + m.fn == len(g)
        opt = optimal_matching_size(p, g, 6)
        assert m.tp <= opt
        # a greedy maximal matching is at least half of the optimum
        assert 2 * m.tp >= opt
        agree += m.tp == opt
    assert agree > 0


def test_matching_errors():
    with pytest.raises(InvalidArgumentError):
        match_points([(0, 0)], [(0, 0)], 0)


# -- evaluation ------------------------------------------------------------------------


def gt_pattern(rng, n=60, n_classes=3, size=500):
    xy = rng.random((n, 2)) * size
    return PointPattern(xy, rng.integers(0, n_classes, n), Window(0, 0, size, size), n_classes)


def test_perfect_predictions():
    gt = gt_pattern(np.random.default_rng(55))
    preds = [Prediction(x, y, int(c), 9) for (x, y), c in zip(gt.xy.tolist(), gt.labels)]
    rep = evaluate(preds, gt)
    assert rep.detection.f == 1.0
    assert [s.f for s in rep.per_class] == [1.0] * 3
    assert rep.mean_f == 1.0


def test_no_predictions():
    rep = evaluate([], gt_pattern(np.random.default_rng(56)))
    d = rep.detection
    assert (d.precision, d.recall, d.f) == (0.0, 0.0, 0.0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_jitter_within_radius_keeps_f_one(seed):
    rng = np.random.default_rng(seed)
    # spacing > 2 * radius keeps every jittered point closest to its origin
    base = np.array([(x, y) for x in range(10, 500, 20) for y in range(10, 200, 20)], dtype=float)
    labels = rng.integers(0, 3, len(base))
    gt = PointPattern(base, labels, Window(0, 0, 500, 200), 3)
    ang = rng.random(len(base)) * 2 * np.pi
    rad = rng.random(len(base)) * 5.99
    jit = base + np.column_stack([np.cos(ang), np.sin(ang)]) * rad[:, None]
    preds = [Prediction(x, y, int(c), 9) for (x, y), c in zip(jit.tolist(), labels)]
    rep = evaluate(preds, gt, 6)
    assert rep.detection.f == 1.0
    assert all(s.f == 1.0 for s in rep.per_class)


def test_wrong_class_counts_in_detection_only():
    gt = PointPattern([(10, 10), (50, 50)], [0, 1], Window(0, 0, 100, 100), 2)
    rep = evaluate([Prediction(10, 10, 1, 9), Prediction(50, 50, 1, 9)], gt)
    assert rep.detection.f == 1.0
    assert rep.per_class[0].f == 0.0
    assert rep.per_class[1].tp == 1 and rep.per_class[1].fp == 1
    with pytest.raises(InvalidArgumentError):
        evaluate([Prediction(1, 1, 5, 9)], gt)


def test_merge_micro_and_macro():
    gt = PointPattern([(10, 10), (50, 50)], [0, 1], Window(0, 0, 100, 100), 2)
    a = evaluate([Prediction(10, 10, 0, 9), Prediction(50, 50, 1, 9)], gt)
    b = evaluate([], gt)
    micro = merge_reports([a, b])
    assert (micro.detection.tp, micro.detection.fn) == (2, 2)
    assert micro.detection.f == pytest.approx(2 / 3)
    macro = merge_reports([a, b], average="macro")
    assert macro.macro["detection_f"] == 0.5
    assert macro.to_dict()["macro"]["mean_f"] == 0.5
    with pytest.raises(InvalidArgumentError):
        merge_reports([])
    with pytest.raises(InvalidArgumentError):
        merge_reports([a], average="weighted")
