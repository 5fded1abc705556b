import json

import numpy as np
import pytest

from spatialctx.clustering import (
    ClusterModel,
    FeatureTable,
    kmeans_fit,
    pseudo_label_masks,
    standardize,
    update_pseudo_labels,
)
from spatialctx.errors import (
    EmptyClassError,
    InconsistentInputError,
    InconsistentModelError,
    InsufficientPointsError,
    InvalidArgumentError,
)
from spatialctx.groundtruth import generate_class_masks, generate_detection_mask
from spatialctx.io import load_model, model_from_dict, model_to_dict, save_model

from oracles import spaced_pattern


def table(x, labels=None, ids=None):
    n = len(x)
    return FeatureTable(
        np.arange(n) if ids is None else ids,
        np.zeros(n, dtype=int) if labels is None else labels,
        x,
    )


def two_blobs(rng, n=40, sep=50.0, spread=1.0, dim=4):
    truth = rng.integers(0, 2, n)
    truth[:2] = [0, 1]
    centres = rng.normal(0, 1, (2, dim))
    centres[1] = centres[0] + sep / np.sqrt(dim)
    return centres[truth] + rng.normal(0, spread, (n, dim)), truth


def same_partition(a, b):
    return len(set(zip(a.tolist(), b.tolist()))) == len(set(a.tolist())) == len(set(b.tolist()))


def test_k1_is_the_mean():
    rng = np.random.default_rng(31)
    x = rng.normal(5, 3, (57, 6))
    res = kmeans_fit(table(x), 0, k=1)
    np.testing.assert_allclose(res.centroids[0], x.mean(axis=0), atol=1e-9, rtol=0)
    assert res.assignments.tolist() == [0] * 57


def test_two_blobs_recovered():
    rng = np.random.default_rng(32)
    for trial in range(20):
        x, truth = two_blobs(rng)
        res = kmeans_fit(table(x), 0, k=2, seed=trial)
        assert same_partition(res.assignments, truth)


def test_warm_start_fixed_point():
    rng = np.random.default_rng(33)
    x = rng.random((80, 5))
    first = kmeans_fit(table(x), 0, k=4, seed=1)
    again = kmeans_fit(table(x), 0, k=4, init=first.centroids)
    assert again.n_iter == 1 and again.converged
    assert np.array_equal(again.assignments, first.assignments)
    assert np.array_equal(again.centroids, first.centroids)


def test_assignments_are_nearest_centroid():
    rng = np.random.default_rng(34)
    x = rng.random((100, 3))
    res = kmeans_fit(table(x), 0, k=6, seed=2, max_iters=3)
    for xi, a in zip(x, res.assignments.tolist()):
        d = [float(((xi - c) ** 2).sum()) for c in res.centroids]
        assert d[a] == min(d)


def test_inertia_non_increasing():
    rng = np.random.default_rng(35)
    for s in range(20):
        x = rng.random((60, 3)) ** 3
        h = kmeans_fit(table(x), 0, k=5, seed=s, tol=0).inertia_history
        assert all(b <= a * (1 + 1e-12) for a, b in zip(h, h[1:]))


def test_row_order_does_not_matter():
    rng = np.random.default_rng(36)
    x = rng.random((50, 4))
    perm = rng.permutation(50)
    a = kmeans_fit(table(x), 0, k=3, seed=9)
    b = kmeans_fit(table(x[perm], ids=np.arange(50)[perm]), 0, k=3, seed=9)
    assert np.array_equal(a.centroids, b.centroids)
    assert np.array_equal(a.assignments, b.assignments)


def test_empty_cluster_repair_terminates():
    # two far groups but k=3 warm-started with one centroid nowhere near any point
    x = np.array([[0.0, 0], [0, 1], [1, 0], [10, 10], [10, 11], [11, 10]])
    init = np.array([[0.5, 0.5], [10.5, 10.5], [1000.0, 1000.0]])
    res = kmeans_fit(table(x), 0, k=3, init=init)
    assert np.all(np.abs(res.centroids) < 20)
    assert len(set(res.assignments.tolist())) == 3


def test_fit_errors():
    x = np.zeros((3, 2))
    with pytest.raises(InsufficientPointsError):
        kmeans_fit(table(np.random.default_rng(0).random((3, 2))), 0, k=4)
    with pytest.raises(InsufficientPointsError):
        kmeans_fit(table(x), 0, k=2)  # three identical points
    with pytest.raises(EmptyClassError):
        kmeans_fit(table(x), 1, k=1)
    with pytest.raises(InvalidArgumentError):
        kmeans_fit(table(x), 0, k=0)
    with pytest.raises(InconsistentModelError):
        kmeans_fit(table(x), 0, k=1, init=np.zeros((1, 3)))
    with pytest.raises(InvalidArgumentError):
        FeatureTable([0, 0], [0, 0], np.zeros((2, 2)))


def three_class_table(rng, n=150, dim=18):
    return FeatureTable(rng.permutation(n) + 7, rng.integers(0, 3, n), rng.random((n, dim)))


def test_subclass_ids_span_0_to_14():
    ft = three_class_table(np.random.default_rng(37))
    m = update_pseudo_labels(ft, k=5, seed=0)
    assert set(m.subclass.tolist()) == set(range(15))
    lab = dict(zip(ft.cell_index.tolist(), ft.labels.tolist()))
    for cid, sub in zip(m.cell_index.tolist(), m.subclass.tolist()):
        assert sub // 5 == lab[cid]
    assert m.epoch == 1


def test_update_is_deterministic_and_warm_start_stable():
    ft = three_class_table(np.random.default_rng(38))
    a = update_pseudo_labels(ft, k=5, seed=4)
    assert a == update_pseudo_labels(ft, k=5, seed=4)
    b = update_pseudo_labels(ft, a, k=5, seed=4)
    assert b.epoch == 2
    assert np.array_equal(a.subclass, b.subclass)


def test_update_model_mismatch():
    ft = three_class_table(np.random.default_rng(39))
    m = update_pseudo_labels(ft, k=5)
    with pytest.raises(InconsistentModelError):
        update_pseudo_labels(ft, m, k=4)
    narrow = FeatureTable(ft.cell_index, ft.labels, ft.features[:, :5])
    with pytest.raises(InconsistentModelError):
        update_pseudo_labels(narrow, m, k=5)
    with pytest.raises(InconsistentInputError):
        update_pseudo_labels(ft, k=5, n_classes=2)


def test_standardize():
    rng = np.random.default_rng(40)
    ft = FeatureTable(np.arange(30), np.zeros(30, dtype=int), np.column_stack([rng.random(30) * 9, np.ones(30)]))
    z = standardize(ft).features
    np.testing.assert_allclose(z.mean(axis=0), 0, atol=1e-12)
    np.testing.assert_allclose(z[:, 0].std(), 1)
    assert not z[:, 1].any()


def test_pseudo_masks_k1_equal_class_masks():
    rng = np.random.default_rng(41)
    p = spaced_pattern(rng, 60, 200, 5)
    det = generate_detection_mask(p)
    ft = FeatureTable(np.arange(60), p.labels, rng.random((60, 4)))
    m = update_pseudo_labels(ft, k=1)
    assert pseudo_label_masks(m, det, p) == generate_class_masks(p, det)


def test_pseudo_masks_spot_check():
    rng = np.random.default_rng(42)
    p = spaced_pattern(rng, 120, 250, 4)
    det = generate_detection_mask(p)
    ft = FeatureTable(np.arange(120), p.labels, rng.random((120, 3)))
    m = update_pseudo_labels(ft, k=3, seed=1)
    masks = pseudo_label_masks(m, det, p)
    assert masks.channels == 9
    total = masks.data.sum(axis=2)
    assert np.array_equal(total, det.mask.channel(0))
    sub = m.assignment_of()
    rows, cols = np.nonzero(det.instances)
    for k in rng.choice(len(rows), 50, replace=False).tolist():
        cell = det.instances[rows[k], cols[k]] - 1
        assert masks.data[rows[k], cols[k]].tolist() == [int(j == sub[cell]) for j in range(9)]


def test_pseudo_masks_coverage_gap():
    rng = np.random.default_rng(43)
    p = spaced_pattern(rng, 20, 100, 5)
    det = generate_detection_mask(p)
    ft = FeatureTable(np.arange(19), p.labels[:19], rng.random((19, 2)))
    m = update_pseudo_labels(ft, k=1)
    with pytest.raises(InconsistentInputError):
        pseudo_label_masks(m, det, p)


def test_model_json_round_trip(tmp_path):
    ft = three_class_table(np.random.default_rng(44))
    m = update_pseudo_labels(ft, k=5, seed=3)
    save_model(tmp_path / "m.json", m)
    assert load_model(tmp_path / "m.json") == m
    d = model_to_dict(m)
    json.dumps(d)
    assert model_from_dict(d) == m
    assert isinstance(m, ClusterModel)
