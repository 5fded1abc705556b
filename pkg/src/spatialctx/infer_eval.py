"""From network output maps to cell predictions, and point-matching F-scores."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .core import PointPattern, Window, build_index, pair_distance
from .errors import InvalidArgumentError
from .raster import RasterMap

DEFAULT_THRESHOLD = 0.5
DEFAULT_MIN_SIZE = 5
DEFAULT_MATCH_RADIUS = 6.0

_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True, eq=False)
class ComponentLabeling:
    label_map: np.ndarray  # (H, W) int32, 0 = background
    n_components: int
    centroids: np.ndarray  # (n, 2) as (x, y) = (col, row)
    sizes: np.ndarray


@dataclass(frozen=True)
class Prediction:
    x: float
    y: float
    cls: int
    size: int


def _single_channel(m, name: str) -> np.ndarray:
    a = m.data if isinstance(m, RasterMap) else np.asarray(m)
    if a.ndim == 3:
        if a.shape[2] != 1:
            raise InvalidArgumentError(f"{name} must have a single channel, got {a.shape[2]}")
        a = a[:, :, 0]
    if a.ndim != 2:
        raise InvalidArgumentError(f"{name} must be 2D")
    return a


def label_components(mask) -> ComponentLabeling:
    """8-connected components; centroids are mean pixel coordinates."""
    m = _single_channel(mask, "mask") != 0
    labels, n = ndimage.label(m, structure=_EIGHT)
    labels = labels.astype(np.int32)
    if n == 0:
        return ComponentLabeling(labels, 0, np.zeros((0, 2)), np.zeros(0, dtype=np.int64))
    rows, cols = np.nonzero(labels)
    lab = labels[rows, cols]
    sizes = np.bincount(lab, minlength=n + 1)[1:]
    cx = np.bincount(lab, weights=cols, minlength=n + 1)[1:] / sizes
    cy = np.bincount(lab, weights=rows, minlength=n + 1)[1:] / sizes
    return ComponentLabeling(labels, int(n), np.column_stack([cx, cy]), sizes.astype(np.int64))


def _round_half_up(v):
    return int(math.floor(v + 0.5))


def extract_cells(
    likelihood,
    class_map,
    threshold: float = DEFAULT_THRESHOLD,
    min_size: int = DEFAULT_MIN_SIZE,
) -> list[Prediction]:
    """Threshold the detection map (``>= threshold``), drop components smaller than
    ``min_size`` pixels and emit one prediction per remaining component.

    The class is the argmax of ``class_map`` at the centroid pixel (lowest
    channel wins ties).  Coordinates are in pixels: ``x`` = column, ``y`` = row.
    """
    lk = _single_channel(likelihood, "likelihood").astype(np.float64)
    cm = class_map.data if isinstance(class_map, RasterMap) else np.asarray(class_map)
    if cm.ndim == 2:
        cm = cm[:, :, None]
    if cm.shape[:2] != lk.shape:
        raise InvalidArgumentError(
            f"likelihood is {lk.shape} but class map is {cm.shape[:2]}"
        )
    if not 0 < threshold < 1:
        raise InvalidArgumentError("threshold must lie in (0, 1)")
    comps = label_components(lk >= threshold)
    H, W = lk.shape
    out = []
    for i in range(comps.n_components):
        size = int(comps.sizes[i])
        if size < min_size:
            continue
        x, y = comps.centroids[i]
        col = min(max(_round_half_up(x), 0), W - 1)
        row = min(max(_round_half_up(y), 0), H - 1)
        cls = int(np.argmax(cm[row, col]))
        out.append(Prediction(float(x), float(y), cls, size))
    return out


@dataclass
class Matching:
    pairs: list  # (pred index, gt index)
    distances: list
    unmatched_pred: list
    unmatched_gt: list

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def fp(self) -> int:
        return len(self.unmatched_pred)

    @property
    def fn(self) -> int:
        return len(self.unmatched_gt)


def _candidate_edges(pred: np.ndarray, gt: np.ndarray, radius: float):
    """All (pred, gt, distance) with distance <= radius, found through a grid index on gt."""
    lo = np.minimum(pred.min(axis=0), gt.min(axis=0))
    hi = np.maximum(pred.max(axis=0), gt.max(axis=0))
    # padded so that lo + span never rounds below hi
    span = hi - lo + 1.0
    w = Window(float(lo[0]), float(lo[1]), float(span[0]), float(span[1]))
    gt_pat = PointPattern(gt, np.zeros(len(gt), dtype=np.int64), w, 1)
    index = build_index(gt_pat, radius)
    src, tgt = index.candidate_pairs(pred, radius)
    d = pair_distance(gt[tgt, 0] - pred[src, 0], gt[tgt, 1] - pred[src, 1])
    ok = d <= radius
    return src[ok], tgt[ok], d[ok]


def match_points(pred, gt, radius: float = DEFAULT_MATCH_RADIUS) -> Matching:
    """Greedy one-to-one matching within ``radius`` (inclusive).

    Candidate pairs are taken in order of increasing distance, ties broken by
    lower gt index and then lower pred index; a pair is accepted when both of
    its points are still free.
    """
    if not radius > 0:
        raise InvalidArgumentError("match radius must be positive")
    p = np.asarray(pred, dtype=np.float64).reshape(-1, 2)
    g = np.asarray(gt, dtype=np.float64).reshape(-1, 2)
    pairs, dists = [], []
    if len(p) and len(g):
        src, tgt, d = _candidate_edges(p, g, radius)
        order = np.lexsort((src, tgt, d))
        p_used = np.zeros(len(p), dtype=bool)
        g_used = np.zeros(len(g), dtype=bool)
        for e in order.tolist():
            i, j = int(src[e]), int(tgt[e])
            if p_used[i] or g_used[j]:
                continue
            p_used[i] = g_used[j] = True
            pairs.append((i, j))
            dists.append(float(d[e]))
        unmatched_pred = np.flatnonzero(~p_used).tolist()
        unmatched_gt = np.flatnonzero(~g_used).tolist()
    else:
        unmatched_pred = list(range(len(p)))
        unmatched_gt = list(range(len(g)))
    return Matching(pairs, dists, unmatched_pred, unmatched_gt)


@dataclass
class Scores:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def __add__(self, other: "Scores") -> "Scores":
        return Scores(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f": self.f,
        }


@dataclass
class EvalReport:
    detection: Scores
    per_class: list = field(default_factory=list)
    # set only for macro-averaged reports; otherwise derived from the counts
    macro: dict | None = None

    @property
    def mean_f(self) -> float:
        if self.macro is not None:
            return self.macro["mean_f"]
        return float(np.mean([s.f for s in self.per_class])) if self.per_class else 0.0

    def to_dict(self) -> dict:
        out = {
            "detection": self.detection.to_dict(),
            "per_class": [s.to_dict() for s in self.per_class],
            "mean_f": self.mean_f,
        }
        if self.macro is not None:
            out["macro"] = self.macro
        return out


def _pred_arrays(preds):
    if len(preds) == 0:
        return np.zeros((0, 2)), np.zeros(0, dtype=np.int64)
    xy = np.array([[p.x, p.y] for p in preds], dtype=np.float64)
    cls = np.array([p.cls for p in preds], dtype=np.int64)
    return xy, cls


def evaluate(preds, gt: PointPattern, radius: float = DEFAULT_MATCH_RADIUS) -> EvalReport:
    """Detection scores from class-agnostic matching; per-class scores from
    matching only the predictions and annotations of that class."""
    pxy, pcls = _pred_arrays(preds)
    if len(pcls) and (pcls.min() < 0 or pcls.max() >= gt.n_classes):
        raise InvalidArgumentError("prediction classes outside [0, n_classes)")
    m = match_points(pxy, gt.xy, radius)
    det = Scores(m.tp, m.fp, m.fn)
    per_class = []
    for c in range(gt.n_classes):
        mc = match_points(pxy[pcls == c], gt.xy[gt.labels == c], radius)
        per_class.append(Scores(mc.tp, mc.fp, mc.fn))
    return EvalReport(det, per_class)


def merge_reports(reports, average: str = "micro") -> EvalReport:
    """Combine per-patch reports.

    ``micro`` pools TP/FP/FN before recomputing F; ``macro`` additionally
    records the mean of the per-patch F-scores under ``report.macro``.
    """
    reports = list(reports)
    if not reports:
        raise InvalidArgumentError("no reports to merge")
    if average not in ("micro", "macro"):
        raise InvalidArgumentError(f"unknown averaging {average!r}")
    n_cls = len(reports[0].per_class)
    det = Scores()
    per_class = [Scores() for _ in range(n_cls)]
    for r in reports:
        det = det + r.detection
        per_class = [a + b for a, b in zip(per_class, r.per_class)]
    merged = EvalReport(det, per_class)
    if average == "macro":
        merged.macro = {
            "detection_f": float(np.mean([r.detection.f for r in reports])),
            "per_class_f": [float(np.mean([r.per_class[c].f for r in reports])) for c in range(n_cls)],
            "mean_f": float(np.mean([r.mean_f for r in reports])),
        }
    return merged

