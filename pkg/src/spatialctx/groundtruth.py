"""Training targets built from point annotations.

Every annotation is dilated into a filled square, shrunk for crowded cells so
that squares never overlap.  The per-class masks, pseudo-label masks and the
K-vector map are all painted from the same squares, so any positive pixel can
be traced back to exactly one annotation.

Raster pixel ``(row, col)`` corresponds to pattern coordinate
``(window.x0 + col, window.y0 + row)``; a point goes to the nearest pixel
(halves rounded up) and points on the far window edge are clamped onto the
last row/column.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import PointPattern, Window, build_index
from .errors import CoincidentPointsError, InconsistentInputError, InvalidArgumentError
from .raster import RasterMap

DEFAULT_MAX_HALFWIDTH = 4
DEFAULT_MIN_GAP = 1


def raster_shape(window: Window) -> tuple[int, int]:
    return int(math.ceil(window.height)), int(math.ceil(window.width))


def pixel_positions(pattern: PointPattern) -> np.ndarray:
    """Integer ``(col, row)`` pixel of every point."""
    h, w = raster_shape(pattern.window)
    col = np.floor(pattern.x - pattern.window.x0 + 0.5).astype(np.int64)
    row = np.floor(pattern.y - pattern.window.y0 + 0.5).astype(np.int64)
    return np.column_stack([np.clip(col, 0, w - 1), np.clip(row, 0, h - 1)])


@dataclass(frozen=True, eq=False)
class DetectionMask:
    """Binary detection target plus the bookkeeping needed to reuse its squares.

    ``instances`` holds ``i + 1`` on the pixels painted for annotation ``i``
    and 0 on background.
    """

    mask: RasterMap
    instances: np.ndarray
    halfwidths: np.ndarray
    pixels: np.ndarray
    nn_chebyshev: np.ndarray


def _nearest_chebyshev(pixels: np.ndarray, cap: int) -> np.ndarray:
    """Chebyshev distance to the nearest other pixel, or ``cap + 1`` if none within ``cap``."""
    n = len(pixels)
    out = np.full(n, cap + 1, dtype=np.int64)
    if n < 2:
        return out
    w = Window(
        float(pixels[:, 0].min()),
        float(pixels[:, 1].min()),
        float(max(np.ptp(pixels[:, 0]), 1)),
        float(max(np.ptp(pixels[:, 1]), 1)),
    )
    pts = PointPattern(pixels.astype(np.float64), np.zeros(n, dtype=np.int64), w, 1)
    index = build_index(pts, float(cap))
    src, tgt = index.candidate_pairs(pts.xy, float(cap))
    keep = src != tgt
    src, tgt = src[keep], tgt[keep]
    d = np.max(np.abs(pixels[tgt] - pixels[src]), axis=1)
    np.minimum.at(out, src, d)
    return out


def generate_detection_mask(
    pattern: PointPattern,
    max_halfwidth: int = DEFAULT_MAX_HALFWIDTH,
    min_gap: int = DEFAULT_MIN_GAP,
) -> DetectionMask:
    """Dilate each annotation into a square of half-width ``h_i``.

    ``h_i = min(max_halfwidth, floor((d_i - 1 - min_gap) / 2))`` where ``d_i``
    is the Chebyshev pixel distance to the nearest other annotation, so two
    neighbours keep ``min_gap`` background pixels between them.  ``h_i`` is
    raised to 1 when that still cannot overlap a neighbour (``d_i >= 3``) and
    otherwise falls back to the single annotation pixel.
    """
    max_halfwidth = int(max_halfwidth)
    min_gap = int(min_gap)
    if max_halfwidth < 1:
        raise InvalidArgumentError("max_halfwidth must be >= 1")
    if min_gap < 0:
        raise InvalidArgumentError("min_gap must be >= 0")
    if len(pattern) == 0:
        raise InvalidArgumentError("cannot build a detection mask from an empty pattern")
    H, W = raster_shape(pattern.window)
    pix = pixel_positions(pattern)
    cap = 2 * max_halfwidth + 1 + min_gap
    d = _nearest_chebyshev(pix, cap)
    if np.any(d == 0):
        i = int(np.flatnonzero(d == 0)[0])
        raise CoincidentPointsError(
            f"annotation {i} at {tuple(pattern.xy[i])} shares pixel {tuple(pix[i])} with another"
        )
    h = np.minimum(max_halfwidth, (d - 1 - min_gap) // 2)
    h = np.where(h >= 1, h, np.where(d >= 3, 1, 0))

    instances = np.zeros((H, W), dtype=np.int32)
    for i in range(len(pix)):
        cx, cy, hi = pix[i, 0], pix[i, 1], h[i]
        instances[max(cy - hi, 0) : cy + hi + 1, max(cx - hi, 0) : cx + hi + 1] = i + 1
    mask = RasterMap((instances > 0).astype(np.uint8))
    return DetectionMask(mask, instances, h.astype(np.int64), pix, d)


def _check_detection(pattern: PointPattern, detection: DetectionMask):
    if not isinstance(detection, DetectionMask):
        raise InconsistentInputError("expected a DetectionMask produced by generate_detection_mask")
    if len(detection.pixels) != len(pattern) or not np.array_equal(
        detection.pixels, pixel_positions(pattern)
    ):
        raise InconsistentInputError("detection mask was not generated from this pattern")
    if detection.instances.shape != raster_shape(pattern.window):
        raise InconsistentInputError("detection mask shape does not match the pattern window")


def paint_by_cell(detection: DetectionMask, cell_channel: np.ndarray, n_channels: int) -> RasterMap:
    """One-hot raster: the squares of cell ``i`` go to channel ``cell_channel[i]``."""
    inst = detection.instances
    H, W = inst.shape
    out = np.zeros((H, W, n_channels), dtype=np.uint8)
    rows, cols = np.nonzero(inst)
    ch = np.asarray(cell_channel, dtype=np.int64)[inst[rows, cols] - 1]
    out[rows, cols, ch] = 1
    return RasterMap(out)


def generate_class_masks(pattern: PointPattern, detection: DetectionMask) -> RasterMap:
    """``n_classes`` binary channels partitioning the detection mask by annotation class."""
    _check_detection(pattern, detection)
    return paint_by_cell(detection, pattern.labels, pattern.n_classes)


def generate_kvector_map(
    pattern: PointPattern, detection: DetectionMask, k_vectors
) -> tuple[RasterMap, RasterMap]:
    """Paint every cell's flattened K-vector over its square.

    Returns the float32 K-vector map and a one-channel u8 validity mask marking
    the positive pixels (the only pixels a spatial loss should see).
    ``k_vectors`` is a list of :class:`KVector` or an array of shape
    ``(n_cells, n_classes, n_radii)``.
    """
    _check_detection(pattern, detection)
    if isinstance(k_vectors, np.ndarray):
        arr = k_vectors.reshape(len(k_vectors), -1)
    else:
        if any(kv.cell_index != i for i, kv in enumerate(k_vectors)):
            raise InconsistentInputError("k_vectors must be ordered by cell index")
        arr = np.array([kv.flat() for kv in k_vectors]).reshape(len(k_vectors), -1)
    if len(arr) != len(pattern):
        raise InconsistentInputError(f"{len(arr)} K-vectors for {len(pattern)} cells")
    inst = detection.instances
    H, W = inst.shape
    D = arr.shape[1] if arr.ndim == 2 else 0
    out = np.zeros((H, W, D), dtype=np.float32)
    rows, cols = np.nonzero(inst)
    out[rows, cols] = arr.astype(np.float32)[inst[rows, cols] - 1]
    return RasterMap(out), RasterMap((inst > 0).astype(np.uint8))


def dice_loss(pred, gt, smooth: float = 1.0) -> float:
    """``1 - (2 sum(p g) + s) / (sum p + sum g + s)``, averaged over channels."""
    p = np.asarray(pred.data if isinstance(pred, RasterMap) else pred, dtype=np.float64)
    g = np.asarray(gt.data if isinstance(gt, RasterMap) else gt, dtype=np.float64)
    if p.shape != g.shape:
        raise InvalidArgumentError(f"shape mismatch: {p.shape} vs {g.shape}")
    if smooth < 0:
        raise InvalidArgumentError("smooth must be non-negative")
    if p.ndim == 2:
        p, g = p[:, :, None], g[:, :, None]
    p = p.reshape(-1, p.shape[-1])
    g = g.reshape(-1, g.shape[-1])
    inter = (p * g).sum(axis=0)
    denom = p.sum(axis=0) + g.sum(axis=0) + smooth
    with np.errstate(invalid="ignore", divide="ignore"):
        per_channel = np.where(denom > 0, 1.0 - (2.0 * inter + smooth) / denom, 0.0)
    return float(per_channel.mean())


def combined_loss(det, cls, spatial, cluster, weights=(1.0, 1.0, 1.0, 1.0)) -> float:
    """Weighted sum of the detection, classification, spatial and clustering losses."""
    terms = np.array([det, cls, spatial, cluster], dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (4,):
        raise InvalidArgumentError("weights must have exactly 4 entries")
    if not (np.all(np.isfinite(terms)) and np.all(np.isfinite(w))):
        raise InvalidArgumentError("losses and weights must be finite")
    return float(w[0] * terms[0] + w[1] * terms[1] + w[2] * terms[2] + w[3] * terms[3])
