"""Spatial statistics over point patterns.

Population-level Ripley K / K-cross estimators with Monte-Carlo CSR
envelopes, the per-cell K-function vector, and the simpler per-cell
descriptors (nearest-neighbour distance, density) used as alternatives to it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (
    GridIndex,
    PointPattern,
    RadiiGrid,
    Window,
    build_index,
    pair_distance,
)
from ._kernels import bin_counts
from .errors import EmptyPatternError, InvalidArgumentError

DEFAULT_PATCH_SIZE = 180.0
DEFAULT_N_MAX = 100.0

# Sources per batch in the vectorised field computation.  Fixed so results
# never depend on the worker count.
_CHUNK = 8192


@dataclass(frozen=True, eq=False)
class KCurve:
    radii: RadiiGrid
    values: np.ndarray
    source_class: int
    target_class: int
    correction: str = "none"


@dataclass(frozen=True, eq=False)
class KVector:
    """K-function vector of one cell: ``values[c, j]`` for class ``c``, radius ``j``."""

    cell_index: int
    radii: RadiiGrid
    values: np.ndarray
    n_max: float

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def __eq__(self, other) -> bool:
        if not isinstance(other, KVector):
            return NotImplemented
        return (
            self.cell_index == other.cell_index
            and self.radii == other.radii
            and self.n_max == other.n_max
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True, eq=False)
class Envelope:
    radii: RadiiGrid
    lower: np.ndarray
    upper: np.ndarray
    baseline: np.ndarray
    n_simulations: int
    rank: int
    simulations: np.ndarray


@dataclass(frozen=True, eq=False)
class AverageCurves:
    """Mean K-vector rows per (source class, target class)."""

    radii: RadiiGrid
    means: np.ndarray  # (n_classes, n_classes, n_radii)
    absent: np.ndarray  # (n_classes,) True where a source class has no cells
    counts: np.ndarray


# -- population estimators ----------------------------------------------------


def ripley_k(
    pattern: PointPattern,
    source_class: int,
    target_class: int,
    radii: RadiiGrid | None = None,
    correction: str = "none",
    index: GridIndex | None = None,
) -> KCurve:
    """Homogeneous Ripley K (or K-cross) estimate.

    ``K(r) = A / (n_s * n_t') * sum_s sum_{t != s} [d(s, t) < r]`` with
    ``n_t' = n_t - 1`` when source and target classes coincide, so that
    ``E[K(r)] = pi r^2`` under complete spatial randomness (ignoring edges).

    With ``correction="border"`` only sources at distance ``>= r`` from the
    window boundary contribute at radius ``r`` and the sum is divided by the
    number of retained sources instead of ``n_s``.  Radii where no source is
    retained yield NaN.  Border-corrected curves need not be monotone.
    """
    radii = radii or RadiiGrid()
    source_class = pattern.check_class(source_class)
    target_class = pattern.check_class(target_class)
    if correction not in ("none", "border"):
        raise InvalidArgumentError(f"unknown edge correction {correction!r}")
    src_idx = np.flatnonzero(pattern.labels == source_class)
    tgt_mask = pattern.labels == target_class
    same = source_class == target_class
    n_s = len(src_idx)
    n_t = int(tgt_mask.sum()) - (1 if same else 0)
    if same and n_s < 2:
        raise EmptyPatternError(f"K needs >= 2 points of class {source_class}, got {n_s}")
    if not same and (n_s < 1 or n_t < 1):
        raise EmptyPatternError(
            f"K-cross needs >= 1 source and >= 1 target point, got {n_s} and {n_t}"
        )
    if index is None:
        index = build_index(pattern, radii.max)
    hist = bin_counts(index, pattern.xy[src_idx], src_idx, radii, radii.max, np.inf)
    # per-source cumulative neighbour counts of the target class
    per_src = np.cumsum(hist[:, target_class, :], axis=1)
    area = pattern.window.area
    if correction == "none":
        values = area * per_src.sum(axis=0) / (n_s * n_t)
    else:
        b = pattern.window.boundary_distance(pattern.xy[src_idx])
        retained = b[:, None] >= radii.radii[None, :]
        n_ret = retained.sum(axis=0)
        pairs = np.where(retained, per_src, 0).sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            values = np.where(n_ret > 0, area * pairs / (np.maximum(n_ret, 1) * n_t), np.nan)
    return KCurve(radii, values, source_class, target_class, correction)


def simulate_csr(window: Window, class_counts, n_classes: int, rng) -> PointPattern:
    """Binomial (fixed-count) CSR pattern with the given per-class counts."""
    class_counts = np.asarray(class_counts, dtype=np.int64)
    n = int(class_counts.sum())
    x = window.x0 + rng.random(n) * window.width
    y = window.y0 + rng.random(n) * window.height
    labels = np.repeat(np.arange(len(class_counts)), class_counts)
    return PointPattern(np.column_stack([x, y]), labels, window, n_classes)


def csr_envelope(
    pattern: PointPattern,
    source_class: int,
    target_class: int,
    radii: RadiiGrid | None = None,
    n_sims: int = 99,
    rank: int = 1,
    seed: int = 0,
    correction: str = "none",
    workers: int = 1,
) -> Envelope:
    """Pointwise rank envelope of K under CSR with the pattern's class counts.

    Simulation ``i`` uses its own generator spawned from ``seed``, so results
    are identical for any ``workers``.
    """
    radii = radii or RadiiGrid()
    n_sims, rank = int(n_sims), int(rank)
    if rank < 1 or n_sims < 2 * rank - 1 or n_sims < 2:
        raise InvalidArgumentError(
            f"need n_sims >= 2*rank - 1 (and >= 2), got n_sims={n_sims}, rank={rank}"
        )
    source_class = pattern.check_class(source_class)
    target_class = pattern.check_class(target_class)
    counts = np.zeros(pattern.n_classes, dtype=np.int64)
    full = pattern.class_counts()
    counts[source_class] = full[source_class]
    counts[target_class] = full[target_class]
    seeds = np.random.SeedSequence(seed).spawn(n_sims)

    def one(ss):
        rng = np.random.default_rng(ss)
        sim = simulate_csr(pattern.window, counts, pattern.n_classes, rng)
        return ripley_k(sim, source_class, target_class, radii, correction).values

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            sims = list(ex.map(one, seeds))
    else:
        sims = [one(s) for s in seeds]
    sims = np.vstack(sims)
    ordered = np.sort(sims, axis=0)
    return Envelope(
        radii=radii,
        lower=ordered[rank - 1].copy(),
        upper=ordered[n_sims - rank].copy(),
        baseline=math.pi * radii.radii**2,
        n_simulations=n_sims,
        rank=rank,
        simulations=sims,
    )


# -- per-cell descriptors -------------------------------------------------------


def _check_patch(patch_size: float, n_max: float | None = None):
    if not patch_size > 0:
        raise InvalidArgumentError(f"patch_size must be positive, got {patch_size}")
    if n_max is not None and not n_max > 0:
        raise InvalidArgumentError(f"n_max must be positive, got {n_max}")


def _check_cells(pattern: PointPattern, cells) -> np.ndarray:
    if cells is None:
        return np.arange(len(pattern), dtype=np.int64)
    cells = np.asarray(cells, dtype=np.int64).reshape(-1)
    bad = (cells < 0) | (cells >= len(pattern))
    if bad.any():
        pattern.check_index(int(cells[bad][0]))
    return cells


def _patch_pairs(pattern, index, sources, patch_size, reach=None):
    """(source row, target, dx, dy) for every target in the patch of each source,
    the source itself excluded.

    ``reach`` may shrink the candidate search below the patch half-width when
    the caller filters by a smaller disk anyway.
    """
    half = patch_size / 2.0
    src, tgt = index.candidate_pairs(pattern.xy[sources], half if reach is None else min(reach, half))
    keep = sources[src] != tgt
    src, tgt = src[keep], tgt[keep]
    s_xy = pattern.xy[sources[src]]
    dx = pattern.x[tgt] - s_xy[:, 0]
    dy = pattern.y[tgt] - s_xy[:, 1]
    inside = (np.abs(dx) <= half) & (np.abs(dy) <= half)
    return src[inside], tgt[inside], dx[inside], dy[inside]


def _k_counts(pattern, index, sources, radii: RadiiGrid, patch_size: float) -> np.ndarray:
    """Integer cumulative neighbour counts, shape (len(sources), n_classes, n_radii)."""
    hist = bin_counts(
        index, pattern.xy[sources], sources, radii, min(radii.max, patch_size / 2.0), patch_size / 2.0
    )
    return np.cumsum(hist, axis=2)


def _default_index(pattern: PointPattern, radii: RadiiGrid, patch_size: float) -> GridIndex:
    # cell = search reach keeps every query inside a 3x3 bucket neighbourhood
    return build_index(pattern, min(radii.max, patch_size / 2.0))


def k_vector_array(
    pattern: PointPattern,
    radii: RadiiGrid | None = None,
    patch_size: float = DEFAULT_PATCH_SIZE,
    n_max: float = DEFAULT_N_MAX,
    workers: int = 1,
    index: GridIndex | None = None,
    cells=None,
) -> np.ndarray:
    """K-function vectors as a float64 array of shape (n_cells, n_classes, n_radii).

    Entry ``[i, c, j]`` is the number of class-``c`` cells ``t != i`` inside
    the patch of cell ``i`` with ``d(i, t) < radii[j]``, divided by ``n_max``.
    """
    radii = radii or RadiiGrid()
    _check_patch(patch_size, n_max)
    cells = _check_cells(pattern, cells)
    C, R = pattern.n_classes, len(radii)
    if len(cells) == 0:
        return np.zeros((0, C, R))
    if index is None:
        index = _default_index(pattern, radii, patch_size)
    chunks = [cells[i : i + _CHUNK] for i in range(0, len(cells), _CHUNK)]

    def run(chunk):
        return _k_counts(pattern, index, chunk, radii, patch_size)

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(int(workers)) as ex:
            parts = list(ex.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    counts = np.concatenate(parts, axis=0)
    return counts / n_max


def cell_k_vector(
    pattern: PointPattern,
    cell_index: int,
    radii: RadiiGrid | None = None,
    patch_size: float = DEFAULT_PATCH_SIZE,
    n_max: float = DEFAULT_N_MAX,
    index: GridIndex | None = None,
) -> KVector:
    radii = radii or RadiiGrid()
    cell_index = pattern.check_index(cell_index)
    values = k_vector_array(pattern, radii, patch_size, n_max, index=index, cells=[cell_index])[0]
    return KVector(cell_index, radii, values, float(n_max))


def k_vector_field(
    pattern: PointPattern,
    radii: RadiiGrid | None = None,
    patch_size: float = DEFAULT_PATCH_SIZE,
    n_max: float = DEFAULT_N_MAX,
    parallelism: int = 1,
) -> list[KVector]:
    """One :class:`KVector` per cell, in point order."""
    radii = radii or RadiiGrid()
    arr = k_vector_array(pattern, radii, patch_size, n_max, workers=parallelism)
    return [KVector(i, radii, arr[i], float(n_max)) for i in range(len(arr))]


def data_n_max(pattern: PointPattern, patch_size: float = DEFAULT_PATCH_SIZE) -> int:
    """Largest number of cells (all classes, source included) in any cell's patch."""
    _check_patch(patch_size)
    if len(pattern) == 0:
        return 0
    index = build_index(pattern, patch_size / 2.0)
    sources = np.arange(len(pattern), dtype=np.int64)
    src, _, _, _ = _patch_pairs(pattern, index, sources, patch_size)
    return int(np.bincount(src, minlength=len(pattern)).max()) + 1


def nn_distance_field(
    pattern: PointPattern, patch_size: float = DEFAULT_PATCH_SIZE, cells=None
) -> np.ndarray:
    """Per-class nearest in-patch neighbour distance, shape (n_cells, n_classes).

    Classes with no cell in the patch get ``patch_size * sqrt(2)``.
    """
    _check_patch(patch_size)
    cells = _check_cells(pattern, cells)
    C = pattern.n_classes
    out = np.full((len(cells), C), patch_size * math.sqrt(2.0))
    if len(cells) == 0:
        return out
    index = build_index(pattern, patch_size / 2.0)
    src, tgt, dx, dy = _patch_pairs(pattern, index, cells, patch_size)
    np.minimum.at(out, (src, pattern.labels[tgt]), pair_distance(dx, dy))
    return out


def nn_distance_vector(
    pattern: PointPattern, cell_index: int, patch_size: float = DEFAULT_PATCH_SIZE
) -> np.ndarray:
    cell_index = pattern.check_index(cell_index)
    return nn_distance_field(pattern, patch_size, cells=[cell_index])[0]


def density_field(
    pattern: PointPattern,
    patch_size: float = DEFAULT_PATCH_SIZE,
    n_max: float = DEFAULT_N_MAX,
    cells=None,
) -> np.ndarray:
    """Per-class cell count in each patch (source excluded) divided by ``n_max``."""
    _check_patch(patch_size, n_max)
    cells = _check_cells(pattern, cells)
    C = pattern.n_classes
    if len(cells) == 0:
        return np.zeros((0, C))
    index = build_index(pattern, patch_size / 2.0)
    src, tgt, _, _ = _patch_pairs(pattern, index, cells, patch_size)
    counts = np.bincount(src * C + pattern.labels[tgt], minlength=len(cells) * C)
    return counts.reshape(len(cells), C) / n_max


def density_vector(
    pattern: PointPattern,
    cell_index: int,
    patch_size: float = DEFAULT_PATCH_SIZE,
    n_max: float = DEFAULT_N_MAX,
) -> np.ndarray:
    cell_index = pattern.check_index(cell_index)
    return density_field(pattern, patch_size, n_max, cells=[cell_index])[0]


# -- curve distances -------------------------------------------------------------


def _as_values(a):
    if isinstance(a, (KVector, KCurve)):
        return a.radii, np.asarray(a.values, dtype=np.float64)
    return None, np.asarray(a, dtype=np.float64)


def _paired(a, b):
    ra, va = _as_values(a)
    rb, vb = _as_values(b)
    if va.shape != vb.shape:
        raise InvalidArgumentError(f"shape mismatch: {va.shape} vs {vb.shape}")
    if ra is not None and rb is not None and ra != rb:
        raise InvalidArgumentError("radii grids differ")
    return va, vb


def ks_distance(a, b) -> float:
    """Sup norm of the difference, taken over the sampled radii."""
    va, vb = _paired(a, b)
    if va.size == 0:
        return 0.0
    return float(np.max(np.abs(va - vb)))


def l1_distance(a, b) -> float:
    va, vb = _paired(a, b)
    return float(np.sum(np.abs(va - vb)))


def average_k_curves(
    pattern: PointPattern,
    radii: RadiiGrid | None = None,
    patch_size: float = DEFAULT_PATCH_SIZE,
    n_max: float = DEFAULT_N_MAX,
    workers: int = 1,
) -> AverageCurves:
    radii = radii or RadiiGrid()
    C, R = pattern.n_classes, len(radii)
    arr = k_vector_array(pattern, radii, patch_size, n_max, workers=workers)
    means = np.zeros((C, C, R))
    counts = pattern.class_counts()
    for c in range(C):
        if counts[c]:
            means[c] = arr[pattern.labels == c].mean(axis=0)
    return AverageCurves(radii, means, counts == 0, counts)
