"""Point-pattern data model and the uniform-grid spatial index.

All range counting in the package goes through :class:`GridIndex`.  Queries
are exact: the grid only prunes candidates, the final distance predicate is
always evaluated on the candidate coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, OutOfRangeError

DEFAULT_RADII = (15.0, 30.0, 45.0, 60.0, 75.0, 90.0)


@dataclass(frozen=True)
class Window:
    """Axis-aligned observation rectangle, boundary inclusive."""

    x0: float
    y0: float
    width: float
    height: float

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise InvalidArgumentError(
                f"window must have positive extent, got {self.width}x{self.height}"
            )

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def x1(self) -> float:
        return self.x0 + self.width

    @property
    def y1(self) -> float:
        return self.y0 + self.height

    def contains(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return (
            (xy[:, 0] >= self.x0)
            & (xy[:, 0] <= self.x1)
            & (xy[:, 1] >= self.y0)
            & (xy[:, 1] <= self.y1)
        )

    def boundary_distance(self, xy: np.ndarray) -> np.ndarray:
        """Distance from each point to the nearest window edge."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return np.minimum.reduce(
            [xy[:, 0] - self.x0, self.x1 - xy[:, 0], xy[:, 1] - self.y0, self.y1 - xy[:, 1]]
        )


class PointPattern:
    """A multi-class 2D point set inside a rectangular window.

    Coordinates are float64 (annotations are usually integer pixels, but
    centroid-derived predictions are not).  Duplicate points are allowed.

    Parameters
    ----------
    points : array_like, shape (n, 2)
        ``(x, y)`` pairs in pixels.
    labels : array_like, shape (n,)
        Integer class indices in ``[0, n_classes)``.
    window : Window
    n_classes : int
    """

    def __init__(self, points, labels, window: Window, n_classes: int):
        xy = np.asarray(points, dtype=np.float64)
        if xy.size == 0:
            xy = xy.reshape(0, 2)
        if xy.ndim != 2 or xy.shape[1] != 2:
            raise InvalidArgumentError(f"points must have shape (n, 2), got {xy.shape}")
        lab = np.asarray(labels)
        if lab.size == 0:
            lab = lab.reshape(0).astype(np.int64)
        if lab.ndim != 1 or len(lab) != len(xy):
            raise InvalidArgumentError(
                f"{len(xy)} points but {lab.shape} labels"
            )
        if lab.size and not np.issubdtype(lab.dtype, np.integer):
            if not np.all(lab == np.floor(lab)):
                raise InvalidArgumentError("labels must be integers")
        lab = lab.astype(np.int64)
        n_classes = int(n_classes)
        if n_classes < 1:
            raise InvalidArgumentError("n_classes must be positive")
        if lab.size and (lab.min() < 0 or lab.max() >= n_classes):
            raise InvalidArgumentError(
                f"labels must lie in [0, {n_classes}), got range [{lab.min()}, {lab.max()}]"
            )
        if not np.all(np.isfinite(xy)):
            raise InvalidArgumentError("point coordinates must be finite")
        inside = window.contains(xy)
        if not inside.all():
            bad = int(np.flatnonzero(~inside)[0])
            raise InvalidArgumentError(
                f"point {bad} at {tuple(xy[bad])} lies outside the window {window}"
            )
        xy.setflags(write=False)
        lab.setflags(write=False)
        self.xy = xy
        self.labels = lab
        self.window = window
        self.n_classes = n_classes

    def __len__(self) -> int:
        return len(self.xy)

    def __repr__(self) -> str:
        return (
            f"PointPattern(n={len(self)}, n_classes={self.n_classes}, window={self.window})"
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointPattern):
            return NotImplemented
        return (
            self.window == other.window
            and self.n_classes == other.n_classes
            and np.array_equal(self.xy, other.xy)
            and np.array_equal(self.labels, other.labels)
        )

    @property
    def x(self) -> np.ndarray:
        return self.xy[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.xy[:, 1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def check_class(self, c: int) -> int:
        if not 0 <= int(c) < self.n_classes:
            raise InvalidArgumentError(f"unknown class {c} (n_classes={self.n_classes})")
        return int(c)

    def check_index(self, i: int) -> int:
        if not 0 <= int(i) < len(self):
            raise OutOfRangeError(f"cell index {i} out of range for {len(self)} points")
        return int(i)

    def subset(self, mask) -> "PointPattern":
        return PointPattern(self.xy[mask], self.labels[mask], self.window, self.n_classes)


class RadiiGrid:
    """Strictly increasing, positive sampling radii."""

    def __init__(self, radii=DEFAULT_RADII):
        r = np.asarray(radii, dtype=np.float64).reshape(-1)
        if r.size == 0:
            raise InvalidArgumentError("radii grid must be nonempty")
        if not np.all(np.isfinite(r)) or np.any(r <= 0):
            raise InvalidArgumentError("radii must be finite and positive")
        if np.any(np.diff(r) <= 0):
            raise InvalidArgumentError("radii must be strictly increasing")
        r.setflags(write=False)
        self.radii = r

    @classmethod
    def uniform(cls, step: float, r_max: float) -> "RadiiGrid":
        """``step, 2*step, ..., r_max`` (the zero radius is never sampled)."""
        n = int(round(r_max / step))
        return cls(step * np.arange(1, n + 1))

    def __len__(self) -> int:
        return len(self.radii)

    def __iter__(self):
        return iter(self.radii.tolist())

    def __eq__(self, other) -> bool:
        if not isinstance(other, RadiiGrid):
            return NotImplemented
        return np.array_equal(self.radii, other.radii)

    def __repr__(self) -> str:
        return f"RadiiGrid({self.radii.tolist()})"

    @property
    def max(self) -> float:
        return float(self.radii[-1])

    def first_radius_above(self, d: np.ndarray) -> np.ndarray:
        """Index of the first radius ``r`` with ``d < r`` (``len(self)`` if none)."""
        return np.searchsorted(self.radii, d, side="right")


def pair_distance(dx, dy):
    """Euclidean distance used by every predicate in the package.

    Kept in one place so indexed queries and brute-force references round
    identically.
    """
    return np.sqrt(dx * dx + dy * dy)


@dataclass(frozen=True, eq=False)
class GridIndex:
    """Immutable uniform-grid bucketing of a point pattern.

    Points are sorted by bucket key; ``order[starts[b]:starts[b] + counts[b]]``
    lists the point indices of bucket ``b`` in ascending order.
    """

    pattern: PointPattern
    cell_size: float
    order: np.ndarray
    keys: np.ndarray
    starts: np.ndarray
    counts: np.ndarray
    gx_min: int
    gy_min: int
    ny: int
    sorted_xy: np.ndarray = field(repr=False)
    sorted_labels: np.ndarray = field(repr=False)

    @property
    def buckets(self) -> dict:
        """Mapping ``(gx, gy) -> array of point indices``."""
        out = {}
        for key, s, c in zip(self.keys.tolist(), self.starts.tolist(), self.counts.tolist()):
            gx, gy = divmod(key, self.ny)
            out[(gx + self.gx_min, gy + self.gy_min)] = self.order[s : s + c]
        return out

    def bucket_of(self, xy) -> tuple:
        xy = np.asarray(xy, dtype=float)
        return (
            int(math.floor(xy[0] / self.cell_size)),
            int(math.floor(xy[1] / self.cell_size)),
        )

    def _lookup(self, gx: np.ndarray, gy: np.ndarray):
        """Return (found, start, count) for integer bucket coordinates."""
        rx = gx - self.gx_min
        ry = gy - self.gy_min
        in_range = (rx >= 0) & (ry >= 0) & (ry < self.ny)
        key = rx * self.ny + ry
        pos = np.searchsorted(self.keys, key)
        pos_c = np.minimum(pos, max(len(self.keys) - 1, 0))
        if len(self.keys) == 0:
            found = np.zeros(key.shape, dtype=bool)
        else:
            found = in_range & (self.keys[pos_c] == key)
        start = np.where(found, self.starts[pos_c] if len(self.keys) else 0, 0)
        count = np.where(found, self.counts[pos_c] if len(self.keys) else 0, 0)
        return found, start, count

    def candidate_pairs(self, centers, reach: float):
        """All (center, point) pairs whose point may lie in the closed square
        of half-width ``reach`` around the center.

        Returns
        -------
        src : ndarray of int64
            Row index into ``centers``.
        tgt : ndarray of int64
            Point index into the indexed pattern.

        The result is a superset of the points inside the square and must be
        filtered by the caller.  Pairs are ordered by center, then bucket,
        then point index.
        """
        c = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
        empty = np.empty(0, dtype=np.int64)
        if len(c) == 0 or len(self.keys) == 0:
            return empty, empty
        cs = self.cell_size
        # floor((x +- reach) / cs) bounds every bucket a qualifying point can
        # occupy: float rounding is monotone, so no qualifying point escapes.
        lo = np.floor((c - reach) / cs).astype(np.int64)
        hi = np.floor((c + reach) / cs).astype(np.int64)
        span = hi - lo + 1
        sx, sy = int(span[:, 0].max()), int(span[:, 1].max())
        srcs, starts, counts = [], [], []
        base = np.arange(len(c), dtype=np.int64)
        for ox in range(sx):
            gx = lo[:, 0] + ox
            okx = gx <= hi[:, 0]
            for oy in range(sy):
                gy = lo[:, 1] + oy
                ok = okx & (gy <= hi[:, 1])
                found, st, ct = self._lookup(gx, gy)
                ok &= found
                srcs.append(base[ok])
                starts.append(st[ok])
                counts.append(ct[ok])
        src_b = np.concatenate(srcs)
        st_b = np.concatenate(starts)
        ct_b = np.concatenate(counts)
        perm = np.argsort(src_b, kind="stable")
        src_b, st_b, ct_b = src_b[perm], st_b[perm], ct_b[perm]
        total = int(ct_b.sum())
        if total == 0:
            return empty, empty
        src = np.repeat(src_b, ct_b)
        # ragged expansion: position within each bucket run
        run_start = np.cumsum(ct_b) - ct_b
        pos = np.arange(total, dtype=np.int64) - np.repeat(run_start, ct_b)
        tgt = self.order[np.repeat(st_b, ct_b) + pos]
        return src, tgt

    def indices_in_square(self, center, half: float) -> np.ndarray:
        """Point indices inside the closed square of half-width ``half``."""
        _, tgt = self.candidate_pairs(np.asarray(center, dtype=float)[None, :], half)
        d = self.pattern.xy[tgt] - np.asarray(center, dtype=float)
        keep = (np.abs(d[:, 0]) <= half) & (np.abs(d[:, 1]) <= half)
        return np.sort(tgt[keep])


def build_index(pattern: PointPattern, cell_size: float) -> GridIndex:
    """Bucket ``pattern`` into square cells of side ``cell_size``.

    The bucket of point ``p`` is ``(floor(p.x / cell_size), floor(p.y / cell_size))``.
    """
    cell_size = float(cell_size)
    if not (cell_size > 0 and math.isfinite(cell_size)):
        raise InvalidArgumentError(f"cell_size must be positive, got {cell_size}")
    xy = pattern.xy
    if len(xy) == 0:
        e = np.empty(0, dtype=np.int64)
        return GridIndex(pattern, cell_size, e, e, e, e, 0, 0, 1, xy.copy(), e)
    g = np.floor(xy / cell_size).astype(np.int64)
    gx_min, gy_min = int(g[:, 0].min()), int(g[:, 1].min())
    ny = int(g[:, 1].max()) - gy_min + 1
    key = (g[:, 0] - gx_min) * ny + (g[:, 1] - gy_min)
    order = np.argsort(key, kind="stable").astype(np.int64)
    keys, starts, counts = np.unique(key[order], return_index=True, return_counts=True)
    sorted_xy = np.ascontiguousarray(xy[order])
    sorted_labels = np.ascontiguousarray(pattern.labels[order])
    for a in (order, keys, starts, counts, sorted_xy, sorted_labels):
        a.setflags(write=False)
    return GridIndex(
        pattern,
        cell_size,
        order,
        keys.astype(np.int64),
        starts.astype(np.int64),
        counts.astype(np.int64),
        gx_min,
        gy_min,
        ny,
        sorted_xy,
        sorted_labels,
    )


def count_in_disk(
    index: GridIndex,
    center,
    radius: float,
    target_class: int,
    exclude: int | None = None,
) -> int:
    """Number of ``target_class`` points strictly closer than ``radius`` to ``center``.

    ``exclude`` drops one point index from the count (the source cell).
    """
    if radius < 0:
        raise InvalidArgumentError("radius must be non-negative")
    pattern = index.pattern
    pattern.check_class(target_class)
    center = np.asarray(center, dtype=np.float64)
    _, tgt = index.candidate_pairs(center[None, :], radius)
    if len(tgt) == 0:
        return 0
    tgt = tgt[pattern.labels[tgt] == target_class]
    if exclude is not None:
        tgt = tgt[tgt != exclude]
    d = pair_distance(pattern.x[tgt] - center[0], pattern.y[tgt] - center[1])
    return int(np.count_nonzero(d < radius))
