"""Compiled inner loops over a :class:`~spatialctx.core.GridIndex`."""

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _find_bucket(keys, key):
    lo, hi = 0, keys.shape[0]
    while lo < hi:
        mid = (lo + hi) >> 1
        if keys[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    if lo < keys.shape[0] and keys[lo] == key:
        return lo
    return -1


@njit(cache=True, nogil=True)
def radius_bin_counts(
    cx, cy, self_ids, sxy, slabels, order, keys, starts, counts,
    gx_min, gy_min, ny, cell, reach, half, radii, n_classes,
):
    """hist[i, c, j] = #{t : label c, t != self_ids[i], |dx|,|dy| <= half,
    radii[j-1] <= d < radii[j]}  (first radius that counts the pair)."""
    n = cx.shape[0]
    R = radii.shape[0]
    # pre-filter only; the exact test below uses the rounded sqrt
    cut2 = radii[R - 1] * radii[R - 1] * (1.0 + 1e-9)
    scale = R / radii[R - 1]
    hist = np.zeros((n, n_classes, R), dtype=np.int64)
    if keys.shape[0] == 0:
        return hist
    for i in range(n):
        sx = cx[i]
        sy = cy[i]
        me = self_ids[i]
        lox = int(math.floor((sx - reach) / cell))
        hix = int(math.floor((sx + reach) / cell))
        loy = int(math.floor((sy - reach) / cell))
        hiy = int(math.floor((sy + reach) / cell))
        for gx in range(lox, hix + 1):
            rx = gx - gx_min
            if rx < 0:
                continue
            for gy in range(loy, hiy + 1):
                ry = gy - gy_min
                if ry < 0 or ry >= ny:
                    continue
                b = _find_bucket(keys, rx * ny + ry)
                if b < 0:
                    continue
                s0 = starts[b]
                for p in range(s0, s0 + counts[b]):
                    if order[p] == me:
                        continue
                    dx = sxy[p, 0] - sx
                    dy = sxy[p, 1] - sy
                    if abs(dx) > half or abs(dy) > half:
                        continue
                    d2 = dx * dx + dy * dy
                    if d2 > cut2:
                        continue
                    d = math.sqrt(d2)
                    # proportional guess, then exact correction for any grid
                    j = min(int(d * scale), R)
                    while j > 0 and radii[j - 1] > d:
                        j -= 1
                    while j < R and radii[j] <= d:
                        j += 1
                    if j < R:
                        hist[i, slabels[p], j] += 1
    return hist


def bin_counts(index, centers, self_ids, radii, reach, half):
    """Python-side wrapper: unpack the index and call the kernel."""
    pattern = index.pattern
    centers = np.ascontiguousarray(centers, dtype=np.float64).reshape(-1, 2)
    return radius_bin_counts(
        np.ascontiguousarray(centers[:, 0]),
        np.ascontiguousarray(centers[:, 1]),
        np.ascontiguousarray(self_ids, dtype=np.int64),
        index.sorted_xy,
        index.sorted_labels,
        index.order,
        index.keys,
        index.starts,
        index.counts,
        index.gx_min,
        index.gy_min,
        index.ny,
        float(index.cell_size),
        float(reach),
        float(half),
        radii.radii,
        pattern.n_classes,
    )
