"""Per-class k-means pseudo-labels with warm starts across epochs.

Cells of each class are clustered separately into ``k`` groups; cell ``i`` of
class ``c`` assigned to local cluster ``j`` gets the global sub-class id
``c * k + j``.  Passing the previous :class:`ClusterModel` back in seeds each
class's Lloyd iterations from last epoch's centroids, which keeps cluster
ids stable between epochs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyClassError,
    InconsistentInputError,
    InconsistentModelError,
    InsufficientPointsError,
    InvalidArgumentError,
)

DEFAULT_K = 5
DEFAULT_TOL = 1e-4
DEFAULT_MAX_ITERS = 100


@dataclass(frozen=True, eq=False)
class FeatureTable:
    cell_index: np.ndarray
    labels: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        ci = np.asarray(self.cell_index, dtype=np.int64).reshape(-1)
        lab = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        f = np.asarray(self.features, dtype=np.float64)
        if f.ndim == 1:
            f = f.reshape(len(ci), -1) if len(ci) else f.reshape(0, 0)
        if not (len(ci) == len(lab) == len(f)):
            raise InvalidArgumentError("cell_index, labels and features must have equal length")
        if f.ndim != 2:
            raise InvalidArgumentError("features must be a 2D array")
        if not np.all(np.isfinite(f)):
            raise InvalidArgumentError("features must be finite")
        if len(np.unique(ci)) != len(ci):
            raise InvalidArgumentError("duplicate cell_index in feature table")
        object.__setattr__(self, "cell_index", ci)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "features", f)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return len(self.cell_index)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureTable):
            return NotImplemented
        return (
            np.array_equal(self.cell_index, other.cell_index)
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.features, other.features)
        )


@dataclass
class KMeansResult:
    centroids: np.ndarray
    cell_index: np.ndarray  # sorted
    assignments: np.ndarray  # local cluster per cell, aligned with cell_index
    n_iter: int
    converged: bool
    inertia_history: list = field(default_factory=list)

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1]


@dataclass(eq=False)
class ClusterModel:
    k: int
    centroids: dict  # class -> (k, D) array
    cell_index: np.ndarray
    subclass: np.ndarray
    epoch: int = 0
    seed: int = 0

    def assignment_of(self) -> dict:
        return dict(zip(self.cell_index.tolist(), self.subclass.tolist()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ClusterModel):
            return NotImplemented
        return (
            self.k == other.k
            and self.epoch == other.epoch
            and self.seed == other.seed
            and sorted(self.centroids) == sorted(other.centroids)
            and all(np.array_equal(self.centroids[c], other.centroids[c]) for c in self.centroids)
            and np.array_equal(self.cell_index, other.cell_index)
            and np.array_equal(self.subclass, other.subclass)
        )


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - c[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def assign(x: np.ndarray, centroids: np.ndarray):
    """Nearest centroid per row (ties go to the lower index) and the squared distances."""
    d = _sq_dists(x, centroids)
    a = np.argmin(d, axis=1)
    return a, d[np.arange(len(x)), a]


def kmeans_plus_plus(x: np.ndarray, k: int, rng) -> np.ndarray:
    n = len(x)
    centers = [int(rng.integers(n))]
    closest = _sq_dists(x, x[centers[0]][None, :])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # all remaining points coincide with a chosen centre
            raise InsufficientPointsError(f"fewer than {k} distinct feature vectors")
        r = rng.random() * total
        i = int(np.searchsorted(np.cumsum(closest), r, side="right"))
        i = min(i, n - 1)
        while closest[i] == 0:
            i -= 1
        centers.append(i)
        closest = np.minimum(closest, _sq_dists(x, x[i][None, :])[:, 0])
    return x[centers].copy()


def _update(x, a, old, d2):
    """New centroids as cluster means (fixed summation order); empty clusters move to
    the points farthest from their current centroid."""
    k, D = old.shape
    new = np.empty_like(old)
    counts = np.bincount(a, minlength=k)
    for j in range(k):
        if counts[j]:
            new[j] = x[a == j].sum(axis=0) / counts[j]
    empty = np.flatnonzero(counts == 0)
    if len(empty):
        far = np.argsort(-d2, kind="stable")
        taken = 0
        for j in empty:
            if taken < len(far) and d2[far[taken]] > 0:
                new[j] = x[far[taken]]
                taken += 1
            else:
                new[j] = old[j]
    return new


def _class_rows(features: FeatureTable, cls: int):
    rows = np.flatnonzero(features.labels == cls)
    order = np.argsort(features.cell_index[rows], kind="stable")
    return rows[order]


def kmeans_fit(
    features: FeatureTable,
    cls: int,
    k: int = DEFAULT_K,
    init="random",
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
) -> KMeansResult:
    """Lloyd's k-means on the cells of one class.

    ``init`` is ``"random"`` (k-means++ seeding from ``seed``) or an array of
    warm-start centroids.  Cells are processed in ascending ``cell_index``
    order, so the result does not depend on the row order of ``features``.
    Iteration stops once no centroid moves by ``tol`` or more; the returned
    assignments are always nearest-centroid with respect to the returned
    centroids.
    """
    k = int(k)
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    rows = _class_rows(features, cls)
    x = features.features[rows]
    if len(x) == 0:
        raise EmptyClassError(f"class {cls} has no cells")
    if isinstance(init, str):
        if init != "random":
            raise InvalidArgumentError(f"unknown init {init!r}")
        if len(x) < k:
            raise InsufficientPointsError(f"class {cls}: {len(x)} cells for k={k}")
        if len(np.unique(x, axis=0)) < k:
            raise InsufficientPointsError(f"class {cls}: fewer than {k} distinct feature vectors")
        rng = np.random.default_rng([int(seed), int(cls)])
        c = kmeans_plus_plus(x, k, rng)
    else:
        c = np.array(init, dtype=np.float64)
        if c.shape != (k, x.shape[1]):
            raise InconsistentModelError(
                f"warm centroids have shape {c.shape}, expected {(k, x.shape[1])}"
            )
    history = []
    converged = False
    n_iter = 0
    for n_iter in range(1, int(max_iters) + 1):
        a, d2 = assign(x, c)
        history.append(float(d2.sum()))
        new = _update(x, a, c, d2)
        shift = float(np.sqrt(((new - c) ** 2).sum(axis=1)).max())
        c = new
        if shift < tol or shift == 0:
            converged = True
            break
    a, d2 = assign(x, c)
    history.append(float(d2.sum()))
    return KMeansResult(c, features.cell_index[rows], a, n_iter, converged, history)


def standardize(features: FeatureTable) -> FeatureTable:
    """Z-score every feature column over all cells (constant columns are centred only)."""
    f = features.features
    sd = f.std(axis=0)
    sd[sd == 0] = 1.0
    return FeatureTable(features.cell_index, features.labels, (f - f.mean(axis=0)) / sd)


def update_pseudo_labels(
    features: FeatureTable,
    model: ClusterModel | None = None,
    k: int = DEFAULT_K,
    seed: int = 0,
    n_classes: int | None = None,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
    normalize: bool = False,
) -> ClusterModel:
    """Re-cluster every class and return the next epoch's model.

    Classes present in ``model`` are warm-started from its centroids; classes
    without cells keep their previous centroids (if any).
    """
    if model is not None:
        if model.k != k:
            raise InconsistentModelError(f"model has k={model.k}, requested k={k}")
        for c, cent in model.centroids.items():
            if cent.shape[1] != features.dim:
                raise InconsistentModelError(
                    f"class {c} centroids have dimension {cent.shape[1]}, features have {features.dim}"
                )
    if normalize:
        features = standardize(features)
    classes = np.unique(features.labels)
    if n_classes is not None and len(classes) and (classes.min() < 0 or classes.max() >= n_classes):
        raise InconsistentInputError("feature table has labels outside [0, n_classes)")
    centroids = dict(model.centroids) if model is not None else {}
    ids, subs = [], []
    for c in classes.tolist():
        init = centroids[c] if c in centroids else "random"
        res = kmeans_fit(features, c, k, init, max_iters, tol, seed)
        centroids[c] = res.centroids
        ids.append(res.cell_index)
        subs.append(c * k + res.assignments)
    cell_index = np.concatenate(ids) if ids else np.empty(0, dtype=np.int64)
    subclass = np.concatenate(subs) if subs else np.empty(0, dtype=np.int64)
    order = np.argsort(cell_index, kind="stable")
    return ClusterModel(
        k=k,
        centroids=centroids,
        cell_index=cell_index[order],
        subclass=subclass[order].astype(np.int64),
        epoch=(model.epoch + 1) if model is not None else 1,
        seed=seed,
    )


def pseudo_label_masks(model: ClusterModel, detection, pattern, n_classes: int | None = None):
    """``n_classes * k`` binary channels: the squares of each cell go to its sub-class channel."""
    from .groundtruth import _check_detection, paint_by_cell

    _check_detection(pattern, detection)
    n_classes = pattern.n_classes if n_classes is None else n_classes
    lookup = np.full(len(pattern), -1, dtype=np.int64)
    valid = (model.cell_index >= 0) & (model.cell_index < len(pattern))
    lookup[model.cell_index[valid]] = model.subclass[valid]
    if np.any(lookup < 0):
        missing = int(np.flatnonzero(lookup < 0)[0])
        raise InconsistentInputError(f"cluster model has no assignment for cell {missing}")
    expected = pattern.labels * model.k
    if np.any((lookup < expected) | (lookup >= expected + model.k)):
        raise InconsistentInputError("cluster model sub-classes disagree with pattern classes")
    return paint_by_cell(detection, lookup, n_classes * model.k)
