"""Text file formats: point CSVs, window sidecars, feature tables, cluster models.

CSV output uses ``.`` decimals, LF line endings and UTF-8.  Floats are written
with ``repr`` so that parsing them back is lossless.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .clustering import ClusterModel, FeatureTable
from .core import PointPattern, Window
from .errors import FormatVersionError, InvalidArgumentError, ParseError
from .infer_eval import Prediction

MODEL_FORMAT_VERSION = 1


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])


def _read_rows(path, required):
    """Yield ``(line_number, dict)`` for every data row, checking the header."""
    path = Path(path)
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as e:
        raise ParseError(f"{path}: {e.strerror}") from e
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}:1: empty file, expected header {','.join(required)}")
        header = [h.strip() for h in header]
        missing = [c for c in required if c not in header]
        if missing:
            raise ParseError(f"{path}:1: header lacks column(s) {', '.join(missing)}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}"
                )
            yield reader.line_num, header, row


def _num(path, line, name, text, kind=float):
    try:
        if kind is int:
            v = float(text)
            if v != int(v):
                raise ValueError
            return int(v)
        v = float(text)
        if not np.isfinite(v):
            raise ValueError
        return v
    except ValueError:
        raise ParseError(f"{path}:{line}: bad {name} value {text.strip()!r}") from None


def read_points_csv(path):
    """Return ``(xy, labels)`` from a ``x,y,class`` CSV."""
    xy, labels = [], []
    for line, header, row in _read_rows(path, ("x", "y", "class")):
        rec = dict(zip(header, row))
        xy.append((_num(path, line, "x", rec["x"]), _num(path, line, "y", rec["y"])))
        labels.append(_num(path, line, "class", rec["class"], int))
    return np.array(xy, dtype=np.float64).reshape(-1, 2), np.array(labels, dtype=np.int64)


def load_pattern(path, window: Window, n_classes: int) -> PointPattern:
    xy, labels = read_points_csv(path)
    return PointPattern(xy, labels, window, n_classes)


def save_pattern(path, pattern: PointPattern) -> None:
    write_csv(
        path,
        ["x", "y", "class"],
        ((x, y, c) for (x, y), c in zip(pattern.xy.tolist(), pattern.labels.tolist())),
    )


def read_window_json(path) -> tuple[Window, int]:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ParseError(f"{path}: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}:{e.lineno}: {e.msg}") from e
    try:
        return (
            Window(float(d["x0"]), float(d["y0"]), float(d["width"]), float(d["height"])),
            int(d["n_classes"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{path}: window sidecar needs x0, y0, width, height, n_classes ({e})")


def write_window_json(path, window: Window, n_classes: int) -> None:
    d = {
        "x0": window.x0,
        "y0": window.y0,
        "width": window.width,
        "height": window.height,
        "n_classes": n_classes,
    }
    Path(path).write_text(json.dumps(d, sort_keys=True) + "\n", encoding="utf-8")


def read_feature_table(path) -> FeatureTable:
    ids, labels, feats = [], [], []
    fcols = None
    for line, header, row in _read_rows(path, ("cell_index", "class")):
        if fcols is None:
            fcols = [i for i, h in enumerate(header) if h.startswith("f")]
            if not fcols:
                raise ParseError(f"{path}:1: no feature columns (f0, f1, ...)")
        rec = dict(zip(header, row))
        ids.append(_num(path, line, "cell_index", rec["cell_index"], int))
        labels.append(_num(path, line, "class", rec["class"], int))
        feats.append([_num(path, line, header[i], row[i]) for i in fcols])
    D = len(fcols) if fcols else 0
    return FeatureTable(ids, labels, np.array(feats, dtype=np.float64).reshape(len(ids), D))


def write_feature_table(path, table: FeatureTable) -> None:
    header = ["cell_index", "class"] + [f"f{i}" for i in range(table.dim)]
    rows = (
        [i, c, *f]
        for i, c, f in zip(table.cell_index.tolist(), table.labels.tolist(), table.features.tolist())
    )
    write_csv(path, header, rows)


def model_to_dict(model: ClusterModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "k": model.k,
        "epoch": model.epoch,
        "seed": model.seed,
        "centroids": {str(c): model.centroids[c].tolist() for c in sorted(model.centroids)},
        "assignments": {
            "cell_index": model.cell_index.tolist(),
            "subclass": model.subclass.tolist(),
        },
    }


def model_from_dict(d: dict) -> ClusterModel:
    version = d.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise FormatVersionError(
            f"cluster model format version {version}, expected {MODEL_FORMAT_VERSION}"
        )
    try:
        k = int(d["k"])
        centroids = {
            int(c): np.array(v, dtype=np.float64).reshape(k, -1) for c, v in d["centroids"].items()
        }
        a = d.get("assignments", {"cell_index": [], "subclass": []})
        return ClusterModel(
            k=k,
            centroids=centroids,
            cell_index=np.array(a["cell_index"], dtype=np.int64),
            subclass=np.array(a["subclass"], dtype=np.int64),
            epoch=int(d["epoch"]),
            seed=int(d["seed"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"malformed cluster model: {e}") from e


def save_model(path, model: ClusterModel) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), sort_keys=True) + "\n", encoding="utf-8")


def load_model(path) -> ClusterModel:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ParseError(f"{path}: {e.strerror}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}:{e.lineno}: {e.msg}") from e
    return model_from_dict(d)


def write_predictions(path, preds) -> None:
    write_csv(path, ["x", "y", "class", "size"], ((p.x, p.y, p.cls, p.size) for p in preds))


def read_predictions(path) -> list[Prediction]:
    out = []
    for line, header, row in _read_rows(path, ("x", "y", "class")):
        rec = dict(zip(header, row))
        size = _num(path, line, "size", rec["size"], int) if "size" in rec else 0
        out.append(
            Prediction(
                _num(path, line, "x", rec["x"]),
                _num(path, line, "y", rec["y"]),
                _num(path, line, "class", rec["class"], int),
                size,
            )
        )
    return out


def write_json(path, obj) -> None:
    if not isinstance(obj, dict):
        raise InvalidArgumentError("expected a dict")
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")
