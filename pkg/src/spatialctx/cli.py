"""``spatialctx`` command line.

Each subcommand is a thin wrapper over one library operation.  Exit codes:
0 success, 2 usage, 3 parse/format, 4 inconsistent input, 5 numeric/domain.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import FeatureTable, update_pseudo_labels, pseudo_label_masks
from .config import Config, load_config
from .core import PointPattern, Window
from .errors import SpatialCtxError
from .groundtruth import (
    generate_class_masks,
    generate_detection_mask,
    generate_kvector_map,
)
from .infer_eval import Prediction, evaluate, extract_cells, merge_reports
from . import io
from .raster import FORMAT_VERSION, read_raster, write_raster
from .spatial_stats import average_k_curves, csr_envelope, k_vector_array, ripley_k


class UsageError(Exception):
    pass


def _value_columns(n_classes: int, radii) -> list[str]:
    return [f"k{c}_r{r:g}" for c in range(n_classes) for r in radii]


# -- shared argument groups -----------------------------------------------------


def _add_config(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)


def _add_spatial(p):
    p.add_argument("--radii", help="comma-separated radii, e.g. 15,30,45")
    p.add_argument("--patch-size", type=float)
    p.add_argument("--n-max", type=float)


def _add_points(p, required=True):
    p.add_argument("--points", required=required, help="x,y,class CSV")
    p.add_argument("--window-json", help="sidecar with x0, y0, width, height, n_classes")
    p.add_argument("--window", help="x0,y0,width,height")
    p.add_argument("--n-classes", type=int)


def _config(args) -> Config:
    return load_config(
        getattr(args, "config", None),
        seed=getattr(args, "seed", None),
        workers=getattr(args, "workers", None),
        radii=getattr(args, "radii", None),
        patch_size=getattr(args, "patch_size", None),
        n_max=getattr(args, "n_max", None),
        k=getattr(args, "k", None),
        max_halfwidth=getattr(args, "max_halfwidth", None),
        min_gap=getattr(args, "min_gap", None),
        threshold=getattr(args, "threshold", None),
        min_size=getattr(args, "min_size", None),
        match_radius=getattr(args, "radius", None),
    )


def _window(args, xy=None, labels=None) -> tuple[Window, int]:
    if args.window_json:
        return io.read_window_json(args.window_json)
    if args.window:
        try:
            x0, y0, w, h = (float(v) for v in args.window.split(","))
        except ValueError:
            raise UsageError("--window expects x0,y0,width,height") from None
        if args.n_classes is None:
            raise UsageError("--window needs --n-classes")
        return Window(x0, y0, w, h), args.n_classes
    if xy is not None:
        # evaluation does not depend on the window: fall back to the bounding box
        lo = xy.min(axis=0) if len(xy) else np.zeros(2)
        hi = xy.max(axis=0) if len(xy) else np.ones(2)
        span = hi - lo + 1.0
        n_cls = args.n_classes or (int(labels.max()) + 1 if len(labels) else 1)
        return Window(float(lo[0]), float(lo[1]), float(span[0]), float(span[1])), n_cls
    raise UsageError("need --window-json, or --window with --n-classes")


def _pattern(args) -> PointPattern:
    window, n_classes = _window(args)
    return io.load_pattern(args.points, window, n_classes)


# -- subcommands ------------------------------------------------------------------


def cmd_kvec(args):
    cfg = _config(args)
    pattern = _pattern(args)
    radii = cfg.radii_grid
    arr = k_vector_array(pattern, radii, cfg.patch_size, cfg.n_max, workers=cfg.workers)
    header = ["cell_index", "x", "y", "class"] + _value_columns(pattern.n_classes, radii)
    rows = (
        [i, pattern.xy[i, 0], pattern.xy[i, 1], int(pattern.labels[i]), *arr[i].reshape(-1)]
        for i in range(len(pattern))
    )
    io.write_csv(args.out, header, rows)


def cmd_ripley(args):
    cfg = _config(args)
    pattern = _pattern(args)
    curve = ripley_k(pattern, args.source, args.target, cfg.radii_grid, args.correction)
    rows = zip(curve.radii.radii, curve.values, np.pi * curve.radii.radii**2)
    io.write_csv(args.out, ["radius", "k", "csr"], rows)


def cmd_envelope(args):
    cfg = _config(args)
    pattern = _pattern(args)
    radii = cfg.radii_grid
    obs = ripley_k(pattern, args.source, args.target, radii, args.correction)
    env = csr_envelope(
        pattern, args.source, args.target, radii, args.n_sims, args.rank, cfg.seed,
        args.correction, cfg.workers,
    )
    rows = zip(radii.radii, obs.values, env.lower, env.upper, env.baseline)
    io.write_csv(args.out, ["radius", "observed", "lower", "upper", "csr"], rows)


def cmd_curves(args):
    cfg = _config(args)
    pattern = _pattern(args)
    radii = cfg.radii_grid
    avg = average_k_curves(pattern, radii, cfg.patch_size, cfg.n_max, cfg.workers)
    header = ["source_class", "target_class", "n_sources", "absent"] + [f"r{r:g}" for r in radii]
    rows = []
    for s in range(pattern.n_classes):
        for t in range(pattern.n_classes):
            rows.append([s, t, int(avg.counts[s]), int(avg.absent[s]), *avg.means[s, t]])
    io.write_csv(args.out, header, rows)


def cmd_gtmaps(args):
    cfg = _config(args)
    pattern = _pattern(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    det = generate_detection_mask(pattern, cfg.max_halfwidth, cfg.min_gap)
    classes = generate_class_masks(pattern, det)
    kv = k_vector_array(pattern, cfg.radii_grid, cfg.patch_size, cfg.n_max, workers=cfg.workers)
    kmap, valid = generate_kvector_map(pattern, det, kv)
    write_raster(out / "detection.csrm", det.mask)
    write_raster(out / "classes.csrm", classes)
    write_raster(out / "kvector.csrm", kmap)
    write_raster(out / "validity.csrm", valid)
    io.write_csv(
        out / "dilation.csv",
        ["cell_index", "x", "y", "class", "col", "row", "halfwidth"],
        (
            [i, pattern.xy[i, 0], pattern.xy[i, 1], int(pattern.labels[i]),
             int(det.pixels[i, 0]), int(det.pixels[i, 1]), int(det.halfwidths[i])]
            for i in range(len(pattern))
        ),
    )


def cmd_cluster(args):
    cfg = _config(args)
    pattern = _pattern(args) if args.points else None
    if args.features:
        table = io.read_feature_table(args.features)
    elif pattern is not None:
        kv = k_vector_array(pattern, cfg.radii_grid, cfg.patch_size, cfg.n_max, workers=cfg.workers)
        table = FeatureTable(np.arange(len(pattern)), pattern.labels, kv.reshape(len(pattern), -1))
    else:
        raise UsageError("cluster needs --features or --points")
    model = update_pseudo_labels(
        table,
        io.load_model(args.model_in) if args.model_in else None,
        cfg.k,
        cfg.seed,
        n_classes=pattern.n_classes if pattern is not None else None,
        normalize=args.normalize,
    )
    io.write_csv(
        args.out,
        ["cell_index", "class", "subclass"],
        zip(model.cell_index.tolist(), (model.subclass // model.k).tolist(), model.subclass.tolist()),
    )
    if args.model_out:
        io.save_model(args.model_out, model)
    if args.raster_out:
        if pattern is None:
            raise UsageError("--raster-out needs --points")
        det = generate_detection_mask(pattern, cfg.max_halfwidth, cfg.min_gap)
        write_raster(args.raster_out, pseudo_label_masks(model, det, pattern))


def cmd_subcats(args):
    cfg = _config(args)
    pattern = _pattern(args)
    kv = k_vector_array(pattern, cfg.radii_grid, cfg.patch_size, cfg.n_max, workers=cfg.workers)
    table = FeatureTable(np.arange(len(pattern)), pattern.labels, kv.reshape(len(pattern), -1))
    model = update_pseudo_labels(table, None, cfg.k, cfg.seed, n_classes=pattern.n_classes)
    sub = dict(zip(model.cell_index.tolist(), model.subclass.tolist()))
    io.write_csv(
        args.out,
        ["cell_index", "x", "y", "class", "subcategory", "subclass"],
        (
            [i, pattern.xy[i, 0], pattern.xy[i, 1], int(pattern.labels[i]),
             sub[i] - int(pattern.labels[i]) * cfg.k, sub[i]]
            for i in range(len(pattern))
        ),
    )


def cmd_extract(args):
    cfg = _config(args)
    lk = read_raster(args.likelihood)
    cm = read_raster(args.classes)
    preds = extract_cells(lk, cm, cfg.threshold, cfg.min_size)
    if args.x0 or args.y0:
        preds = [Prediction(p.x + args.x0, p.y + args.y0, p.cls, p.size) for p in preds]
    io.write_predictions(args.out, preds)


def cmd_eval(args):
    cfg = _config(args)
    if len(args.pred) != len(args.gt):
        raise UsageError("--pred and --gt must be given the same number of times")
    reports = []
    for pred_path, gt_path in zip(args.pred, args.gt):
        preds = io.read_predictions(pred_path)
        xy, labels = io.read_points_csv(gt_path)
        all_xy = np.vstack([xy, np.array([[p.x, p.y] for p in preds]).reshape(-1, 2)])
        all_lab = np.concatenate([labels, np.array([p.cls for p in preds], dtype=np.int64)])
        window, n_classes = _window(args, all_xy, all_lab)
        gt = PointPattern(xy, labels, window, n_classes)
        reports.append(evaluate(preds, gt, cfg.match_radius))
    report = reports[0] if len(reports) == 1 and args.average == "micro" else merge_reports(
        reports, args.average
    )
    d = report.to_dict()
    d["match_radius"] = cfg.match_radius
    d["n_patches"] = len(reports)
    d["average"] = args.average
    if args.out:
        io.write_json(args.out, d)
    else:
        sys.stdout.write(json.dumps(d, sort_keys=True, indent=2) + "\n")


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spatialctx", description=__doc__.splitlines()[0])
    parser.add_argument(
        "--version",
        action="version",
        version=f"spatialctx {__version__} (raster format {FORMAT_VERSION}, "
        f"cluster model format {io.MODEL_FORMAT_VERSION})",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kvec", help="per-cell K-function vectors as CSV")
    _add_points(p)
    _add_spatial(p)
    _add_config(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_kvec)

    for name, func, helptext in (
        ("ripley", cmd_ripley, "population K / K-cross curve"),
        ("envelope", cmd_envelope, "K curve with a CSR rank envelope"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_points(p)
        _add_config(p)
        p.add_argument("--radii")
        p.add_argument("--source", type=int, default=0)
        p.add_argument("--target", type=int, default=0)
        p.add_argument("--correction", choices=("none", "border"), default="border")
        p.add_argument("--out", required=True)
        if name == "envelope":
            p.add_argument("--n-sims", type=int, default=99)
            p.add_argument("--rank", type=int, default=1)
        p.set_defaults(func=func)

    p = sub.add_parser("curves", help="average K-vector rows per class pair")
    _add_points(p)
    _add_spatial(p)
    _add_config(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("gtmaps", help="detection, class and K-vector training maps")
    _add_points(p)
    _add_spatial(p)
    _add_config(p)
    p.add_argument("--max-halfwidth", type=int)
    p.add_argument("--min-gap", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gtmaps)

    p = sub.add_parser("cluster", help="per-class k-means pseudo-labels")
    _add_points(p, required=False)
    _add_spatial(p)
    _add_config(p)
    p.add_argument("--features", help="cell_index,class,f0,... CSV")
    p.add_argument("--k", type=int)
    p.add_argument("--model-in", help="previous epoch's model (warm start)")
    p.add_argument("--model-out")
    p.add_argument("--normalize", action="store_true", help="z-score features first")
    p.add_argument("--max-halfwidth", type=int)
    p.add_argument("--min-gap", type=int)
    p.add_argument("--raster-out", help="pseudo-label mask raster (needs --points)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("subcats", help="sub-categorise cells by their K-vectors")
    _add_points(p)
    _add_spatial(p)
    _add_config(p)
    p.add_argument("--k", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_subcats)

    p = sub.add_parser("extract", help="cell predictions from output maps")
    _add_config(p)
    p.add_argument("--likelihood", required=True)
    p.add_argument("--classes", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--min-size", type=int)
    p.add_argument("--x0", type=float, default=0.0, help="added to predicted x")
    p.add_argument("--y0", type=float, default=0.0, help="added to predicted y")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval", help="detection and classification F-scores")
    _add_config(p)
    p.add_argument("--pred", action="append", required=True)
    p.add_argument("--gt", action="append", required=True)
    p.add_argument("--window-json")
    p.add_argument("--window")
    p.add_argument("--n-classes", type=int)
    p.add_argument("--radius", type=float)
    p.add_argument("--average", choices=("micro", "macro"), default="micro")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"spatialctx {args.command}: error: {e}", file=sys.stderr)
        return 2
    except SpatialCtxError as e:
        print(f"spatialctx {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
