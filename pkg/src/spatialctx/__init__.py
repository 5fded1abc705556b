"""Spatial-context toolkit for multi-class cell detection.

Ripley K estimators and per-cell K-function vectors, training-map generation,
k-means pseudo-labels, inference post-processing and point-matching
evaluation.
"""

__version__ = "0.1.0"

from .core import DEFAULT_RADII, GridIndex, PointPattern, RadiiGrid, Window, build_index, count_in_disk
from .spatial_stats import (
    AverageCurves,
    Envelope,
    KCurve,
    KVector,
    average_k_curves,
    cell_k_vector,
    csr_envelope,
    data_n_max,
    density_field,
    density_vector,
    k_vector_array,
    k_vector_field,
    ks_distance,
    l1_distance,
    nn_distance_field,
    nn_distance_vector,
    ripley_k,
)
from .raster import RasterMap, read_raster, write_raster
from .groundtruth import (
    DetectionMask,
    combined_loss,
    dice_loss,
    generate_class_masks,
    generate_detection_mask,
    generate_kvector_map,
)
from .clustering import ClusterModel, FeatureTable, kmeans_fit, pseudo_label_masks, update_pseudo_labels
from .infer_eval import (
    ComponentLabeling,
    EvalReport,
    Prediction,
    evaluate,
    extract_cells,
    label_components,
    match_points,
    merge_reports,
)
