"""Symmetry-aware pose distances for rigid objects."""

__version__ = "0.1.0"

from .geometry import (
    NNIndex,
    PointSet,
    RigidTransform,
    geodesic_distance,
    hausdorff_distance,
    normalize_point_set,
)
from .groups import SymmetryGroup, symmetry_group
from .landscape import build_neighbor_graph, descend_to_minima, evaluate_landscape, sample_so3, slice_1d
from .metrics import add, add_s, agpd, amgpd, auc, mgpd
from .pipeline import ObjectModel, load_object
from .primitives import GroupedPrimitives, build_gp, transform_gp
from .shapes import ShapeSpec, generate_shape, load_model, parse_shape
from .symmetry import DetectorConfig, SymmetrySet, detect
from .fitting import FitConfig, batch_fit, fit_pose

__all__ = [
    "NNIndex", "PointSet", "RigidTransform", "geodesic_distance", "hausdorff_distance", "normalize_point_set",
    "SymmetryGroup", "symmetry_group", "build_neighbor_graph", "descend_to_minima", "evaluate_landscape",
    "sample_so3", "slice_1d", "add", "add_s", "agpd", "amgpd", "auc", "mgpd", "ObjectModel", "load_object",
    "GroupedPrimitives", "build_gp", "transform_gp", "ShapeSpec", "generate_shape", "load_model", "parse_shape",
    "DetectorConfig", "SymmetrySet", "detect", "FitConfig", "batch_fit", "fit_pose",
]
