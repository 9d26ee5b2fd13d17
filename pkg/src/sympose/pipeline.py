"""Glue: from a shape or mesh file to everything the metrics need."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import NNIndex, PointSet, normalize_point_set
from .groups import SymmetryGroup, symmetry_group
from .primitives import GroupedPrimitives, build_gp
from .shapes import generate_shape, load_model, parse_shape, resample_surface
from .symmetry import DetectorConfig, SymmetrySet, detect

QUERY_POINTS = 300  # outer-sum subsample for ADD-S during search


@dataclass
class ObjectModel:
    name: str
    points: PointSet  # centered and scaled to unit max coordinate
    scale: float
    sym: SymmetrySet
    group: SymmetryGroup
    gp: GroupedPrimitives
    index: NNIndex
    queries: np.ndarray

    @property
    def radius(self):
        return self.points.radius


def model_from_points(name, P, cfg: DetectorConfig | None = None, sym: SymmetrySet | None = None) -> ObjectModel:
    norm = normalize_point_set(P if isinstance(P, PointSet) else PointSet(P))
    Pn = norm.point_set
    sym = sym or detect(Pn, cfg)
    G = symmetry_group(sym)
    gp = build_gp(sym, Pn.radius, G)
    q = resample_surface(Pn, QUERY_POINTS).points
    return ObjectModel(name, Pn, norm.scale, sym, G, gp, NNIndex(Pn), q)


def load_object(source, cfg: DetectorConfig | None = None, samples=None, seed=0) -> ObjectModel:
    """``source`` is a shape spec such as ``"pyramid:4"`` or a mesh / point file path."""
    if Path(source).exists():
        return model_from_points(str(source), load_model(source), cfg)
    spec = parse_shape(str(source), samples=int(samples or 2000))
    return model_from_points(str(source), generate_shape(spec, seed=seed), cfg)
