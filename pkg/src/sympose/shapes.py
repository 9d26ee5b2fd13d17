"""Model loading (OBJ / PLY / CSV, ASCII only) and synthetic test shapes.

The generators sample surfaces on structured grids built so that each
shape's nominal rotation group maps the sample set onto itself exactly
(cube, pyramid, clamp) or up to half the sample spacing (cone, cylinder,
sphere, whose symmetries are continuous).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import cKDTree

from .geometry import PointSet, fibonacci_sphere, rotation_from_axis_angle

SHAPE_KINDS = ("cube", "pyramid", "cone", "cylinder", "sphere", "clamp", "frame")

_ALIASES = {
    "regular-pyramid": "pyramid",
    "clamp-like": "clamp",
    "frame-asymmetric": "frame",
    "asymmetric": "frame",
}


class ModelParseError(ValueError):
    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        where = f"{path}:{lineno}" if lineno else str(path)
        super().__init__(f"{where}: {message}")


class EmptyModelError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def merge_duplicates(points, tol=1e-9):
    """Drop points within ``tol`` of an earlier point; order is preserved."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 2:
        return pts
    pairs = cKDTree(pts).query_pairs(tol, output_type="ndarray")
    if len(pairs) == 0:
        return pts
    # union-find so chains of near-duplicates collapse onto the first member
    parent = np.arange(len(pts))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    keep = np.array([find(i) == i for i in range(len(pts))])
    return pts[keep]


def _parse_floats(tokens, path, lineno):
    try:
        vals = [float(t) for t in tokens]
    except ValueError:
        raise ModelParseError(path, lineno, f"cannot parse coordinates {tokens!r}") from None
    if not all(math.isfinite(v) for v in vals):
        raise ModelParseError(path, lineno, "non-finite coordinate")
    return vals


def _read_obj(path, lines):
    pts = []
    for lineno, line in enumerate(lines, 1):
        tok = line.split()
        if not tok or tok[0] != "v":
            continue
        if len(tok) < 4:
            raise ModelParseError(path, lineno, "vertex line needs x y z")
        # optional w / colour components after xyz are ignored
        pts.append(_parse_floats(tok[1:4], path, lineno))
    return pts


def _read_ply(path, lines):
    if not lines or lines[0].strip() != "ply":
        raise ModelParseError(path, 1, "missing 'ply' magic")
    n_vertex = None
    props = []
    in_vertex = False
    fmt = None
    header_end = None
    for lineno, line in enumerate(lines[1:], 2):
        tok = line.split()
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            fmt = tok[1] if len(tok) > 1 else None
            if fmt != "ascii":
                raise ModelParseError(path, lineno, f"unsupported PLY format {fmt!r} (ascii only)")
        elif tok[0] == "element":
            in_vertex = len(tok) >= 3 and tok[1] == "vertex"
            if in_vertex:
                try:
                    n_vertex = int(tok[2])
                except ValueError:
                    raise ModelParseError(path, lineno, "bad vertex count") from None
        elif tok[0] == "property":
            if in_vertex:
                if len(tok) < 3:
                    raise ModelParseError(path, lineno, "malformed property line")
                props.append(tok[-1])
        elif tok[0] == "end_header":
            header_end = lineno
            break
        else:
            raise ModelParseError(path, lineno, f"unexpected header keyword {tok[0]!r}")
    if header_end is None:
        raise ModelParseError(path, len(lines), "missing end_header")
    if fmt is None:
        raise ModelParseError(path, header_end, "missing format line")
    if n_vertex is None:
        raise ModelParseError(path, header_end, "no vertex element")
    try:
        ix, iy, iz = props.index("x"), props.index("y"), props.index("z")
    except ValueError:
        raise ModelParseError(path, header_end, "vertex element lacks x/y/z properties") from None
    pts = []
    body = lines[header_end:]
    for k in range(n_vertex):
        lineno = header_end + k + 1
        if k >= len(body):
            raise ModelParseError(path, lineno, "file ends before all vertices were read")
        tok = body[k].split()
        if len(tok) < len(props):
            raise ModelParseError(path, lineno, "vertex line has too few values")
        pts.append(_parse_floats([tok[ix], tok[iy], tok[iz]], path, lineno))
    return pts


def _read_csv(path, lines):
    pts = []
    for lineno, line in enumerate(lines, 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        tok = [t.strip() for t in s.replace(";", ",").split(",")]
        if lineno == 1 and [t.lower() for t in tok[:3]] == ["x", "y", "z"]:
            continue
        if len(tok) < 3:
            raise ModelParseError(path, lineno, "expected x,y,z")
        pts.append(_parse_floats(tok[:3], path, lineno))
    return pts


_READERS = {"obj": _read_obj, "ply": _read_ply, "csv": _read_csv, "xyz": _read_csv}


def load_model(path, format=None) -> PointSet:
    """Read the vertex list of an ASCII OBJ, PLY or CSV/XYZ file.

    Vertices closer than 1e-9 are merged.
    """
    fmt = (format or os.path.splitext(str(path))[1].lstrip(".")).lower()
    fmt = {"obj-ascii": "obj", "ply-ascii": "ply", "xyz-csv": "csv", "txt": "csv"}.get(fmt, fmt)
    if fmt not in _READERS:
        raise ValueError(f"unknown model format {fmt!r}")
    with open(path, "r", encoding="utf-8", errors="strict") as fh:
        lines = fh.read().splitlines()
    pts = _READERS[fmt](path, lines)
    if not pts:
        raise EmptyModelError(f"{path}: model has no vertices")
    return PointSet(merge_duplicates(np.array(pts)))


# ---------------------------------------------------------------------------
# Surface samplers
# ---------------------------------------------------------------------------

def _sym_grid(half, spacing):
    """Grid over ``[-half, half]`` that is exactly symmetric about zero."""
    k = max(2, int(math.ceil(2 * half / spacing)) + 1)
    return (np.arange(k) - (k - 1) / 2.0) * (2 * half / (k - 1))


def _box_surface(center, half, spacing):
    cx, cy, cz = center
    hx, hy, hz = half
    gx, gy, gz = _sym_grid(hx, spacing), _sym_grid(hy, spacing), _sym_grid(hz, spacing)
    faces = []
    for sgn in (-1.0, 1.0):
        a, b = np.meshgrid(gy, gz, indexing="ij")
        faces.append(np.stack([np.full(a.size, sgn * hx), a.ravel(), b.ravel()], 1))
        a, b = np.meshgrid(gx, gz, indexing="ij")
        faces.append(np.stack([a.ravel(), np.full(a.size, sgn * hy), b.ravel()], 1))
        a, b = np.meshgrid(gx, gy, indexing="ij")
        faces.append(np.stack([a.ravel(), b.ravel(), np.full(a.size, sgn * hz)], 1))
    return np.concatenate(faces) + np.array([cx, cy, cz])


def _box_area(half):
    hx, hy, hz = half
    return 8 * (hx * hy + hy * hz + hx * hz)


def _triangle_grid(a, b, c, spacing):
    a, b, c = (np.asarray(v, dtype=float) for v in (a, b, c))
    longest = max(np.linalg.norm(b - a), np.linalg.norm(c - a), np.linalg.norm(c - b))
    k = max(1, int(math.ceil(longest / spacing)))
    i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
    keep = (i + j) <= k
    u = (i[keep] / k)[:, None]
    v = (j[keep] / k)[:, None]
    return a + u * (b - a) + v * (c - a)


def _ring(radius, z, spacing):
    if radius < 1e-12:
        return np.array([[0.0, 0.0, z]])
    m = max(3, int(math.ceil(2 * math.pi * radius / spacing)))
    phi = 2 * math.pi * np.arange(m) / m
    return np.stack([radius * np.cos(phi), radius * np.sin(phi), np.full(m, z)], 1)


def _disc(radius, z, spacing):
    k = max(1, int(math.ceil(radius / spacing)))
    return np.concatenate([_ring(radius * i / k, z, spacing) for i in range(k + 1)])


def _rotate_copies(points, axis, n):
    Rs = [rotation_from_axis_angle(np.asarray(axis, float), 2 * math.pi * k / n) for k in range(n)]
    return np.concatenate([points @ R.T for R in Rs])


# ---------------------------------------------------------------------------
# Shape descriptors and generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShapeSpec:
    """Parameters of a synthetic test shape.

    ``samples`` is a target; structured grids land near, not exactly on, it.
    Sizes not given explicitly take per-kind defaults (see ``DEFAULT_SIZES``).
    """

    kind: str
    order: int = 4
    radius: float | None = None
    height: float | None = None
    length: float | None = None
    samples: int = 2000
    noise: float = 0.0

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        object.__setattr__(self, "kind", kind)
        if kind not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if kind == "pyramid" and int(self.order) < 3:
            raise ValueError("pyramid order must be >= 3")
        if self.samples < 4:
            raise ValueError("sample count must be >= 4")
        for name in ("radius", "height", "length"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")

    def resolved(self) -> "ShapeSpec":
        d = DEFAULT_SIZES[self.kind]
        return replace(
            self,
            radius=self.radius if self.radius is not None else d.get("radius"),
            height=self.height if self.height is not None else d.get("height"),
            length=self.length if self.length is not None else d.get("length"),
        )

    @property
    def label(self):
        return f"pyramid:{self.order}" if self.kind == "pyramid" else self.kind


DEFAULT_SIZES = {
    "cube": {"radius": 1.0},  # half edge
    "pyramid": {"radius": 1.0, "height": 0.8},
    "cone": {"radius": 1.0, "height": 1.5},
    "cylinder": {"radius": 1.0, "height": 2.4},
    "sphere": {"radius": 1.0},
    "clamp": {"length": 2.0},
    "frame": {"length": 1.0},
}


def parse_shape(text: str, samples: int = 2000) -> ShapeSpec:
    """Parse ``kind[:order]`` strings such as ``pyramid:4`` or ``cube``."""
    kind, _, arg = text.strip().partition(":")
    kind = _ALIASES.get(kind, kind)
    if kind == "pyramid":
        return ShapeSpec("pyramid", order=int(arg or 4), samples=samples)
    if arg:
        raise ValueError(f"shape {kind!r} takes no parameter")
    return ShapeSpec(kind, samples=samples)


def _cube(s, fudge=1.0):
    a = s.radius
    spacing = fudge * math.sqrt(6 * (2 * a) ** 2 / s.samples)
    return _box_surface((0, 0, 0), (a, a, a), spacing)


def _pyramid(s, fudge=1.0):
    n, R, h = int(s.order), s.radius, s.height
    v0 = np.array([R, 0.0, 0.0])
    v1 = np.array([R * math.cos(2 * math.pi / n), R * math.sin(2 * math.pi / n), 0.0])
    apex = np.array([0.0, 0.0, h])
    edge = np.linalg.norm(v1 - v0)
    base_area = 0.5 * n * R * R * math.sin(2 * math.pi / n)
    slant = math.hypot(h, R * math.cos(math.pi / n))
    area = base_area + 0.5 * n * edge * slant
    spacing = fudge * math.sqrt(area / s.samples)
    sector = np.concatenate([
        _triangle_grid(np.zeros(3), v0, v1, spacing),
        _triangle_grid(v0, v1, apex, spacing),
    ])
    return _rotate_copies(sector, (0, 0, 1), n)


def _cone(s, fudge=1.0):
    R, h = s.radius, s.height
    slant = math.hypot(R, h)
    area = math.pi * R * slant + math.pi * R * R
    spacing = fudge * math.sqrt(area / s.samples)
    k = max(1, int(math.ceil(slant / spacing)))
    lateral = [_ring(R * (1 - t), h * t, spacing) for t in np.arange(k + 1) / k]
    return np.concatenate(lateral + [_disc(R, 0.0, spacing)])


def _cylinder(s, fudge=1.0):
    R, H = s.radius, s.height
    area = 2 * math.pi * R * H + 2 * math.pi * R * R
    spacing = fudge * math.sqrt(area / s.samples)
    zs = _sym_grid(H / 2, spacing)
    parts = [_ring(R, z, spacing) for z in zs]
    parts += [_disc(R, -H / 2, spacing), _disc(R, H / 2, spacing)]
    return np.concatenate(parts)


def _sphere(s, fudge=1.0):
    return s.radius * fibonacci_sphere(s.samples)


def _clamp(s, fudge=1.0):
    # Two parallel jaws along x joined by a central block, with a pad on top
    # of each jaw at diagonally opposite ends. The only rotational symmetry is
    # the half-turn about z; the half-turn about the long x axis is a near
    # miss (jaws swap, pads end up underneath).
    L = s.length / 2
    jaw_y, jaw_w, thick = 0.09 * s.length, 0.03 * s.length, 0.03 * s.length
    pad_len, pad_h = 0.1 * s.length, 0.09 * s.length
    jaw = ((0.0, jaw_y, 0.0), (L, jaw_w, thick))
    pad = ((L - pad_len / 2, jaw_y, thick + pad_h / 2), (pad_len / 2, jaw_w, pad_h / 2))
    block = ((0.0, 0.0, 0.0), (0.05 * s.length, jaw_y, thick))
    area = 2 * (_box_area(jaw[1]) + _box_area(pad[1])) + _box_area(block[1])
    spacing = fudge * math.sqrt(area / s.samples)
    half = np.concatenate([_box_surface(*jaw, spacing), _box_surface(*pad, spacing)])
    other = half * np.array([-1.0, -1.0, 1.0])
    return np.concatenate([half, other, _box_surface(*block, spacing)])


def _frame(s, fudge=1.0):
    # three arms of distinct lengths from a corner block: no rotational symmetry
    a = s.length
    w = 0.06 * a
    arms = [
        ((0.5 * a, 0.0, 0.0), (0.5 * a, w, w)),
        ((0.0, 0.35 * a, 0.0), (w, 0.35 * a, w)),
        ((0.0, 0.0, 0.225 * a), (w, w, 0.225 * a)),
    ]
    area = sum(_box_area(h) for _, h in arms)
    spacing = fudge * math.sqrt(area / s.samples)
    return np.concatenate([_box_surface(c, h, spacing) for c, h in arms])


_GENERATORS = {
    "cube": _cube,
    "pyramid": _pyramid,
    "cone": _cone,
    "cylinder": _cylinder,
    "sphere": _sphere,
    "clamp": _clamp,
    "frame": _frame,
}


def generate_shape(spec: ShapeSpec, seed: int = 0) -> PointSet:
    """Sample the surface of a synthetic shape in its canonical frame.

    Symmetric shapes have their main axis along z. ``seed`` only matters when
    ``spec.noise > 0`` (isotropic Gaussian jitter scaled by the shape radius).
    """
    if not isinstance(spec, ShapeSpec):
        raise TypeError("spec must be a ShapeSpec")
    s = spec.resolved()
    gen = _GENERATORS[s.kind]
    pts = merge_duplicates(gen(s))
    # grids overshoot or undershoot the target; one spacing correction
    ratio = len(pts) / s.samples
    if abs(ratio - 1) > 0.1:
        pts = merge_duplicates(gen(s, math.sqrt(ratio)))
    if s.noise > 0:
        rng = np.random.default_rng(seed)
        scale = np.linalg.norm(pts - pts.mean(0), axis=1).max()
        pts = pts + rng.normal(scale=s.noise * scale, size=pts.shape)
    return PointSet(pts)


def resample_surface(P: PointSet, count: int) -> PointSet:
    """Deterministic farthest-point subsample of ``count`` points.

    Starts from the point farthest from the centroid (lowest index on ties).
    Returns ``P`` unchanged when ``count >= len(P)``.
    """
    if count < 4:
        raise ValueError("count must be >= 4")
    if count >= len(P):
        return P
    pts = P.points
    chosen = np.empty(count, dtype=np.int64)
    chosen[0] = int(np.argmax(np.linalg.norm(pts - P.centroid, axis=1)))
    dist = np.linalg.norm(pts - pts[chosen[0]], axis=1)
    for i in range(1, count):
        chosen[i] = int(np.argmax(dist))
        dist = np.minimum(dist, np.linalg.norm(pts - pts[chosen[i]], axis=1))
    return PointSet(pts[np.sort(chosen)])
