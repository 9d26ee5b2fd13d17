"""Proper-symmetry groups reconstructed from detected axes.

Detected finite axes carry small angular errors, and products of slightly
wrong rotations do not close into a group. ``symmetry_group`` therefore
identifies the group type (cyclic, dihedral, tetrahedral, octahedral,
icosahedral), aligns the exact canonical group to the detected axes and
returns that conjugated group. Continuous symmetries are kept analytic:

- ``axial``: all rotations about one axis (cone-like),
- ``axial_flip``: the same plus every half-turn about a perpendicular axis
  (cylinder-like),
- ``full``: all of SO(3) (sphere-like).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    geodesic_distance,
    orthonormal_frame,
    random_rotations,
    rotation_angle,
    rotation_from_axis_angle,
)

GROUP_KINDS = ("trivial", "finite", "axial", "axial_flip", "full")


def closure(generators, tol=1e-6, max_size=200):
    """All products of ``generators``; raises if the set does not close."""
    elems = [np.eye(3)]
    frontier = [np.eye(3)]
    gens = [np.asarray(g, dtype=float) for g in generators]
    while frontier:
        new = []
        for a in frontier:
            for g in gens:
                p = g @ a
                if not any(np.abs(p - e).max() < tol for e in elems):
                    elems.append(p)
                    new.append(p)
                    if len(elems) > max_size:
                        raise ValueError("generators do not close into a finite group")
        frontier = new
    return np.array(elems)


def _z(n):
    return rotation_from_axis_angle(np.array([0.0, 0.0, 1.0]), 2 * math.pi / n)


def cyclic(n):
    return closure([_z(n)])


def dihedral(n):
    return closure([_z(n), rotation_from_axis_angle(np.array([1.0, 0.0, 0.0]), math.pi)])


def tetrahedral():
    d = np.ones(3) / math.sqrt(3)
    return closure([rotation_from_axis_angle(np.array([0.0, 0.0, 1.0]), math.pi),
                    rotation_from_axis_angle(d, 2 * math.pi / 3)])


def octahedral():
    d = np.ones(3) / math.sqrt(3)
    return closure([_z(4), rotation_from_axis_angle(d, 2 * math.pi / 3)])


def icosahedral():
    phi = (1 + math.sqrt(5)) / 2
    five = np.array([0.0, 1.0, phi]) / math.sqrt(1 + phi * phi)
    d = np.ones(3) / math.sqrt(3)
    return closure([rotation_from_axis_angle(five, 2 * math.pi / 5),
                    rotation_from_axis_angle(d, 2 * math.pi / 3)])


def group_axes(elements, tol=1e-6):
    """Rotation axes of a finite group as ``(unit line, order)`` pairs.

    The order of a line is the size of its cyclic stabilizer.
    """
    lines, counts = [], []
    for g in elements:
        ang = float(rotation_angle(g))
        if ang < tol:
            continue
        w, V = np.linalg.eig(g)
        e = np.real(V[:, int(np.argmin(np.abs(w - 1.0)))])
        e /= np.linalg.norm(e)
        for k, l in enumerate(lines):
            if abs(float(e @ l)) > 1 - tol:
                counts[k] += 1
                break
        else:
            lines.append(_sign_canonical(e))
            counts.append(1)
    return [(l, c + 1) for l, c in zip(lines, counts)]


def _sign_canonical(e):
    for c in e:
        if abs(c) > 1e-9:
            return e if c > 0 else -e
    return e


def _line_angle(a, b):
    return math.acos(min(1.0, abs(float(np.dot(a, b)))))


def _pair_frame(a, b):
    u = a / np.linalg.norm(a)
    w = np.cross(u, b)
    w /= np.linalg.norm(w)
    return np.stack([u, np.cross(w, u), w], axis=1)


def _kabsch(src, dst):
    """Rotation ``Q`` minimizing ``sum ||Q src_i - dst_i||^2``."""
    H = src.T @ dst
    U, _, Vt = np.linalg.svd(H)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
    return Vt.T @ D @ U.T


@dataclass
class SymmetryGroup:
    """A proper-symmetry group acting on the object frame."""

    kind: str
    elements: np.ndarray = field(default_factory=lambda: np.eye(3)[None])
    axis: np.ndarray | None = None
    generators: list = field(default_factory=list)
    name: str = ""

    def __post_init__(self):
        if self.kind not in GROUP_KINDS:
            raise ValueError(f"unknown group kind {self.kind!r}")

    @property
    def is_finite(self):
        return self.kind in ("trivial", "finite")

    @property
    def order(self):
        return len(self.elements) if self.is_finite else math.inf

    def gap(self, R):
        """Geodesic distance (radians) from rotation(s) ``R`` to the group."""
        R = np.asarray(R, dtype=float)
        single = R.ndim == 2
        Rb = R.reshape(-1, 3, 3)
        if self.kind == "full":
            out = np.zeros(len(Rb))
        elif self.kind in ("axial", "axial_flip"):
            Re = Rb @ self.axis
            c = np.clip(Re @ self.axis, -1.0, 1.0)
            out = np.arccos(c)
            if self.kind == "axial_flip":
                out = np.minimum(out, math.pi - out)
        else:
            # trace(g^T R) = 1 + 2 cos(angle)
            out = np.full(len(Rb), np.inf)
            for g in self.elements:
                tr = np.einsum("ij,nij->n", g, Rb)
                out = np.minimum(out, np.arccos(np.clip((tr - 1) / 2, -1.0, 1.0)))
            # refine the nearest ones with the accurate formula
            close = out < 1e-3
            if np.any(close):
                sub = Rb[close]
                best = np.full(len(sub), np.inf)
                for g in self.elements:
                    best = np.minimum(best, geodesic_distance(np.broadcast_to(g, sub.shape), sub))
                out[close] = best
        return float(out[0]) if single else out

    def contains(self, R, tol=1e-6):
        return bool(self.gap(R) < tol)

    def random_elements(self, rng, count, word_length=6):
        """Random members; for finite groups, random words in the generators."""
        if self.kind == "full":
            return random_rotations(count, rng)
        if self.kind in ("axial", "axial_flip"):
            phi = rng.uniform(0, 2 * math.pi, count)
            out = rotation_from_axis_angle(np.broadcast_to(self.axis, (count, 3)), phi)
            if self.kind == "axial_flip":
                flip = rng.random(count) < 0.5
                F = orthonormal_frame(self.axis)
                perp_ang = rng.uniform(0, 2 * math.pi, count)
                u = np.cos(perp_ang)[:, None] * F[:, 0] + np.sin(perp_ang)[:, None] * F[:, 1]
                flips = rotation_from_axis_angle(u, np.full(count, math.pi))
                out = np.where(flip[:, None, None], flips @ out, out)
            return out
        gens = self.generators or [np.eye(3)]
        out = np.empty((count, 3, 3))
        for i in range(count):
            M = np.eye(3)
            for _ in range(word_length):
                g = gens[rng.integers(len(gens))]
                M = g @ M if rng.random() < 0.5 else g.T @ M
            out[i] = M
        return out

    def act(self, point):
        """Orbit of ``point`` under a finite group (duplicates kept)."""
        if not self.is_finite:
            raise ValueError("orbit of a continuous group is not a finite set")
        return self.elements @ np.asarray(point, dtype=float)

    def fixes(self, point, tol):
        """Whether the continuous part leaves ``point`` in place."""
        p = np.asarray(point, dtype=float)
        if self.kind == "full":
            return np.linalg.norm(p) < tol
        if self.kind in ("axial", "axial_flip"):
            return np.linalg.norm(p - (p @ self.axis) * self.axis) < tol
        return True

    def to_dict(self):
        d = {"kind": self.kind, "name": self.name}
        if self.axis is not None:
            d["axis"] = [float(x) for x in self.axis]
        if self.is_finite:
            d["elements"] = np.asarray(self.elements).round(15).tolist()
        d["generators"] = [np.asarray(g).round(15).tolist() for g in self.generators]
        return d

    @classmethod
    def from_dict(cls, d):
        axis = None if d.get("axis") is None else np.asarray(d["axis"], dtype=float)
        elems = np.asarray(d.get("elements", [np.eye(3).tolist()]), dtype=float)
        gens = [np.asarray(g, dtype=float) for g in d.get("generators", [])]
        return cls(d["kind"], elems, axis, gens, d.get("name", ""))


def _identify(axes):
    """Canonical group, its generators and name from detected (line, order) pairs."""
    orders = [n for _, n in axes]
    high = [a for a in axes if a[1] >= 3]
    if not axes:
        return None
    if not high:
        if len(axes) == 1:
            return "C2", cyclic(2), [_z(2)]
        return "D2", dihedral(2), [_z(2), rotation_from_axis_angle(np.array([1.0, 0, 0]), math.pi)]
    if len(high) == 1:
        main, n = high[0]
        perp = [e for e, m in axes if m == 2 and _line_angle(e, main) > math.radians(85)]
        x_flip = rotation_from_axis_angle(np.array([1.0, 0, 0]), math.pi)
        if perp:
            return f"D{n}", dihedral(n), [_z(n), x_flip]
        return f"C{n}", cyclic(n), [_z(n)]
    top = max(orders)
    d = np.ones(3) / math.sqrt(3)
    if top >= 5:
        G = icosahedral()
        phi = (1 + math.sqrt(5)) / 2
        five = np.array([0.0, 1.0, phi]) / math.sqrt(1 + phi * phi)
        return "I", G, [rotation_from_axis_angle(five, 2 * math.pi / 5),
                        rotation_from_axis_angle(d, 2 * math.pi / 3)]
    if top == 4:
        return "O", octahedral(), [_z(4), rotation_from_axis_angle(d, 2 * math.pi / 3)]
    return "T", tetrahedral(), [rotation_from_axis_angle(np.array([0.0, 0, 1]), math.pi),
                                rotation_from_axis_angle(d, 2 * math.pi / 3)]


def align_group(canonical_axes, detected, reference=None):
    """Rotation ``Q`` taking canonical axes onto detected axes.

    ``detected`` is a list of ``(line, order)``. Returns ``(Q, worst_mismatch)``
    with the mismatch in radians.
    """
    det = sorted(detected, key=lambda a: -a[1])
    a, na = det[0]
    others = [(e, n) for e, n in det[1:] if _line_angle(e, a) > math.radians(5)]
    if not others:
        # only one axis: any rotation taking z onto it, twisted by the reference
        Q = orthonormal_frame(a, reference)
        return Q, 0.0
    b, nb = max(others, key=lambda x: x[1])
    ang_ab = _line_angle(a, b)
    Fd = _pair_frame(a, b if np.dot(a, b) >= 0 else -b)

    def score(Q):
        worst = 0.0
        for e, n in detected:
            best = min((_line_angle(e, Q @ c) for c, m in canonical_axes if m == n), default=math.pi)
            worst = max(worst, best)
        return worst

    best_Q, best_s = None, math.inf
    for ca, ma in canonical_axes:
        if ma != na:
            continue
        for cb, mb in canonical_axes:
            if mb != nb or _line_angle(ca, cb) < 1e-6:
                continue
            if abs(_line_angle(ca, cb) - ang_ab) > math.radians(5):
                continue
            for sa in (1.0, -1.0):
                cav = sa * ca
                cbv = cb if np.dot(cav, cb) >= 0 else -cb
                Q = Fd @ _pair_frame(cav, cbv).T
                s = score(Q)
                if s < best_s - 1e-12:
                    best_Q, best_s = Q, s
    if best_Q is None:
        raise ValueError("detected axes do not match the identified group")
    # least-squares polish over all matched axis pairs
    Q = best_Q
    for _ in range(3):
        src, dst = [], []
        for e, n in detected:
            cands = [c for c, m in canonical_axes if m == n]
            c = min(cands, key=lambda c: _line_angle(e, Q @ c))
            qc = Q @ c
            src.append(c if np.dot(e, qc) >= 0 else -c)
            dst.append(e)
        Q = _kabsch(np.array(src), np.array(dst))
    return Q, score(Q)


def symmetry_group(sym, max_mismatch=math.radians(5)) -> SymmetryGroup:
    """Exact proper-symmetry group consistent with a detected ``SymmetrySet``."""
    cat = sym.category
    geo = sym.geometric_axes()
    if cat == "cat5":
        return SymmetryGroup("full", name="SO3")
    cont = [a for a in geo if a.continuous]
    finite = [a for a in geo if not a.continuous]
    if cat in ("cat3", "cat4"):
        e = cont[0].axis
        if cat == "cat4":
            u = orthonormal_frame(e, finite[0].axis)[:, 0]
            flip = rotation_from_axis_angle(u, math.pi)
            return SymmetryGroup("axial_flip", axis=e, generators=[flip], name="O2")
        return SymmetryGroup("axial", axis=e, name="SO2")
    if cat == "asymmetric" or not finite:
        return SymmetryGroup("trivial", name="C1")
    detected = [(a.axis, a.order) for a in finite]
    name, G, gens = _identify(detected)
    Q, worst = align_group(group_axes(G), detected, sym.reference)
    if worst > max_mismatch:
        raise ValueError(f"detected axes deviate {math.degrees(worst):.2f} deg from group {name}")
    elements = Q @ G @ Q.T
    generators = [Q @ g @ Q.T for g in gens]
    return SymmetryGroup("finite", elements, None, generators, name)
