"""Known rotation groups of the synthetic fixtures, for checking the detector."""

import math

import numpy as np

from sympose.groups import group_axes, octahedral

FIXTURES = ["cube", "pyramid:3", "pyramid:4", "pyramid:5", "pyramid:6", "cone", "cylinder", "sphere", "clamp",
            "frame"]

CATEGORY = {"cube": "cat1", "cone": "cat3", "cylinder": "cat4", "sphere": "cat5", "clamp": "cat2",
            "frame": "asymmetric"}
CATEGORY.update({f"pyramid:{n}": "cat2" for n in range(3, 7)})

Z = np.array([0.0, 0.0, 1.0])


def line_angle(a, b):
    return math.acos(min(1.0, abs(float(np.dot(a, b)))))


def nominal_axes(name):
    """``(finite, continuous)`` lists; finite entries are (axis, order).

    ``None`` for the finite list means "any 2-fold perpendicular to z"
    (the cylinder's flips form a continuum).
    """
    if name == "cube":
        return group_axes(octahedral()), []
    if name.startswith("pyramid"):
        return [(Z, int(name.split(":")[1]))], []
    if name == "cone":
        return [], [Z]
    if name == "cylinder":
        return None, [Z]
    if name == "clamp":
        return [(Z, 2)], []
    return [], []


def detection_problems(name, sym, tol_deg=1.0):
    """Every way the detected set differs from the nominal group (empty if none)."""
    tol = math.radians(tol_deg)
    out = []
    if sym.category != CATEGORY[name]:
        out.append(f"category {sym.category} != {CATEGORY[name]}")
    finite, cont = nominal_axes(name)
    geo = sym.geometric_axes()
    det_cont = [a for a in geo if a.continuous]
    det_fin = [a for a in geo if not a.continuous]
    if name == "sphere":
        if len(det_cont) < 2:
            out.append("sphere needs two continuous axes")
        return out
    if len(det_cont) != len(cont):
        out.append(f"{len(det_cont)} continuous axes, expected {len(cont)}")
    for e in cont:
        if det_cont and min(line_angle(a.axis, e) for a in det_cont) > tol:
            out.append("continuous axis off nominal")
    if finite is None:
        if not det_fin:
            out.append("no perpendicular 2-fold found")
        for a in det_fin:
            if a.order != 2 or abs(line_angle(a.axis, Z) - math.pi / 2) > tol:
                out.append(f"bad flip axis {a.axis} order {a.order}")
        return out
    if len(det_fin) != len(finite):
        out.append(f"{len(det_fin)} finite axes, expected {len(finite)}")
    for a in det_fin:
        best = min(finite, key=lambda f: line_angle(a.axis, f[0]))
        if line_angle(a.axis, best[0]) > tol:
            out.append(f"axis {np.round(a.axis, 4)} is {math.degrees(line_angle(a.axis, best[0])):.2f} deg off")
        elif a.order != best[1]:
            out.append(f"order {a.order} != {best[1]}")
    return out
