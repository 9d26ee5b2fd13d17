"""Local minima of ADD-S and MGPD over SO(3) for the clamp-like part.

The clamp has a single half-turn symmetry, but flipping it end over end only
moves a few surface points far from the model, so ADD-S develops minima at
wrong poses. MGPD, measured on grouped primitives, keeps its minima on the
symmetry set. A one-axis slice through the flip is printed at the end.
"""

import math
import sys

import numpy as np

from sympose import build_neighbor_graph, descend_to_minima, evaluate_landscape, load_object, sample_so3, slice_1d


def summary(label, rep):
    print(f"{label}: {len(rep.minima)} minima, all_correct={rep.all_correct}")
    for mn in sorted(rep.minima, key=lambda m: m.d):
        tag = "" if mn.gap < rep.tolerance else "  <- wrong pose"
        print(f"    d={mn.d:.4f}  gap to symmetry {math.degrees(mn.gap):6.1f} deg{tag}")


def main(N=20_000):
    m = load_object("clamp")
    Rs = sample_so3(N, seed=0)
    graph = build_neighbor_graph(Rs, 12)
    adds = evaluate_landscape("adds", Rs, points=m.points.points, graph=graph, queries=m.queries)
    summary("ADD-S", descend_to_minima(adds, m.group))
    mg = evaluate_landscape("mgpd", Rs, gp=m.gp, graph=graph)
    summary("MGPD ", descend_to_minima(mg, m.group))

    x = np.array([1.0, 0.0, 0.0])
    deg, d_adds = slice_1d("adds", x, steps=36, points=m.points.points)
    _, d_mgpd = slice_1d("mgpd", x, steps=36, gp=m.gp)
    print("\nrotation about x   ADD-S    MGPD")
    for a, u, v in zip(deg, d_adds, d_mgpd):
        print(f"{a:14.0f}   {u:.4f}   {v:.4f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 20_000)
