"""Detect the rotational symmetries of the generated fixtures and print the
resulting category, axes and the snapped group for each."""

import time

import numpy as np

from sympose import load_object

SHAPES = ["cube", "pyramid:3", "pyramid:5", "cone", "cylinder", "clamp", "frame"]


def main():
    for name in SHAPES:
        t0 = time.perf_counter()
        m = load_object(name)
        dt = time.perf_counter() - t0
        print(f"{name:10s} {m.sym.category:10s} group={m.group.name:6s} "
              f"primitives={sum(len(g) for g in m.gp.groups):3d} ({dt:.1f}s)")
        axes = m.sym.geometric_axes()
        for a in axes[:4]:
            kind = "continuous" if a.continuous else f"order {a.order}"
            print(f"    axis {np.round(a.axis, 3)}  {kind}")
        if len(axes) > 4:
            print(f"    ... {len(axes) - 4} more")


if __name__ == "__main__":
    main()
