"""Pose descent on the clamp from flipped starts, ADD-S versus A(M)GPD.

Each trial starts near the end-over-end flip of the target. The same starts
are used for both losses; a fit counts as correct within 5 degrees of a
proper symmetry and 0.02 r in translation.
"""

import sys
from collections import Counter

from sympose import load_object
from sympose.fitting import run_trials


def main(trials=20):
    m = load_object("clamp")
    for loss in ("adds", "amgpd"):
        res = run_trials(m, loss, trials, seed=0, init="flip")
        ok = sum(r.correct for r in res)
        gaps = Counter(round(r.gap_deg / 10) * 10 for r in res if not r.correct)
        print(f"{loss:6s} correct {ok}/{trials}; wrong fits by gap (deg): {dict(sorted(gaps.items()))}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 20)
