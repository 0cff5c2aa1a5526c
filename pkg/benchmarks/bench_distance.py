"""Timing of the compiled vs pure-Python distance propagation kernels.

    python3 benchmarks/bench_distance.py [--sizes 16,24,32] [--repeat 3]

Both kernels run on the same ball source inside a unit box. The script
prints one CSV row per (size, norm) with the best wall time of each backend,
the speedup and the largest disagreement between the two fields.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time

import numpy as np

from bzkplate import distance
from bzkplate.distance import Grid, distance_transform
from bzkplate.norms import Norm3

NORMS = {
    "euclidean": Norm3.euclidean(),
    "ellipsoidal": Norm3.ellipsoidal(np.diag([1.0, 2.0, 0.5])),
    "weighted_l1": Norm3.weighted_l1([1.0, 1.5, 0.7]),
}


def _problem(n: int):
    grid = Grid.covering((0, 0, 0), (1, 1, 1), 1.0 / n)
    c = grid.centers()
    mask = np.linalg.norm(c - 0.5, axis=-1) <= 0.2
    return grid, mask


def _best(fn, repeat: int) -> tuple[float, object]:
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="16,24,32")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    have_compiled = distance.BACKEND == "compiled"
    if not have_compiled:
        print("compiled kernel not built; timing the Python kernel only", file=sys.stderr)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["voxels", "norm", "python_s", "compiled_s", "speedup", "max_abs_diff"])
    for n in (int(s) for s in args.sizes.split(",")):
        grid, mask = _problem(n)
        for name, norm in NORMS.items():
            dual = norm.dual()
            tp, fp = _best(lambda: distance_transform(dual, mask, grid, backend="python"), 1)
            if have_compiled:
                tc, fc = _best(lambda: distance_transform(dual, mask, grid, backend="compiled"), args.repeat)
                diff = float(np.max(np.abs(fp.values - fc.values)))
                w.writerow([grid.size, name, f"{tp:.4f}", f"{tc:.5f}", f"{tp / tc:.1f}", f"{diff:.2e}"])
            else:
                w.writerow([grid.size, name, f"{tp:.4f}", "", "", ""])
    return 0


if __name__ == "__main__":
    sys.exit(main())
