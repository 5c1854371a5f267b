"""Direct fine-grid MMA against coarse-to-fine continuation: final cost and PCG iterations spent."""
import argparse
import logging

import numpy as np

from mmgtop.grid import BoundarySpec, GridSpec
from mmgtop.material import MaterialModel
from mmgtop.optim import OptimConfig, optimize


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--iters", type=int, default=30)
    ap.add_argument("--schedules", default="10:5,20:5,20:10", help="coarse:fine budgets, comma separated")
    ap.add_argument("--cr", type=int, default=4)
    ap.add_argument("-v", "--verbose", action="store_true")
    a = ap.parse_args()
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING)

    fine = GridSpec.cube(a.n)
    mat = MaterialModel.from_contrast(a.cr, kappa_lo=0.01)
    bc = BoundarySpec.bottom_center(0.1)
    ref = optimize(OptimConfig(schedule=[fine], max_iters=[a.iters]), mat, bc)
    print(f"direct {a.n}^3 x{a.iters}: cost {ref.cost:.4f}, PCG iterations {ref.total_linear_iterations}")
    for sched in a.schedules.split(","):
        lo, hi = (int(v) for v in sched.split(":"))
        res = optimize(OptimConfig(schedule=[GridSpec.cube(a.n // 2), fine], max_iters=[lo, hi]), mat, bc)
        share = res.total_linear_iterations / ref.total_linear_iterations
        print(
            f"continuation {lo}+{hi}: cost {res.cost:.4f} ({100 * (res.cost / ref.cost - 1):+.2f}%), "
            f"PCG iterations {res.total_linear_iterations} ({100 * share:.0f}%), volume {np.mean(res.x):.6f}"
        )


if __name__ == "__main__":
    main()
