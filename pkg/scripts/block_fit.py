"""Least-squares fits of the blockwise generalized Roter equations.

For a corpus case, fits the six coefficients pointwise once against all
three block equations together and once against the fiber block alone,
and prints the resulting residuals.  The generic case fits its fiber block
alone (its fiber is itself generalized Roter) but not all blocks at once.
"""
import argparse

import numpy as np

from warpcurv.classify import ClassifyConfig
from warpcurv.corpus import case_by_name
from warpcurv.tensor import draw_points
from warpcurv.warped import best_fit_blocks, warp_point


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--case", default="M-general")
    ap.add_argument("--points", type=int, default=25)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()
    case = case_by_name(args.case)
    cfg = ClassifyConfig(points=args.points, seed=args.seed)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    print(f"{'x1':>8} {'joint base':>11} {'joint mixed':>11} {'joint fiber':>11} {'fiber-only':>11}")
    for point, _ in draw_points(case.chart, cfg.points, rng):
        wp = warp_point(case.spec, point)
        _, joint = best_fit_blocks(wp)
        _, alone = best_fit_blocks(wp, blocks=("fiber",))
        print(f"{point['x1']:8.4f} {joint.base:11.3e} {joint.mixed:11.3e} {joint.fiber:11.3e} {alone.fiber:11.3e}")


if __name__ == "__main__":
    main()
