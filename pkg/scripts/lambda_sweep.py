"""Sweep the consistency weights of the nt+xy model (lambda1 = lambda2).

Trains only the regularized variant; lambda 0 is the unregularized model.
The data for each seed is generated once and shared across the sweep.

    python scripts/lambda_sweep.py --lambdas 0 0.1 1 10 --seeds 0 1 2
"""

import argparse
import dataclasses

import numpy as np

from lanedac.experiments import LaneExperimentConfig, lane_data, run_lanes
from lanedac.objectives import Objective


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--lambdas", type=float, nargs="+", default=[0.0, 0.1, 1.0, 10.0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--lr", type=float, default=LaneExperimentConfig().lr)
    p.add_argument("--iterations", type=int, default=LaneExperimentConfig().iterations)
    args = p.parse_args()

    cfg = dataclasses.replace(LaneExperimentConfig(), lr=args.lr, iterations=args.iterations)
    data = {s: lane_data(s, cfg) for s in args.seeds}
    print(f"{'lambda':>8s} {'mFDE top':>9s} {'mFDE oracle':>12s} {'offroad':>8s}")
    for lam in args.lambdas:
        top, orc, off = [], [], []
        for s in args.seeds:
            reps, _ = run_lanes(Objective("dac"), 6, s, cfg, variants=("ntxy_reg",),
                                lambda1=lam, lambda2=lam, data=data[s])
            by = {r.variant: r for r in reps}
            top.append(by["ntxy_reg/top"].mfde)
            orc.append(by["ntxy_reg/oracle"].mfde)
            off.append(by["ntxy_reg/top"].offroad_rate)
        print(f"{lam:8.3g} {np.mean(top):9.3f} {np.mean(orc):12.3f} {np.mean(off):8.4f}", flush=True)


if __name__ == "__main__":
    main()
