"""Lane-anchor ablation: xy, nt, nt+xy and nt+xy with the consistency terms.

Each variant is trained on the same scenes per seed; rows are printed per
anchor strategy (top, oracle, bofa).

    python scripts/lane_ablation.py --seeds 0 1 2 --lr 1e-4
"""

import argparse
import dataclasses
from pathlib import Path

import numpy as np

from lanedac.experiments import LANE_VARIANTS, LaneExperimentConfig, run_lanes
from lanedac.lanes import STRATEGIES
from lanedac.metrics import reports_to_csv
from lanedac.objectives import Objective


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--hypotheses", type=int, default=6)
    p.add_argument("--objective", default="dac")
    p.add_argument("--lr", type=float, default=LaneExperimentConfig().lr)
    p.add_argument("--iterations", type=int, default=LaneExperimentConfig().iterations)
    p.add_argument("--lambda1", type=float, default=1.0)
    p.add_argument("--lambda2", type=float, default=1.0)
    p.add_argument("--out", default="runs/lane_ablation.csv")
    args = p.parse_args()

    cfg = dataclasses.replace(LaneExperimentConfig(), lr=args.lr, iterations=args.iterations)
    reports = []
    for s in args.seeds:
        reps, _ = run_lanes(Objective(args.objective), args.hypotheses, s, cfg,
                            lambda1=args.lambda1, lambda2=args.lambda2)
        reports.extend(reps)
        print(f"seed {s} done", flush=True)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(reports_to_csv(reports))
    print(f"{'variant':20s} {'mADE':>7s} {'mFDE':>7s} {'miss':>6s} {'offroad':>8s}")
    for v in LANE_VARIANTS:
        for k in STRATEGIES:
            rs = [r for r in reports if r.variant == f"{v}/{k}"]
            print(f"{v + '/' + k:20s} {np.mean([r.made for r in rs]):7.3f} {np.mean([r.mfde for r in rs]):7.3f} "
                  f"{np.mean([r.miss_rate for r in rs]):6.3f} {np.mean([r.offroad_rate for r in rs]):8.4f}")


if __name__ == "__main__":
    main()
