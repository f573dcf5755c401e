"""Fit every objective variant to the four-mode toy distribution over several seeds.

    python scripts/toy_comparison.py --seeds 0 1 2 3 4 --out runs/toy_comparison.csv
"""

import argparse
import dataclasses
from pathlib import Path

import numpy as np

from lanedac.experiments import ToyConfig, run_toy
from lanedac.metrics import reports_to_csv
from lanedac.objectives import VARIANTS, Objective


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--hypotheses", type=int, default=8)
    p.add_argument("--steps", type=int, default=ToyConfig().steps)
    p.add_argument("--out", default="runs/toy_comparison.csv")
    args = p.parse_args()

    cfg = dataclasses.replace(ToyConfig(), steps=args.steps)
    reports = [run_toy(Objective(v), args.hypotheses, s, cfg).report for v in VARIANTS for s in args.seeds]
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(reports_to_csv(reports))
    print(f"{'variant':8s} {'FDE':>7s} {'EMD':>7s} {'spurious':>9s} {'far':>5s}")
    for v in VARIANTS:
        rs = [r for r in reports if r.variant == v]
        print(f"{v:8s} {np.mean([r.oracle_fde for r in rs]):7.3f} {np.mean([r.emd for r in rs]):7.3f} "
              f"{np.median([r.spurious_count for r in rs]):9.1f} {np.median([r.far_count for r in rs]):5.1f}")


if __name__ == "__main__":
    main()
