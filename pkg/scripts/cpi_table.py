"""Car/pedestrian table: oracle FDE and EMD per objective variant, mean over seeds.

    python scripts/cpi_table.py --seeds 0 1 2 --out runs/cpi_table.csv
"""

import argparse
from pathlib import Path

import numpy as np

from lanedac.experiments import run_cpi
from lanedac.metrics import reports_to_csv
from lanedac.objectives import VARIANTS, Objective


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--hypotheses", type=int, default=8)
    p.add_argument("--out", default="runs/cpi_table.csv")
    args = p.parse_args()

    reports = []
    for v in VARIANTS:
        for s in args.seeds:
            reports.append(run_cpi(Objective(v), args.hypotheses, s).report)
            print(f"{v} seed {s}: FDE {reports[-1].oracle_fde:.3f} EMD {reports[-1].emd:.3f}", flush=True)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(reports_to_csv(reports))
    print(f"\n{'variant':8s} {'FDE':>7s} {'EMD':>7s}")
    for v in VARIANTS:
        rs = [r for r in reports if r.variant == v]
        print(f"{v:8s} {np.mean([r.oracle_fde for r in rs]):7.3f} {np.mean([r.emd for r in rs]):7.3f}")


if __name__ == "__main__":
    main()
