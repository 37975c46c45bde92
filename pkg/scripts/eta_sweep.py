"""Rounded OT cost against a baseline for a range of regularization strengths."""
import argparse
from collections import defaultdict

import numpy as np

from otkhorn.bench import BenchSpec, default_jobs, run_bench


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out-dir", default="results/eta")
    p.add_argument("--pairs", type=int, default=3)
    p.add_argument("--side", type=int, default=10)
    p.add_argument("--etas", default="0.3,1,3,10")
    p.add_argument("--jobs", type=int, default=default_jobs())
    args = p.parse_args()

    spec = BenchSpec(experiment="EtaSweep", pairs=args.pairs, side=args.side,
                     etas=[float(e) for e in args.etas.split(",")], jobs=args.jobs)
    res = run_bench(spec, args.out_dir)
    gaps = defaultdict(list)
    for row in res.eta_sweep:
        gaps[(row["method"], row["eta"])].append(row["gap"])
    for (m, eta), g in sorted(gaps.items()):
        print(f"{m:>10} eta={eta:<6g} mean gap to {res.eta_sweep[0]['baseline_kind']}: {np.mean(g):.4g}")


if __name__ == "__main__":
    main()
