"""Iterations to reach each marginal tolerance, and the fitted log-log slope.

One fixed synthetic pair, many solver seeds.  Smaller slope = milder growth
in 1/eps'.
"""
import argparse

from otkhorn.bench import BenchSpec, default_jobs, run_bench


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--out-dir", default="results/tolerance")
    p.add_argument("--methods", default="sinkhorn,randkhorn,greenkhorn,gandkhorn")
    p.add_argument("--side", type=int, default=10)
    p.add_argument("--eta", type=float, default=0.01)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--eps-grid", default="0.1,0.03,0.01,0.003")
    p.add_argument("--jobs", type=int, default=default_jobs())
    args = p.parse_args()

    spec = BenchSpec(experiment="EpsSweep", methods=args.methods.split(","), side=args.side,
                     etas=[args.eta], seeds=args.seeds, eps_grid=[float(e) for e in args.eps_grid.split(",")],
                     jobs=args.jobs)
    res = run_bench(spec, args.out_dir)
    for row in res.slopes:
        print(f"{row['method']:>10}: median slope {row['median_slope']:.3f} "
              f"[{row['min_slope']:.3f}, {row['max_slope']:.3f}]")


if __name__ == "__main__":
    main()
