"""Coalescent tail inequalities on a grid of (x, v2) for several Lambda measures."""
import argparse

from mppineq.coalescent import BetaMeasure, Dirac
from mppineq.engines import CoalescentEngine
from mppineq.mc import TailEvent, estimate_tails, reports_to_csv

MEASURES = {"kingman": Dirac(0.0), "beta1.5": BetaMeasure(1.5, 1.5), "beta0.5": BetaMeasure(0.5, 1.5),
            "dirac0.3": Dirac(0.3)}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--measures", nargs="+", default=["kingman", "beta1.5"], choices=sorted(MEASURES))
    p.add_argument("--n0", type=int, default=20)
    p.add_argument("--v0", type=float, default=20.0)
    p.add_argument("--horizon", type=float, default=5.0)
    p.add_argument("--n-paths", type=int, default=50_000)
    p.add_argument("--seed", type=int, default=31)
    args = p.parse_args(argv)
    events, bounds, labels = [], [], []
    for x in (0.25, 0.5, 1.0):
        for v2 in (0.05, 0.25, 1.0):
            events += [TailEvent("B1", x, v2, args.horizon), TailEvent("B2", x, v2, args.horizon, 0.0, 1.0)]
            bounds += ["pena_poisson", "ratio_half"]
            labels += [f"B1 x={x} v2={v2}", f"B2 x={x} v2={v2}"]
    rows = []
    for name in args.measures:
        eng = CoalescentEngine(MEASURES[name], args.n0, args.v0)
        reps = estimate_tails(eng, None, events, args.n_paths, args.seed, bounds=bounds,
                              labels=[f"{name} {lab}" for lab in labels])
        rows.extend(reps)
    print(reports_to_csv(rows), end="")


if __name__ == "__main__":
    main()
