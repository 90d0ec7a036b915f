"""Exact and Monte Carlo martingale-ratio means under both atom sign conventions.

A single atom of mass ``a`` with constant mark ``z`` has W-hat = a z, so the
no-event branch carries a nonzero compensator jump.  Only the
compensator-consistent convention keeps E[exp(X) / E(S)] at 1.
"""
import argparse

import numpy as np

from mppineq.marks import point_mass
from mppineq.mc import check_martingale_ratio
from mppineq.oracle import DiscreteModel, exact_mean_ratio


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--mass", type=float, default=0.5)
    p.add_argument("--mark", type=float, default=2.0)
    p.add_argument("--family", choices=("gaussian", "poissonian"), default="gaussian")
    p.add_argument("--n-paths", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=5)
    args = p.parse_args(argv)
    model = DiscreteModel((1.0,), (args.mass,), point_mass(args.mark))
    lams = np.linspace(0.1, 0.9 if args.family == "poissonian" else 1.5, 9)
    print("lam,convention,exact_ratio,exact_u,mc_mean,mc_se,mc_verdict")
    for lam in lams:
        for conv in ("compensator", "paper"):
            ex = exact_mean_ratio(model, lam, args.family, conv)
            mc = check_martingale_ratio(model.spec, model.weight, lam, args.family, 1.0, args.n_paths, args.seed,
                                        convention=conv)
            print(f"{lam:.4f},{conv},{ex.ratio:.15f},{ex.u:.15f},{mc.mean:.6f},{mc.se:.6f},{mc.verdict}")


if __name__ == "__main__":
    main()
