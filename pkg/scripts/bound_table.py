"""Tabulate every closed-form tail bound on an (x, v2) grid as CSV for plotting."""
import argparse
import sys

import numpy as np

from mppineq.mc import compare_bounds_csv


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--x-max", type=float, default=6.0)
    p.add_argument("--n-x", type=int, default=60)
    p.add_argument("--v2", type=float, nargs="+", default=[0.5, 1.0, 2.0, 4.0])
    p.add_argument("--c", type=float, default=1.0, help="jump bound for Freedman")
    p.add_argument("--out")
    args = p.parse_args(argv)
    xs = np.linspace(args.x_max / args.n_x, args.x_max, args.n_x)
    text = compare_bounds_csv(xs, args.v2, c=args.c)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


if __name__ == "__main__":
    main()
