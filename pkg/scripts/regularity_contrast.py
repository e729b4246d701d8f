"""Log-log slopes of E^u variation along center and stable curves of perturbed_skew."""
import argparse

import numpy as np

from phsplit import dynamics, partial_deriv


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epsilons", type=float, nargs="+", default=[0.0, 0.02, 0.05])
    ap.add_argument("--points", type=int, default=3)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--N", type=int, default=60)
    args = ap.parse_args(argv)

    pts = np.random.default_rng(args.seed).random((args.points, 3))
    print("epsilon  point  center_slope  stable_slope")
    for eps in args.epsilons:
        f = dynamics.perturbed_skew(eps)
        for i, p in enumerate(pts):
            c = partial_deriv.regularity_estimate(f, p, "center", N=args.N)
            s = partial_deriv.regularity_estimate(f, p, "stable", N=args.N)
            fmt = lambda r: "flat" if r.flat else f"{r.slope:.4f}"  # noqa: E731
            print(f"{eps:7.3f}  {i:5d}  {fmt(c):>12s}  {fmt(s):>12s}")


if __name__ == "__main__":
    main()
