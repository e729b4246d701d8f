"""E^u(f_t) sampled along a dynamically defined curve versus the constant path t -> p.

With a perturbed base, E^u(f_0) is only Hoelder along the stable direction,
and the constant path pulls its base point back along w.  Difference
quotients of both samplings are printed at shrinking t-steps.
No assertion is made.
"""
import argparse

import numpy as np

from phsplit import dynamics, family


def quotient_spread(trace):
    q = [np.linalg.norm(x, 2) for x in trace.quotients()]
    return min(q), max(q), trace.modulus()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--point", type=float, nargs=3, default=[0.1, 0.2, 0.3])
    ap.add_argument("--epsilon", type=float, default=0.05, help="perturbation of the skew-product base")
    ap.add_argument("--src", type=int, default=0)
    ap.add_argument("--dst", type=int, default=1)
    ap.add_argument("--N", type=int, default=60)
    args = ap.parse_args(argv)

    fam = dynamics.conjugated_family("perturbed_skew", src=args.src, dst=args.dst, epsilon=args.epsilon)
    p = np.array(args.point)
    print("step      path      min|quot|     max|quot|     modulus")
    for step in (4e-3, 2e-3, 1e-3, 5e-4):
        span = (-4 * step, 4 * step)
        curve = family.dynamically_defined_curve(fam, p, None, span, step, args.N)
        ddc = family.eu_along_ddc(fam, curve, args.N)
        const = family.eu_along_path(fam, curve.times, [p] * len(curve.times), args.N, curve.origin, step)
        for name, tr in (("ddc", ddc), ("constant", const)):
            lo, hi, mod = quotient_spread(tr)
            print(f"{step:.1e}  {name:8s}  {lo:.6e}  {hi:.6e}  {mod:.3e}")


if __name__ == "__main__":
    main()
