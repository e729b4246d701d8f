"""Do different integral curves of center fields give the same dE^u/dE^c?

Builds several curves through p tangent to E^c of perturbed_skew, each
from a different continuation rule or field, and compares central
difference quotients of E^u along them with the series value at
decreasing h.  Nothing is asserted; the table goes to stdout and CSV.
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from phsplit import dynamics, partial_deriv, splitting
from phsplit.manifold import wrap


def nearest(fmap, p, v, step, n, N):
    return partial_deriv.two_sided_curve(fmap, p, v, step, n, N=N)


def _signed_axis(fmap, q, N):
    # basis vector of E^c oriented by its fiber component, no memory of the previous step
    b = splitting.center_plane(fmap, q, fmap.dims, N).basis[:, 0]
    return b if b[-1] >= 0 else -b


def oriented(fmap, p, v, step, n, N):
    """Euler steps along the fiber-oriented unit field."""
    sign = 1.0 if v @ _signed_axis(fmap, p, N) >= 0 else -1.0

    def branch(s):
        q, pts = wrap(p), [wrap(p)]
        for _ in range(n):
            q = wrap(q + s * step * _signed_axis(fmap, q, N))
            pts.append(q)
        return pts
    fwd, bwd = branch(sign), branch(-sign)
    return bwd[::-1] + fwd[1:]


def heun(fmap, p, v, step, n, N):
    """Second-order predictor-corrector on the oriented unit field."""
    sign = 1.0 if v @ _signed_axis(fmap, p, N) >= 0 else -1.0

    def branch(s):
        q, pts = wrap(p), [wrap(p)]
        for _ in range(n):
            k1 = _signed_axis(fmap, q, N)
            k2 = _signed_axis(fmap, wrap(q + s * step * k1), N)
            q = wrap(q + 0.5 * s * step * (k1 + k2))
            pts.append(q)
        return pts
    fwd, bwd = branch(sign), branch(-sign)
    return bwd[::-1] + fwd[1:]


def variable_speed(fmap, p, v, step, n, N):
    """Nearest-vector continuation of a field with speed 1 + 0.5 sin(2 pi x), rescaled at p."""
    speed = lambda q: 1.0 + 0.5 * np.sin(2 * np.pi * q[0])  # noqa: E731
    s0 = speed(wrap(p))

    def branch(d):
        q, pts, direction = wrap(p), [wrap(p)], d
        for _ in range(n):
            B = splitting.center_plane(fmap, q, fmap.dims, N).basis
            direction = B @ (B.T @ direction)
            direction /= np.linalg.norm(direction)
            q = wrap(q + step * speed(q) / s0 * direction)
            pts.append(q)
        return pts
    v = np.asarray(v, float) / np.linalg.norm(v)
    fwd, bwd = branch(v), branch(-v)
    return bwd[::-1] + fwd[1:]


RULES = {"nearest": nearest, "oriented": oriented, "heun": heun, "variable_speed": variable_speed}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epsilon", type=float, default=0.02)
    ap.add_argument("--points", type=int, default=3)
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--N", type=int, default=60)
    ap.add_argument("--out", type=Path, default=Path("runs/continuation_rules.csv"))
    args = ap.parse_args(argv)

    f = dynamics.perturbed_skew(args.epsilon)
    step = 1.25e-4
    hs = [2e-3, 1e-3, 5e-4, 2.5e-4]
    n = int(round(max(hs) / step))
    rows = []
    for i, p in enumerate(np.random.default_rng(args.seed).random((args.points, 3))):
        v = splitting.splitting_at(f, p, N=args.N).Ec.basis[:, 0]
        series = partial_deriv.dEu_dEc_series(f, p, v, args.N).graph.ambient
        scale = np.linalg.norm(series, 2)
        for name, rule in RULES.items():
            curve = rule(f, p, v, step, n, args.N)
            for h in hs:
                fd = partial_deriv.fd_derivative_along_curve(f, curve, h, step, N=args.N).ambient
                rel = np.linalg.norm(fd - series, 2) / scale
                rows.append([i, name, h, rel])
                print(f"point {i}  {name:15s} h={h:.2e}  relative gap to series {rel:.3e}")
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point", "rule", "h", "relative_gap"])
        w.writerows([[a, b, format(c, ".17g"), format(d, ".17g")] for a, b, c, d in rows])


if __name__ == "__main__":
    main()
