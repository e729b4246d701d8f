"""Derivative of E^u along E^c: chart blocks, the backward-orbit series, and its oracles.

In the affine chart x -> p + F_p x with F_p = [E^u_p | E^cs_p] the local map
is f_p(x) = F_{fp}^{-1}(f(p + F_p x) - f(p)), so every block of its
derivative comes straight from the analytic Jacobian and Hessian of f.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import ChartOverflowError, DivergenceError, MisalignedSplittingError
from .manifold import build_chart, wrap
from .splitting import (DEFAULT_N, OrbitSplitting, Plane, center_plane, plane_distance,
                        splitting_at, stable_plane, unstable_plane)

OFF_DIAGONAL_TOL = 1e-8
DIVERGENCE_WINDOW = 5
FLAT_DISTANCE = 1e-12


@dataclass(frozen=True)
class GraphCoords:
    """Linear map P : E^u -> E^cs in the orthonormal frames ``U`` and ``CS``."""

    P: np.ndarray
    U: np.ndarray
    CS: np.ndarray
    base: str = "u"
    complement: str = "cs"

    @property
    def ambient(self):
        """Frame-independent operator CS P U^T on R^d."""
        return self.CS @ self.P @ self.U.T

    @property
    def norm(self):
        return float(np.linalg.norm(self.P, 2))


@dataclass(frozen=True)
class ChartBlocks:
    point: np.ndarray
    A: np.ndarray
    Auu: np.ndarray
    Acscs: np.ndarray
    C: np.ndarray
    chart_p: object
    chart_fp: object
    off_diagonal: float
    second_term: float

    def K(self, P):
        """Action of the vertical block on graph coordinates: P -> A_cscs P A_uu^{-1}."""
        return self.Acscs @ P @ np.linalg.inv(self.Auu)

    def C_at(self, x):
        return self.C @ x


def chart_blocks(fmap, p, split_p, split_fp):
    """Blocks of the local graph transform at the origin of the (u, cs) charts."""
    chart_p = build_chart(p, split_p, ("u", "cs"))
    chart_fp = build_chart(split_fp.point, split_fp, ("u", "cs"))
    u = split_p.Eu.k
    Fp, Ffp = chart_p.frame.matrix, chart_fp.frame.matrix
    M = np.linalg.solve(Ffp, fmap.jacobian(chart_p.base) @ Fp)
    off = max(np.linalg.norm(M[u:, :u], 2), np.linalg.norm(M[:u, u:], 2))
    if off > OFF_DIAGONAL_TOL:
        raise MisalignedSplittingError(
            f"off-diagonal block {off:.3e} exceeds {OFF_DIAGONAL_TOL}: splitting not converged", off)

    # dM[:, :, k] = F_fp^{-1} (D^2 f . F_p e_k) F_p
    H = fmap.hessian(chart_p.base)
    HF = np.einsum("ijl,lk->ijk", H, Fp)
    dM = np.einsum("ab,bjk,jc->ack", np.linalg.inv(Ffp), HF, Fp)
    Muu_inv = np.linalg.inv(M[:u, :u])
    first = np.einsum("ijk,jl->ilk", dM[u:, :u, :], Muu_inv)
    second = np.einsum("ij,jl,lmk,mn->ink", M[u:, :u], Muu_inv, dM[:u, :u, :], Muu_inv)
    second_norm = float(np.max(np.abs(second))) if second.size else 0.0
    scale = max(1.0, float(np.max(np.abs(first))) if first.size else 0.0)
    if second_norm > OFF_DIAGONAL_TOL * scale:
        raise MisalignedSplittingError(
            f"second term of C is {second_norm:.3e}; off-diagonal block does not vanish at 0",
            second_norm)
    return ChartBlocks(point=chart_p.base, A=M, Auu=M[:u, :u], Acscs=M[u:, u:], C=first - second,
                       chart_p=chart_p, chart_fp=chart_fp, off_diagonal=float(off),
                       second_term=second_norm)


@dataclass
class SeriesResult:
    graph: GraphCoords
    term_norms: np.ndarray
    ratio: float
    tail: float
    projection_defect: float
    terms: list = field(repr=False, default_factory=list)

    @property
    def P(self):
        return self.graph.P


def measured_ratio(norms, window=DIVERGENCE_WINDOW, floor=1e-12):
    """Per-term decay ratio of the envelope of the last live terms.

    Compares the largest of the last ``window`` terms above ``floor`` times
    the peak with the largest of the ``window`` terms before them; the
    envelope absorbs the oscillation of individual terms.  nan when fewer
    than ``2 * window`` live terms exist.
    """
    norms = np.asarray(norms, dtype=float)
    if norms.size == 0 or np.max(norms) == 0.0:
        return 0.0
    live = np.flatnonzero(norms > floor * np.max(norms))
    last = live[-1] + 1
    if last < 2 * window:
        return float("nan")
    recent = np.max(norms[last - window:last])
    before = np.max(norms[last - 2 * window:last - window])
    return float((recent / before) ** (1.0 / window))


def _check_divergence(norms, label, block=None):
    ratio = measured_ratio(norms)
    if np.isfinite(ratio) and ratio >= 1.0:
        raise DivergenceError(f"{label}: series terms grow (ratio {ratio:.3f}); "
                              "bunching fails or the splitting is not converged", ratio, block)
    return ratio


def tail_estimate(norms, ratio):
    """Bound on the omitted terms: ||term_N|| / (1 - ratio) with term_N ~ ratio * last term."""
    if len(norms) == 0 or norms[-1] == 0.0:
        return 0.0
    if not np.isfinite(ratio) or ratio >= 1.0:
        return float("nan")
    return float(norms[-1] * ratio / (1.0 - ratio))


def dEu_dEc_series(fmap, p, v, N=60, dims=None, burn=DEFAULT_N, orbit=None):
    """Truncated series for the derivative of E^u in the center direction ``v``.

    Sums, along the backward orbit,
    T^cs f^n o C_{f^{-n-1}p}(T f^{-n-1} v) o T^u f^{-n} for n < N,
    with every factor expressed in (u, cs) charts.  ``v`` is replaced by its
    E^c-component; the dropped part is reported as ``projection_defect``.
    """
    dims = dims or fmap.dims
    if N < 1:
        raise ValueError("N must be >= 1")
    orb = orbit or OrbitSplitting(fmap, p, dims, n_back=N + 1, n_fwd=0, N=burn)
    sp = orb[0]
    v = np.asarray(v, dtype=float)
    _, vc, _ = sp.components(v)
    defect = float(np.linalg.norm(v - vc))

    u = dims[0]
    cs = fmap.dim - u
    blocks = {j: chart_blocks(fmap, orb.points[-j], orb[-j], orb[-j + 1]) for j in range(1, N + 1)}
    chart0 = blocks[1].chart_fp

    total = np.zeros((cs, u))
    Tu, Tcs = np.eye(u), np.eye(cs)
    w = vc.copy()
    terms, norms = [], []
    for n in range(N):
        # re-project onto E^c: backward steps amplify any roundoff leakage into E^s
        w = orb[-n - 1].components(np.linalg.solve(orb.jac[-n - 1], w))[1]
        b = blocks[n + 1]
        x = b.chart_p.frame.coordinates(w)
        Y = b.C_at(x)
        if n >= 1:
            bn = blocks[n]
            Tu = np.linalg.solve(bn.Auu, Tu)
            Tcs = Tcs @ bn.Acscs
        term = Tcs @ Y @ Tu
        total = total + term
        terms.append(term)
        norms.append(float(np.linalg.norm(term, 2)))
    norms = np.array(norms)
    ratio = _check_divergence(norms, "dEu/dEc")
    tail = tail_estimate(norms, ratio)
    U, CS = chart0.frame.blocks
    return SeriesResult(graph=GraphCoords(total, U, CS), term_norms=norms, ratio=ratio,
                        tail=float(tail), projection_defect=defect, terms=terms)


def graph_coords(basis, ref_split):
    """Graph coordinates of the plane spanned by ``basis`` over E^u + E^cs of ``ref_split``."""
    chart = build_chart(ref_split.point, ref_split, ("u", "cs"))
    u = ref_split.Eu.k
    c = chart.frame.coordinates(basis.basis if isinstance(basis, Plane) else basis)
    P = c[u:] @ np.linalg.inv(c[:u])
    U, CS = chart.frame.blocks
    return GraphCoords(P, U, CS)


def _bundle_plane(fmap, q, dims, N, bundle):
    if bundle == "c":
        return center_plane(fmap, q, dims, N)
    if bundle == "s":
        return stable_plane(fmap, q, dims[2], N)
    if bundle == "u":
        return unstable_plane(fmap, q, dims[0], N)
    raise ValueError(f"unknown bundle {bundle!r}")


def center_curve(fmap, p, v, step, n_steps, dims=None, N=DEFAULT_N, bundle="c"):
    """Euler polyline of a unit field in the bundle, continued by nearest vectors.

    At each node the new direction is the least-squares image of the previous
    direction in the bundle's orthonormal basis, renormalized.
    """
    dims = dims or fmap.dims
    if step > 1e-2:
        raise ValueError("step must be <= 1e-2")
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    q = wrap(p)
    pts = [q]
    direction = v
    for _ in range(n_steps):
        B = _bundle_plane(fmap, q, dims, N, bundle).basis
        direction = B @ (B.T @ direction)
        direction = direction / np.linalg.norm(direction)
        q = wrap(q + step * direction)
        pts.append(q)
    return pts


def two_sided_curve(fmap, p, v, step, n_steps, dims=None, N=DEFAULT_N, bundle="c"):
    """Curve through p with nodes at parameters -n_steps*step .. n_steps*step."""
    v = np.asarray(v, dtype=float)
    fwd = center_curve(fmap, p, v, step, n_steps, dims, N, bundle)
    bwd = center_curve(fmap, p, -v, step, n_steps, dims, N, bundle)
    return bwd[::-1] + fwd[1:]


def fd_derivative_along_curve(fmap, curve, h, step, dims=None, N=DEFAULT_N, scheme="central"):
    """Difference quotient of the graph coordinates of E^u along a two-sided curve.

    ``curve`` has an odd number of nodes spaced ``step`` apart in parameter,
    centered on the reference point.  ``scheme`` is "central" (second order)
    or "forward" (first order).
    """
    if scheme not in ("central", "forward"):
        raise ValueError(f"unknown scheme {scheme!r}")
    dims = dims or fmap.dims
    m = len(curve) // 2
    k = int(round(h / step))
    if len(curve) % 2 != 1 or k < 1 or k > m or abs(k * step - h) > 1e-9 * h:
        raise ValueError("h must be a positive multiple of step within the curve")
    ref = splitting_at(fmap, curve[m], dims, N)
    plus = graph_coords(unstable_plane(fmap, curve[m + k], dims[0], N), ref)
    if scheme == "central":
        minus = graph_coords(unstable_plane(fmap, curve[m - k], dims[0], N), ref)
        width = 2.0 * h
    else:
        minus = graph_coords(ref.Eu.basis, ref)
        width = h
    for g in (plus, minus):
        if g.norm >= 1.0:
            raise ChartOverflowError(f"||P|| = {g.norm:.3f} >= 1 at h={h}; decrease h")
    return GraphCoords((plus.P - minus.P) / width, plus.U, plus.CS)


@dataclass
class RegularityResult:
    direction: str
    slope: float
    residual: float
    table: np.ndarray  # columns: t, distance
    flat: bool = False


def regularity_estimate(fmap, p, direction="center", scales=None, dims=None, N=DEFAULT_N, step=None):
    """Log-log slope of plane_distance(E^u(gamma(t)), E^u(p)) against t.

    ``gamma`` is a one-sided curve from p tangent to the center (or stable)
    bundle.  A C^1 bundle gives slope ~1; a merely Hoelder one gives less.
    """
    dims = dims or fmap.dims
    bundle = {"center": "c", "stable": "s"}[direction]
    scales = np.array(sorted(2.0 ** -np.arange(4, 11) if scales is None else scales, reverse=True))
    if len(scales) < 3:
        raise ValueError("need at least 3 scales")
    if step is None:
        step = min(scales.min() / 4.0, 1e-3)
    split = splitting_at(fmap, p, dims, N)
    v = split.Ec.basis[:, 0] if bundle == "c" else split.Es.basis[:, 0]
    n = int(round(scales.max() / step))
    curve = center_curve(fmap, p, v, step, n, dims, N, bundle)
    rows = []
    for t in scales:
        q = curve[int(round(t / step))]
        rows.append((t, plane_distance(unstable_plane(fmap, q, dims[0], N), split.Eu)))
    table = np.array(rows)
    if np.all(table[:, 1] < FLAT_DISTANCE):
        return RegularityResult(direction, float("nan"), float("nan"), table, flat=True)
    good = table[:, 1] >= FLAT_DISTANCE
    if good.sum() < 3:
        raise ValueError("fewer than 3 valid scales")
    lx, ly = np.log(table[good, 0]), np.log(table[good, 1])
    coef, res, *_ = np.polyfit(lx, ly, 1, full=True)
    return RegularityResult(direction, float(coef[0]), float(res[0]) if len(res) else 0.0, table)
