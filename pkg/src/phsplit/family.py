"""Parameter dependence: the hyperbolic lift of d/dt, dynamically defined curves,
and the derivative of a splitting in t via a split Neumann solver.

The evaluation map (t, p) -> (t, f_t p) has tangent map
[[1, 0], [g_t(p), Df_t(p)]] on R x R^d, where g_t is the variation field.
Its center bundle at (t, p) is spanned by E^c_p(f_t) and one vector
d/dt + w with w in E^u + E^s; ``pc_series`` computes w.
"""
import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import invert
from .errors import DivergenceError, MisalignedSplittingError
from .manifold import build_chart, displacement, orthonormalize, wrap
from .partial_deriv import _check_divergence, graph_coords, measured_ratio, tail_estimate
from .splitting import (DEFAULT_N, ROUNDOFF_FLOOR, OrbitSplitting, center_plane, generic_seed, intersect,
                        plane_distance, push_basis, splitting_at, unstable_plane)

Z0_TOL = 1e-10
K_COUPLING_TOL = 1e-8

# (sign of the unstable sum, shift of the unstable transport, shift of the stable sample).
# Selected by comparison with the graph-transform oracle; see ``select_convention``.
PC_CONVENTION = (-1, 1, 1)


@dataclass
class CenterLift:
    point: np.ndarray
    t: float
    value: np.ndarray
    u_part: np.ndarray
    s_part: np.ndarray
    N: int
    tail: float
    u_norms: np.ndarray = field(repr=False)
    s_norms: np.ndarray = field(repr=False)
    splitting: object = field(repr=False, default=None)
    projection_defect: float = 0.0


def extended_jacobian(fmap, g, p):
    """Tangent map of (t, p) -> (t, f p) in (t, x) coordinates."""
    d = fmap.dim
    m = np.zeros((d + 1, d + 1))
    m[0, 0] = 1.0
    m[1:, 0] = g
    m[1:, 1:] = fmap.jacobian(p)
    return m


def graph_transform_oracle(family, t, p, N=DEFAULT_N):
    """Hyperbolic lift of d/dt obtained without any series.

    Pushes generic planes of the extended tangent map: a (1+u+c)-plane
    forward from the orbit's past and a (1+c+s)-plane backward from its
    future, intersects them, and reads off the center vector whose t-component
    is 1 and whose E^c_p-component vanishes.
    """
    f = family.at(t)
    u, c, s = family.dims
    d = f.dim
    orb = OrbitSplitting(f, p, family.dims, 0, 0, N)
    pts = orb.points
    ext = {k: extended_jacobian(f, family.variation(t, pts[k]), pts[k]) for k in range(orb.lo, orb.hi)}
    cu = push_basis([ext[k] for k in range(orb.lo, 0)], generic_seed(d + 1, 1 + u + c))
    cs = push_basis([np.linalg.inv(ext[k]) for k in range(orb.hi - 1, -1, -1)], generic_seed(d + 1, 1 + c + s))
    W = intersect(cu, cs, 1 + c)
    sp = orb[0]
    coef = np.linalg.solve(sp.matrix, W[1:])
    rows = np.vstack([W[:1], coef[u:u + c]])
    rhs = np.zeros(1 + c)
    rhs[0] = 1.0
    a = np.linalg.solve(rows, rhs)
    return W[1:] @ a


def pc_series(family, t, p, N=DEFAULT_N, v=None, burn=DEFAULT_N, convention=PC_CONVENTION):
    """Hyperbolic components of the lift of d/dt at (t, p), truncated at N terms.

    With the frozen convention,
    w^u = -sum_{k>=0} Tf^{-(k+1)} g^u(f^k p)    (transport from f^{k+1} p),
    w^s =  sum_{k>=0} Tf^{k} g^s(f^{-k-1} p)     (transport from f^{-k} p),
    where g^x(q) is the E^x-component of g(q) in T_{fq}M.  ``v`` is accepted
    for interface symmetry and ignored: the lift does not depend on it.
    """
    del v
    if family.variation_field is None:
        raise ValueError("family has no variation field")
    f = family.at(t)
    u_sign, u_shift, s_shift = convention
    orb = OrbitSplitting(f, p, family.dims, n_back=N + 1, n_fwd=N + 1, N=burn)
    pts = orb.points

    # g(f^k p) lives at f^{k+1} p; a shift of 0 reads it at f^k p instead
    g = {k: family.variation(t, pts[k]) for k in range(-N - 1, N)}
    U = {j: orb[j].Eu.basis for j in range(-N - 1, N + 2)}
    S = {j: orb[j].Es.basis for j in range(-N - 1, N + 2)}

    # transport inside the bundles through the restricted blocks, never with
    # Df^{-n} on ambient vectors (which amplifies leakage into the other bundle)
    u_total = np.zeros(f.dim)
    u_norms = []
    R = np.eye(U[0].shape[1])  # Df^{-j} restricted to E^u, from f^j p to p, in U coordinates
    for j in range(N + 1):
        k = j - u_shift
        if 0 <= k < N:
            coef = U[j].T @ orb[j].components(g[k])[0]
            vec = U[0] @ (R @ coef)
            u_total += vec
            u_norms.append(float(np.linalg.norm(vec)))
        R = R @ np.linalg.inv(U[j + 1].T @ orb.jac[j] @ U[j])
    u_total *= u_sign

    s_total = np.zeros(f.dim)
    s_norms = []
    L = np.eye(S[0].shape[1])  # Df^{j} restricted to E^s, from f^{-j} p to p
    for j in range(N):
        coef = S[-j].T @ orb[-j].components(g[-j - s_shift])[2]
        vec = S[0] @ (L @ coef)
        s_total += vec
        s_norms.append(float(np.linalg.norm(vec)))
        L = L @ (S[-j].T @ orb.jac[-j - 1] @ S[-j - 1])

    # terms at roundoff relative to g carry no decay information
    floor = ROUNDOFF_FLOOR * max(1.0, max(float(np.linalg.norm(x)) for x in g.values()))
    u_norms, s_norms = np.array(u_norms), np.array(s_norms)
    u_norms[u_norms < floor] = 0.0
    s_norms[s_norms < floor] = 0.0
    ru = _check_divergence(u_norms, "lift (unstable part)", "u")
    rs = _check_divergence(s_norms, "lift (stable part)", "s")
    tail = np.nansum([tail_estimate(u_norms, ru), tail_estimate(s_norms, rs)])
    sp = orb[0]
    value = u_total + s_total
    _, vc, _ = sp.components(value)
    return CenterLift(point=pts[0], t=float(t), value=value, u_part=u_total, s_part=s_total, N=N,
                      tail=float(tail), u_norms=u_norms, s_norms=s_norms, splitting=sp,
                      projection_defect=float(np.linalg.norm(vc)))


def select_convention(family, t, p, N=DEFAULT_N, tol=1e-8):
    """All index/sign conventions of the lift series that reproduce the oracle."""
    oracle = graph_transform_oracle(family, t, p, N)
    scale = max(float(np.linalg.norm(oracle)), 1.0)
    hits = []
    for conv in itertools.product((-1, 1), (0, 1), (0, 1)):
        try:
            val = pc_series(family, t, p, N, convention=conv).value
        except DivergenceError:
            continue
        if np.linalg.norm(val - oracle) <= tol * scale:
            hits.append(conv)
    return hits, oracle


def _center_graph_plane(lift):
    """Basis of the center plane span{(1, w), (0, E^c)} in R^{1+d}."""
    sp = lift.splitting
    cols = [np.concatenate([[1.0], lift.value])]
    if sp.Ec is not None:
        for j in range(sp.Ec.k):
            cols.append(np.concatenate([[0.0], sp.Ec.basis[:, j]]))
    return orthonormalize(np.column_stack(cols))


def graph_residual(family, t, p, N=DEFAULT_N):
    """One-step invariance residual of the assembled center graph under T Eval."""
    f = family.at(t)
    here = pc_series(family, t, p, N)
    there = pc_series(family, t, f.eval(p), N)
    ext = extended_jacobian(f, family.variation(t, here.point), here.point)
    image = push_basis([ext], _center_graph_plane(here))
    return plane_distance(image, _center_graph_plane(there))


def ddc_velocity(family, t, q, v, N=DEFAULT_N):
    """M-component of the center field: v (projected to E^c) plus the lift of d/dt."""
    lift = pc_series(family, t, q, N)
    v = np.zeros(family.dim) if v is None else np.asarray(v, dtype=float)
    _, vc, _ = lift.splitting.components(v)
    return vc + lift.value, lift


@dataclass
class DDCurve:
    p: np.ndarray
    v: np.ndarray
    times: np.ndarray
    points: list
    velocities: list
    origin: int
    step: float

    def at_origin(self):
        return self.points[self.origin]


def _continue_center(split, V, norm):
    if norm == 0.0 or split.Ec is None:
        return np.zeros_like(V)
    B = split.Ec.basis
    V = B @ (B.T @ V)
    return V * (norm / np.linalg.norm(V))


def _integrate_branch(family, p, v, t_end, step, N):
    n = int(round(abs(t_end) / step))
    h = step if t_end >= 0 else -step
    norm = float(np.linalg.norm(v))
    t, q, V = 0.0, wrap(p), np.asarray(v, dtype=float)
    times, pts, vels = [0.0], [q], []
    for i in range(n):
        vel, lift = ddc_velocity(family, t, q, V, N)
        vels.append(vel)
        q = wrap(q + h * vel)
        t = (i + 1) * h
        pts.append(q)
        times.append(t)
        if norm > 0:
            V = _continue_center(splitting_at(family.at(t), q, family.dims, N), V, norm)
    vel, _ = ddc_velocity(family, t, q, V, N)
    vels.append(vel)
    return times, pts, vels


def dynamically_defined_curve(family, p, v=None, t_span=(-0.05, 0.05), step=1e-3, N=DEFAULT_N):
    """Explicit Euler integration of the center field of the evaluation map from (0, p)."""
    if step > 1e-2:
        raise ValueError("step must be <= 1e-2")
    lo, hi = family.param_range
    a, b = t_span
    if not (lo < a <= 0.0 <= b < hi):
        raise ValueError(f"t_span {t_span} must contain 0 and lie in {family.param_range}")
    v = np.zeros(family.dim) if v is None else np.asarray(v, dtype=float)
    sp0 = splitting_at(family.at(0.0), p, family.dims, N)
    _, v, _ = sp0.components(v)
    tf, pf, vf = _integrate_branch(family, p, v, b, step, N)
    tb, pb, vb = _integrate_branch(family, p, v, a, step, N)
    times = np.array(tb[::-1] + tf[1:])
    points = pb[::-1] + pf[1:]
    vels = vb[::-1] + vf[1:]
    return DDCurve(p=wrap(p), v=v, times=times, points=points, velocities=vels,
                   origin=len(tb) - 1, step=step)


@dataclass
class EuTrace:
    times: np.ndarray
    P: list
    ref: object
    origin: int
    step: float

    def quotients(self):
        """Forward difference quotients between consecutive samples."""
        return [(self.P[i + 1].ambient - self.P[i].ambient) / (self.times[i + 1] - self.times[i])
                for i in range(len(self.P) - 1)]

    def modulus(self):
        """Largest change between consecutive difference quotients."""
        q = self.quotients()
        if len(q) < 2:
            return 0.0
        return float(max(np.linalg.norm(b - a, 2) for a, b in zip(q, q[1:])))

    def central(self, k):
        """Central quotient at the origin with half-width k samples."""
        o = self.origin
        return (self.P[o + k].ambient - self.P[o - k].ambient) / (self.times[o + k] - self.times[o - k])


def eu_along_path(family, times, points, N=DEFAULT_N, origin=None, step=None):
    """Graph coordinates of E^u(f_t) at points[i] over the f_0 splitting at the origin point."""
    origin = len(points) // 2 if origin is None else origin
    ref = splitting_at(family.at(0.0), points[origin], family.dims, N)
    u = family.dims[0]
    P = [graph_coords(unstable_plane(family.at(t), q, u, N), ref) for t, q in zip(times, points)]
    return EuTrace(times=np.asarray(times), P=P, ref=ref, origin=origin, step=step)


def eu_along_ddc(family, curve, N=DEFAULT_N):
    return eu_along_path(family, curve.times, curve.points, N, curve.origin, curve.step)


# ---------------------------------------------------------------------------
# derivative of a splitting in t

@dataclass
class OrbitBlocks:
    """Blocks of Df_0 in a splitting E + H along an orbit; H is split into sub-blocks."""

    A: dict
    B: dict
    C: dict
    K: dict
    rows: dict  # sub-block name -> row slice of K


def _frame(split, which):
    if which == "unstable":
        E = split.Eu.basis
        hb = ([("c", split.Ec.basis)] if split.Ec is not None else []) + [("s", split.Es.basis)]
    elif which == "center":
        if split.Ec is None:
            raise ValueError("which='center' requires c >= 1")
        E = split.Ec.basis
        hb = [("u", split.Eu.basis), ("s", split.Es.basis)]
    else:
        raise ValueError(f"unknown bundle {which!r}")
    return E, hb


def _blocks(M, k):
    return M[:k, :k], M[:k, k:], M[k:, :k], M[k:, k:]


def _frame_matrix(split, which):
    E, hb = _frame(split, which)
    return np.hstack([E] + [b for _, b in hb]), E.shape[1]


def split_neumann_solve(blocks, rhs, k0, N, classes):
    """Solve (I - Q) X = rhs at orbit index k0 for Q(X)(x) = K X A^{-1} o f^{-1}.

    Contracting sub-blocks sum Q^n rhs over the backward orbit; expanding
    ones sum -Q^{-n} rhs over the forward orbit.  ``rhs`` maps orbit index to
    an (m x k) matrix.  Returns X and the per-block term norms.
    """
    X = np.zeros_like(rhs[k0])
    norms = {}
    for name, sl in blocks.rows.items():
        terms = []
        if classes[name] == "contracting":
            L = np.eye(sl.stop - sl.start)
            R = np.eye(X.shape[1])
            for n in range(N + 1):
                if n >= 1:
                    L = L @ blocks.K[k0 - n][sl, sl]
                    R = np.linalg.solve(blocks.A[k0 - n], R)
                term = L @ rhs[k0 - n][sl] @ R
                X[sl] += term
                terms.append(float(np.linalg.norm(term, 2)))
        else:
            L = np.eye(sl.stop - sl.start)
            R = np.eye(X.shape[1])
            for n in range(1, N + 1):
                L = L @ np.linalg.inv(blocks.K[k0 + n - 1][sl, sl])
                R = blocks.A[k0 + n - 1] @ R
                term = L @ rhs[k0 + n][sl] @ R
                X[sl] -= term
                terms.append(float(np.linalg.norm(term, 2)))
        norms[name] = np.array(terms)
        _check_divergence(norms[name], f"Neumann series for block {name}", name)
    return X, norms


def apply_I_minus_Q(blocks, X_here, X_prev, k0):
    """(I - Q)X at index k0 from X at k0 and k0 - 1."""
    return X_here - blocks.K[k0 - 1] @ X_prev @ np.linalg.inv(blocks.A[k0 - 1])


@dataclass
class ParamDerivative:
    which: str
    point: np.ndarray
    X: np.ndarray
    fd: np.ndarray
    frame: np.ndarray
    k: int
    Z0_norm: float
    residual: float
    classes: dict
    term_norms: dict = field(repr=False)
    gains: dict = field(default_factory=dict)

    def ambient(self, X=None):
        """Operator on R^d: P o (orthogonal projection onto E)."""
        X = self.X if X is None else X
        E, H = self.frame[:, :self.k], self.frame[:, self.k:]
        return H @ X @ E.T

    @property
    def fd_ambient(self):
        return self.ambient(self.fd)


def _graph_over(basis, frame, k):
    c = np.linalg.solve(frame, basis)
    return c[k:] @ np.linalg.inv(c[:k])


def _Z(family, t, x, frame_x, which, k, N):
    """Z_t(x) = C_t A_t^{-1} evaluated at f_t^{-1} x, in the fixed t = 0 splitting."""
    ft = family.at(t)
    y = invert(ft, x)
    frame_y, _ = _frame_matrix(splitting_at(family.at(0.0), y, family.dims, N), which)
    M = np.linalg.solve(frame_x, ft.jacobian(y) @ frame_y)
    A, _, C, _ = _blocks(M, k)
    return C @ np.linalg.inv(A)


def theoremD_derivative(family, p, which="unstable", N=DEFAULT_N, fd_h=1e-3, z_h=1e-4, burn=DEFAULT_N):
    """d/dt at t = 0 of the graph coordinates of E(f_t) at p over E(f_0) + H(f_0).

    Solves (I - Q_0) X = Z_0' along the f_0-orbit of p and returns X together
    with the independent slope (P_{fd_h} - P_{-fd_h}) / (2 fd_h) obtained by
    recomputing the splitting of f_{+-fd_h}.
    """
    if not family.smooth_splitting:
        raise ValueError("the t = 0 bundle must be C^1; only families with an analytic base splitting are admitted")
    u, c, s = family.dims
    if which == "center" and c < 1:
        raise ValueError("which='center' requires c >= 1")
    f0 = family.at(0.0)
    orb = OrbitSplitting(f0, p, family.dims, n_back=N + 1, n_fwd=N + 1, N=burn)
    frames = {}
    for j in range(-N - 1, N + 2):
        frames[j], k = _frame_matrix(orb[j], which)
    _, hb = _frame(orb[0], which)
    rows, start = {}, 0
    for name, b in hb:
        rows[name] = slice(start, start + b.shape[1])
        start += b.shape[1]

    A, B, C, K = {}, {}, {}, {}
    for j in range(-N - 1, N + 1):
        M = np.linalg.solve(frames[j + 1], orb.jac[j] @ frames[j])
        A[j], B[j], C[j], K[j] = _blocks(M, k)
    blocks = OrbitBlocks(A, B, C, K, rows)

    z0 = max(float(np.linalg.norm(C[j] @ np.linalg.inv(A[j]), 2)) for j in C)
    if z0 > Z0_TOL:
        raise MisalignedSplittingError(f"Z_0 = {z0:.3e} exceeds {Z0_TOL}; H is misaligned", z0)
    for a, b in itertools.permutations(rows, 2):
        coupling = max(float(np.linalg.norm(K[j][rows[a], rows[b]], 2)) for j in K)
        if coupling > K_COUPLING_TOL:
            raise MisalignedSplittingError(f"K couples blocks {a} and {b} ({coupling:.3e})", coupling)

    gains, classes = {}, {}
    for name, sl in rows.items():
        fwd = max(np.linalg.norm(K[j][sl, sl], 2) * np.linalg.norm(np.linalg.inv(A[j]), 2) for j in K)
        bwd = max(np.linalg.norm(np.linalg.inv(K[j][sl, sl]), 2) * np.linalg.norm(A[j], 2) for j in K)
        gains[name] = (float(fwd), float(bwd))
        if fwd < 1.0:
            classes[name] = "contracting"
        elif bwd < 1.0:
            classes[name] = "expanding"
        else:
            raise DivergenceError(f"block {name} is neither contracting nor expanding "
                                  f"(gains {fwd:.3f}, {bwd:.3f})", block=name)

    needed = set()
    for name, cls in classes.items():
        needed |= set(range(-N - 1, 1)) if cls == "contracting" else set(range(0, N + 1))
    dZ = {}
    for j in sorted(needed):
        zp = _Z(family, z_h, orb.points[j], frames[j], which, k, burn)
        zm = _Z(family, -z_h, orb.points[j], frames[j], which, k, burn)
        dZ[j] = (zp - zm) / (2.0 * z_h)

    X0, norms = split_neumann_solve(blocks, dZ, 0, N, classes)
    Xm1, _ = split_neumann_solve(blocks, dZ, -1, N, classes)
    residual = float(np.linalg.norm(apply_I_minus_Q(blocks, X0, Xm1, 0) - dZ[0], 2))

    plane = {"unstable": lambda f: unstable_plane(f, p, u, burn),
             "center": lambda f: center_plane(f, p, family.dims, burn)}[which]
    Pp = _graph_over(plane(family.at(fd_h)).basis, frames[0], k)
    Pm = _graph_over(plane(family.at(-fd_h)).basis, frames[0], k)
    fd = (Pp - Pm) / (2.0 * fd_h)
    return ParamDerivative(which=which, point=orb.points[0], X=X0, fd=fd, frame=frames[0], k=k,
                           Z0_norm=z0, residual=residual, classes=classes, term_norms=norms,
                           gains=gains)


def conjugacy_closed_form(family, p, which="unstable", N=DEFAULT_N):
    """First-order prediction Pi_H Dw(p)|_E for conjugated families with spatially constant E_0."""
    if family.shear is None:
        raise ValueError("closed form needs a conjugated family")
    frame, k = _frame_matrix(splitting_at(family.at(0.0), p, family.dims, N), which)
    E = frame[:, :k]
    return np.linalg.solve(frame, family.shear.jacobian(np.asarray(p, dtype=float)) @ E)[k:], frame, k


@dataclass
class IdentityReport:
    left: np.ndarray
    ddc: np.ndarray
    spatial: np.ndarray
    velocity0: np.ndarray
    residual: float
    relative: float


def theoremC_identity_check(family, p, N=DEFAULT_N, h=1e-3, step=1e-4, fd_h=1e-3):
    """Compare the t-slope of E^u_p(f_t) with (slope along a DDC) - (spatial derivative along its velocity).

    All three derivatives are compared as operators E^u_p -> E^cs_p on R^d.
    """
    if not family.smooth_splitting:
        raise ValueError("the identity check needs an analytic t = 0 unstable bundle")
    u = family.dims[0]
    f0 = family.at(0.0)
    ref = splitting_at(f0, p, family.dims, N)

    def P_at(f, q):
        return graph_coords(unstable_plane(f, q, u, N), ref).ambient

    left = (P_at(family.at(fd_h), p) - P_at(family.at(-fd_h), p)) / (2.0 * fd_h)
    k = int(round(h / step))
    curve = dynamically_defined_curve(family, p, None, (-k * step, k * step), step, N)
    trace = eu_along_ddc(family, curve, N)
    ddc = trace.central(k)
    vel0 = curve.velocities[curve.origin]
    if np.linalg.norm(vel0) > 0:
        spatial = (P_at(f0, wrap(p + h * vel0)) - P_at(f0, wrap(p - h * vel0))) / (2.0 * h)
    else:
        spatial = np.zeros_like(left)
    res = float(np.linalg.norm(left - (ddc - spatial), 2))
    scale = max(float(np.linalg.norm(left, 2)), float(np.linalg.norm(ddc, 2)), 1e-6)
    return IdentityReport(left=left, ddc=ddc, spatial=spatial, velocity0=vel0, residual=res,
                          relative=res / scale)


# ---------------------------------------------------------------------------

@dataclass
class OperatorGrid:
    """Samples of a matrix-valued section on the nodes i/n of T^d, with periodic multilinear interpolation.

    ``values`` has shape (n,)*dim + value_shape; interpolation is exact at nodes.
    """

    values: np.ndarray
    resolution: int
    dim: int

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("operator grid holds non-finite values")

    @property
    def value_shape(self):
        return self.values.shape[self.dim:]

    def interpolate(self, p):
        x = wrap(p) * self.resolution
        i0 = np.floor(x).astype(int)
        frac = x - i0
        out = np.zeros(self.value_shape)
        for corner in itertools.product((0, 1), repeat=self.dim):
            w = np.prod([frac[a] if corner[a] else 1.0 - frac[a] for a in range(self.dim)])
            if w == 0.0:
                continue
            idx = tuple((i0[a] + corner[a]) % self.resolution for a in range(self.dim))
            out += w * self.values[idx]
        return out


def sample_operator_grid(fn, dim, n):
    """Evaluate ``fn`` on every node of the n^dim grid."""
    nodes = [np.arange(n) / n] * dim
    samples = [np.asarray(fn(np.array(q)), dtype=float) for q in itertools.product(*nodes)]
    values = np.array(samples).reshape((n,) * dim + samples[0].shape)
    return OperatorGrid(values=values, resolution=n, dim=dim)
