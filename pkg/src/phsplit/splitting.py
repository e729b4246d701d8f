"""Invariant planes by graph transform (QR power iteration) on the Grassmannian.

Unstable-type planes (u, cu) are obtained by pushing a seed plane forward
from f^{-N}p; stable-type planes (s, cs) by pushing backward from f^N p.
The center is the intersection of cu and cs.
"""
import itertools
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import ORBIT_CAP, invert
from .errors import DegeneracyError, SplittingError
from .manifold import qr_positive, wrap

DEFAULT_N = 60
RANK_TOL = 1e-14
INTERSECTION_TOL = 1e-6
ROUNDOFF_FLOOR = 1e-13
CONDITIONS = ("thmA_u", "stable_dual", "dominated_RSE")


@dataclass(frozen=True)
class Plane:
    point: np.ndarray
    basis: np.ndarray

    @property
    def k(self):
        return self.basis.shape[1]

    @property
    def projector(self):
        return self.basis @ self.basis.T


@dataclass(frozen=True)
class Splitting:
    """E^u + E^c + E^s at a point; ``Ec`` is None for Anosov maps."""

    point: np.ndarray
    Eu: Plane
    Ec: Optional[Plane]
    Es: Plane
    Ecu: Optional[Plane] = None
    Ecs: Optional[Plane] = None

    @property
    def dims(self):
        return (self.Eu.k, 0 if self.Ec is None else self.Ec.k, self.Es.k)

    @property
    def matrix(self):
        parts = [self.Eu.basis] + ([] if self.Ec is None else [self.Ec.basis]) + [self.Es.basis]
        return np.hstack(parts)

    @property
    def condition(self):
        return float(np.linalg.cond(self.matrix))

    def components(self, v):
        """Oblique decomposition v = v_u + v_c + v_s (ambient vectors)."""
        u, c, s = self.dims
        coef = np.linalg.solve(self.matrix, v)
        vu = self.Eu.basis @ coef[:u]
        vc = np.zeros_like(vu) if c == 0 else self.Ec.basis @ coef[u:u + c]
        vs = self.Es.basis @ coef[u + c:]
        return vu, vc, vs

    def plane(self, name):
        if name in ("u", "c", "s"):
            return getattr(self, "E" + name)
        if name == "cu":
            return self.Ecu if self.Ecu is not None else self.Eu
        if name == "cs":
            return self.Ecs if self.Ecs is not None else self.Es
        raise ValueError(f"unknown bundle {name!r}")


@dataclass
class BunchingReport:
    condition: str
    grid: tuple
    points: np.ndarray
    values: np.ndarray
    metric: str = "euclidean"
    sup: float = field(init=False)

    def __post_init__(self):
        self.sup = float(np.max(self.values))

    @property
    def passed(self):
        return self.sup < 1.0


def plane_distance(P, Q):
    """||proj_P - proj_Q||_2, the sine of the largest principal angle."""
    a = P.basis if isinstance(P, Plane) else np.asarray(P, dtype=float)
    b = Q.basis if isinstance(Q, Plane) else np.asarray(Q, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape != b.shape:
        raise ValueError(f"plane shapes differ: {a.shape} vs {b.shape}")
    diff = a @ a.T - b @ b.T
    # canonical sign so that swapping the arguments gives bit-identical results
    nz = np.flatnonzero(diff)
    if nz.size and diff.flat[nz[0]] < 0:
        diff = -diff + 0.0  # + 0.0 clears negative zeros, which LAPACK does not ignore
    return float(np.linalg.norm(diff, 2))


def generic_seed(d, k):
    """Fixed generic orthonormal k-frame in R^d (leading columns of QR of Hilbert + I)."""
    i = np.arange(d)
    m = 1.0 / (i[:, None] + i[None, :] + 1.0) + np.eye(d)
    return qr_positive(m)[0][:, :k]


REORTH_EVERY = 4


def _orth(m):
    q, r = np.linalg.qr(m)
    diag = np.abs(np.diagonal(r, axis1=-2, axis2=-1))
    if np.min(diag) < RANK_TOL * max(1.0, float(np.max(diag))):
        raise DegeneracyError("rank collapse while pushing plane", float(np.min(diag)))
    return q


def push_basis(matrices, basis, every=REORTH_EVERY):
    """Push a basis through a sequence of linear maps; orthonormal on return.

    Re-orthonormalizes every ``every`` steps, which keeps the columns well
    separated for the growth rates of the shipped maps.  The result is the
    deterministic frame with nonnegative R diagonal.
    """
    b = np.asarray(basis, dtype=float)
    for i, m in enumerate(matrices, 1):
        b = m @ b
        if i % every == 0:
            b = _orth(b)
    _orth(b)
    return qr_positive(b)[0]


MONITOR_STRIDE = 10


def contraction_monitor(matrices, seed, return_basis=False, stride=MONITOR_STRIDE):
    """Cauchy gaps at the target between seeds injected N, N - stride and N - 2 stride steps back.

    Returns ``(last, previous)``: the change caused by the final ``stride``
    extra steps and by the ``stride`` steps before them.  A contracting graph
    transform has last < previous.  Single-step gaps fluctuate along
    nonlinear orbits, so the comparison is made over a stride.  With
    ``return_basis`` the basis pushed through the full sequence is appended.
    """
    seed = np.asarray(seed, dtype=float)
    if len(matrices) < 2 * stride + 1:
        b = push_basis(matrices, seed)
        return (0.0, 0.0, b) if return_basis else (0.0, 0.0)
    b0 = seed
    for m in matrices[:stride]:
        b0 = m @ b0
    b0 = _orth(b0)
    b1 = seed
    for m in matrices[stride:2 * stride]:
        b0, b1 = m @ b0, m @ b1
    stack = _orth(np.stack([b0, b1, seed]))
    for i, m in enumerate(matrices[2 * stride:], 1):
        stack = m @ stack
        if i % REORTH_EVERY == 0:
            stack = _orth(stack)
    b0, b1, b2 = (qr_positive(x)[0] for x in _orth(stack))
    gaps = plane_distance(b0, b1), plane_distance(b1, b2)
    return (*gaps, b0) if return_basis else gaps


def _check_motion(matrices, seed, label):
    """Push ``seed`` through ``matrices`` and warn when the Cauchy gap grows."""
    last, prev, b = contraction_monitor(matrices, seed, return_basis=True)
    if last > ROUNDOFF_FLOOR and last > prev:
        warnings.warn(f"{label}: Cauchy gap grew over the last {MONITOR_STRIDE} steps "
                      f"({prev:.2e} -> {last:.2e}); domination may fail", RuntimeWarning)
    return b


def push_plane(fmap, plane, steps=1):
    """Image of ``plane`` under Tf^steps, QR re-orthonormalized after every step."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    p = plane.point
    mats = []
    for _ in range(steps):
        mats.append(fmap.jacobian(p))
        p = fmap.eval(p)
    return Plane(p, push_basis(mats, plane.basis, every=1))


def intersect(A, B, dim, tol=INTERSECTION_TOL):
    """Intersection of two subspaces via principal vectors; must have dimension ``dim``."""
    ua, sv, vt = np.linalg.svd(A.T @ B)
    sines = np.sqrt(np.clip(1.0 - sv**2, 0.0, None))
    n_small = int(np.sum(sines <= tol))
    if n_small != dim:
        raise DegeneracyError(
            f"intersection has dimension {n_small}, expected {dim} (principal sines {sines})",
            sines)
    va = A @ ua[:, :dim]
    vb = B @ vt.T[:, :dim]
    return qr_positive(0.5 * (va + vb))[0]


class OrbitSplitting:
    """Splittings along the orbit segment f^k p, k in [-n_back, n_fwd].

    The full orbit (with N burn-in steps on each side) and the Jacobians
    along it are kept, so series along the orbit reuse exactly the same data.
    """

    def __init__(self, fmap, p, dims, n_back=0, n_fwd=0, N=DEFAULT_N, seeds=None):
        u, c, s = dims
        d = fmap.dim
        if u + c + s != d or u < 1 or s < 1:
            raise ValueError(f"dims {dims} incompatible with dimension {d}")
        if N < 1:
            raise ValueError("N must be >= 1")
        if n_back + N > ORBIT_CAP or n_fwd + N > ORBIT_CAP:
            raise ValueError(f"orbit length exceeds cap {ORBIT_CAP}")
        self.map, self.dims, self.N = fmap, tuple(dims), N
        self.n_back, self.n_fwd = n_back, n_fwd
        self.lo, self.hi = -(n_back + N), n_fwd + N
        seeds = seeds or {}

        pts = {0: wrap(p)}
        for k in range(1, self.hi + 1):
            pts[k] = fmap.eval(pts[k - 1])
        for k in range(-1, self.lo - 1, -1):
            pts[k] = invert(fmap, pts[k + 1])
        self.points = pts
        self.jac = {k: fmap.jacobian(pts[k]) for k in range(self.lo, self.hi)}
        self._inverses = {}

        planes = {}
        fwd = {"u": u} if c == 0 else {"u": u, "cu": u + c}
        bwd = {"s": s} if c == 0 else {"s": s, "cs": c + s}
        for name, k in fwd.items():
            planes[name] = self._sweep_forward(seeds.get(name, generic_seed(d, k)), name)
        for name, k in bwd.items():
            planes[name] = self._sweep_backward(seeds.get(name, generic_seed(d, k)), name)
        self.planes = planes

        self.splittings = {}
        for k in range(-n_back, n_fwd + 1):
            q = pts[k]
            ec = ecu = ecs = None
            if c > 0:
                ecu, ecs = planes["cu"][k], planes["cs"][k]
                ec = intersect(ecu, ecs, c)
            self.splittings[k] = Splitting(
                point=q,
                Eu=Plane(q, planes["u"][k]),
                Ec=None if ec is None else Plane(q, ec),
                Es=Plane(q, planes["s"][k]),
                Ecu=None if ecu is None else Plane(q, ecu),
                Ecs=None if ecs is None else Plane(q, ecs),
            )

    def _sweep_forward(self, seed, label):
        burn = [self.jac[k] for k in range(self.lo, -self.n_back)]
        b = _check_motion(burn, seed, f"E^{label}")
        out = {-self.n_back: b}
        for k in range(-self.n_back, self.n_fwd):
            b = push_basis([self.jac[k]], b)
            out[k + 1] = b
        return out

    def _sweep_backward(self, seed, label):
        burn = [self._inv(k - 1) for k in range(self.hi, self.n_fwd, -1)]
        b = _check_motion(burn, seed, f"E^{label}")
        out = {self.n_fwd: b}
        for k in range(self.n_fwd, -self.n_back, -1):
            b = push_basis([self._inv(k - 1)], b)
            out[k - 1] = b
        return out

    def _inv(self, k):
        if k not in self._inverses:
            self._inverses[k] = np.linalg.inv(self.jac[k])
        return self._inverses[k]

    def __getitem__(self, k):
        return self.splittings[k]

    def df(self, k, n):
        """Df^n at f^k p as a matrix (n may be negative)."""
        m = np.eye(self.map.dim)
        if n >= 0:
            for j in range(k, k + n):
                m = self.jac[j] @ m
        else:
            for j in range(k - 1, k + n - 1, -1):
                m = np.linalg.solve(self.jac[j], m)
        return m


def splitting_at(fmap, p, dims=None, N=DEFAULT_N, seeds=None):
    dims = dims or fmap.dims
    return OrbitSplitting(fmap, p, dims, 0, 0, N, seeds)[0]


def unstable_plane(fmap, p, u, N=DEFAULT_N, seed=None):
    """E^u at p: a seed u-plane at f^{-N}p pushed forward N steps."""
    pts = [wrap(p)]
    for _ in range(N):
        pts.append(invert(fmap, pts[-1]))
    pts.reverse()
    seed = generic_seed(fmap.dim, u) if seed is None else seed
    mats = [fmap.jacobian(q) for q in pts[:-1]]
    return Plane(pts[-1], _check_motion(mats, seed, "E^u"))


def stable_plane(fmap, p, s, N=DEFAULT_N, seed=None):
    """E^s at p: a seed s-plane at f^N p pulled back N steps."""
    pts = [wrap(p)]
    for _ in range(N):
        pts.append(fmap.eval(pts[-1]))
    seed = generic_seed(fmap.dim, s) if seed is None else seed
    mats = [np.linalg.inv(fmap.jacobian(q)) for q in reversed(pts[:-1])]
    return Plane(pts[0], _check_motion(mats, seed, "E^s"))


def cu_plane(fmap, p, dims, N=DEFAULT_N, seed=None):
    return unstable_plane(fmap, p, dims[0] + dims[1], N, seed)


def cs_plane(fmap, p, dims, N=DEFAULT_N, seed=None):
    return stable_plane(fmap, p, dims[1] + dims[2], N, seed)


def center_plane(fmap, p, dims, N=DEFAULT_N):
    if dims[1] < 1:
        raise ValueError("center_plane needs c >= 1")
    cu = cu_plane(fmap, p, dims, N)
    cs = cs_plane(fmap, p, dims, N)
    return Plane(cu.point, intersect(cu.basis, cs.basis, dims[1]))


def invariance_residual(fmap, plane_p, plane_fp):
    return plane_distance(push_plane(fmap, plane_p, 1), plane_fp)


def convergence_gap(fmap, p, u, N):
    """Cauchy monitor: distance between the N- and 2N-step unstable planes."""
    return plane_distance(unstable_plane(fmap, p, u, N), unstable_plane(fmap, p, u, 2 * N))


def norm_conorm(m):
    if m.size == 0:
        return 1.0, 1.0
    sv = np.linalg.svd(m, compute_uv=False)
    return float(sv[0]), float(sv[-1])


def restriction(fmap, split_p, split_fp, name):
    """Matrix of T^x_p f : E^x_p -> E^x_{fp} in the planes' orthonormal bases."""
    a, b = split_p.plane(name), split_fp.plane(name)
    if a is None:
        return np.zeros((0, 0))
    return b.basis.T @ fmap.jacobian(split_p.point) @ a.basis


def bunching_ratio(fmap, split_p, split_fp, condition):
    """Pointwise bunching ratio; an empty center has norm = conorm = 1."""
    def nc(name):
        return norm_conorm(restriction(fmap, split_p, split_fp, name))

    if condition == "thmA_u":
        (_, mu), (nc_, mc) = nc("u"), nc("c")
        return nc_ / (mu * mc)
    if condition == "stable_dual":
        (ns, _), (nc_, mc) = nc("s"), nc("c")
        return ns * nc_ / mc
    if condition == "dominated_RSE":
        (_, mu), (ncs, _), (_, mc) = nc("u"), nc("cs"), nc("c")
        return ncs / (mu * mc)
    raise ValueError(f"unknown condition {condition!r}; expected one of {CONDITIONS}")


def grid_points(dim, grid):
    """Cell centers (i + 0.5)/n per axis, in C order."""
    ns = (grid,) * dim if np.isscalar(grid) else tuple(grid)
    axes = [(np.arange(n) + 0.5) / n for n in ns]
    return np.array(list(itertools.product(*axes))), ns


def _bunching_at(fmap, p, dims, N, condition):
    try:
        orb = OrbitSplitting(fmap, p, dims, 0, 1, N)
        return bunching_ratio(fmap, orb[0], orb[1], condition)
    except SplittingError as exc:
        raise type(exc)(f"at point {tuple(np.round(p, 12))}: {exc}") from exc


def bunching_report(fmap, grid, condition="thmA_u", dims=None, N=DEFAULT_N, threads=1):
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}")
    dims = dims or fmap.dims
    pts, ns = grid_points(fmap.dim, grid)
    job = lambda q: _bunching_at(fmap, q, dims, N, condition)  # noqa: E731
    if threads == 0:
        threads = os.cpu_count() or 1
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            vals = list(ex.map(job, pts))
    else:
        vals = [job(q) for q in pts]
    return BunchingReport(condition=condition, grid=ns, points=pts, values=np.array(vals))
