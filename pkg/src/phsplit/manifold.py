"""Flat-torus geometry: wrapping, minimal displacements and affine charts.

Points of T^d are plain float arrays with coordinates in [0, 1).  Since the
metric is Euclidean, the exponential map at p is translation and every chart
``x -> wrap(p + F x)`` is affine.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError

MIN_BLOCK_ANGLE = 1e-8

_GROUP_NAMES = {"u", "c", "s", "cs", "cu", "us"}


def wrap(raw):
    """Reduce ``raw`` modulo 1 into [0, 1)^d."""
    x = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"non-finite coordinates: {x!r}")
    y = np.mod(x, 1.0)
    # np.mod(-1e-17, 1.0) rounds to 1.0
    y[y >= 1.0] = 0.0
    return y + 0.0


def displacement(p, q):
    """Representative of q - p with every component in [-1/2, 1/2)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"dimension mismatch: {p.shape} vs {q.shape}")
    d = q - p
    return d - np.floor(d + 0.5)


def qr_positive(m):
    """Thin QR with the diagonal of R made nonnegative (deterministic frames)."""
    q, r = np.linalg.qr(np.asarray(m, dtype=float))
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs, r * signs[:, None]


def orthonormalize(m):
    return qr_positive(m)[0]


def min_block_angle(blocks):
    """Smallest angle between any block and the span of the remaining blocks."""
    worst = np.pi / 2
    for i, b in enumerate(blocks):
        others = [o for j, o in enumerate(blocks) if j != i]
        if not others:
            continue
        o = np.hstack(others)
        u, sv, _ = np.linalg.svd(o, full_matrices=False)
        rank = int(np.sum(sv > 1e-14 * max(sv[0], 1.0)))
        qo = u[:, :rank]
        resid = b - qo @ (qo.T @ b)
        sines = np.linalg.svd(resid, compute_uv=False)
        s_min = float(np.min(sines)) if sines.size else 1.0
        worst = min(worst, float(np.arcsin(min(s_min, 1.0))))
    return worst


@dataclass(frozen=True)
class Frame:
    """Ordered orthonormal blocks at a point; together they span R^d."""

    point: np.ndarray
    blocks: tuple

    @property
    def matrix(self):
        return np.hstack(self.blocks)

    @property
    def sizes(self):
        return tuple(b.shape[1] for b in self.blocks)

    @property
    def condition(self):
        return float(np.linalg.cond(self.matrix))

    def coordinates(self, vectors):
        """Coefficients of ``vectors`` (d or d x k) in the frame."""
        return np.linalg.solve(self.matrix, vectors)


@dataclass(frozen=True)
class Chart:
    base: np.ndarray
    frame: Frame

    def eval(self, x):
        return wrap(self.base + self.frame.matrix @ np.asarray(x, dtype=float))

    def differential(self):
        return self.frame.matrix


def _group_basis(splitting, name):
    parts = []
    for letter in name:
        plane = getattr(splitting, "E" + letter)
        if plane is not None:
            parts.append(plane.basis)
    if not parts:
        raise ValueError(f"group {name!r} is empty in this splitting")
    return orthonormalize(np.hstack(parts))


def build_chart(p, splitting, grouping=("u", "cs")):
    """Affine chart at ``p`` whose frame blocks are the grouped planes of ``splitting``.

    Parameters
    ----------
    p : array, (d,)
    splitting : object with ``Eu``, ``Ec``, ``Es`` plane attributes (``Ec`` may be None)
    grouping : tuple of group names, e.g. ``("u", "cs")`` or ``("u", "c", "s")``
    """
    for name in grouping:
        if name not in _GROUP_NAMES:
            raise ValueError(f"unknown group {name!r}")
    blocks = tuple(_group_basis(splitting, g) for g in grouping)
    d = len(np.asarray(p))
    if sum(b.shape[1] for b in blocks) != d:
        raise ValueError("grouping does not cover every bundle exactly once")
    angle = min_block_angle(blocks)
    if angle < MIN_BLOCK_ANGLE:
        raise DegeneracyError(f"degenerate splitting: block angle {angle:.3e} rad", angle)
    p = wrap(p)
    return Chart(base=p, frame=Frame(point=p, blocks=blocks))
