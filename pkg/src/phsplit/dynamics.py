"""C^2 toral diffeomorphisms with analytic derivatives, and one-parameter families.

Every map is described by a lift ``R^d -> R^d`` together with its Jacobian
and Hessian.  The Hessian is indexed ``H[i, j, k] = d^2 f_i / dx_j dx_k``.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import BoundViolation, NonConvergenceError
from .manifold import displacement, wrap

TWO_PI = 2.0 * np.pi
GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
CAT = np.array([[2.0, 1.0], [1.0, 1.0]])
ORBIT_CAP = 200
NEWTON_MAX_ITER = 50

# Largest allowed sup-grid value of ||Df - L||_inf for a perturbation of the linear part L.
PERTURBATION_BOUND = 0.5
BOUND_GRID = 32


@dataclass(frozen=True)
class MapSpec:
    name: str
    dim: int
    lift: Callable
    jacobian: Callable
    hessian: Callable
    inverse_hint: Optional[Callable] = None
    linear_part: Optional[np.ndarray] = None
    params: dict = field(default_factory=dict)
    dims: Optional[tuple] = None

    def eval(self, p):
        return wrap(self.lift(np.asarray(p, dtype=float)))


@dataclass(frozen=True)
class FamilySpec:
    """A C^2 family t -> f_t with its variation field g_t(p) = d/ds f_s(p)|_{s=t}.

    ``conjugacy(t, p)``, when present, is a map h_t with f_t h_t = h_t f_0.
    ``smooth_splitting`` marks families whose t = 0 splitting is analytic.
    """

    name: str
    dim: int
    param_range: tuple
    builder: Callable
    dims: tuple
    variation_field: Optional[Callable] = None
    smoothness_class: str = "C2"
    smooth_splitting: bool = False
    conjugacy: Optional[Callable] = None
    shear: Optional["ShearField"] = None
    params: dict = field(default_factory=dict)

    def at(self, t):
        lo, hi = self.param_range
        if not lo < t < hi:
            raise ValueError(f"t={t} outside family range {self.param_range}")
        return self.builder(float(t))

    def variation(self, t, p, h=1e-5):
        p = np.asarray(p, dtype=float)
        if self.variation_field is not None:
            return np.asarray(self.variation_field(float(t), p), dtype=float)
        plus = self.at(t + h).eval(p)
        minus = self.at(t - h).eval(p)
        return displacement(minus, plus) / (2.0 * h)


def invert(fmap, q, tol=1e-13):
    """Preimage of ``q`` under ``fmap``.

    Uses the exact inverse when the map carries one, otherwise Newton's method
    on the lift, seeded by the inverse of the linear part.
    """
    q = wrap(q)
    if fmap.inverse_hint is not None:
        return wrap(fmap.inverse_hint(q))
    if tol <= 0:
        raise ValueError("tol must be positive")
    if fmap.linear_part is not None:
        # the constant term lift(0) carries the translation part of the map
        x = np.linalg.solve(fmap.linear_part, q - fmap.lift(np.zeros_like(q)))
    else:
        x = q.copy()
    res = np.inf
    for _ in range(NEWTON_MAX_ITER):
        d = fmap.lift(x) - q
        r = np.floor(d + 0.5) - d
        res = float(np.sqrt(r @ r))
        if res <= tol:
            return wrap(x)
        x = x + np.linalg.solve(fmap.jacobian(x), r)
    raise NonConvergenceError(f"Newton inversion stalled at residual {res:.3e}", res)


def orbit(fmap, p, n, cap=ORBIT_CAP):
    """[p, f^{+-1} p, ..., f^n p]; negative ``n`` runs the inverse."""
    if abs(n) > cap:
        raise ValueError(f"|n|={abs(n)} exceeds orbit cap {cap}")
    pts = [wrap(p)]
    for _ in range(abs(n)):
        pts.append(fmap.eval(pts[-1]) if n > 0 else invert(fmap, pts[-1]))
    return pts


# ---------------------------------------------------------------------------
# building blocks

def _linear(matrix, name, params=None):
    a = np.asarray(matrix, dtype=float)
    d = a.shape[0]
    a_inv = np.round(np.linalg.inv(a))
    zero_h = np.zeros((d, d, d))
    return MapSpec(
        name=name,
        dim=d,
        lift=lambda x: a @ x,
        jacobian=lambda x: a.copy(),
        hessian=lambda x: zero_h.copy(),
        inverse_hint=lambda y: a_inv @ y,
        linear_part=a,
        params=params or {},
        dims=(1, 0, 1) if d == 2 else None,
    )


def compose(outer, inner, name, inverse_hint=None, linear_part=None, params=None, dims=None):
    """outer o inner, with chain-rule Jacobian and Hessian."""

    def lift(x):
        return outer.lift(inner.lift(x))

    def jac(x):
        return outer.jacobian(inner.lift(x)) @ inner.jacobian(x)

    def hess(x):
        y = inner.lift(x)
        ji = inner.jacobian(x)
        first = np.einsum("ilm,lj,mk->ijk", outer.hessian(y), ji, ji)
        second = np.einsum("il,ljk->ijk", outer.jacobian(y), inner.hessian(x))
        return first + second

    return MapSpec(name=name, dim=outer.dim, lift=lift, jacobian=jac, hessian=hess,
                   inverse_hint=inverse_hint, linear_part=linear_part, params=params or {}, dims=dims)


@dataclass(frozen=True)
class ShearField:
    """w(p) = amplitude * sin(2 pi p[src]) e_dst with src != dst.

    Because w does not depend on the coordinate it moves, p -> p + t w(p) has
    the exact inverse p -> p - t w(p).
    """

    dim: int
    src: int
    dst: int
    amplitude: float = 1.0

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError("shear field needs src != dst")

    def __call__(self, p):
        out = np.zeros(self.dim)
        out[self.dst] = self.amplitude * np.sin(TWO_PI * p[self.src])
        return out

    def jacobian(self, p):
        out = np.zeros((self.dim, self.dim))
        out[self.dst, self.src] = TWO_PI * self.amplitude * np.cos(TWO_PI * p[self.src])
        return out

    def hessian(self, p):
        out = np.zeros((self.dim,) * 3)
        out[self.dst, self.src, self.src] = -TWO_PI**2 * self.amplitude * np.sin(TWO_PI * p[self.src])
        return out

    def flow(self, t, sign=1.0):
        """p -> p + sign * t * w(p) as a MapSpec."""
        s = sign * t
        eye = np.eye(self.dim)
        return MapSpec(
            name="shear",
            dim=self.dim,
            lift=lambda x: x + s * self(x),
            jacobian=lambda x: eye + s * self.jacobian(x),
            hessian=lambda x: s * self.hessian(x),
        )


# ---------------------------------------------------------------------------
# the zoo

def linear_toral(A=None):
    a = CAT if A is None else np.asarray(A, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("A must be square")
    if not np.allclose(a, np.round(a)) or abs(round(np.linalg.det(a))) != 1:
        raise BoundViolation("A must be an integer unimodular matrix")
    return _linear(np.round(a), "linear_toral", {"A": np.round(a).tolist()})


def _skew_linear(alpha):
    return np.block([[CAT, np.zeros((2, 1))], [np.zeros((1, 2)), np.ones((1, 1))]]), np.array([0.0, 0.0, alpha])


def skew_product(alpha=GOLDEN):
    a, shift = _skew_linear(alpha)
    a_inv = np.round(np.linalg.inv(a))
    zero_h = np.zeros((3, 3, 3))
    return MapSpec(
        name="skew_product",
        dim=3,
        lift=lambda x: a @ x + shift,
        jacobian=lambda x: a.copy(),
        hessian=lambda x: zero_h.copy(),
        inverse_hint=lambda y: a_inv @ (y - shift),
        linear_part=a,
        params={"alpha": alpha},
        dims=(1, 1, 1),
    )


def _perturbation_sup():
    """sup over the 32^3 grid of ||D(perturbation)||_inf at epsilon = 1."""
    g = np.arange(BOUND_GRID) / BOUND_GRID
    c = np.abs(np.cos(TWO_PI * g))
    # rows 0 and 2 each carry a single 2 pi cos term
    return float(TWO_PI * c.max())


def perturbed_skew_epsilon_max():
    return PERTURBATION_BOUND / _perturbation_sup()


def perturbed_skew(epsilon=0.02, alpha=GOLDEN):
    eps_max = perturbed_skew_epsilon_max()
    if not abs(epsilon) < eps_max:
        raise BoundViolation(
            f"epsilon={epsilon} violates ||Df - A(+)1||_inf <= {PERTURBATION_BOUND}: "
            f"epsilon_max = {eps_max:.6f}")
    a, shift = _skew_linear(alpha)
    e = float(epsilon)

    def lift(x):
        return a @ x + shift + e * np.array([np.sin(TWO_PI * x[2]), 0.0, np.sin(TWO_PI * x[0])])

    def jac(x):
        j = a.copy()
        j[0, 2] += TWO_PI * e * np.cos(TWO_PI * x[2])
        j[2, 0] += TWO_PI * e * np.cos(TWO_PI * x[0])
        return j

    def hess(x):
        h = np.zeros((3, 3, 3))
        h[0, 2, 2] = -TWO_PI**2 * e * np.sin(TWO_PI * x[2])
        h[2, 0, 0] = -TWO_PI**2 * e * np.sin(TWO_PI * x[0])
        return h

    return MapSpec(name="perturbed_skew", dim=3, lift=lift, jacobian=jac, hessian=hess,
                   linear_part=a, params={"epsilon": e, "alpha": alpha}, dims=(1, 1, 1))


_DIMS = {"linear_toral": (1, 0, 1), "skew_product": (1, 1, 1), "perturbed_skew": (1, 1, 1)}


BASES = ("linear_toral", "skew_product", "perturbed_skew")


def _base_map(base, params):
    if base not in BASES:
        raise ValueError(f"unknown base map {base!r}; known: {list(BASES)}")
    ctor = {"linear_toral": linear_toral, "skew_product": skew_product, "perturbed_skew": perturbed_skew}[base]
    try:
        return ctor(**params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for base {base!r}: {exc}") from None


def conjugated_family(base="skew_product", src=0, dst=None, amplitude=1.0, half_range=0.1, **base_params):
    """f_t = psi_t o f_0 o psi_t^{-1} with psi_t(p) = p + t w(p) for a shear field w.

    Defaults give w(x, y, theta) = (0, 0, sin 2 pi x) over the skew product.
    """
    f0 = _base_map(base, base_params)
    d = f0.dim
    if dst is None:
        dst = d - 1
    w = ShearField(d, int(src), int(dst), float(amplitude))
    if half_range * TWO_PI * abs(amplitude) >= 1.0:
        raise BoundViolation("psi_t is not a diffeomorphism on the whole parameter range: "
                             f"|t| * 2 pi * amplitude = {half_range * TWO_PI * abs(amplitude):.3f} >= 1")

    def build(t):
        if t == 0.0:
            return f0
        fwd, back = w.flow(t), w.flow(t, -1.0)
        inverse = None
        if f0.inverse_hint is not None:
            inv0 = f0.inverse_hint

            def inverse(y):
                b = inv0(y - t * w(y))
                return b + t * w(b)

        inner = compose(f0, back, "tmp")
        return compose(fwd, inner, f"conjugated_family(t={t})", inverse_hint=inverse,
                       linear_part=f0.linear_part, params={"t": t}, dims=f0.dims)

    def variation(t, q):
        s = q - t * w(q)
        r = f0.lift(s)
        dpsi = np.eye(d) + t * w.jacobian(r)
        return w(r) - dpsi @ (f0.jacobian(s) @ w(q))

    return FamilySpec(
        name="conjugated_family",
        dim=d,
        param_range=(-half_range, half_range),
        builder=build,
        dims=_DIMS[base],
        variation_field=variation,
        smooth_splitting=base in ("linear_toral", "skew_product"),
        conjugacy=lambda t, p: wrap(np.asarray(p, dtype=float) + t * w(np.asarray(p, dtype=float))),
        shear=w,
        params={"base": base, "src": src, "dst": dst, "amplitude": amplitude, **base_params},
    )


def rotation_family(alpha=GOLDEN, half_range=0.1):
    """Skew product with the fiber rotation alpha + t."""
    return FamilySpec(
        name="rotation_family",
        dim=3,
        param_range=(-half_range, half_range),
        builder=lambda t: skew_product(alpha + t),
        dims=(1, 1, 1),
        variation_field=lambda t, q: np.array([0.0, 0.0, 1.0]),
        smooth_splitting=True,
        params={"alpha": alpha},
    )


def constant_family(base="skew_product", half_range=0.1, **base_params):
    f0 = _base_map(base, base_params)
    return FamilySpec(
        name="constant_family",
        dim=f0.dim,
        param_range=(-half_range, half_range),
        builder=lambda t: f0,
        dims=_DIMS[base],
        variation_field=lambda t, q: np.zeros(f0.dim),
        smooth_splitting=base in ("linear_toral", "skew_product"),
        conjugacy=lambda t, p: wrap(p),
        params={"base": base, **base_params},
    )


ZOO = {
    "linear_toral": linear_toral,
    "skew_product": skew_product,
    "perturbed_skew": perturbed_skew,
    "conjugated_family": conjugated_family,
    "rotation_family": rotation_family,
    "constant_family": constant_family,
}


def map_zoo(name, params=None):
    """Look up a map or family by name; ``params`` are keyword arguments of the constructor."""
    try:
        ctor = ZOO[name]
    except KeyError:
        raise ValueError(f"unknown map {name!r}; known: {sorted(ZOO)}") from None
    return ctor(**(params or {}))


def default_dims(fmap):
    if fmap.dims is None:
        raise ValueError(f"map {fmap.name!r} declares no splitting dimensions")
    return fmap.dims
