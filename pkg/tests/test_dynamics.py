import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from phsplit.dynamics import (CAT, GOLDEN, MapSpec, ShearField, compose, conjugated_family, constant_family,
                              invert, linear_toral, map_zoo, orbit, perturbed_skew, perturbed_skew_epsilon_max,
                              rotation_family, skew_product)
from phsplit.errors import BoundViolation, NonConvergenceError
from phsplit.manifold import displacement, wrap

unit = st.floats(min_value=0.0, max_value=1.0, exclude_max=True)
pt3 = arrays(float, 3, elements=unit)

MAPS = {
    "cat": linear_toral(),
    "skew": skew_product(),
    "perturbed_002": perturbed_skew(0.02),
    "perturbed_005": perturbed_skew(0.05),
    "conjugated_t": conjugated_family().at(0.05),
    "conjugated_mixed_t": conjugated_family(base="perturbed_skew", src=2, dst=1, half_range=0.05).at(-0.03),
}


def fd_jacobian(f, x, h):
    d = f.dim
    return np.column_stack([(f.lift(x + h * e) - f.lift(x - h * e)) / (2 * h) for e in np.eye(d)])


def fd_hessian(f, x, h):
    d = f.dim
    return np.stack([(f.jacobian(x + h * e) - f.jacobian(x - h * e)) / (2 * h) for e in np.eye(d)], axis=-1)


def test_cat_inverse_exact():
    f = linear_toral()
    q = np.array([0.3, 0.7])
    p = invert(f, q)
    np.testing.assert_allclose(displacement(wrap(CAT @ p), q), 0.0, atol=1e-15)
    np.testing.assert_allclose(p, wrap(np.array([[1, -1], [-1, 2]]) @ q), atol=1e-15)


def test_identity_inverse():
    ident = MapSpec("identity", 2, lambda x: x, lambda x: np.eye(2), lambda x: np.zeros((2, 2, 2)))
    q = np.array([0.25, 0.8])
    np.testing.assert_array_equal(invert(ident, q), q)


@given(pt3)
def test_newton_inverse_perturbed(q):
    f = perturbed_skew(0.02)
    p = invert(f, q, tol=1e-12)
    assert np.linalg.norm(displacement(f.eval(p), q)) <= 1e-12


def test_newton_nonconvergence_carries_residual():
    f = MapSpec("flat", 1, lambda x: 0.5 * np.sin(2 * np.pi * x) * 0.0 + 0.1, lambda x: np.eye(1) * 1e-3,
                lambda x: np.zeros((1, 1, 1)))
    with pytest.raises(NonConvergenceError) as info:
        invert(f, np.array([0.6]))
    assert info.value.residual > 0


def test_invert_rejects_bad_tol():
    with pytest.raises(ValueError):
        invert(perturbed_skew(0.02), np.zeros(3), tol=0.0)


def test_orbit_examples():
    assert all(np.array_equal(q, [0.0, 0.0]) for q in orbit(linear_toral(), [0.0, 0.0], 5))
    assert len(orbit(linear_toral(), [0.0, 0.0], 5)) == 6
    rot = MapSpec("rotation", 1, lambda x: x + 0.25, lambda x: np.eye(1), lambda x: np.zeros((1, 1, 1)),
                  inverse_hint=lambda y: y - 0.25)
    np.testing.assert_allclose(np.ravel(orbit(rot, [0.0], 4)), [0.0, 0.25, 0.5, 0.75, 0.0], atol=1e-15)


def test_backward_orbit_round_trip():
    f = skew_product()
    p = np.array([0.1, 0.2, 0.3])
    back = orbit(f, p, -3)
    q = back[-1]
    for _ in range(3):
        q = f.eval(q)
    np.testing.assert_allclose(displacement(q, p), 0.0, atol=1e-14)


def test_orbit_cap():
    with pytest.raises(ValueError):
        orbit(linear_toral(), [0.1, 0.1], 201)


def test_linear_derivatives():
    f = map_zoo("linear_toral")
    x = np.array([0.3, 0.9])
    np.testing.assert_array_equal(f.jacobian(x), CAT)
    np.testing.assert_array_equal(f.hessian(x), 0.0)


def test_perturbed_eps0_matches_skew(rng):
    f, g = perturbed_skew(0.0), skew_product()
    for x in rng.random((50, 3)):
        assert np.abs(f.eval(x) - g.eval(x)).max() <= 1e-15


def test_zoo_rejects_unknown_and_out_of_bounds():
    with pytest.raises(ValueError):
        map_zoo("horseshoe")
    with pytest.raises(BoundViolation) as info:
        perturbed_skew(0.2)
    assert "epsilon_max" in str(info.value)
    with pytest.raises(BoundViolation):
        linear_toral([[2, 0], [0, 1]])
    with pytest.raises(BoundViolation):
        conjugated_family(half_range=0.2)
    with pytest.raises(ValueError):
        conjugated_family(base="skew_product", epsilon=0.1)


def test_epsilon_max_value():
    assert perturbed_skew_epsilon_max() == pytest.approx(0.5 / (2 * np.pi), rel=1e-12)
    perturbed_skew(0.05)


@pytest.mark.parametrize("name", sorted(MAPS))
def test_hessian_symmetric(name, rng):
    f = MAPS[name]
    for x in rng.random((1000, f.dim)):
        H = f.hessian(x)
        assert np.abs(H - H.transpose(0, 2, 1)).max() <= 1e-12


BASE_MAPS = ["cat", "skew", "perturbed_002", "perturbed_005"]


@pytest.mark.parametrize("name", BASE_MAPS)
@pytest.mark.parametrize("h", [1e-3, 1e-4])
def test_gradient_check(name, h, rng):
    f = MAPS[name]
    for x in rng.random((20, f.dim)):
        J = f.jacobian(x)
        err = np.abs(fd_jacobian(f, x, h) - J).max() / max(np.abs(J).max(), 1.0)
        assert err <= 10 * h**2
        H = f.hessian(x)
        err = np.abs(fd_hessian(f, x, h) - H).max() / max(np.abs(H).max(), 1.0)
        assert err <= 10 * h**2


@pytest.mark.parametrize("name", ["conjugated_t", "conjugated_mixed_t"])
def test_gradient_check_second_order(name, rng):
    # composed shears carry frequency 4 pi, so the FD constant exceeds 10; check the order instead
    f = MAPS[name]
    for x in rng.random((20, f.dim)):
        J, H = f.jacobian(x), f.hessian(x)
        ej = [np.abs(fd_jacobian(f, x, h) - J).max() for h in (1e-2, 1e-3)]
        eh = [np.abs(fd_hessian(f, x, h) - H).max() for h in (1e-2, 1e-3)]
        for e in (ej, eh):
            assert e[1] <= 1e-14 or 50 <= e[0] / e[1] <= 200
        assert eh[1] <= (4 * np.pi * 1e-3) ** 2 * max(np.abs(H).max(), 1.0)


@pytest.mark.parametrize("name", sorted(MAPS))
def test_chain_rule_with_inverse(name, rng):
    f = MAPS[name]
    for p in rng.random((20, f.dim)):
        q = f.eval(p)
        p_back = invert(f, q)
        jinv = np.linalg.inv(f.jacobian(p_back))
        np.testing.assert_allclose(f.jacobian(p) @ jinv, np.eye(f.dim), atol=1e-10)
        assert abs(np.linalg.det(f.jacobian(p))) > 0.1


def test_compose_matches_nested_eval(rng):
    w = ShearField(3, 0, 2)
    g = compose(perturbed_skew(0.03), w.flow(0.07), "pw")
    for x in rng.random((10, 3)):
        np.testing.assert_allclose(g.lift(x), perturbed_skew(0.03).lift(w.flow(0.07).lift(x)), atol=1e-15)


def test_shear_inverse_exact(rng):
    w = ShearField(3, 2, 0, 0.7)
    for x in rng.random((10, 3)):
        np.testing.assert_allclose(w.flow(0.1, -1.0).lift(w.flow(0.1).lift(x)), x, atol=1e-15)
    with pytest.raises(ValueError):
        ShearField(3, 1, 1)


FAMILIES = {
    "conjugated": conjugated_family(),
    "conjugated_cat": conjugated_family(base="linear_toral", src=0, dst=1),
    "conjugated_mixed": conjugated_family(base="perturbed_skew", src=2, dst=1, half_range=0.05),
    "rotation": rotation_family(),
    "constant": constant_family(),
}


@pytest.mark.parametrize("name", sorted(FAMILIES))
@pytest.mark.parametrize("t", [0.0, 0.03])
def test_variation_matches_fd(name, t, rng):
    fam = FAMILIES[name]
    h = 1e-5
    for p in rng.random((10, fam.dim)):
        g = fam.variation(t, p)
        fd = displacement(fam.at(t - h).eval(p), fam.at(t + h).eval(p)) / (2 * h)
        assert np.linalg.norm(g - fd) <= 1e-8 * max(np.linalg.norm(g), 1.0)


def test_conjugated_variation_at_zero_formula(rng):
    fam = conjugated_family()
    f0, w = skew_product(), fam.shear
    for p in rng.random((10, 3)):
        expected = w(f0.lift(p)) - f0.jacobian(p) @ w(p)
        np.testing.assert_allclose(fam.variation(0.0, p), expected, atol=1e-15)


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_family_at_zero_is_base(name, rng):
    fam = FAMILIES[name]
    base = {"conjugated": skew_product(), "conjugated_cat": linear_toral(), "rotation": skew_product(),
            "constant": skew_product(), "conjugated_mixed": perturbed_skew(0.02)}[name]
    for p in rng.random((10, fam.dim)):
        assert np.abs(displacement(fam.at(0.0).eval(p), base.eval(p))).max() <= 1e-15


def test_conjugacy_relation(rng):
    fam = conjugated_family(base="perturbed_skew", src=2, dst=1, half_range=0.05)
    f0, t = fam.at(0.0), 0.04
    ft = fam.at(t)
    for p in rng.random((10, 3)):
        lhs = ft.eval(fam.conjugacy(t, p))
        rhs = fam.conjugacy(t, f0.eval(p))
        assert np.abs(displacement(lhs, rhs)).max() <= 1e-14


def test_family_range_enforced():
    with pytest.raises(ValueError):
        rotation_family().at(0.2)


def test_rotation_family_alpha():
    assert rotation_family().at(0.01).params["alpha"] == pytest.approx(GOLDEN + 0.01)
