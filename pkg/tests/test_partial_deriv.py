import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from phsplit.dynamics import linear_toral, perturbed_skew, skew_product
from phsplit.errors import DivergenceError, MisalignedSplittingError
from phsplit.manifold import displacement, wrap
from phsplit.partial_deriv import (center_curve, chart_blocks, dEu_dEc_series, fd_derivative_along_curve,
                                   graph_coords, measured_ratio, regularity_estimate, tail_estimate,
                                   two_sided_curve)
from phsplit.splitting import OrbitSplitting, Plane, center_plane, push_plane, splitting_at

P0 = np.array([0.1, 0.2, 0.3])
PERT = perturbed_skew(0.02)


@pytest.fixture(scope="module")
def pert_orbit():
    return OrbitSplitting(PERT, P0, (1, 1, 1), 61, 1, 60)


@pytest.fixture(scope="module")
def pert_series():
    v = splitting_at(PERT, P0, N=60).Ec.basis[:, 0]
    return v, dEu_dEc_series(PERT, P0, v, 60)


# chart blocks

@pytest.mark.parametrize("fmap, p", [(linear_toral(), np.array([0.3, 0.4])), (skew_product(), P0)])
def test_chart_blocks_vanish_for_affine_maps(fmap, p):
    orb = OrbitSplitting(fmap, p, fmap.dims, 0, 1, 40)
    b = chart_blocks(fmap, p, orb[0], orb[1])
    assert np.abs(b.C).max() == 0.0
    assert b.off_diagonal <= 1e-10


def test_chart_blocks_C_matches_fd(pert_orbit):
    b = chart_blocks(PERT, P0, pert_orbit[0], pert_orbit[1])
    Fp, Ffp = b.chart_p.frame.matrix, b.chart_fp.frame.matrix

    def G(x):
        M = np.linalg.solve(Ffp, PERT.jacobian(P0 + Fp @ x) @ Fp)
        return M[1:, :1] @ np.linalg.inv(M[:1, :1])

    h = 1e-5
    fd = np.stack([(G(h * e) - G(-h * e)) / (2 * h) for e in np.eye(3)], axis=-1)
    assert np.abs(fd - b.C).max() <= 1e-6 * np.abs(b.C).max()
    assert b.second_term <= 1e-8


def test_chart_blocks_conjugate_restriction(pert_orbit):
    b = chart_blocks(PERT, P0, pert_orbit[0], pert_orbit[1])
    eu0, eu1 = pert_orbit[0].Eu.basis, pert_orbit[1].Eu.basis
    restricted = eu1.T @ PERT.jacobian(P0) @ eu0
    np.testing.assert_allclose(np.linalg.svd(b.Auu, compute_uv=False),
                               np.linalg.svd(restricted, compute_uv=False), atol=1e-8)


def test_chart_blocks_detect_misalignment(pert_orbit):
    wrong = splitting_at(PERT, wrap(P0 + 0.2), N=40)
    with pytest.raises(MisalignedSplittingError):
        chart_blocks(PERT, P0, pert_orbit[0], wrong)


@given(arrays(float, (2, 1), elements=st.floats(-0.3, 0.3)))
@settings(max_examples=20)
def test_K_action_is_graph_transform(P):
    orb = OrbitSplitting(PERT, P0, (1, 1, 1), 0, 1, 60)
    b = chart_blocks(PERT, P0, orb[0], orb[1])
    U, CS = b.chart_p.frame.blocks
    plane = Plane(P0, U + CS @ P)
    image = push_plane(PERT, plane, 1)
    got = graph_coords(image.basis, orb[1]).P
    np.testing.assert_allclose(got, b.K(P), atol=1e-10)
    np.testing.assert_allclose(b.K(P), b.Acscs @ P @ np.linalg.inv(b.Auu), atol=1e-15)


# series

@pytest.mark.parametrize("fmap, p, v", [
    (skew_product(), P0, np.array([0.0, 0.0, 1.0])),
    (skew_product(), np.array([0.7, 0.1, 0.9]), np.array([0.1, 0.5, -2.0])),
])
def test_series_vanishes_for_affine_maps(fmap, p, v):
    res = dEu_dEc_series(fmap, p, v, 30)
    assert np.abs(res.graph.ambient).max() <= 1e-14


def test_series_empty_center_is_zero():
    res = dEu_dEc_series(linear_toral(), np.array([0.3, 0.4]), np.array([1.0, 0.0]), 30)
    assert np.array_equal(res.graph.P, np.zeros_like(res.graph.P))
    assert res.projection_defect == pytest.approx(1.0)


def test_series_zero_vector_exact():
    res = dEu_dEc_series(PERT, P0, np.zeros(3), 20)
    assert np.array_equal(res.graph.P, np.zeros_like(res.graph.P))


@given(st.floats(-2, 2), st.floats(-2, 2), arrays(float, 3, elements=st.floats(-1, 1)),
       arrays(float, 3, elements=st.floats(-1, 1)))
@settings(max_examples=10)
def test_series_linear_in_v(a, b, v, w):
    orb = OrbitSplitting(PERT, P0, (1, 1, 1), 21, 0, 60)
    r = lambda x: dEu_dEc_series(PERT, P0, x, 20, orbit=orb).graph.P  # noqa: E731
    np.testing.assert_allclose(r(a * v + b * w), a * r(v) + b * r(w), atol=1e-10)


def test_series_projection_defect_reported():
    sp = splitting_at(PERT, P0, N=60)
    v = sp.Ec.basis[:, 0] + 0.5 * sp.Eu.basis[:, 0]
    res = dEu_dEc_series(PERT, P0, v, 20)
    assert res.projection_defect > 0.1
    clean = dEu_dEc_series(PERT, P0, sp.Ec.basis[:, 0], 20)
    np.testing.assert_allclose(res.graph.P, clean.graph.P, atol=1e-12)


def test_series_term_decay(pert_series):
    _, res = pert_series
    norms = res.term_norms
    assert res.ratio < 1.0
    n = np.arange(len(norms))
    live = (n >= 10) & (norms > 1e-12 * norms.max())
    C = np.max(norms[live] / res.ratio ** n[live])
    assert np.all(norms[10:] <= C * res.ratio ** n[10:] * 1.0000001 + 1e-12 * norms.max())
    assert res.tail < 1e-10


def test_series_matches_fd(pert_series):
    v, res = pert_series
    curve = two_sided_curve(PERT, P0, v, 1e-4, 10)
    fd = fd_derivative_along_curve(PERT, curve, 1e-3, 1e-4)
    rel = np.linalg.norm(res.graph.ambient - fd.ambient, 2) / max(np.linalg.norm(fd.ambient, 2), 1e-6)
    assert rel <= 5e-2


def test_measured_ratio_and_divergence():
    geometric = 0.5 ** np.arange(30)
    assert measured_ratio(geometric) == pytest.approx(0.5)
    assert measured_ratio(np.zeros(10)) == 0.0
    assert np.isnan(measured_ratio(np.ones(6)))
    from phsplit.partial_deriv import _check_divergence
    with pytest.raises(DivergenceError) as info:
        _check_divergence(1.2 ** np.arange(20), "test", "s")
    assert info.value.block == "s"
    assert tail_estimate(geometric, 0.5) == pytest.approx(geometric[-1])


# curves and finite differences

def test_center_curve_on_product_is_fiber_line():
    pts = center_curve(skew_product(), P0, [0.0, 0.0, 1.0], 1e-3, 100, N=40)
    assert len(pts) == 101
    assert max(np.abs(displacement(P0[:2], q[:2])).max() for q in pts) <= 1e-12
    assert abs(displacement(P0, pts[-1])[2] - 0.1) <= 1e-12


def test_center_curve_trivial_and_bounds():
    assert len(center_curve(PERT, P0, [0, 0, 1.0], 1e-3, 0)) == 1
    with pytest.raises(ValueError):
        center_curve(PERT, P0, [0, 0, 1.0], 0.02, 3)


def test_center_curve_tangency():
    pts = center_curve(PERT, P0, [0.0, 0.0, 1.0], 1e-3, 20, N=60)
    for a, b in zip(pts, pts[1:]):
        chord = displacement(a, b)
        ec = center_plane(PERT, a, (1, 1, 1), 60)
        assert np.linalg.norm(chord - ec.projector @ chord) <= 1e-4 * 1e-3 + 1e-15


def test_fd_along_fiber_is_zero():
    f = skew_product()
    curve = two_sided_curve(f, P0, [0, 0, 1.0], 1e-4, 10, N=40)
    assert np.abs(fd_derivative_along_curve(f, curve, 1e-3, 1e-4, N=40).ambient).max() <= 1e-12


def test_fd_validates_h():
    curve = two_sided_curve(PERT, P0, [0, 0, 1.0], 1e-4, 4)
    with pytest.raises(ValueError):
        fd_derivative_along_curve(PERT, curve, 1e-3, 1e-4)
    with pytest.raises(ValueError):
        fd_derivative_along_curve(PERT, curve, 2e-4, 1e-4, scheme="backward")


@pytest.fixture(scope="module")
def fine_curve():
    v = splitting_at(PERT, P0, N=60).Ec.basis[:, 0]
    step = 1.5625e-5
    return v, step, two_sided_curve(PERT, P0, v, step, 64)


def test_fd_richardson_first_order_forward(fine_curve):
    _, step, curve = fine_curve
    D = [fd_derivative_along_curve(PERT, curve, h, step, scheme="forward").ambient for h in (1e-3, 5e-4, 2.5e-4)]
    ratio = np.linalg.norm(D[1] - D[2]) / np.linalg.norm(D[0] - D[1])
    assert 0.3 <= ratio <= 0.7


def test_fd_richardson_central_is_second_order(fine_curve):
    _, step, curve = fine_curve
    D = [fd_derivative_along_curve(PERT, curve, h, step).ambient for h in (1e-3, 5e-4, 2.5e-4)]
    ratio = np.linalg.norm(D[1] - D[2]) / np.linalg.norm(D[0] - D[1])
    assert 0.15 <= ratio <= 0.35


def test_fd_reversed_curve_flips_sign(fine_curve):
    _, step, curve = fine_curve
    a = fd_derivative_along_curve(PERT, curve, 5e-4, step).ambient
    b = fd_derivative_along_curve(PERT, curve[::-1], 5e-4, step).ambient
    np.testing.assert_allclose(b, -a, atol=1e-12)


# regularity

def test_regularity_flat_on_product():
    res = regularity_estimate(skew_product(), P0, "center", N=40)
    assert res.flat and np.isnan(res.slope)


def test_regularity_needs_three_scales():
    with pytest.raises(ValueError):
        regularity_estimate(PERT, P0, "center", scales=[0.1, 0.05])


def test_regularity_center_slope_c1():
    res = regularity_estimate(PERT, P0, "center", N=60)
    assert res.slope >= 0.95
    assert res.table.shape == (7, 2)


def test_regularity_stable_reported():
    res = regularity_estimate(perturbed_skew(0.05), P0, "stable", N=60)
    assert np.isfinite(res.slope)
