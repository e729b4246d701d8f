import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from phsplit.errors import DegeneracyError
from phsplit.manifold import build_chart, displacement, min_block_angle, wrap
from phsplit.splitting import Plane, Splitting

reals = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)
unit = st.floats(min_value=0.0, max_value=1.0, exclude_max=True)


def points(d):
    return arrays(float, d, elements=unit)


@pytest.mark.parametrize("raw, expected", [
    ((1.25, -0.5), (0.25, 0.5)),
    ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0)),
    ((2.0, 3.0), (0.0, 0.0)),
])
def test_wrap_examples(raw, expected):
    assert np.array_equal(wrap(raw), expected)


def test_wrap_rejects_nonfinite():
    with pytest.raises(ValueError):
        wrap([0.1, np.nan])
    with pytest.raises(ValueError):
        wrap([np.inf])


def test_wrap_tiny_negative_stays_in_range():
    assert wrap([-1e-17])[0] == 0.0


@given(arrays(float, 3, elements=reals))
def test_wrap_idempotent_and_in_range(x):
    y = wrap(x)
    assert np.all((0.0 <= y) & (y < 1.0))
    assert np.array_equal(wrap(y), y)


@pytest.mark.parametrize("p, q, expected", [
    ((0.9, 0.1), (0.1, 0.2), (0.2, 0.1)),
    ((0.3, 0.4), (0.3, 0.4), (0.0, 0.0)),
    ((0.0,), (0.5,), (-0.5,)),
])
def test_displacement_examples(p, q, expected):
    np.testing.assert_allclose(displacement(p, q), expected, atol=1e-15)


def test_displacement_dimension_mismatch():
    with pytest.raises(ValueError):
        displacement([0.1, 0.2], [0.1])


@given(points(3), points(3))
def test_displacement_round_trip(p, q):
    d = displacement(p, q)
    assert np.all((-0.5 <= d) & (d < 0.5))
    np.testing.assert_allclose(displacement(q, wrap(p + d)), 0.0, atol=1e-12)
    np.testing.assert_allclose(displacement(p, wrap(q + displacement(q, p))), 0.0, atol=1e-12)


def _axis_splitting(d=3):
    e = np.eye(d)
    p = np.zeros(d)
    return Splitting(point=p, Eu=Plane(p, e[:, :1]), Ec=Plane(p, e[:, 1:2]), Es=Plane(p, e[:, 2:]))


def test_axis_splitting_gives_identity_frame():
    chart = build_chart(np.zeros(3), _axis_splitting(), ("u", "c", "s"))
    np.testing.assert_array_equal(chart.frame.matrix, np.eye(3))
    np.testing.assert_array_equal(chart.eval(np.zeros(3)), np.zeros(3))
    assert chart.frame.condition == pytest.approx(1.0)


def test_cat_chart_is_eigenbasis():
    evals, evecs = np.linalg.eigh(np.array([[2.0, 1.0], [1.0, 1.0]]))
    p = np.array([0.2, 0.7])
    sp = Splitting(point=p, Eu=Plane(p, evecs[:, [1]]), Ec=None, Es=Plane(p, evecs[:, [0]]))
    F = build_chart(p, sp, ("u", "s")).frame.matrix
    for j, k in ((0, 1), (1, 0)):
        assert abs(abs(F[:, j] @ evecs[:, k]) - 1.0) < 1e-12


def test_skew_chart_cs_block_spans_stable_and_fiber():
    from phsplit.dynamics import skew_product
    from phsplit.splitting import plane_distance, splitting_at
    sp = splitting_at(skew_product(), [0.1, 0.2, 0.3], N=40)
    chart = build_chart(sp.point, sp, ("u", "cs"))
    evals, evecs = np.linalg.eigh(np.array([[2.0, 1.0], [1.0, 1.0]]))
    expected = np.array([[evecs[0, 0], 0.0], [evecs[1, 0], 0.0], [0.0, 1.0]])
    assert plane_distance(chart.frame.blocks[1], expected) < 1e-12


def test_degenerate_splitting_reports_angle():
    p = np.zeros(2)
    a = np.array([[1.0], [0.0]])
    b = np.array([[np.cos(1e-10)], [np.sin(1e-10)]])
    sp = Splitting(point=p, Eu=Plane(p, a), Ec=None, Es=Plane(p, b))
    with pytest.raises(DegeneracyError) as info:
        build_chart(p, sp, ("u", "s"))
    assert info.value.value < 1e-8


def test_grouping_must_cover():
    with pytest.raises(ValueError):
        build_chart(np.zeros(3), _axis_splitting(), ("u", "s"))
    with pytest.raises(ValueError):
        build_chart(np.zeros(3), _axis_splitting(), ("u", "x"))


@given(st.floats(0.05, 1.5), st.floats(0.05, 1.5), points(3), arrays(float, 3, elements=st.floats(-2, 2)),
       arrays(float, 3, elements=st.floats(-2, 2)))
def test_chart_blocks_orthonormal_and_affine(a, b, p, x, y):
    e = np.eye(3)
    u = np.array([[np.cos(a)], [np.sin(a)], [0.0]])
    c = np.array([[0.0], [np.cos(b)], [np.sin(b)]])
    sp = Splitting(point=p, Eu=Plane(p, u), Ec=Plane(p, c), Es=Plane(p, e[:, [0]] + e[:, [2]]))
    chart = build_chart(p, sp, ("u", "cs"))
    for block in chart.frame.blocks:
        np.testing.assert_allclose(block.T @ block, np.eye(block.shape[1]), atol=1e-12)
    F = chart.differential()
    np.testing.assert_allclose(displacement(chart.eval(x), chart.eval(x + y)),
                               displacement(np.zeros(3), wrap(F @ y)), atol=1e-9)
    assert min_block_angle(chart.frame.blocks) > 0.0
