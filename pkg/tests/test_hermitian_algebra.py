import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pshlab import hermitian_algebra as ha


def herm(rng, n):
    return ha.random_hermitian(rng, n)


def test_det_matches_numpy():
    rng = np.random.default_rng(0)
    for n in (1, 2, 3):
        a = ha.random_hermitian(rng, n, (50,))
        assert np.allclose(ha.det_herm(a), np.linalg.det(a).real, atol=1e-12)


def test_eigvalsh_matches_numpy():
    rng = np.random.default_rng(1)
    for n in (1, 2, 3):
        a = ha.random_hermitian(rng, n, (50,))
        assert np.allclose(ha.eigvalsh(a), np.linalg.eigvalsh(a), atol=1e-12)


def test_mixed_discriminant_diagonal():
    a = np.diag([1.0, 2.0, 3.0]).astype(complex)
    assert ha.mixed_discriminant([a, a, a]) == pytest.approx(6.0)
    e = [np.diag(v).astype(complex) for v in ([1, 0, 0], [0, 1, 0], [0, 0, 1])]
    assert ha.mixed_discriminant(e) == pytest.approx(1.0 / 6.0)


def test_identity_volume():
    for n in (1, 2, 3):
        eye = np.eye(n, dtype=complex)
        assert ha.wedge_top_density([eye] * n) == pytest.approx(float(np.prod(range(1, n + 1))))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from([2, 3]))
def test_mixed_discriminant_symmetric_and_multilinear(seed, n):
    rng = np.random.default_rng(seed)
    mats = [herm(rng, n) for _ in range(n)]
    d = ha.mixed_discriminant(mats)
    assert ha.mixed_discriminant(mats[::-1]) == pytest.approx(d, rel=1e-10, abs=1e-12)
    b = herm(rng, n)
    lhs = ha.mixed_discriminant([mats[0] + 2.5 * b] + mats[1:])
    rhs = d + 2.5 * ha.mixed_discriminant([b] + mats[1:])
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from([2, 3]))
def test_mixed_discriminant_positive_on_cone(seed, n):
    rng = np.random.default_rng(seed)
    mats = [ha.random_positive(rng, n) for _ in range(n)]
    assert ha.mixed_discriminant(mats) > 0


def test_dimension_errors():
    with pytest.raises(ha.DimensionError):
        ha.mixed_discriminant([np.eye(2), np.eye(3)])
    with pytest.raises(ha.DimensionError):
        ha.mixed_discriminant([np.eye(4)] * 4)
    with pytest.raises(ha.DimensionError):
        ha.mixed_discriminant([np.eye(2)])


def test_relative_trace_and_errors():
    a = np.diag([1.0, 4.0]).astype(complex)
    assert ha.relative_trace(a, 2 * np.eye(2)) == pytest.approx(2.5)
    with pytest.raises(ha.PositivityError):
        ha.relative_trace(a, np.diag([1.0, -1.0]))


def test_popovici_pointwise_equality_for_equal_forms():
    a = np.eye(2, dtype=complex)
    lhs, rhs = ha.popovici_pointwise(a, a, a)
    # n=2: (2/2) * (2/2) = 1 against (1/2) * 1
    assert lhs == pytest.approx(1.0)
    assert rhs == pytest.approx(0.5)


def test_is_positive_11():
    assert ha.is_positive_11(np.eye(3))[0]
    ok, w = ha.is_positive_11(np.diag([1.0, -1e-3]))
    assert not ok and w == pytest.approx(-1e-3)


def test_pointform_wedge_bidegree_and_top():
    rng = np.random.default_rng(2)
    a, b = herm(rng, 2), herm(rng, 2)
    fa = ha.PointForm(2, 1, 1, 1j * a)
    fb = ha.PointForm(2, 1, 1, 1j * b)
    top = fa.wedge(fb)
    assert (top.p, top.q) == (2, 2)
    assert top.top_density() == pytest.approx(ha.wedge_top_density([a, b]), abs=1e-12)


def test_weak_positivity_of_square():
    rng = np.random.default_rng(3)
    p = ha.random_positive(rng, 3)
    f = ha.PointForm(3, 1, 1, 1j * p)
    ok = ha.is_weakly_positive_22(f.wedge(f))
    assert ok[0] if isinstance(ok, tuple) else ok
