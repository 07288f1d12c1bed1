import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polymanifold import InputError, feature_matrix, poly_features, poly_jacobian


def test_feature_examples():
    np.testing.assert_array_equal(poly_features([2.0], 2), [4.0])
    np.testing.assert_array_equal(poly_features([1.0, -2.0], 3), [1, 4, 1, -8])
    np.testing.assert_array_equal(poly_features(np.zeros(3), 5), np.zeros(12))


def test_jacobian_examples():
    np.testing.assert_array_equal(poly_jacobian([2.0], 3), [[4.0], [12.0]])
    np.testing.assert_array_equal(poly_jacobian(np.zeros(2), 4), np.zeros((6, 2)))


def test_feature_matrix_examples(rng):
    np.testing.assert_array_equal(feature_matrix(np.array([[1.0, 2.0]]), 2), [[1.0, 4.0]])
    np.testing.assert_array_equal(feature_matrix(np.zeros((2, 3)), 3), np.zeros((4, 3)))
    S = rng.standard_normal((3, 5))
    W = feature_matrix(S, 4)
    assert W.shape == (9, 5)
    for j in range(5):
        np.testing.assert_array_equal(W[:, j], poly_features(S[:, j], 4))


@pytest.mark.parametrize("p", [1, 0, 2.5])
def test_degree_validation(p):
    with pytest.raises(InputError):
        poly_features([1.0], p)


def test_jacobian_matches_central_differences(rng):
    h = 1e-6
    for _ in range(100):
        r, p = int(rng.integers(1, 6)), int(rng.integers(2, 6))
        s = rng.standard_normal(r)
        J = poly_jacobian(s, p)
        fd = np.empty_like(J)
        for i in range(r):
            e = np.zeros(r)
            e[i] = h
            fd[:, i] = (poly_features(s + e, p) - poly_features(s - e, p)) / (2 * h)
        assert np.linalg.norm(J - fd) <= 1e-6 * max(np.linalg.norm(J), 1.0)


def test_jacobian_r3_p4(rng):
    s = rng.standard_normal(3)
    J = poly_jacobian(s, 4)
    np.testing.assert_allclose(J[:3], np.diag(2 * s))
    np.testing.assert_allclose(J[3:6], np.diag(3 * s**2))
    np.testing.assert_allclose(J[6:], np.diag(4 * s**3))


@given(
    st.lists(st.integers(-50, 50), min_size=1, max_size=5),
    st.integers(-4, 4),
    st.integers(2, 5),
)
def test_block_homogeneity(s, c, p):
    s = np.array(s, dtype=float)
    r = s.size
    base, scaled = poly_features(s, p), poly_features(c * s, p)
    for m in range(2, p + 1):
        blk = slice((m - 2) * r, (m - 1) * r)
        np.testing.assert_array_equal(scaled[blk], float(c) ** m * base[blk])
