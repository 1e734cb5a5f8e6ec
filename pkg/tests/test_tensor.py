import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ttnflow.tensor import (inner, kron_other_modes, matricize, mode_multiply,
                            multi_mode_multiply, norm, qr_orthonormal, tensorize)


def colex_matricize(T, i):
    """Brute-force unfolding: loop over all index tuples, first remaining index fastest."""
    dims = T.shape
    rest = [d for k, d in enumerate(dims) if k != i]
    M = np.zeros((dims[i], int(np.prod(rest))))
    for idx in itertools.product(*[range(d) for d in dims]):
        others = [idx[k] for k in range(len(dims)) if k != i]
        col, stride = 0, 1
        for j, d in zip(others, rest):
            col += j * stride
            stride *= d
        M[idx[i], col] = T[idx]
    return M


def index_tensor(dims):
    T = np.zeros(dims)
    for idx in itertools.product(*[range(d) for d in dims]):
        # co-lexicographic linear index of the tuple
        lin, stride = 0, 1
        for j, d in zip(idx, dims):
            lin += j * stride
            stride *= d
        T[idx] = lin
    return T


small_dims = st.lists(st.integers(1, 4), min_size=1, max_size=4).map(tuple)


def test_matricize_order1_is_column():
    v = np.arange(5.0)
    np.testing.assert_array_equal(matricize(v, 0), v[:, None])


def test_matricize_matrix_case():
    A = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(matricize(A, 0), A)
    np.testing.assert_array_equal(matricize(A, 1), A.T)


def test_matricize_2x2x2_frozen():
    T = index_tensor((2, 2, 2))
    expected = {
        0: [[0, 2, 4, 6], [1, 3, 5, 7]],
        1: [[0, 1, 4, 5], [2, 3, 6, 7]],
        2: [[0, 1, 2, 3], [4, 5, 6, 7]],
    }
    for i, M in expected.items():
        np.testing.assert_array_equal(matricize(T, i), np.array(M, dtype=float))
        np.testing.assert_array_equal(matricize(T, i), colex_matricize(T, i))


def test_tensorize_2x6_against_index_oracle():
    dims = (2, 3, 2)
    M = np.arange(12.0).reshape(2, 6)
    T = tensorize(M, 0, dims)
    for a, b, c in itertools.product(range(2), range(3), range(2)):
        assert T[a, b, c] == M[a, b + 3 * c]


@given(arrays(np.float64, small_dims, elements=st.floats(-10, 10)), st.data())
def test_roundtrip_every_mode(T, data):
    i = data.draw(st.integers(0, T.ndim - 1))
    np.testing.assert_array_equal(tensorize(matricize(T, i), i, T.shape), T)
    np.testing.assert_array_equal(matricize(T, i), colex_matricize(T, i))


def test_roundtrip_examples(rng):
    T = rng.standard_normal((3, 4, 5))
    for i in range(3):
        assert np.array_equal(tensorize(matricize(T, i), i, T.shape), T)
    T = rng.standard_normal((2, 3, 2, 3))
    assert np.array_equal(tensorize(matricize(T, 2), 2, T.shape), T)


def test_errors():
    T = np.zeros((2, 3))
    with pytest.raises(IndexError):
        matricize(T, 2)
    with pytest.raises(ValueError):
        tensorize(np.zeros((2, 5)), 0, (2, 3))
    with pytest.raises(ValueError):
        mode_multiply(T, np.zeros((4, 2)), 1)
    with pytest.raises(ValueError):
        inner(np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError):
        qr_orthonormal(np.zeros((2, 3)))


def test_mode_multiply_identity(rng):
    T = rng.standard_normal((3, 4, 2))
    for i in range(3):
        np.testing.assert_array_equal(mode_multiply(T, np.eye(T.shape[i]), i), T)


def test_tucker_double_sum(rng):
    C = rng.standard_normal((2, 2))
    U1 = rng.standard_normal((3, 2))
    U2 = rng.standard_normal((4, 2))
    A = mode_multiply(mode_multiply(C, U1, 0), U2, 1)
    ref = np.zeros((3, 4))
    for i, j in itertools.product(range(3), range(4)):
        ref[i, j] = sum(C[l1, l2] * U1[i, l1] * U2[j, l2]
                        for l1 in range(2) for l2 in range(2))
    np.testing.assert_allclose(A, ref, rtol=0, atol=1e-13)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_unfolding_identity(d, rng):
    ranks = rng.integers(1, 4, size=d)
    dims = ranks + rng.integers(0, 3, size=d)
    C = rng.standard_normal(tuple(ranks))
    Us = [rng.standard_normal((n, r)) for n, r in zip(dims, ranks)]
    A = multi_mode_multiply(C, Us)
    for i in range(d):
        lhs = matricize(A, i)
        rhs = Us[i] @ matricize(C, i) @ kron_other_modes([U.T for U in Us], i)
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * max(1.0, np.linalg.norm(lhs))


@given(st.integers(0, 2 ** 32 - 1))
def test_mode_multiply_bilinear(seed):
    rng = np.random.default_rng(seed)
    T1, T2 = rng.standard_normal((2, 3, 4, 2))
    M1, M2 = rng.standard_normal((2, 5, 4))
    a, b = rng.standard_normal(2)
    lhs = mode_multiply(a * T1 + b * T2, M1, 1)
    rhs = a * mode_multiply(T1, M1, 1) + b * mode_multiply(T2, M1, 1)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * max(1.0, np.linalg.norm(lhs))
    lhs = mode_multiply(T1, a * M1 + b * M2, 1)
    rhs = a * mode_multiply(T1, M1, 1) + b * mode_multiply(T1, M2, 1)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * max(1.0, np.linalg.norm(lhs))


def test_qr_orthonormal_input():
    Q0, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((6, 3)))
    Q, R = qr_orthonormal(Q0)
    signs = np.sign(np.sum(Q * Q0, axis=0))
    np.testing.assert_allclose(Q, Q0 * signs, atol=1e-14)
    np.testing.assert_allclose(R, np.eye(3), atol=1e-14)


def test_qr_reconstruction(rng):
    M = rng.standard_normal((16, 5))
    Q, R = qr_orthonormal(M)
    assert np.linalg.norm(Q @ R - M) <= 1e-12 * np.linalg.norm(M)
    assert np.linalg.norm(Q.T @ Q - np.eye(5)) <= 1e-13
    assert np.all(np.diag(R) >= 0)
    assert np.allclose(np.tril(R, -1), 0)


def test_qr_rank_deficient(rng):
    M = rng.standard_normal((6, 3))
    M[:, 2] = M[:, 1]
    Q, R = qr_orthonormal(M)
    assert abs(R[2, 2]) <= 1e-13 * np.abs(R).max()
    assert np.linalg.norm(Q.T @ Q - np.eye(3)) <= 1e-13


@given(st.integers(0, 2 ** 32 - 1))
def test_qr_deterministic(seed):
    M = np.random.default_rng(seed).standard_normal((7, 4))
    Q1, R1 = qr_orthonormal(M)
    Q2, R2 = qr_orthonormal(M.copy())
    assert np.array_equal(Q1, Q2) and np.array_equal(R1, R2)


@given(st.integers(0, 2 ** 32 - 1))
def test_inner_norm(seed):
    rng = np.random.default_rng(seed)
    T1, T2 = rng.standard_normal((2, 3, 2, 4))
    assert abs(inner(T1, T1) - norm(T1) ** 2) <= 1e-12 * norm(T1) ** 2
    assert abs(inner(T1, T2)) <= norm(T1) * norm(T2) * (1 + 1e-15)
    assert norm(np.zeros((3, 3))) == 0.0
