"""Dense multilinear-algebra kernels.

Layout convention: matricization is co-lexicographic, i.e. the *first*
remaining index runs fastest along the columns.  All reshapes therefore use
Fortran order; the memory layout of the numpy buffers themselves is
irrelevant.  Every function returns a new array and never writes to its
inputs.
"""

from math import prod

import numpy as np


def _check_mode(ndim, i):
    if not 0 <= i < ndim:
        raise IndexError(f"mode {i} out of range for a tensor of order {ndim}")


def matricize(T, i):
    """Mode-``i`` unfolding: ``n_i`` rows, co-lexicographic columns."""
    T = np.asarray(T)
    _check_mode(T.ndim, i)
    return np.moveaxis(T, i, 0).reshape(T.shape[i], -1, order="F")


def tensorize(M, i, dims):
    """Inverse of :func:`matricize` for a tensor with extents ``dims``."""
    M = np.asarray(M)
    dims = tuple(int(n) for n in dims)
    _check_mode(len(dims), i)
    rest = dims[:i] + dims[i + 1:]
    if M.shape != (dims[i], prod(rest)):
        raise ValueError(
            f"matrix of shape {M.shape} cannot be tensorized in mode {i} "
            f"to dims {dims}")
    return np.moveaxis(M.reshape((dims[i],) + rest, order="F"), 0, i)


def mode_multiply(T, M, i):
    """Mode product ``T x_i M``, so that ``mat_i(result) = M @ mat_i(T)``."""
    T = np.asarray(T)
    M = np.asarray(M)
    _check_mode(T.ndim, i)
    if M.ndim != 2 or M.shape[1] != T.shape[i]:
        raise ValueError(
            f"cannot multiply matrix of shape {M.shape} into mode {i} "
            f"of extent {T.shape[i]}")
    return np.moveaxis(np.tensordot(M, T, axes=(1, i)), 0, i)


def multi_mode_multiply(T, matrices, modes=None):
    """Apply ``T x_{modes[0]} M_0 x_{modes[1]} M_1 ...``; ``None`` entries are skipped."""
    if modes is None:
        modes = range(len(matrices))
    for M, i in zip(matrices, modes):
        if M is not None:
            T = mode_multiply(T, M, i)
    return T


def qr_orthonormal(M):
    """Economy Householder QR with a nonnegative diagonal in ``R``.

    Rank-deficient input is not an error here; it shows up as (near) zero
    diagonal entries of ``R`` while ``Q`` stays orthonormal.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] < M.shape[1]:
        raise ValueError(f"expected a tall matrix, got shape {M.shape}")
    Q, R = np.linalg.qr(M, mode="reduced")
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    return Q * signs, R * signs[:, None]


def inner(T1, T2):
    """Euclidean inner product of the entry vectors."""
    T1 = np.asarray(T1)
    T2 = np.asarray(T2)
    if T1.shape != T2.shape:
        raise ValueError(f"shape mismatch: {T1.shape} vs {T2.shape}")
    return float(np.vdot(T1, T2))


def norm(T):
    """Euclidean (Frobenius) norm of the entry vector."""
    return float(np.linalg.norm(np.ravel(T)))


def kron_other_modes(matrices, skip):
    """Kronecker product of ``matrices`` (except index ``skip``) in co-lexicographic order.

    With first-index-fastest columns the factor of the lowest mode must be
    the rightmost Kronecker factor.
    """
    out = np.ones((1, 1))
    for j, M in enumerate(matrices):
        if j != skip:
            out = np.kron(M, out)
    return out
