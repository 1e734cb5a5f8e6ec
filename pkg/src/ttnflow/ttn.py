"""Tree tensor networks in factorized form.

A :class:`TTN` node mirrors one subtree.  At a leaf the node stores the basis
matrix ``U`` (``n x r``); at an internal node it stores the connection tensor
``C`` of shape ``(r, r_1, ..., r_m)`` and the child networks.  The value of a
node is the tensor ``X_tau`` of the space ``V_tau`` with the rank index as
mode 0, i.e. ``X_l = U^T`` at a leaf and ``X_tau = C x_1 U_1 ... x_m U_m``
otherwise, where ``U_i = mat_0(X_i)^T``.

Dense values of ``V_tau`` are kept at full leaf resolution: an array of shape
``(r, n_l, ...)`` with the leaves in depth-first order.  Grouping the leaves
of each child into one mode is a Fortran-order reshape.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod

import numpy as np
import scipy.sparse.linalg as spla

from .tensor import matricize, mode_multiply, norm, qr_orthonormal, tensorize
from .tree import RankedTree, Tree

#: Largest number of entries a dense tensor may have before contraction refuses.
DESK_BUDGET = 20_000_000

#: Relative size of an ``R`` diagonal entry below which a QR is treated as rank deficient.
RANK_TOL = 1e-13


class BudgetExceededError(RuntimeError):
    """A dense tensor would exceed :data:`DESK_BUDGET` entries."""


class RankDeficiencyError(ArithmeticError):
    """A matrix that must have full column rank does not."""


class TreeMismatchError(ValueError):
    """Two networks do not live on the same tree."""


@dataclass(frozen=True, eq=False)
class TTN:
    """One node of a tree tensor network (and, recursively, its subtree)."""

    tree: Tree
    value: np.ndarray
    children: tuple[TTN, ...] = ()

    @property
    def is_leaf(self):
        return self.tree.is_leaf

    @property
    def rank(self):
        """Extent of the rank mode (``r_tau``)."""
        return self.value.shape[1] if self.is_leaf else self.value.shape[0]

    @property
    def leaf_dims(self):
        if self.is_leaf:
            return (self.value.shape[0],)
        return tuple(n for c in self.children for n in c.leaf_dims)

    @property
    def size(self):
        return prod(self.leaf_dims)

    def with_value(self, value):
        return TTN(self.tree, value, self.children)

    def with_child(self, i, child):
        children = self.children[:i] + (child,) + self.children[i + 1:]
        return TTN(self.tree, self.value, children)

    def nodes(self, path=()):
        """Yield ``(path, node)`` pairs in pre-order; a path is a tuple of child indices."""
        yield path, self
        for k, c in enumerate(self.children):
            yield from c.nodes(path + (k,))

    def replace(self, path, value):
        """Copy with the factor at ``path`` replaced by ``value``."""
        if not path:
            return self.with_value(value)
        k = path[0]
        return self.with_child(k, self.children[k].replace(path[1:], value))

    def map_values(self, fn):
        """Copy with every factor replaced by ``fn(path, node)``."""
        return _map(self, fn, ())

    def storage(self):
        return sum(node.value.size for _, node in self.nodes())

    def ranked_tree(self):
        dims = {}
        ranks = {}
        for _, node in self.nodes():
            ranks[node.tree] = node.rank
            if node.is_leaf:
                dims[node.tree.label] = node.value.shape[0]
        return RankedTree(self.tree, dims, ranks)

    def check_shape(self, shape: RankedTree):
        """Raise ``TreeMismatchError`` unless the factors fit ``shape``."""
        if self.tree != shape.tree:
            raise TreeMismatchError(f"tree {self.tree} differs from {shape.tree}")
        for _, node in self.nodes():
            r = shape.rank(node.tree)
            if node.is_leaf:
                expected = (shape.dim(node.tree.label), r)
            else:
                expected = (r,) + tuple(shape.rank(c) for c in node.tree.children)
            if node.value.shape != expected:
                raise TreeMismatchError(
                    f"factor at {node.tree} has shape {node.value.shape}, expected {expected}")


def _map(X, fn, path):
    children = tuple(_map(c, fn, path + (k,)) for k, c in enumerate(X.children))
    return TTN(X.tree, fn(path, X), children)


def leaf(tree, U):
    return TTN(tree, np.asarray(U, dtype=float))


def node(tree, C, children):
    return TTN(tree, np.asarray(C, dtype=float), tuple(children))


# ----------------------------------------------------------------------------
# dense values of V_tau


def group(Z, tree):
    """Reshape a full-resolution ``V_tau`` array to ``(r, n_tau_1, ..., n_tau_m)``."""
    if tree.is_leaf:
        return Z
    sizes = []
    k = 1
    for c in tree.children:
        nl = len(c.leaves)
        sizes.append(prod(Z.shape[k:k + nl]))
        k += nl
    return Z.reshape((Z.shape[0],) + tuple(sizes), order="F")


def ungroup(G, tree, leaf_dims):
    """Inverse of :func:`group`."""
    return G.reshape((G.shape[0],) + tuple(leaf_dims), order="F")


def _check_budget(entries):
    if entries > DESK_BUDGET:
        raise BudgetExceededError(
            f"dense tensor with {entries} entries exceeds the budget of {DESK_BUDGET}")


def to_dense(X: TTN):
    """Dense value of ``X`` in ``V_tau``: shape ``(r, n_l ...)``."""
    _check_budget(X.rank * X.size)
    return _dense(X)


def _dense(X):
    if X.is_leaf:
        return X.value.T
    T = X.value
    for j, c in enumerate(X.children):
        Tc = _dense(c)
        Uj = Tc.reshape(Tc.shape[0], -1, order="F").T
        T = mode_multiply(T, Uj, j + 1)
    return ungroup(T, X.tree, X.leaf_dims)


def contract(X: TTN):
    """Dense order-``d`` tensor of a full network (root rank 1, mode 0 dropped)."""
    if X.rank != 1:
        raise ValueError(f"contract expects root rank 1, got {X.rank}; use to_dense")
    return to_dense(X)[0]


def basis_matrix(X: TTN):
    """``U_tau = mat_0(X_tau)^T`` (``n_tau x r_tau``), formed densely."""
    if X.is_leaf:
        return X.value
    return matricize(to_dense(X), 0).T


def apply_top(X: TTN, M):
    """``X x_0 M``: replace the top factor so that ``mat_0`` is multiplied by ``M``."""
    if X.is_leaf:
        return X.with_value(X.value @ M.T)
    return X.with_value(mode_multiply(X.value, M, 0))


# ----------------------------------------------------------------------------
# orthonormality


def _check_rank(R, where):
    d = np.abs(np.diag(R))
    scale = max(np.abs(R).max(), np.finfo(float).tiny)
    if d.size and d.min() <= RANK_TOL * scale:
        raise RankDeficiencyError(
            f"rank deficiency at {where}: smallest |R_kk| = {d.min():.3e}")


def orthonormalize(X: TTN) -> TTN:
    """Orthonormal representation of the same tensor, by a leaf-to-root QR sweep."""
    Y, R = _orthonormalize(X, top=True)
    return Y


def _orthonormalize(X, top):
    if X.is_leaf:
        Q, R = qr_orthonormal(X.value)
        _check_rank(R, f"leaf {X.tree}")
        return X.with_value(Q), R
    C = X.value
    children = []
    for j, c in enumerate(X.children):
        cq, Rj = _orthonormalize(c, top=False)
        children.append(cq)
        C = mode_multiply(C, Rj, j + 1)
    if top:
        return TTN(X.tree, C, tuple(children)), None
    Q, R = qr_orthonormal(matricize(C, 0).T)
    _check_rank(R, f"subtree {X.tree}")
    return TTN(X.tree, tensorize(Q.T, 0, C.shape), tuple(children)), R


@dataclass(frozen=True)
class OrthonormalityReport:
    """Per-node deviations ``||Q^T Q - I||_F`` (root excluded)."""

    deviations: dict
    tol: float

    @property
    def max_deviation(self):
        return max(self.deviations.values(), default=0.0)

    @property
    def ok(self):
        return all(v <= self.tol for v in self.deviations.values())

    def failures(self):
        return {k: v for k, v in self.deviations.items() if v > self.tol}


def node_deviation(X: TTN):
    """``||Q^T Q - I||_F`` with ``Q = U_l`` or ``Q = mat_0(C)^T``."""
    Q = X.value if X.is_leaf else matricize(X.value, 0).T
    return float(np.linalg.norm(Q.T @ Q - np.eye(Q.shape[1])))


def check_orthonormal(X: TTN, tol=1e-13) -> OrthonormalityReport:
    devs = {str(n.tree): node_deviation(n) for path, n in X.nodes() if path}
    return OrthonormalityReport(devs, tol)


# ----------------------------------------------------------------------------
# gram products and norms


def gram(X: TTN, Z: TTN):
    """``U_X^T W_Z`` (``r x s``) computed from the factors, passing from the leaves up."""
    if X.tree != Z.tree:
        raise TreeMismatchError(f"tree {X.tree} differs from {Z.tree}")
    return _gram(X, Z)


def _gram(X, Z):
    if X.is_leaf:
        return X.value.T @ Z.value
    M = X.value
    for j, (xc, zc) in enumerate(zip(X.children, Z.children)):
        M = mode_multiply(M, _gram(xc, zc).T, j + 1)
    return matricize(M, 0) @ matricize(Z.value, 0).T


def ttn_norm(X: TTN):
    """Euclidean norm of the value of ``X`` without forming it.

    A QR sweep moves all weight into the top factor; this is backward stable
    and so resolves differences of nearly equal networks to round-off.
    """
    if X.is_leaf:
        return norm(X.value)
    return norm(_absorb(X))


def _absorb(X):
    """Top factor after absorbing the triangular factors of all children."""
    C = X.value
    for j, c in enumerate(X.children):
        if c.is_leaf:
            R = np.linalg.qr(c.value, mode="r")
        else:
            R = np.linalg.qr(matricize(_absorb(c), 0).T, mode="r")
        C = mode_multiply(C, R, j + 1)
    return C


def ttn_sum(terms, coeffs=None) -> TTN:
    """One network for ``sum_k coeffs[k] * terms[k]`` with block-stacked ranks."""
    terms = list(terms)
    if coeffs is None:
        coeffs = [1.0] * len(terms)
    tree = terms[0].tree
    for t in terms[1:]:
        if t.tree != tree:
            raise TreeMismatchError(f"tree {t.tree} differs from {tree}")
        if t.rank != terms[0].rank:
            raise ValueError("all terms must share the top rank")
    return _stack(terms, coeffs, top=True)


def _stack(terms, coeffs, top):
    first = terms[0]
    if first.is_leaf:
        if top:
            return first.with_value(sum(c * t.value for c, t in zip(coeffs, terms)))
        return first.with_value(np.hstack([t.value for t in terms]))
    children = tuple(
        _stack([t.children[j] for t in terms], None, top=False)
        for j in range(len(first.children)))
    child_ranks = [c.rank for c in children]
    r0 = first.rank if top else sum(t.rank for t in terms)
    C = np.zeros((r0,) + tuple(child_ranks))
    offsets = np.zeros(len(child_ranks) + 1, dtype=int)
    for k, t in enumerate(terms):
        idx = []
        if top:
            idx.append(slice(0, r0))
        else:
            idx.append(slice(offsets[0], offsets[0] + t.rank))
        for j, c in enumerate(t.children):
            idx.append(slice(offsets[j + 1], offsets[j + 1] + c.rank))
        scale = coeffs[k] if top else 1.0
        C[tuple(idx)] = scale * t.value
        if not top:
            offsets[0] += t.rank
        for j, c in enumerate(t.children):
            offsets[j + 1] += c.rank
    return TTN(first.tree, C, children)


def difference_norm(X: TTN, Z: TTN):
    """``||X - Z||`` evaluated in factorized form."""
    return ttn_norm(ttn_sum([X, Z], [1.0, -1.0]))


# ----------------------------------------------------------------------------
# construction


def random_orthonormal_ttn(shape: RankedTree, seed=0) -> TTN:
    """Random orthonormal network; the root core is normalized to unit norm.

    Factors are Gaussian, orthonormalized by QR, so every connection tensor
    has full multilinear rank with probability one.
    """
    rng = np.random.default_rng(seed)

    def build(tree, top):
        r = shape.rank(tree)
        if tree.is_leaf:
            Q, _ = qr_orthonormal(rng.standard_normal((shape.dim(tree.label), r)))
            return TTN(tree, Q)
        dims = (r,) + tuple(shape.rank(c) for c in tree.children)
        C = rng.standard_normal(dims)
        if top:
            C = C / norm(C)
        else:
            Q, _ = qr_orthonormal(matricize(C, 0).T)
            C = tensorize(Q.T, 0, dims)
        return TTN(tree, C, tuple(build(c, False) for c in tree.children))

    return build(shape.tree, True)


# ----------------------------------------------------------------------------
# tangent tensors


@dataclass(frozen=True, eq=False)
class TangentTTN:
    """First-order variation of ``base``: ``delta`` holds one perturbation per node.

    Its value is the sum over nodes of ``base`` with that single factor
    replaced by the perturbation, i.e. the derivative of the factor path
    ``base + h * delta`` at ``h = 0``.
    """

    base: TTN
    delta: TTN

    def terms(self):
        return [self.base.replace(path, d.value) for path, d in self.delta.nodes()]

    def scaled(self, alpha):
        return TangentTTN(self.base, self.delta.map_values(lambda p, n: alpha * n.value))

    def norm(self):
        terms = self.terms()
        total = sum(gram(a, b)[0, 0] for a in terms for b in terms)
        return float(np.sqrt(max(total, 0.0)))


def contract_tangent(B: TangentTTN):
    """Dense value of a tangent tensor (order ``d``)."""
    _check_budget(B.base.size)
    out = np.zeros(B.base.leaf_dims)
    for t in B.terms():
        out += _dense(t)[0]
    return out


def tangent_sample(X: TTN, seed=0, scale=1.0) -> TangentTTN:
    """Random tangent tensor at ``X`` whose value has norm ``scale``."""
    rng = np.random.default_rng(seed)
    delta = X.map_values(lambda p, n: rng.standard_normal(n.value.shape))
    B = TangentTTN(X, delta)
    if scale == 0:
        return B.scaled(0.0)
    return B.scaled(scale / B.norm())


# ----------------------------------------------------------------------------
# truncation of dense tensors


def leading_left_singular_vectors(M, k):
    """Orthonormal basis of the dominant ``k``-dimensional column space of ``M``.

    Columns are sign-normalized (largest entry positive) for determinism.
    """
    m, n = M.shape
    if m * n <= 4_000_000:
        U, _, _ = np.linalg.svd(M, full_matrices=False)
        U = U[:, :k]
    else:
        G = M @ M.T if m <= n else None
        if G is None:
            # tall: column space of M from the small Gram M^T M
            _, V = np.linalg.eigh(M.T @ M)
            U, _ = np.linalg.qr(M @ V[:, ::-1][:, :k])
        elif m <= 2000:
            _, V = np.linalg.eigh(G)
            U = V[:, ::-1][:, :k]
        else:
            v0 = np.ones(m) / np.sqrt(m)
            w, V = spla.eigsh(G, k=k, which="LA", v0=v0, tol=0)
            U = V[:, np.argsort(w)[::-1]]
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def _truncate(X, tree, shape, sweeps, cache):
    G = group(X, tree)
    m = len(tree.children)
    ranks = [shape.rank(c) for c in tree.children]
    if tree == shape.tree:
        # the root input is the same for every sweep count, so its HOSVD is shared
        if "root" not in cache:
            cache["root"] = [leading_left_singular_vectors(matricize(G, j + 1), ranks[j])
                             for j in range(m)]
        Us = list(cache["root"])
    else:
        Us = [leading_left_singular_vectors(matricize(G, j + 1), ranks[j]) for j in range(m)]
    for _ in range(sweeps):
        for j in range(m):
            Y = G
            for k in range(m):
                if k != j:
                    Y = mode_multiply(Y, Us[k].T, k + 1)
            Us[j] = leading_left_singular_vectors(matricize(Y, j + 1), ranks[j])
    core = G
    for j in range(m):
        core = mode_multiply(core, Us[j].T, j + 1)
    children = []
    for c, U in zip(tree.children, Us):
        if c.is_leaf:
            children.append(TTN(c, U))
        else:
            Xc = ungroup(U.T, c, shape.leaf_dims(c))
            children.append(_truncate(Xc, c, shape, sweeps, cache))
    return TTN(tree, core, tuple(children))


def truncate(T, shape: RankedTree, als_sweeps=0) -> TTN:
    """Orthonormal network of tree rank ``shape`` approximating the dense tensor ``T``.

    Root-to-leaves recursive HOSVD; at every level ``als_sweeps`` alternating
    (HOOI) refinements of the child bases follow.  The result is the best of
    the approximations obtained with ``0, ..., als_sweeps`` sweeps, so the
    error never increases with ``als_sweeps``.
    """
    T = np.asarray(T, dtype=float)
    if T.shape != shape.leaf_dims():
        raise ValueError(f"tensor of shape {T.shape} does not match leaf dims {shape.leaf_dims()}")
    _check_budget(T.size)
    best, best_err = None, np.inf
    cache = {}
    for s in range(als_sweeps + 1):
        X = orthonormalize(_truncate(T[None], shape.tree, shape, s, cache))
        err = norm(T - contract(X))
        if err <= best_err:
            best, best_err = X, err
    return best
