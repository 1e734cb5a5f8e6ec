"""Shared generators for tests."""

import numpy as np
from hypothesis import strategies as st

from ttnflow.fields import RestrictionContext
from ttnflow.tensor import matricize, qr_orthonormal
from ttnflow.tree import RankedTree, Tree

ACCEPTANCE_LINES = []

TREES = [
    "[1,2]",
    "[1,2,3]",
    "[[1,2],3]",
    "[[1,2],[3,4]]",
    "[[1,3,5],[4,2],6]",
    "[[1,[2,3]],4]",
    "[[[1,2],3],[4,5]]",
    "[1,[2,[3,4]]]",
]


@st.composite
def ranked_trees(draw, trees=TREES, max_dim=4, max_rank=3, max_height=3):
    """Uniform-rank trees (always feasible when n >= r)."""
    choices = [t for t in trees if RankedTree.uniform(t, 1, 1).tree.height <= max_height]
    spec = draw(st.sampled_from(choices))
    r = draw(st.integers(1, max_rank))
    n = draw(st.integers(r, max(r, max_dim)))
    return RankedTree.uniform(spec, n, r)


def dense_basis(X):
    """Dense ``U_tau`` (``n_tau x r_tau``) of a network node, by contraction."""
    from ttnflow.ttn import to_dense
    return matricize(to_dense(X), 0).T


def subtree_nodes(X):
    return [node for _, node in X.nodes()]


def seeds():
    return st.integers(0, 2 ** 32 - 1)


def contexts(X, rng, perturb_top=True):
    """All (tau, i) contexts of a network, with a generic (non-orthonormal) top core."""
    out = []
    for path, node in X.nodes():
        if node.is_leaf:
            continue
        if perturb_top:
            node = node.with_value(node.value + 0.2 * rng.standard_normal(node.value.shape))
        for i in range(len(node.children)):
            Q, R = qr_orthonormal(matricize(node.value, i + 1).T)
            out.append((node, i, RestrictionContext(node.tree, i, Q, node.value.shape,
                                                    node.children), R.T))
    return out


def random_child_dense(ctx, rng):
    child = ctx.siblings[ctx.i]
    return rng.standard_normal((ctx.core_shape[ctx.i + 1],) + child.leaf_dims)


__all__ = ["ACCEPTANCE_LINES", "TREES", "ranked_trees", "dense_basis", "subtree_nodes", "seeds", "contexts",
           "random_child_dense", "np", "Tree"]
