"""Vector fields ``F(t, Y)`` and their restriction to subtrees.

User-facing fields act on order-``d`` tensors (dense path) or return a list
of root-rank-1 :class:`~ttnflow.ttn.TTN` terms whose sum is the field value
(factorized path).  Inside the integrator every field acts on the space
``V_tau`` of the current subtree; dense values there carry the rank mode as
axis 0 (see :mod:`ttnflow.ttn`).
"""

from __future__ import annotations

import numpy as np

from .tensor import matricize, mode_multiply, tensorize
from .ttn import TTN, apply_top, basis_matrix, gram, group, to_dense, ungroup


class VectorField:
    """Base class.  Subclasses implement ``__call__`` and optionally ``terms``.

    ``constant_in_Y``: the value does not depend on ``Y``; ``terms`` may then
    be called with ``Y=None``.  ``factored``: ``terms`` is available.
    """

    constant_in_Y = False
    constant_in_t = False
    factored = False

    def __call__(self, t, Y):
        raise NotImplementedError

    def terms(self, t, Y=None):
        raise NotImplementedError(f"{type(self).__name__} has no factorized form")


class DenseField(VectorField):
    """Wrap a callable ``fn(t, Y) -> array`` of the same shape as ``Y``."""

    def __init__(self, fn, constant_in_Y=False, constant_in_t=False):
        self.fn = fn
        self.constant_in_Y = constant_in_Y
        self.constant_in_t = constant_in_t

    def __call__(self, t, Y):
        return np.asarray(self.fn(t, Y), dtype=float)


class TTNField(VectorField):
    """Field given as a sum of networks, ``terms_fn(t, Y_ttn) -> list[TTN]``.

    The dense value is the sum of the contracted terms.  A state-dependent
    field needs ``dense_fn`` as well, because a dense ``Y`` has no network
    form to hand to ``terms_fn``.
    """

    factored = True

    def __init__(self, terms_fn, dense_fn=None, constant_in_Y=False, constant_in_t=False):
        if dense_fn is None and not constant_in_Y:
            raise ValueError("a state-dependent TTNField needs dense_fn")
        self.terms_fn = terms_fn
        self.dense_fn = dense_fn
        self.constant_in_Y = constant_in_Y
        self.constant_in_t = constant_in_t

    def terms(self, t, Y=None):
        return list(self.terms_fn(t, Y))

    def __call__(self, t, Y):
        if self.dense_fn is not None:
            return np.asarray(self.dense_fn(t, Y), dtype=float)
        out = np.zeros(Y.shape)
        for term in self.terms(t, None):
            out += to_dense(term)[0]
        return out


class ZeroField(VectorField):
    constant_in_Y = True
    constant_in_t = True
    factored = True

    def __call__(self, t, Y):
        return np.zeros(np.shape(Y))

    def terms(self, t, Y=None):
        return []


class ConstantField(VectorField):
    """``F(t, Y) = B`` for a fixed dense tensor or a fixed list of networks."""

    constant_in_Y = True
    constant_in_t = True

    def __init__(self, dense=None, terms=None):
        if dense is None and terms is None:
            raise ValueError("give dense or terms")
        self._dense = None if dense is None else np.asarray(dense, dtype=float)
        self._terms = None if terms is None else list(terms)
        self.factored = terms is not None

    def __call__(self, t, Y):
        if self._dense is None:
            self._dense = sum(to_dense(term)[0] for term in self._terms)
        return self._dense

    def terms(self, t, Y=None):
        if self._terms is None:
            return super().terms(t, Y)
        return self._terms


class RootField(VectorField):
    """Adapter from a user field on order-``d`` tensors to the root space ``V_root``."""

    def __init__(self, field):
        self.field = field
        self.constant_in_Y = field.constant_in_Y
        self.constant_in_t = field.constant_in_t
        self.factored = field.factored

    def __call__(self, t, Y):
        return self.field(t, Y[0])[None]

    def terms(self, t, Y=None):
        return self.field.terms(t, Y)


# ----------------------------------------------------------------------------
# restriction and prolongation


class RestrictionContext:
    """Data of ``pi_{tau,i}`` and its adjoint, bound to the initial value ``Y0_tau``.

    ``Q`` is the orthonormal factor of ``mat_i(C0_tau)^T`` and ``siblings``
    the children of ``Y0_tau`` (child ``i`` is not used).  The index ``i`` is
    0-based over children, so the corresponding core mode is ``i + 1``.
    """

    def __init__(self, tree, i, Q, core_shape, siblings):
        self.tree = tree
        self.i = i
        self.Q = Q
        self.core_shape = tuple(core_shape)
        self.siblings = tuple(siblings)
        self._V = None

    @property
    def child_tree(self):
        return self.tree.children[self.i]

    def _dense_V(self):
        """``mat_i(Ten_i(Q^T) x_{j != i} U_j)^T``, which has orthonormal columns."""
        if self._V is None:
            T = tensorize(self.Q.T, self.i + 1, self.core_shape)
            for j, s in enumerate(self.siblings):
                if j != self.i:
                    T = mode_multiply(T, basis_matrix(s), j + 1)
            self._V = matricize(T, self.i + 1).T
        return self._V

    def _grouped_dims(self, n_i):
        dims = [self.core_shape[0]]
        for j, s in enumerate(self.siblings):
            dims.append(n_i if j == self.i else s.size)
        return dims

    def _leaf_dims(self, child_dims):
        dims = []
        for j, s in enumerate(self.siblings):
            dims.extend(child_dims if j == self.i else s.leaf_dims)
        return dims

    def prolong_dense(self, Yc):
        """``pi(Y)`` for a dense ``Y`` in ``V_{tau_i}``."""
        Yc = np.asarray(Yc, dtype=float)
        if Yc.shape[0] != self.core_shape[self.i + 1]:
            raise ValueError(f"rank mode {Yc.shape[0]} does not match {self.core_shape[self.i + 1]}")
        V = self._dense_V()
        Uc = matricize(group(Yc, self.child_tree), 0).T
        P = tensorize(Uc @ V.T, self.i + 1, self._grouped_dims(Uc.shape[0]))
        return ungroup(P, self.tree, self._leaf_dims(Yc.shape[1:]))

    def restrict_dense(self, Z):
        """``pi^dagger(Z)`` for a dense ``Z`` in ``V_tau``."""
        Z = np.asarray(Z, dtype=float)
        V = self._dense_V()
        M = matricize(group(Z, self.tree), self.i + 1) @ V
        sizes = [len(s.leaf_dims) for s in self.siblings]
        start = 1 + sum(sizes[:self.i])
        child_dims = Z.shape[start:start + sizes[self.i]]
        return ungroup(M.T, self.child_tree, child_dims)

    def prolong_ttn(self, Yc: TTN) -> TTN:
        core = tensorize(self.Q.T, self.i + 1, self.core_shape)
        children = self.siblings[:self.i] + (Yc,) + self.siblings[self.i + 1:]
        return TTN(self.tree, core, children)

    def restrict_ttn(self, Z: TTN) -> TTN:
        """``pi^dagger(Z)`` from the factors of ``Z``: one small matrix times its child ``i``."""
        M = Z.value
        for j, (s, zc) in enumerate(zip(self.siblings, Z.children)):
            if j != self.i:
                M = mode_multiply(M, gram(s, zc), j + 1)
        R = self.Q.T @ matricize(M, self.i + 1).T
        return apply_top(Z.children[self.i], R)


class RestrictedField(VectorField):
    """``F_{tau_i} = pi^dagger o F_tau o pi`` for one context."""

    def __init__(self, parent, ctx: RestrictionContext):
        self.parent = parent
        self.ctx = ctx
        self.constant_in_Y = parent.constant_in_Y
        self.constant_in_t = parent.constant_in_t
        self.factored = parent.factored
        self._cache = {}

    def __call__(self, t, Y):
        return self.ctx.restrict_dense(self.parent(t, self.ctx.prolong_dense(Y)))

    def terms(self, t, Y=None):
        if self.constant_in_Y:
            hit = self._cache.get(t)
            if hit is None:
                hit = [self.ctx.restrict_ttn(z) for z in self.parent.terms(t, None)]
                self._cache[t] = hit
            return hit
        return [self.ctx.restrict_ttn(z) for z in self.parent.terms(t, self.ctx.prolong_ttn(Y))]


def restrict_field(field, ctx):
    return RestrictedField(field, ctx)
