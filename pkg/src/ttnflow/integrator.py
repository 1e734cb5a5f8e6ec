"""Recursive projector-splitting integrator for tree tensor networks.

One step on a subtree ``tau = (tau_1, ..., tau_m)`` applies the subflows
``Phi^(1), ..., Phi^(m)`` in child order and then the core subflow ``Psi``.
``Phi^(i)`` updates child ``i``: for a leaf it integrates the basis-times-
factor matrix ``K`` directly, for an internal child it recurses with the
field restricted to that child.

Field values are consumed in one of two ways.  On the dense path every field
evaluation returns a full array of ``V_tau``.  On the factorized path the
field returns network terms and all projections go through Gram products,
so nothing of size ``n_tau`` is ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import RestrictedField, RestrictionContext, RootField, VectorField
from .solvers import SubstepSolver, solve_substep
from .tensor import matricize, mode_multiply, qr_orthonormal, tensorize
from .ttn import (TTN, OrthonormalityReport, RankDeficiencyError, RANK_TOL, apply_top,
                  basis_matrix, check_orthonormal, gram, group, to_dense)

PATHS = ("auto", "dense", "factored")


class DegenerateCoreError(RankDeficiencyError):
    """The factor ``S0`` of a connection tensor unfolding is (numerically) singular."""

    def __init__(self, tree, i, sigma_min):
        super().__init__(
            f"degenerate initial factor at subtree {tree}, child {i + 1}: "
            f"sigma_min = {sigma_min:.3e}; the step needs full tree rank")
        self.tree = tree
        self.child = i
        self.sigma_min = sigma_min


class OrthonormalityError(ArithmeticError):
    def __init__(self, report: OrthonormalityReport, t):
        worst = max(report.failures().items(), key=lambda kv: kv[1])
        super().__init__(
            f"orthonormality lost at t = {t}: node {worst[0]} deviates by {worst[1]:.3e}")
        self.report = report


@dataclass(frozen=True)
class IntegratorOptions:
    """``path``: which field representation to use (``auto`` prefers factorized).

    ``skip_k_qr`` is a fault-injection switch for testing the orthonormality
    monitor: the QR after each K-step is replaced by ``K1 = K1 * I``.
    """

    path: str = "auto"
    skip_k_qr: bool = False
    check_tol: float = 1e-11
    enforce_orthonormality: bool = True

    def __post_init__(self):
        if self.path not in PATHS:
            raise ValueError(f"path must be one of {PATHS}, got {self.path!r}")


@dataclass(frozen=True, eq=False)
class StepState:
    Y: TTN
    t: float
    report: OrthonormalityReport | None = field(default=None, repr=False)


def _factored(F, options):
    if options.path == "dense":
        return False
    if options.path == "factored":
        if not F.factored:
            raise ValueError("factorized path requested for a field without terms")
        return True
    return F.factored


# ----------------------------------------------------------------------------
# the three ways a field value is consumed


def _leaf_rhs(F, t, K, tree, factored):
    """``mat_0(F(t, K^T))^T`` for a leaf child (``n x r``)."""
    if factored:
        Y = None if F.constant_in_Y else TTN(tree, K)
        out = np.zeros(K.shape)
        for term in F.terms(t, Y):
            out += term.value
        return out
    return F(t, K.T).T


def _projected_gram(X, U_X, F, t, Y, factored):
    """``U_X^T mat_0(F(t, Y))^T`` for an orthonormal child network ``X``."""
    r = X.rank
    if factored:
        out = np.zeros((r, r))
        for term in F.terms(t, None if F.constant_in_Y else Y):
            out += gram(X, term)
        return out
    return U_X.T @ matricize(F(t, to_dense(Y)), 0).T


def _core_rhs(Y, bases, F, t, factored):
    """``F(t, Y) x_j U_j^T`` for the frozen children of ``Y``."""
    if factored:
        out = np.zeros(Y.value.shape)
        for term in F.terms(t, None if F.constant_in_Y else Y):
            M = term.value
            for j, (c, z) in enumerate(zip(Y.children, term.children)):
                M = mode_multiply(M, gram(c, z), j + 1)
            out += M
        return out
    G = group(F(t, to_dense(Y)), Y.tree)
    for j, U in enumerate(bases):
        G = mode_multiply(G, U.T, j + 1)
    return G


# ----------------------------------------------------------------------------
# subflows


def _check_factor(R, tree, i):
    d = np.abs(np.diag(R))
    scale = max(np.abs(R).max(), np.finfo(float).tiny)
    if d.min() <= RANK_TOL * scale:
        sigma_min = float(np.linalg.svd(R, compute_uv=False).min())
        raise DegenerateCoreError(tree, i, sigma_min)


def phi_tau_i(Y: TTN, F: VectorField, i, t0, t1, solver: SubstepSolver,
              options=IntegratorOptions(), depth=0, max_depth=None):
    """Subflow ``Phi_tau^(i)`` on a subtree (``i`` is the 0-based child index).

    ``F`` acts on ``V_tau``; at the root wrap a user field in
    :class:`~ttnflow.fields.RootField`.
    """
    factored = _factored(F, options)
    C = Y.value
    Q, R = qr_orthonormal(matricize(C, i + 1).T)
    _check_factor(R, Y.tree, i)
    S0 = R.T
    ctx = RestrictionContext(Y.tree, i, Q, C.shape, Y.children)
    Fi = RestrictedField(F, ctx)
    child = Y.children[i]

    if child.is_leaf:
        K0 = child.value @ S0
        K1 = solve_substep(lambda t, K: _leaf_rhs(Fi, t, K, child.tree, factored),
                           K0, t0, t1, solver)
        if options.skip_k_qr:
            X1, S_hat = child.with_value(K1), np.eye(K1.shape[1])
        else:
            U1, S_hat = qr_orthonormal(K1)
            X1 = child.with_value(U1)
    else:
        Y1c = _step(apply_top(child, S0.T), Fi, t0, t1, solver, options, depth + 1, max_depth)
        C1c = Y1c.value
        if options.skip_k_qr:
            X1, S_hat = Y1c, np.eye(C1c.shape[0])
        else:
            Qc, S_hat = qr_orthonormal(matricize(C1c, 0).T)
            X1 = Y1c.with_value(tensorize(Qc.T, 0, C1c.shape))

    U_X1 = None if factored else basis_matrix(X1)

    def s_rhs(t, S):
        Yc = apply_top(X1, S.T)
        return -_projected_gram(X1, U_X1, Fi, t, Yc, factored)

    S_tilde = solve_substep(s_rhs, S_hat, t0, t1, solver)
    C1 = tensorize(S_tilde @ Q.T, i + 1, C.shape)
    return TTN(Y.tree, C1, Y.children[:i] + (X1,) + Y.children[i + 1:])


def psi_tau(Y: TTN, F: VectorField, t0, t1, solver: SubstepSolver, options=IntegratorOptions()):
    """Core subflow ``Psi_tau`` with all children frozen."""
    factored = _factored(F, options)
    bases = None if factored else [basis_matrix(c) for c in Y.children]
    C1 = solve_substep(lambda t, C: _core_rhs(Y.with_value(C), bases, F, t, factored),
                       Y.value, t0, t1, solver)
    return Y.with_value(C1)


def _step(Y, F, t0, t1, solver, options, depth, max_depth):
    if max_depth is not None and depth > max_depth:
        raise RuntimeError(f"recursion depth {depth} exceeds tree height {max_depth}")
    for i in range(len(Y.children)):
        Y = phi_tau_i(Y, F, i, t0, t1, solver, options, depth, max_depth)
    return psi_tau(Y, F, t0, t1, solver, options)


def subtree_step(Y: TTN, F: VectorField, t0, t1, solver: SubstepSolver,
                 options=IntegratorOptions()):
    """``Psi_tau o Phi_tau^(m) o ... o Phi_tau^(1)`` for a field on ``V_tau``."""
    if Y.is_leaf:
        raise ValueError("a step needs an internal node at the top")
    solver.check(F)
    return _step(Y, F, t0, t1, solver, options, 0, Y.tree.height)


# ----------------------------------------------------------------------------
# public driver


def _as_state(Y, t0):
    return Y if isinstance(Y, StepState) else StepState(Y, float(t0))


def ttn_step(state, F: VectorField, t1, solver: SubstepSolver | None = None,
             options=IntegratorOptions(), t0=0.0) -> StepState:
    """One step from ``state.t`` to ``t1`` for a user field on order-``d`` tensors."""
    state = _as_state(state, t0)
    if state.Y.rank != 1:
        raise ValueError("the root of a full network has rank 1")
    solver = SubstepSolver.for_field(F) if solver is None else solver
    Y1 = subtree_step(state.Y, RootField(F), state.t, t1, solver, options)
    report = check_orthonormal(Y1, options.check_tol)
    if options.enforce_orthonormality and not report.ok:
        raise OrthonormalityError(report, t1)
    return StepState(Y1, float(t1), report)


def time_grid(t0, t_end, h, max_steps=10**6):
    """Uniform grid ``t0, t0 + h, ...`` closed by a final partial step if needed."""
    if not h > 0:
        raise ValueError("step size must be positive")
    span = t_end - t0
    if span < 0:
        raise ValueError("t_end must not precede t0")
    n_full = int(np.floor(span / h * (1 + 1e-12) + 1e-12))
    if n_full > max_steps:
        raise ValueError(f"{n_full} steps exceed the budget of {max_steps}")
    ts = [t0 + k * h for k in range(n_full + 1)]
    if t_end - ts[-1] > 1e-12 * max(1.0, abs(t_end)):
        ts.append(t_end)
    else:
        ts[-1] = t_end if n_full > 0 else ts[-1]
    return ts


def integrate(Y0, F: VectorField, t_end, h, solver: SubstepSolver | None = None,
              options=IntegratorOptions(), t0=0.0, max_steps=10**6, callback=None):
    """Trajectory ``[state_0, state_1, ...]`` of uniform steps of size ``h``.

    ``callback(state)`` is called after every completed step.
    """
    state = _as_state(Y0, t0)
    ts = time_grid(state.t, t_end, h, max_steps)
    traj = [state]
    for t1 in ts[1:]:
        state = ttn_step(state, F, t1, solver, options)
        traj.append(state)
        if callback is not None:
            callback(state)
    return traj
