"""Projector-splitting integrator for (extended) Tucker tensors.

The state is ``Y = C x_0 U_0 x_1 U_1 ... x_d U_d`` with orthonormal bases.
For a plain Tucker tensor ``U_0 = [[1]]``; for the extended integrator
``U_0 = I_{r_0}`` and mode 0 is never rotated.  Fields act on the dense
tensor ``Y`` of shape ``(n_0, n_1, ..., n_d)``.

This module works with dense matricizations throughout and serves as an
independent reference for the recursive tree integrator on height-1 trees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solvers import SubstepSolver, solve_substep
from .tensor import kron_other_modes, matricize, multi_mode_multiply, qr_orthonormal, tensorize


@dataclass(frozen=True, eq=False)
class TuckerState:
    core: np.ndarray
    bases: tuple

    @classmethod
    def extended(cls, core, bases):
        """State with identity leading factor; ``bases`` covers modes ``1..d``."""
        core = np.asarray(core, dtype=float)
        return cls(core, (np.eye(core.shape[0]),) + tuple(bases))

    @property
    def shape(self):
        return tuple(U.shape[0] for U in self.bases)

    def full(self):
        return multi_mode_multiply(self.core, self.bases)


def _kron_V(bases, i, Q):
    return kron_other_modes(bases, i) @ Q


def phi_i_tucker(state: TuckerState, F, i, t0, t1, solver: SubstepSolver, trivial=False):
    """Subflow for mode ``i``: K-step, QR, backward S-step, reassembly.

    ``trivial=True`` replaces the QR of ``K1`` by the decomposition
    ``K1 = I K1``; it is meant for mode 0 of the extended integrator.
    """
    C = state.core
    U = state.bases
    dims = state.shape
    Q, R = qr_orthonormal(matricize(C, i).T)
    S0 = R.T
    V = _kron_V(U, i, Q)

    def full(Ui, S):
        return tensorize(Ui @ S @ V.T, i, dims)

    K0 = U[i] @ S0
    K1 = solve_substep(lambda t, K: matricize(F(t, tensorize(K @ V.T, i, dims)), i) @ V,
                       K0, t0, t1, solver)
    if trivial:
        U1 = np.eye(K1.shape[0])
        S_hat = K1
    else:
        U1, S_hat = qr_orthonormal(K1)

    def s_rhs(t, S):
        return -(U1.T @ matricize(F(t, full(U1, S)), i) @ V)

    S_tilde = solve_substep(s_rhs, S_hat, t0, t1, solver)
    core_shape = list(C.shape)
    core_shape[i] = U1.shape[1]
    C1 = tensorize(S_tilde @ Q.T, i, core_shape)
    bases = U[:i] + (U1,) + U[i + 1:]
    return TuckerState(C1, bases)


def psi_tucker(state: TuckerState, F, t0, t1, solver: SubstepSolver):
    """Core subflow: ``C' = F(t, C x_j U_j) x_j U_j^T`` with the bases frozen."""
    U = state.bases
    Ut = [u.T for u in U]

    def rhs(t, C):
        return multi_mode_multiply(F(t, multi_mode_multiply(C, U)), Ut)

    C1 = solve_substep(rhs, state.core, t0, t1, solver)
    return TuckerState(C1, U)


def tucker_step(state: TuckerState, F, t0, t1, solver: SubstepSolver, include_mode0=False):
    """One step ``Psi o Phi^(d) o ... o Phi^(1)``.

    With ``include_mode0`` the subflow ``Phi^(0)`` (with the trivial
    decomposition) runs first; for state-independent fields it changes
    nothing, which is what makes it redundant.
    """
    if include_mode0:
        state = phi_i_tucker(state, F, 0, t0, t1, solver, trivial=True)
    for i in range(1, state.core.ndim):
        state = phi_i_tucker(state, F, i, t0, t1, solver)
    return psi_tucker(state, F, t0, t1, solver)


def extended_tucker_step(state: TuckerState, F, t0, t1, solver: SubstepSolver):
    """Extended Tucker step; mode 0 carries the identity factor and is left alone."""
    if not np.array_equal(state.bases[0], np.eye(state.core.shape[0])):
        raise ValueError("extended Tucker state needs the identity as leading factor")
    return tucker_step(state, F, t0, t1, solver)
