"""Trusted dense references: full-tensor RK4, the matrix projector-splitting step, error records."""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

from .solvers import SubstepSolver, solve_substep
from .tensor import norm, qr_orthonormal
from .ttn import DESK_BUDGET, TTN, BudgetExceededError, contract, difference_norm, ttn_norm

EPS = np.finfo(float).eps


class ReferenceGateError(RuntimeError):
    """Halving the reference step moved the result by more than the allowed amount."""


def rk4(F, A0, t0, t_end, h_ref):
    """Classical RK4 on the full tensor with steps of at most ``h_ref``."""
    A = np.asarray(A0, dtype=float)
    if t_end == t0:
        return A
    n = max(1, ceil((t_end - t0) / h_ref - 1e-9))
    return solve_substep(F, A, t0, t_end, SubstepSolver("rk4", n))


def dense_integrate(A0, F, t0, t_end, h_ref, gate_tol=1e-10, gate=True):
    """Dense RK4 endpoint, verified against a run with half the step size.

    Returns the finer of the two results.  Raises :class:`ReferenceGateError`
    if the two differ by more than ``gate_tol`` relative to the endpoint norm.
    """
    A0 = np.asarray(A0, dtype=float)
    if A0.size > DESK_BUDGET:
        raise BudgetExceededError(f"dense reference with {A0.size} entries exceeds the budget")
    fine = rk4(F, A0, t0, t_end, h_ref / 2)
    if gate:
        coarse = rk4(F, A0, t0, t_end, h_ref)
        change = norm(fine - coarse) / max(norm(fine), EPS)
        if change > gate_tol:
            raise ReferenceGateError(
                f"reference not converged: halving h_ref = {h_ref} moved the endpoint by "
                f"{change:.3e} (relative), above {gate_tol:.1e}")
    return fine


def matrix_ksl_step(U, S, V, F, t0, t1, solver: SubstepSolver):
    """One step of the matrix projector-splitting integrator for ``Y = U S V^T``.

    K-step, backward S-step, L-step.  ``F(t, Y)`` acts on ``n x m`` matrices.
    Returns ``(U1, S1, V1)``.
    """
    K1 = solve_substep(lambda t, K: F(t, K @ V.T) @ V, U @ S, t0, t1, solver)
    U1, S_hat = qr_orthonormal(K1)
    S_tilde = solve_substep(lambda t, S: -(U1.T @ F(t, U1 @ S @ V.T) @ V),
                            S_hat, t0, t1, solver)
    L1 = solve_substep(lambda t, L: F(t, U1 @ L.T).T @ U1, V @ S_tilde.T, t0, t1, solver)
    V1, R = qr_orthonormal(L1)
    return U1, R.T, V1


@dataclass(frozen=True)
class ErrorRecord:
    t: float
    abs_error: float
    rel_error: float
    h: float
    label: str


def _value(item):
    if hasattr(item, "Y") and hasattr(item, "t"):
        return item.t, item.Y
    t, value = item
    return t, value


def distance(a, b):
    """``(||a - b||, ||b||)`` for dense tensors or networks in any combination."""
    if isinstance(a, TTN) and isinstance(b, TTN):
        return difference_norm(a, b), ttn_norm(b)
    a = contract(a) if isinstance(a, TTN) else np.asarray(a)
    b = contract(b) if isinstance(b, TTN) else np.asarray(b)
    return norm(a - b), norm(b)


def error_report(trajectory, reference_fn, h=float("nan"), label=""):
    """One :class:`ErrorRecord` per trajectory entry, ordered by time.

    Entries are step states or ``(t, value)`` pairs; ``reference_fn(t)``
    returns a dense tensor or a network.
    """
    records = []
    for item in trajectory:
        t, value = _value(item)
        abs_err, ref_norm = distance(value, reference_fn(t))
        records.append(ErrorRecord(float(t), abs_err, abs_err / max(ref_norm, EPS), h, label))
    records.sort(key=lambda r: r.t)
    return records
