"""Inner ODE solvers for the substeps of a splitting step."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)

METHODS = ("exact-increment", "rk4")


class SolverMismatchError(ValueError):
    """The requested solver is not valid for the field."""


@dataclass(frozen=True)
class SubstepSolver:
    """How each substep ODE is solved.

    ``exact-increment`` returns ``y0 + int_{t0}^{t1} f(t) dt`` with 4-point
    Gauss-Legendre quadrature and is only allowed when the right-hand side
    does not depend on the state.  ``rk4`` takes ``substeps`` uniform
    classical Runge-Kutta steps.
    """

    method: str = "rk4"
    substeps: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown solver method {self.method!r}; choose from {METHODS}")
        if int(self.substeps) < 1:
            raise ValueError("substeps must be >= 1")

    @classmethod
    def for_field(cls, field, substeps=1):
        """Default choice: exact increments for state-independent fields, RK4 otherwise."""
        if getattr(field, "constant_in_Y", False):
            return cls("exact-increment", substeps)
        return cls("rk4", substeps)

    def check(self, field):
        if self.method == "exact-increment" and not getattr(field, "constant_in_Y", False):
            raise SolverMismatchError(
                "exact-increment requires a field flagged constant_in_Y")


def quadrature_nodes(t0, t1):
    """Gauss-Legendre nodes and weights on ``[t0, t1]`` (weights sum to ``t1 - t0``)."""
    h = t1 - t0
    return t0 + 0.5 * h * (_GL_NODES + 1.0), 0.5 * h * _GL_WEIGHTS


def solve_substep(rhs, y0, t0, t1, solver: SubstepSolver):
    """Integrate ``y' = rhs(t, y)`` from ``t0`` to ``t1`` starting at ``y0``."""
    y0 = np.asarray(y0, dtype=float)
    if t1 == t0:
        return y0
    if solver.method == "exact-increment":
        ts, ws = quadrature_nodes(t0, t1)
        incr = sum(w * rhs(t, y0) for t, w in zip(ts, ws))
        return y0 + incr
    n = int(solver.substeps)
    h = (t1 - t0) / n
    y = y0
    t = t0
    for k in range(n):
        k1 = rhs(t, y)
        k2 = rhs(t + h / 2, y + (h / 2) * k1)
        k3 = rhs(t + h / 2, y + (h / 2) * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + (k + 1) * h
    return y
