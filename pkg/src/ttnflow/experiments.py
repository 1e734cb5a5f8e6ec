"""Numerical experiments: exactness, retraction, convergence and orthonormality monitoring.

Each ``run_*`` function takes an :class:`ExperimentConfig` and returns an
:class:`ExperimentResult` holding the CSV header, the rows and a summary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .fields import ConstantField, TTNField, VectorField, ZeroField
from .integrator import IntegratorOptions, integrate, ttn_step
from .reference import dense_integrate, error_report
from .solvers import SubstepSolver
from .tensor import matricize, mode_multiply, norm, qr_orthonormal
from .tree import PRESETS, RankedTree, parse_tree_spec
from .ttn import (TTN, check_orthonormal, contract, contract_tangent,
                  random_orthonormal_ttn, tangent_sample, to_dense, truncate, ttn_norm)

EXPERIMENTS = ("exactness", "retract", "converge", "orthonormality")

HEADERS = {
    "exactness": ("experiment", "h", "t", "abs_error", "rel_error"),
    "converge": ("experiment", "h", "t", "abs_error", "rel_error"),
    "retract": ("experiment", "b_norm", "err_integrator", "err_truncation", "err_difference"),
    "orthonormality": ("experiment", "h", "t", "node", "deviation"),
}


class ConfigError(ValueError):
    """Invalid experiment configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    tree: str
    dims: object = 4
    ranks: object = 2
    seed: int = 0
    step_sizes: tuple = (0.1, 0.01, 0.001)
    t_end: float = 1.0
    b_norms: tuple = (1e-1, 5e-2, 2.5e-2, 1.25e-2)
    output_path: str | None = None
    path: str = "auto"
    als_sweeps: int = 2
    sigma_mins: tuple = (1e-2, 1e-4, 1e-6)
    rho: float = 1.0
    gamma: float = 0.5
    h_ref: float = 0.0025
    field: str = "rotating"
    fault: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError("experiment", f"unknown experiment {self.experiment!r}; "
                                            f"choose from {', '.join(EXPERIMENTS)}")
        for key in ("step_sizes", "b_norms", "sigma_mins"):
            values = tuple(float(v) for v in getattr(self, key))
            if not values:
                raise ConfigError(key, "must not be empty")
            if any(not v > 0 for v in values):
                raise ConfigError(key, f"all entries must be positive, got {list(values)}")
            object.__setattr__(self, key, values)
        if not self.t_end > 0:
            raise ConfigError("t_end", "must be positive")
        if not self.h_ref > 0:
            raise ConfigError("h_ref", "must be positive")
        if self.field not in ("rotating", "zero"):
            raise ConfigError("field", f"unknown field {self.field!r}")
        if self.fault not in (None, "skip-k-qr"):
            raise ConfigError("fault", f"unknown fault {self.fault!r}")
        try:
            self.shape()
        except ValueError as exc:
            raise ConfigError("tree", str(exc)) from None

    def shape(self) -> RankedTree:
        return parse_tree_spec(self.tree, self.dims, self.ranks)


def expand_preset(name):
    """``(tree, dims, ranks)`` of a named preset."""
    if name not in PRESETS:
        raise ConfigError("tree", f"unknown preset {name!r}")
    return PRESETS[name]


@dataclass
class ExperimentResult:
    header: tuple
    rows: list
    summary: dict = field(default_factory=dict)


# ----------------------------------------------------------------------------
# rotating family


def skew_generator(rng, n):
    """Skew-symmetric ``n x n`` matrix of unit Frobenius norm (zero when ``n = 1``)."""
    G = rng.standard_normal((n, n))
    W = (G - G.T) / 2
    s = np.linalg.norm(W)
    return W / s if s > 0 else W


class RotatingFamily:
    """``A(t)`` with ``U_l(t) = expm(t W_l) U_l^0`` and ``C_tau(t) = C_tau^0 x_0 expm(t W_tau)``.

    ``generators`` maps node paths (tuples of child indices, root ``()``) to
    skew matrices; missing paths do not rotate.  Leaf generators are
    ``n x n``, internal ones ``r x r``.  The family stays orthonormal.
    """

    def __init__(self, A0: TTN, generators):
        self.A0 = A0
        self.generators = {p: np.asarray(W, dtype=float) for p, W in generators.items()
                           if np.any(W)}
        self._cache = {}

    @classmethod
    def random(cls, A0: TTN, seed=0, nodes=None):
        """One unit-norm generator per node (``nodes`` restricts to some paths)."""
        rng = np.random.default_rng(seed)
        gens = {}
        for path, node in A0.nodes():
            size = node.value.shape[0]
            W = skew_generator(rng, size)
            if nodes is None or path in nodes:
                gens[path] = W
        return cls(A0, gens)

    def _rotations(self, t):
        hit = self._cache.get(t)
        if hit is None:
            if len(self._cache) > 64:
                self._cache.clear()
            rots = {p: expm(t * W) for p, W in self.generators.items()}
            A = self.A0
            for p, E in rots.items():
                node = _node_at(self.A0, p)
                A = A.replace(p, _rotate(node, E))
            terms = []
            for p, W in self.generators.items():
                terms.append(A.replace(p, _rotate(_node_at(A, p), W)))
            hit = (A, terms)
            self._cache[t] = hit
        return hit

    def value(self, t) -> TTN:
        return self._rotations(t)[0]

    def derivative_terms(self, t):
        """Networks whose sum is ``A'(t)``: one per rotating node."""
        return self._rotations(t)[1]

    def field(self) -> TTNField:
        """``F(t, Y) = A'(t)``, independent of ``Y``."""
        return TTNField(lambda t, Y: self.derivative_terms(t), constant_in_Y=True)


def _node_at(X, path):
    for k in path:
        X = X.children[k]
    return X


def _rotate(node, E):
    if node.is_leaf:
        return E @ node.value
    return mode_multiply(node.value, E, 0)


# ----------------------------------------------------------------------------
# manufactured field with a known solution


class ManufacturedField(VectorField):
    """``F(t, Y) = A'(t) + rho * (N(Y) - N(A(t)))`` whose exact solution is the family ``A``.

    ``N(Y) = sum_l Y x_l S_l + gamma * sin(||Y||) * Y`` is Lipschitz; the
    first part pushes ``Y`` off the manifold, the second is nonlinear.
    Both a dense and a factorized form are provided.
    """

    factored = True

    def __init__(self, family: RotatingFamily, mats, rho=1.0, gamma=0.5):
        self.family = family
        self.mats = [np.asarray(S, dtype=float) for S in mats]
        self.rho = float(rho)
        self.gamma = float(gamma)
        self._dense_cache = {}
        self._leaf_paths = [p for p, n in family.A0.nodes() if n.is_leaf]

    def _N_terms(self, Y, coeff):
        out = []
        for path, S in zip(self._leaf_paths, self.mats):
            U = _node_at(Y, path).value
            out.append(Y.replace(path, coeff * (S @ U)))
        if self.gamma:
            out.append(Y.with_value(coeff * self.gamma * np.sin(ttn_norm(Y)) * Y.value))
        return out

    def terms(self, t, Y=None):
        A = self.family.value(t)
        out = list(self.family.derivative_terms(t))
        if self.rho:
            out += self._N_terms(Y, self.rho)
            out += self._N_terms(A, -self.rho)
        return out

    def _N_dense(self, Y):
        out = np.zeros(Y.shape)
        for k, S in enumerate(self.mats):
            out += mode_multiply(Y, S, k)
        if self.gamma:
            out += self.gamma * np.sin(norm(Y)) * Y
        return out

    def __call__(self, t, Y):
        hit = self._dense_cache.get(t)
        if hit is None:
            if len(self._dense_cache) > 64:
                self._dense_cache.clear()
            dA = sum(to_dense(z)[0] for z in self.family.derivative_terms(t))
            A = contract(self.family.value(t))
            hit = (dA, self._N_dense(A))
            self._dense_cache[t] = hit
        dA, NA = hit
        if not self.rho:
            return dA
        return dA + self.rho * (self._N_dense(Y) - NA)


def random_symmetric(rng, n):
    G = rng.standard_normal((n, n))
    S = (G + G.T) / 2
    return S / np.linalg.norm(S, 2)


# ----------------------------------------------------------------------------
# conditioned initial data


def _random_orthogonal(rng, n):
    Q, _ = qr_orthonormal(rng.standard_normal((n, n)))
    return Q


def conditioned_ttn(shape: RankedTree, sigma_min, seed=0) -> TTN:
    """Orthonormal network whose cores have unfolding singular values spread down to ``sigma_min``.

    A two-child root gets a core whose only nontrivial unfolding is an
    ``r_1 x r_2`` matrix with singular values geometric from 1 to
    ``sigma_min`` (then normalized).  A non-root core with ``r = r_1 = r_2``
    uses ``C[a, b, c] = w_b [a = b + c mod r]``, whose mode-1 unfolding has
    singular values proportional to ``w`` while ``mat_0(C)^T`` stays
    orthonormal.  Random orthogonal rotations of all modes make the cores
    generic.  Other node shapes fall back to random orthonormal cores.
    """
    base = random_orthonormal_ttn(shape, seed)
    rng = np.random.default_rng([seed, 7])

    def weights(r):
        if r == 1:
            return np.ones(1)
        return np.geomspace(1.0, sigma_min, r)

    def build(X, top):
        if X.is_leaf:
            return X
        children = tuple(build(c, False) for c in X.children)
        C = X.value
        ranks = C.shape
        if len(ranks) == 3 and top:
            r1, r2 = ranks[1], ranks[2]
            k = min(r1, r2)
            M = np.zeros((r1, r2))
            M[:k, :k] = np.diag(weights(k))
            M = _random_orthogonal(rng, r1) @ M @ _random_orthogonal(rng, r2).T
            C = M[None] / np.linalg.norm(M)
        elif len(ranks) == 3 and ranks[0] == ranks[1] == ranks[2]:
            r = ranks[0]
            w = weights(r)
            w = w / np.linalg.norm(w)
            C = np.zeros((r, r, r))
            for b in range(r):
                for c in range(r):
                    C[(b + c) % r, b, c] = w[b]
            for mode in range(3):
                C = mode_multiply(C, _random_orthogonal(rng, r), mode)
        return TTN(X.tree, C, children)

    return build(base, True)


def core_sigma_min(X: TTN):
    """Smallest singular value over all child unfoldings of all connection tensors."""
    out = np.inf
    for _, node in X.nodes():
        if node.is_leaf:
            continue
        for j in range(1, node.value.ndim):
            s = np.linalg.svd(matricize(node.value, j), compute_uv=False)
            out = min(out, s[: node.value.shape[j]].min())
    return out


# ----------------------------------------------------------------------------
# runners


def _seeds(seed):
    ss = np.random.SeedSequence(int(seed)).spawn(3)
    return [int(s.generate_state(1)[0]) for s in ss]


def exactness_setup(cfg: ExperimentConfig, nodes=None, zero=False):
    shape = cfg.shape()
    s_init, s_rot, _ = _seeds(cfg.seed)
    A0 = random_orthonormal_ttn(shape, s_init)
    if zero:
        family = RotatingFamily(A0, {})
    else:
        family = RotatingFamily.random(A0, s_rot, nodes)
    return shape, family


def run_exactness(cfg: ExperimentConfig, nodes=None, zero=False, monitor=None) -> ExperimentResult:
    """Integrate ``Y' = A'(t)`` for the rotating family and record ``||Y_n - A(t_n)||``."""
    shape, family = exactness_setup(cfg, nodes, zero)
    F = family.field()
    solver = SubstepSolver.for_field(F)
    options = IntegratorOptions(path=cfg.path)
    rows = []
    worst = 0.0
    worst_dev = 0.0
    for h in cfg.step_sizes:
        traj = integrate(family.value(0.0), F, cfg.t_end, h, solver, options)
        for rec in error_report(traj[1:], family.value, h, "exactness"):
            rows.append(("exactness", h, rec.t, rec.abs_error, rec.rel_error))
            worst = max(worst, rec.abs_error)
        for st in traj[1:]:
            worst_dev = max(worst_dev, st.report.max_deviation)
        if monitor is not None:
            monitor(h, traj)
    return ExperimentResult(HEADERS["exactness"], rows,
                            {"max_abs_error": worst, "max_deviation": worst_dev,
                             "storage": shape.storage()})


def run_retract(cfg: ExperimentConfig) -> ExperimentResult:
    """Compare one integrator step with ``F = B`` against truncation of ``A + B``."""
    shape = cfg.shape()
    s_init, s_tan, _ = _seeds(cfg.seed)
    A = random_orthonormal_ttn(shape, s_init)
    dense_A = contract(A)
    rows = []
    worst_dev = 0.0
    for beta in cfg.b_norms:
        B = tangent_sample(A, s_tan, beta)
        target = dense_A + contract_tangent(B)
        F = ConstantField(terms=B.terms())
        state = ttn_step(A, F, 1.0, SubstepSolver("exact-increment"),
                         IntegratorOptions(path="factored"))
        Y1 = state.Y
        worst_dev = max(worst_dev, state.report.max_deviation)
        X = truncate(target, shape, cfg.als_sweeps)
        dense_Y = contract(Y1)
        err_int = norm(dense_Y - target)
        dense_Y -= contract(X)
        err_diff = norm(dense_Y)
        del dense_Y
        err_tr = norm(contract(X) - target)
        rows.append(("retract", beta, err_int, err_tr, err_diff))
    ratios_int = [rows[k][2] / rows[k + 1][2] for k in range(len(rows) - 1)]
    ratios_tr = [rows[k][3] / rows[k + 1][3] for k in range(len(rows) - 1)]
    return ExperimentResult(HEADERS["retract"], rows,
                            {"ratios_integrator": ratios_int, "ratios_truncation": ratios_tr,
                             "max_deviation": worst_dev})


def converge_setup(cfg: ExperimentConfig, sigma_min):
    shape = cfg.shape()
    s_init, s_rot, s_mat = _seeds(cfg.seed)
    A0 = conditioned_ttn(shape, sigma_min, s_init)
    family = RotatingFamily.random(A0, s_rot)
    rng = np.random.default_rng(s_mat)
    mats = [random_symmetric(rng, shape.dim(l)) for l in shape.tree.leaves]
    return shape, family, ManufacturedField(family, mats, cfg.rho, cfg.gamma)


def fit_slope(hs, errors):
    """Least-squares slope of ``log(error)`` against ``log(h)``."""
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])


def run_converge(cfg: ExperimentConfig) -> ExperimentResult:
    """Errors at ``t_end`` against the dense RK4 reference, for each ``h`` and ``sigma_min``."""
    rows = []
    summary = {"slopes": {}, "errors": {}, "reference_vs_exact": {}, "max_deviation": 0.0}
    for sigma_min in cfg.sigma_mins:
        shape, family, F = converge_setup(cfg, sigma_min)
        A0 = family.value(0.0)
        ref = dense_integrate(contract(A0), F, 0.0, cfg.t_end, cfg.h_ref)
        summary["reference_vs_exact"][sigma_min] = (
            norm(ref - contract(family.value(cfg.t_end))) / norm(ref))
        tag = f"converge:sigma_min={sigma_min:g}"
        errs = []
        for h in cfg.step_sizes:
            traj = integrate(A0, F, cfg.t_end, h, SubstepSolver("rk4", 1),
                             IntegratorOptions(path=cfg.path))
            rec = error_report(traj[-1:], lambda t: ref, h, tag)[0]
            rows.append((tag, h, rec.t, rec.abs_error, rec.rel_error))
            errs.append(rec.abs_error)
            summary["max_deviation"] = max(summary["max_deviation"],
                                           max(s.report.max_deviation for s in traj[1:]))
        summary["errors"][sigma_min] = errs
        summary["slopes"][sigma_min] = fit_slope(cfg.step_sizes, errs)
    return ExperimentResult(HEADERS["converge"], rows, summary)


def run_orthonormality(cfg: ExperimentConfig) -> ExperimentResult:
    """Per-step, per-node deviations ``||Q^T Q - I||_F`` along an exactness-type run."""
    shape, family = exactness_setup(cfg, zero=cfg.field == "zero")
    F = ZeroField() if cfg.field == "zero" else family.field()
    options = IntegratorOptions(path=cfg.path, skip_k_qr=cfg.fault == "skip-k-qr",
                                enforce_orthonormality=cfg.fault is None)
    solver = SubstepSolver.for_field(F)
    rows = []
    worst = 0.0
    for h in cfg.step_sizes:
        traj = integrate(family.value(0.0), F, cfg.t_end, h, solver, options)
        for st in traj[1:]:
            for node, dev in st.report.deviations.items():
                rows.append(("orthonormality", h, st.t, node, dev))
                worst = max(worst, dev)
    initial = check_orthonormal(family.value(0.0)).deviations
    return ExperimentResult(HEADERS["orthonormality"], rows,
                            {"max_deviation": worst, "initial": initial})


RUNNERS = {
    "exactness": run_exactness,
    "retract": run_retract,
    "converge": run_converge,
    "orthonormality": run_orthonormality,
}


def run(cfg: ExperimentConfig) -> ExperimentResult:
    return RUNNERS[cfg.experiment](cfg)
