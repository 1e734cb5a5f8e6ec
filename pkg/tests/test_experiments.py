import numpy as np
import pytest

from ttnflow.experiments import (ConfigError, ExperimentConfig, conditioned_ttn,
                                 core_sigma_min, run_exactness, run_orthonormality,
                                 run_retract, skew_generator)
from ttnflow.tensor import matricize
from ttnflow.tree import RankedTree
from ttnflow.ttn import check_orthonormal


def small(experiment, **kw):
    base = dict(tree="[[1,2],[3,4]]", dims=3, ranks=2, step_sizes=(0.1,), t_end=0.3)
    base.update(kw)
    return ExperimentConfig(experiment, **base)


def test_skew_generator():
    W = skew_generator(np.random.default_rng(0), 5)
    assert np.allclose(W, -W.T) and np.linalg.norm(W) == pytest.approx(1.0)
    assert not np.any(skew_generator(np.random.default_rng(0), 1))


def test_exactness_small():
    res = run_exactness(small("exactness"))
    assert res.header == ("experiment", "h", "t", "abs_error", "rel_error")
    assert len(res.rows) == 3
    assert res.summary["max_abs_error"] <= 1e-12


def test_stationary_family_exact_zero():
    res = run_exactness(small("exactness"), zero=True)
    assert res.summary["max_abs_error"] <= 1e-13


def test_root_only_rotation():
    # with a rank-1 root the root core cannot rotate; rotate the first internal node only
    res = run_exactness(small("exactness"), nodes={(0,)})
    assert res.summary["max_abs_error"] <= 1e-10


def test_retract_zero_beta():
    from ttnflow.fields import ConstantField
    from ttnflow.integrator import ttn_step
    from ttnflow.ttn import (contract, contract_tangent, random_orthonormal_ttn,
                             tangent_sample, truncate)
    shape = RankedTree.uniform("[[1,2],[3,4]]", 3, 2)
    A = random_orthonormal_ttn(shape, 0)
    B = tangent_sample(A, 1, 0.0)
    target = contract(A) + contract_tangent(B)
    Y1 = contract(ttn_step(A, ConstantField(terms=B.terms()), 1.0).Y)
    X = contract(truncate(target, shape, 2))
    assert np.linalg.norm(Y1 - target) <= 1e-12
    assert np.linalg.norm(X - target) <= 1e-12
    assert np.linalg.norm(Y1 - X) <= 1e-12


def test_retract_small_ladder():
    res = run_retract(small("retract", b_norms=(0.1, 0.05)))
    assert res.header[1:] == ("b_norm", "err_integrator", "err_truncation", "err_difference")
    assert 2.5 <= res.summary["ratios_integrator"][0] <= 6


def test_orthonormality_runs():
    res = run_orthonormality(small("orthonormality"))
    assert res.summary["max_deviation"] <= 1e-11
    assert {r[3] for r in res.rows} == {"[1,2]", "[3,4]", "1", "2", "3", "4"}
    bad = run_orthonormality(small("orthonormality", fault="skip-k-qr"))
    assert bad.summary["max_deviation"] > 1e-6
    zero = run_orthonormality(small("orthonormality", field="zero"))
    initial = zero.summary["initial"]
    for r in zero.rows:
        assert r[4] == pytest.approx(initial[r[3]], abs=1e-15)


def test_conditioned_ttn():
    shape = RankedTree.uniform("[[1,2],[3,4]]", 8, 3)
    for s in (1e-2, 1e-6):
        X = conditioned_ttn(shape, s, 0)
        assert check_orthonormal(X, 1e-13).ok
        assert core_sigma_min(X) == pytest.approx(
            s * min(1.0, core_sigma_min(X) / s), rel=1e-6)
        root = np.linalg.svd(matricize(X.value, 1), compute_uv=False)
        assert root[-1] / root[0] == pytest.approx(s, rel=1e-6)
        inner = np.linalg.svd(matricize(X.children[0].value, 1), compute_uv=False)
        assert inner[-1] / inner[0] == pytest.approx(s, rel=1e-6)


def test_config_validation():
    with pytest.raises(ConfigError) as info:
        small("exactness", step_sizes=(-0.1,))
    assert info.value.key == "step_sizes"
    with pytest.raises(ConfigError) as info:
        small("retract", b_norms=(0.0,))
    assert info.value.key == "b_norms"
    with pytest.raises(ConfigError) as info:
        small("nope")
    assert info.value.key == "experiment"
    with pytest.raises(ConfigError) as info:
        small("exactness", tree="[1]")
    assert info.value.key == "tree"
