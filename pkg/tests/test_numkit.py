import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from FedCore.numkit import (DataShard, InvalidInputError, as_model_vector, global_objective, lipschitz_bound,
                            logistic_value_grad)


def test_value_at_origin_is_log2():
    shard = DataShard(rows=np.ones((3, 2)), labels=[0, 1, 1], beta=0.5)
    value, grad = logistic_value_grad(np.zeros(2), shard)
    assert value == pytest.approx(np.log(2.0), abs=1e-15)
    np.testing.assert_allclose(grad, np.full(2, 0.5 - 2 / 3), atol=1e-15)


def test_gradient_matches_central_differences(small_shards, rng):
    shard = small_shards[0]
    w = rng.standard_normal(shard.dim)
    _, grad = shard.value_grad(w)
    h = 1e-6
    numeric = np.array([(shard.value_grad(w + h * e)[0] - shard.value_grad(w - h * e)[0]) / (2 * h)
                        for e in np.eye(shard.dim)])
    np.testing.assert_allclose(grad, numeric, rtol=1e-5, atol=1e-9)


def test_large_margins_stay_finite():
    shard = DataShard(rows=[[1e3], [-1e3]], labels=[0, 1], beta=0.0)
    value, grad = shard.value_grad(np.array([10.0]))
    assert np.isfinite(value) and np.all(np.isfinite(grad))
    assert value == pytest.approx(1e4, rel=1e-12)


def test_convexity_inequality(small_shards, rng):
    shard = small_shards[1]
    for _ in range(20):
        w, v = rng.standard_normal((2, shard.dim)) * 3
        f_w, g_w = shard.value_grad(w)
        f_v, _ = shard.value_grad(v)
        assert f_v >= f_w + g_w @ (v - w) - 1e-12


def test_global_objective_sums_shards(small_shards, rng):
    w = rng.standard_normal(small_shards[0].dim)
    f, grad = global_objective(w, small_shards[:3])
    parts = [s.value_grad(w) for s in small_shards[:3]]
    assert f == pytest.approx(sum(p[0] for p in parts), abs=1e-12)
    np.testing.assert_allclose(grad, sum(p[1] for p in parts), atol=1e-12)

    f1, g1 = global_objective(w, small_shards[:1])
    assert (f1, list(g1)) == (parts[0][0], list(parts[0][1]))


def test_minimiser_agrees_with_sklearn():
    rng = np.random.default_rng(3)
    rows = rng.standard_normal((300, 4))
    labels = (rng.random(300) < 1 / (1 + np.exp(-rows @ np.array([1.0, -2.0, 0.5, 0.0])))).astype(float)
    beta = 0.01
    # sklearn minimises C sum(loss) + ||w||^2 / 2, the same problem for C = 1 / (beta d)
    clf = LogisticRegression(C=1 / (beta * len(labels)), fit_intercept=False, tol=1e-12, max_iter=10000)
    clf.fit(rows, labels)
    _, grad = DataShard(rows=rows, labels=labels, beta=beta).value_grad(clf.coef_[0])
    assert np.linalg.norm(grad) < 1e-5


def test_lipschitz_bound_dominates_hessian(small_shards, rng):
    shard = small_shards[2]
    w = rng.standard_normal(shard.dim)
    s = 1 / (1 + np.exp(-shard.rows @ w))
    hessian = shard.rows.T @ (shard.rows * (s * (1 - s))[:, None]) / shard.num_rows + shard.beta * np.eye(shard.dim)
    assert np.linalg.eigvalsh(hessian).max() <= lipschitz_bound(shard) + 1e-15


def test_invalid_inputs():
    with pytest.raises(InvalidInputError):
        DataShard(rows=np.ones((2, 2)), labels=[0, 2])
    with pytest.raises(InvalidInputError):
        DataShard(rows=[[np.nan, 1.0]], labels=[1])
    with pytest.raises(InvalidInputError):
        DataShard(rows=np.ones((2, 2)), labels=[0, 1, 1])
    with pytest.raises(InvalidInputError):
        as_model_vector([1.0, 2.0], 3)
    with pytest.raises(InvalidInputError):
        as_model_vector([1.0, np.inf])
    with pytest.raises(InvalidInputError):
        global_objective(np.zeros(2), [])
    shard = DataShard(rows=np.ones((2, 2)), labels=[0, 1])
    with pytest.raises(InvalidInputError):
        shard.value_grad(np.zeros(3))
