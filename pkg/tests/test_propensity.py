import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from mtewelfare import (ConfigurationError, LinearPropensity, OraclePropensity, SingularDesign,
                        fit_linear, propensity_error, simulate)
from mtewelfare.dgp import EPS_P
from mtewelfare.propensity import evaluate_basis, linear_basis


def test_linear_basis():
    assert linear_basis(2) == [(0, 0), (1, 0), (0, 1)]
    Z = np.array([[2.0, 3.0]])
    np.testing.assert_array_equal(evaluate_basis(Z, [(0, 0), (1, 0), (1, 1), (0, 2)]), [[1, 2, 6, 9]])


def test_all_untreated_clamps_to_eps(ref):
    ds = simulate(ref, 500, seed=2)
    model = LinearPropensity().fit(ds.features, np.zeros(ds.n))
    np.testing.assert_allclose(model.coef_, 0.0, atol=1e-12)
    np.testing.assert_array_equal(model.predict(ds.features), EPS_P)


def test_exact_interpolation_of_linear_response(ref):
    ds = simulate(ref, 300, seed=3)
    model = LinearPropensity().fit(ds.features, ref.propensity(ds.z0, ds.x))
    np.testing.assert_allclose(model.coef_, ref.gamma, atol=1e-8)


def test_fitted_accuracy_large_sample(ref):
    ds = simulate(ref, 100_000, seed=1)
    err = propensity_error(fit_linear(ds), ds, ref)
    assert err.max_abs <= 0.02
    assert err.max_sq == pytest.approx(err.max_abs ** 2)


def test_oracle_values(ref):
    model = OraclePropensity(ref).fit()
    np.testing.assert_allclose(model.predict([[1.0, 0.0], [0.0, -1.0]]), [0.6, 0.1], atol=1e-15)


def test_error_of_oracle_and_shifted(ref):
    ds = simulate(ref, 1000, seed=4)
    oracle = OraclePropensity(ref).fit()
    err = propensity_error(oracle, ds, ref)
    assert (err.max_abs, err.max_sq) == (0.0, 0.0)
    shifted = OraclePropensity(ref).fit()
    shifted.coef_ = ref.gamma + np.array([0.01, 0.0, 0.0])
    assert propensity_error(shifted, ds, ref).max_abs == pytest.approx(0.01, abs=1e-12)
    with pytest.raises(ConfigurationError):
        propensity_error(oracle, ds)


def test_collinear_basis_is_singular(ref):
    ds = simulate(ref, 200, seed=5)
    with pytest.raises(SingularDesign):
        LinearPropensity(basis=[(0, 0), (1, 0), (2, 0)]).fit(ds.features[:, :1].repeat(2, axis=1), ds.d)
    with pytest.raises(SingularDesign):
        LinearPropensity(basis=[(0, 0), (1, 0), (0, 1)]).fit(np.column_stack([ds.z0, ds.z0]), ds.d)


def test_sqrt_n_error_rate_is_bounded(ref):
    means = []
    for n in (1000, 4000, 16000):
        vals = []
        for r in range(200):
            ds = simulate(ref, n, seed=np.random.default_rng([99, n, r]))
            vals.append(np.sqrt(n) * propensity_error(fit_linear(ds), ds, ref).max_abs)
        means.append(np.mean(vals))
    assert max(means) / min(means) <= 2.0


def test_estimator_api():
    m = LinearPropensity(eps=0.01)
    assert clone(m).get_params() == {"basis": None, "eps": 0.01}
    d = OraclePropensity(eps=0.01)
    with pytest.raises(ConfigurationError):
        d.fit()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(20, 200))
def test_predictions_in_unit_interval_and_permutation_invariant(seed, n):
    rng = np.random.default_rng(seed)
    Z = np.column_stack([rng.integers(0, 2, n), rng.integers(-1, 2, n)]).astype(float)
    if np.linalg.matrix_rank(np.column_stack([np.ones(n), Z])) < 3:
        return
    d = rng.integers(0, 2, n).astype(float)
    model = LinearPropensity().fit(Z, d)
    pred = model.predict(Z)
    assert np.all((pred >= EPS_P) & (pred <= 1 - EPS_P))
    perm = rng.permutation(n)
    np.testing.assert_allclose(LinearPropensity().fit(Z[perm], d[perm]).coef_, model.coef_, atol=1e-10)
