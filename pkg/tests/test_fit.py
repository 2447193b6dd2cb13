import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exchnet.errors import DataError, RankDeficientError
from exchnet.fit import FitOptions, check_full_rank, fit_pml, pml_gradient, pml_hessian, pseudo_loglik
from exchnet.links import link_eval
from exchnet.relational import RelationalDataset

from conftest import random_dataset


def loglik_loop(data, beta, link):
    """Independent per-dyad evaluation of the objective."""
    total = 0.0
    for k in range(data.n_dyads):
        z = float(data.X[k] @ beta)
        g = link_eval(link, z)[0]
        total += (data.y[k] * math.log(g) if data.y[k] > 0 else 0.0) - g
    return total / data.n_dyads


@pytest.mark.parametrize("link", ["exp", "logistic", "arccot"])
def test_objective_matches_loop(link, rng):
    data, beta = random_dataset(rng, n=10, p=4, link=link)
    assert pseudo_loglik(data, beta, link) == pytest.approx(loglik_loop(data, beta, link), rel=1e-12)


@pytest.mark.parametrize("link", ["exp", "logistic", "arccot"])
def test_gradient_hessian_finite_differences(link, rng):
    data, beta = random_dataset(rng, n=10, p=4, link=link)
    h = 1e-5
    eye = np.eye(4)
    fd_g = np.array([(pseudo_loglik(data, beta + h * e, link) - pseudo_loglik(data, beta - h * e, link)) / (2 * h)
                     for e in eye])
    fd_h = np.column_stack([(pml_gradient(data, beta + h * e, link) - pml_gradient(data, beta - h * e, link)) / (2 * h)
                            for e in eye])
    np.testing.assert_allclose(pml_gradient(data, beta, link), fd_g, rtol=1e-6, atol=1e-9)
    np.testing.assert_allclose(pml_hessian(data, beta, link), fd_h, rtol=1e-5, atol=1e-9)


def test_intercept_only_closed_form():
    data = RelationalDataset(3, [3, 1, 2, 2, 4, 0], np.ones((6, 1)))
    fit = fit_pml(data, "exp")
    assert fit.converged
    assert fit.beta_hat[0] == pytest.approx(math.log(2.0), abs=1e-12)
    np.testing.assert_allclose(pml_gradient(data, [math.log(2.0)], "exp"), 0.0, atol=1e-15)


def test_all_zero_counts_not_converged():
    data = RelationalDataset(3, np.zeros(6), np.ones((6, 1)))
    fit = fit_pml(data, "exp")
    assert not fit.converged
    assert "zero" in fit.message


def test_rank_deficiency_names_columns(rng):
    X = rng.normal(size=(20, 3))
    X = np.column_stack([X, X[:, 0] + X[:, 1]])
    with pytest.raises(RankDeficientError) as info:
        check_full_rank(X, ("a", "b", "c", "d"))
    assert len(info.value.columns) == 1
    with pytest.raises(RankDeficientError):
        check_full_rank(np.column_stack([X[:, :2], np.zeros(20)]))


def test_offsets_only_with_exponential(rng):
    data, _ = random_dataset(rng, n=5, p=2)
    d = RelationalDataset(5, data.y, data.X, np.zeros(20))
    with pytest.raises(DataError):
        fit_pml(d, "logistic")


def test_offset_shifts_intercept(rng):
    data, _ = random_dataset(rng, n=8, p=1)
    base = fit_pml(data, "exp")
    shifted = fit_pml(RelationalDataset(8, data.y, data.X, np.full(56, 0.7)), "exp")
    assert shifted.beta_hat[0] == pytest.approx(base.beta_hat[0] - 0.7, abs=1e-10)


@pytest.mark.parametrize("link", ["exp", "logistic", "arccot"])
def test_fit_converges_and_satisfies_first_order_condition(link, rng):
    data, _ = random_dataset(rng, n=15, p=3, link=link)
    fit = fit_pml(data, link)
    assert fit.converged
    assert fit.gradient_norm <= 1e-8
    assert np.all(fit.fitted > 0) and np.all(fit.xi_hat >= 0)
    g, g1, _ = link_eval(link, data.X @ fit.beta_hat)
    ident = ((fit.xi_hat - 1.0) * g1 / g * g) @ data.X
    np.testing.assert_allclose(ident / data.n_dyads, 0.0, atol=1e-8)


def test_objective_never_decreases(rng, monkeypatch):
    import exchnet.fit as fitmod

    data, _ = random_dataset(rng, n=10, p=3, scale=0.8)
    path = []
    real = fitmod.pml_gradient

    def spy(d, b, link="exp"):
        # called once per iteration at the accepted iterate
        path.append(fitmod.pseudo_loglik(d, b, link))
        return real(d, b, link)

    monkeypatch.setattr(fitmod, "pml_gradient", spy)
    fit = fit_pml(data, "exp", FitOptions(init="zero"))
    assert fit.converged
    assert len(path) >= 3
    # gains near the optimum fall below the rounding of the full objective
    slack = 1e-12 * (1.0 + abs(path[-1]))
    assert all(b >= a - slack for a, b in zip(path, path[1:]))


def test_deterministic(rng):
    data, _ = random_dataset(rng, n=10, p=3)
    a = fit_pml(data)
    b = fit_pml(data)
    np.testing.assert_array_equal(a.beta_hat, b.beta_hat)
    assert a.iterations == b.iterations


def test_floor_warning():
    X = np.column_stack([np.ones(6), [0, 0, 0, 0, 0, 1.0]])
    y = np.array([1, 2, 1, 2, 1, 0.0])
    data = RelationalDataset(3, y, X)
    with warnings.catch_warnings(record=True):
        warnings.simplefilter("always")
        fit = fit_pml(data, "exp", FitOptions(max_iterations=200))
    # the last dyad's mean is driven towards zero
    assert fit.fitted[-1] < 1e-6


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(4, 9))
def test_permutation_invariance(seed, n):
    rng = np.random.default_rng(seed)
    data, _ = random_dataset(rng, n=n, p=3)
    fit = fit_pml(data)
    if not fit.converged:
        return
    perm = rng.permutation(n)
    fit2 = fit_pml(data.relabel(perm))
    np.testing.assert_allclose(fit2.beta_hat, fit.beta_hat, rtol=1e-7, atol=1e-9)
