import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exchnet.covariance import EtaVector, estimate_eta
from exchnet.errors import ConvergenceError, EstimationError, ParameterSpaceError
from exchnet.fit import fit_pml
from exchnet.inference import (
    compute_J,
    compute_L,
    compute_L_bruteforce,
    confidence_intervals,
    norm_ppf,
    run_inference,
    sandwich_vcov,
)
from exchnet.links import link_eval
from exchnet.relational import RelationalDataset

from conftest import random_dataset, random_valid_eta
from oracles import L_bruteforce


def test_norm_ppf_values():
    assert norm_ppf(0.975) == pytest.approx(1.959963984540054, abs=1e-14)
    # independent evaluation: bisection on the error function
    lo, hi = 0.0, 3.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 0.5 * math.erfc(-mid / math.sqrt(2)) < 0.84:
            lo = mid
        else:
            hi = mid
    assert norm_ppf(1 - 0.32 / 2) == pytest.approx(lo, abs=1e-13)
    assert norm_ppf(0.5) == 0.0
    assert norm_ppf(1e-300) == pytest.approx(-37.04710, abs=1e-4)
    assert norm_ppf(0.3) == pytest.approx(-norm_ppf(0.7), abs=1e-15)
    with pytest.raises(ValueError):
        norm_ppf(1.5)


@settings(max_examples=300, deadline=None)
@given(p=st.floats(1e-12, 1 - 1e-12))
def test_norm_ppf_inverts_cdf(p):
    x = norm_ppf(p)
    cdf = 0.5 * math.erfc(-x / math.sqrt(2))
    assert cdf == pytest.approx(p, rel=1e-12, abs=1e-16)


def test_J_intercept_only():
    data = RelationalDataset(3, [3, 1, 2, 2, 4, 0], np.ones((6, 1)))
    np.testing.assert_allclose(compute_J(data, [math.log(2)], "exp"), [[2.0]], rtol=1e-14)


@pytest.mark.parametrize("link", ["exp", "logistic", "arccot"])
def test_J_matches_direct_sum(link, rng):
    data, beta = random_dataset(rng, n=8, p=3, link=link)
    J = np.zeros((3, 3))
    for k in range(data.n_dyads):
        g, g1, _ = link_eval(link, float(data.X[k] @ beta))
        J += g1 * g1 / g * np.outer(data.X[k], data.X[k])
    np.testing.assert_allclose(compute_J(data, beta, link), J / data.n_dyads, rtol=1e-12)


def test_J_exponential_form(rng):
    data, beta = random_dataset(rng, n=6, p=3)
    g = np.exp(data.X @ beta)
    np.testing.assert_allclose(compute_J(data, beta), (data.X.T * g) @ data.X / 30, rtol=1e-12)


@pytest.mark.parametrize("link", ["exp", "logistic", "arccot"])
def test_L_grouped_equals_pair_enumeration(link, rng):
    for _ in range(3):
        data, beta = random_dataset(rng, n=6, p=3, link=link)
        eta = random_valid_eta(rng, 6)
        L = compute_L(data, beta, link, eta)
        g, g1, _ = link_eval(link, data.X @ beta)
        U = data.X * (g1 / g)[:, None]
        ref = L_bruteforce(U, g, eta.as_array(), 6)
        np.testing.assert_allclose(L, ref, rtol=1e-10)
        np.testing.assert_allclose(compute_L_bruteforce(data, beta, link, eta), ref, rtol=1e-10)
        np.testing.assert_array_equal(L, L.T)


def test_eta_zero_collapse(rng):
    data, beta = random_dataset(rng, n=9, p=4)
    J = compute_J(data, beta)
    L = compute_L(data, beta, "exp", EtaVector.zero())
    np.testing.assert_allclose(L, J / 9, rtol=1e-12)
    V, _ = sandwich_vcov(J, L, 9)
    np.testing.assert_allclose(V, np.linalg.inv(J) / 81, rtol=1e-10)


def test_L_is_linear_in_eta(rng):
    data, beta = random_dataset(rng, n=7, p=2)
    a = EtaVector(*rng.normal(size=5))
    b = EtaVector(*rng.normal(size=5))
    L0 = compute_L(data, beta, "exp", EtaVector.zero())
    La = compute_L(data, beta, "exp", a)
    Lb = compute_L(data, beta, "exp", b)
    Lab = compute_L(data, beta, "exp", a.as_array() + b.as_array())
    np.testing.assert_allclose(Lab - L0, (La - L0) + (Lb - L0), atol=1e-12 * np.abs(Lab).max())


def test_J_L_relabeling_invariance(rng):
    data, beta = random_dataset(rng, n=7, p=3)
    eta = random_valid_eta(rng, 7)
    perm = rng.permutation(7)
    other = data.relabel(perm)
    np.testing.assert_allclose(compute_J(other, beta), compute_J(data, beta), rtol=1e-12)
    np.testing.assert_allclose(compute_L(other, beta, "exp", eta), compute_L(data, beta, "exp", eta), rtol=1e-10)


def test_vcov_scalar_example():
    V, notes = sandwich_vcov([[2.0]], [[0.5]], 10)
    assert V[0, 0] == pytest.approx(0.0125)
    assert notes == []


def test_vcov_psd_on_random_instances(rng):
    for _ in range(100):
        n = int(rng.integers(4, 9))
        data, beta = random_dataset(rng, n=n, p=3)
        eta = random_valid_eta(rng, n)
        V, _ = sandwich_vcov(compute_J(data, beta), compute_L(data, beta, "exp", eta), n)
        assert np.linalg.eigvalsh(V)[0] >= -1e-10


def test_singular_J_and_ill_conditioning():
    with pytest.raises(EstimationError):
        sandwich_vcov(np.zeros((2, 2)), np.eye(2), 5)
    with pytest.warns(RuntimeWarning, match="ill-conditioned"):
        _, notes = sandwich_vcov(np.diag([1.0, 1e-13]), np.eye(2), 5)
    assert notes


def test_confidence_intervals():
    se, lo, hi, _ = confidence_intervals([1.0], [[0.04]], 0.05)
    assert se[0] == pytest.approx(0.2)
    assert hi[0] - 1.0 == pytest.approx(0.2 * 1.959963984540054)
    with pytest.warns(RuntimeWarning):
        se, lo, hi, notes = confidence_intervals([1.0], [[0.0]])
    assert lo[0] == hi[0] == 1.0 and notes


def test_doubling_L_scales_se(rng):
    data, beta = random_dataset(rng, n=6, p=2)
    J = compute_J(data, beta)
    L = compute_L(data, beta, "exp", EtaVector(0.2))
    se1 = confidence_intervals(beta, sandwich_vcov(J, L, 6)[0])[0]
    se2 = confidence_intervals(beta, sandwich_vcov(J, 2 * L, 6)[0])[0]
    np.testing.assert_allclose(se2, math.sqrt(2) * se1, rtol=1e-12)


def test_modes(rng):
    data, _ = random_dataset(rng, n=12, p=3)
    fit = fit_pml(data)
    est = estimate_eta(fit.xi_hat, fit.fitted)
    model = run_inference(data, fit, "model", eta_estimate=est)
    oracle = run_inference(data, fit, "oracle", eta_true=est.eta)
    np.testing.assert_allclose(model.vcov, oracle.vcov, rtol=1e-14)
    naive = run_inference(data, fit, "naive")
    assert naive.eta == EtaVector.zero()
    od = run_inference(data, fit, "naive-overdispersed", eta_estimate=est)
    assert od.eta == EtaVector(est.eta.eta1)
    with pytest.raises(ParameterSpaceError):
        run_inference(data, fit, "oracle", eta_true=(1, 2, 0, 0, 0))
    with pytest.raises(ValueError):
        run_inference(data, fit, "bogus")
    rep = model.to_report()
    assert len(rep["coefficients"]) == 3 and rep["eta"]["branch"] == est.branch


def test_oracle_with_true_beta_in_covariance(rng):
    data, beta = random_dataset(rng, n=8, p=2)
    fit = fit_pml(data)
    eta = EtaVector(0.3, 0.05)
    same = run_inference(data, fit, "oracle", eta_true=eta, beta_for_omega=fit.beta_hat)
    plain = run_inference(data, fit, "oracle", eta_true=eta)
    np.testing.assert_allclose(same.L_hat, plain.L_hat, rtol=1e-12)
    moved = run_inference(data, fit, "oracle", eta_true=eta, beta_for_omega=beta)
    assert not np.allclose(moved.L_hat, plain.L_hat)


def test_non_converged_fit_refused():
    data = RelationalDataset(3, np.zeros(6), np.ones((6, 1)))
    fit = fit_pml(data)
    with pytest.raises(ConvergenceError):
        run_inference(data, fit, "naive")
