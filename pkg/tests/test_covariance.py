import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exchnet.covariance import (
    EtaVector,
    build_omega_0,
    build_omega_e,
    check_parameter_space,
    class_sizes,
    classify_pair,
    cv_grid,
    cv_tune_c,
    estimate_eta,
    estimate_eta1_hybrid,
    estimate_eta1_naive,
    estimate_eta_offdiag,
    kshorth,
    min_eigenvalue,
    omega_e_eigenvalues,
    psd_correct,
    shorth_k,
)
from exchnet.errors import EstimationError, InvalidDyadError
from exchnet.relational import dyad_arrays, edge_index, from_matrix, to_matrix

from conftest import random_valid_eta
from oracles import eta_offdiag_bruteforce, kshorth_exhaustive, omega_e_dense, pairs_by_class


# -- pair configurations ------------------------------------------------------


def test_classify_pair():
    assert classify_pair((1, 2), (1, 2)) == "same"
    assert classify_pair((1, 2), (2, 1)) == "reciprocal"
    assert classify_pair((1, 2), (1, 3)) == "same-sender"
    assert classify_pair((1, 2), (3, 2)) == "same-receiver"
    assert classify_pair((1, 2), (3, 1)) == "sender-receiver"
    assert classify_pair((1, 2), (2, 3)) == "sender-receiver"
    assert classify_pair((1, 2), (3, 4)) == "disjoint"
    with pytest.raises(InvalidDyadError):
        classify_pair((1, 1), (1, 2))


@pytest.mark.parametrize("n", range(4, 9))
def test_class_sizes_by_enumeration(n):
    groups = pairs_by_class(n)
    sizes = class_sizes(n)
    t = n**3 - 3 * n**2 + 2 * n
    assert len(groups[2]) == sizes["reciprocal"] == n * n - n
    assert len(groups[3]) == sizes["same-sender"] == t
    assert len(groups[4]) == sizes["same-receiver"] == t
    assert len(groups[5]) == sizes["sender-receiver"] == 2 * t
    assert len(groups[0]) == sizes["disjoint"]


# -- moment estimators ----------------------------------------------------------


def test_constant_xi_gives_zero():
    np.testing.assert_allclose(estimate_eta_offdiag(np.ones(20)), 0.0, atol=1e-14)


@pytest.mark.parametrize("n", [4, 5, 7])
def test_offdiag_matches_enumeration(n, rng):
    xi = rng.gamma(2.0, 0.5, size=(n, n))
    np.fill_diagonal(xi, 0.0)
    got = estimate_eta_offdiag(from_matrix(xi))
    np.testing.assert_allclose(got, eta_offdiag_bruteforce(xi), rtol=1e-12, atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(3, 12), seed=st.integers(0, 2**31))
def test_offdiag_relabeling_invariance(n, seed):
    rng = np.random.default_rng(seed)
    xi = rng.exponential(size=(n, n))
    np.fill_diagonal(xi, 0.0)
    perm = rng.permutation(n)
    xp = np.empty_like(xi)
    xp[np.ix_(perm, perm)] = xi
    np.testing.assert_allclose(estimate_eta_offdiag(xp), estimate_eta_offdiag(xi), rtol=1e-9, atol=1e-12)


def test_eta1_naive_examples():
    assert estimate_eta1_naive(np.ones(6), np.ones(6)) == pytest.approx(-1.0)


# -- k-shorth -----------------------------------------------------------------


def test_kshorth_examples():
    assert kshorth([0, 1, 2, 10], 3) == 1.0
    # the only other 3-window, [-4, 7], has center 1.5 > 0
    assert kshorth([-5, -4, -3, 7], 3, positive_center_only=True) == 1.5
    assert kshorth([-5, -4, -3, -1], 3, positive_center_only=True) is None
    with pytest.raises(ValueError):
        kshorth([], 1)
    with pytest.raises(ValueError):
        kshorth([1, 2], 3)


def test_kshorth_matches_exhaustive_scan(rng):
    for _ in range(200):
        N = int(rng.integers(1, 200))
        pts = rng.standard_t(3, size=N)
        k = int(rng.integers(1, N + 1))
        pos = bool(rng.integers(0, 2))
        assert kshorth(pts, k, pos) == kshorth_exhaustive(pts, k, pos)


@settings(max_examples=200, deadline=None)
@given(
    pts=st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=40),
    kfrac=st.floats(0, 1),
)
def test_kshorth_interval_contains_k_points(pts, kfrac):
    k = max(1, int(round(kfrac * len(pts))))
    c = kshorth(pts, k)
    assert min(pts) <= c <= max(pts)


def test_shorth_k_and_grid():
    assert shorth_k(1.0, 100) == math.ceil(math.log(100))
    assert shorth_k(1e-9, 100) == 1
    assert shorth_k(1e9, 100) == 100
    # exact integers are not pushed up by rounding noise
    assert shorth_k(3 / math.log(20), 20) == 3
    zeta = np.linspace(-1, 1, 380)
    grid, degenerate = cv_grid(zeta)
    assert grid[0] == pytest.approx(0.3367, abs=5e-5)
    assert not degenerate and grid.size == 50


def test_cv_constant_zeta_picks_smallest_c():
    res = cv_tune_c(np.full(100, 0.5), seed=3)
    assert res.c == res.grid[0]
    assert np.all(res.losses == 0)


def test_cv_degenerate_grid_warns():
    zeta = np.concatenate([np.full(30, -5.0), [0.1]])
    with pytest.warns(RuntimeWarning, match="degenerate"):
        res = cv_tune_c(zeta)
    assert res.degenerate and res.c == pytest.approx(2 / math.log(31))


def test_cv_needs_enough_points():
    with pytest.raises(EstimationError):
        cv_tune_c(np.ones(10))


def test_cv_matches_direct_recomputation(rng):
    N = 30
    zeta = np.concatenate([rng.normal(-1, 0.2, 15), rng.normal(2, 0.5, 15)])
    seed = 11
    res = cv_tune_c(zeta, seed=seed)
    fold = np.empty(N, dtype=int)
    fold[np.random.default_rng(seed).permutation(N)] = np.arange(N) % 10
    losses = []
    for c in res.grid:
        per_fold = []
        for f in range(10):
            train, test = zeta[fold != f], zeta[fold == f]
            k = min(max(math.ceil(round(c * math.log(train.size), 9)), 1), train.size)
            center = kshorth_exhaustive(train, k, True)
            per_fold.append(np.inf if center is None else np.mean((test - center) ** 2))
        losses.append(np.mean(per_fold))
    losses = np.array(losses)
    np.testing.assert_allclose(res.losses, losses, rtol=1e-10)
    assert res.c == res.grid[int(np.argmin(losses))]


def test_hybrid_branches():
    assert estimate_eta1_hybrid([0.0], 1.0, eta1_star=0.5) == (0.5, "naive")
    zeta = [-1, 0.9, 1.0, 1.1, 5]
    c = 3 / math.log(5)
    assert estimate_eta1_hybrid(zeta, c, eta1_star=-0.1) == (pytest.approx(1.0), "shorth")
    with pytest.raises(EstimationError):
        estimate_eta1_hybrid([-3, -2, -1.0], 1 / math.log(3), eta1_star=-1.0)


# -- parameter space -------------------------------------------------------


def test_parameter_space_examples():
    for n in (4, 10, 100):
        assert check_parameter_space((1, 0, 0, 0, 0), n).valid
    chk = check_parameter_space((1, 2, 0, 0, 0), 10)
    assert not chk.valid
    assert "eta2 <= eta1" in chk.violations


def test_parameter_space_agrees_with_spectrum(rng):
    for n in (5, 10):
        for _ in range(100):
            eta = rng.uniform(-0.3, 0.3, 5)
            eta[0] = rng.uniform(0, 1)
            lam = np.linalg.eigvalsh(omega_e_dense(eta, n))[0]
            if abs(lam) < 1e-9:
                continue
            assert check_parameter_space(eta, n).valid == (lam > 0)


@pytest.mark.parametrize("n", [4, 5, 8])
def test_closed_form_eigenvalues_are_the_spectrum(n, rng):
    eta = rng.normal(size=5)
    dense = np.linalg.eigvalsh(omega_e_dense(eta, n))
    closed = omega_e_eigenvalues(eta, n)
    for v in closed.values():
        assert np.min(np.abs(dense - v)) < 1e-10
    assert min_eigenvalue(eta, n) == pytest.approx(dense[0], abs=1e-10)


def test_eigenvalue_methods_agree(rng):
    eta = random_valid_eta(rng, 12)
    a = min_eigenvalue(eta, 12, "closed")
    assert min_eigenvalue(eta, 12, "dense") == pytest.approx(a, abs=1e-10)
    assert min_eigenvalue(eta, 12, "iterative") == pytest.approx(a, abs=1e-7)


def test_psd_correct_example():
    eta = EtaVector(0.1, 0, 0.5, 0.5, 0.5)
    fixed, shift = psd_correct(eta, 6)
    lam = np.linalg.eigvalsh(omega_e_dense(fixed.as_array(), 6))[0]
    assert -1e-12 <= lam <= 1e-8
    assert shift > 0
    assert (fixed.eta2, fixed.eta3, fixed.eta4, fixed.eta5) == (0, 0.5, 0.5, 0.5)
    same, s0 = psd_correct(EtaVector(1.0), 6)
    assert same == EtaVector(1.0) and s0 == 0.0


# -- structured operators ---------------------------------------------------------


def test_omega_e_identity_n3():
    np.testing.assert_array_equal(build_omega_e((1, 0, 0, 0, 0), 3).materialize(), np.eye(6))


def test_row_multiplicities_n4():
    M = build_omega_e((10, 20, 30, 40, 50), 4).materialize()
    for row in M:
        vals, counts = np.unique(row, return_counts=True)
        tally = dict(zip(vals.tolist(), counts.tolist()))
        assert tally[10] == 1 and tally[20] == 1
        assert tally[30] == 2 and tally[40] == 2 and tally[50] == 4


def test_materialize_matches_entries_and_matvec(rng):
    n = 5
    eta = EtaVector(*rng.normal(size=5))
    om = build_omega_e(eta, n)
    M = om.materialize()
    np.testing.assert_array_equal(M, M.T)
    np.testing.assert_array_equal(M, omega_e_dense(eta.as_array(), n))
    s, r = dyad_arrays(n)
    for a in range(0, 20, 3):
        for b in range(20):
            assert M[a, b] == om.entry((s[a] + 1, r[a] + 1), (s[b] + 1, r[b] + 1))
    v = rng.normal(size=20)
    np.testing.assert_allclose(om.matvec(v), M @ v, rtol=1e-12, atol=1e-12)


def test_omega_0_entries(rng):
    n = 4
    g = rng.uniform(0.5, 2, 12)
    eta = EtaVector(0.3, 0.1, 0.05, 0.02, 0.01)
    om0 = build_omega_0(eta, g)
    M = om0.materialize()
    k = edge_index(1, 2, n)
    assert M[k, k] == pytest.approx(g[k] ** 2 * 0.3 + g[k])
    kr = edge_index(2, 1, n)
    assert M[k, kr] == pytest.approx(g[k] * g[kr] * 0.1)
    assert om0.entry((1, 2), (2, 1)) == pytest.approx(M[k, kr])
    v = rng.normal(size=12)
    np.testing.assert_allclose(om0.matvec(v), M @ v, rtol=1e-12)


# -- pipeline -------------------------------------------------------------------


def test_estimate_eta_pipeline_is_psd(rng):
    for _ in range(20):
        n = int(rng.integers(6, 15))
        g = rng.uniform(0.3, 3, n * n - n)
        y = rng.poisson(g * rng.gamma(2, 0.5, g.size))
        est = estimate_eta(y / g, g, cv_seed=1)
        assert min_eigenvalue(est.eta, n) >= -1e-8
        assert est.branch in ("naive", "shorth")
        if est.branch == "naive":
            assert est.eta.eta1 == pytest.approx(est.eta1_star + est.correction)
        M = build_omega_0(est.eta, g).materialize()
        assert np.linalg.eigvalsh(M)[0] > 0


def test_matrix_input_accepted(rng):
    xi = rng.exponential(size=30)
    np.testing.assert_allclose(estimate_eta_offdiag(to_matrix(xi, 6)), estimate_eta_offdiag(xi))
