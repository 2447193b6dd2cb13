"""Pure-numpy reference kernels.

These mirror ``_ckernels.pyx`` function for function and are used whenever the
compiled extension is unavailable (or ``EXCHNET_BACKEND=python``). Inputs use
the dense ``n x n`` layout with a zero diagonal.
"""

from __future__ import annotations

import numpy as np


def kshorth_index(s: np.ndarray, k: int, positive_only: bool) -> int:
    """Left index of the shortest window of ``k`` consecutive sorted points.

    Returns -1 when ``positive_only`` excludes every window. Ties go to the
    smallest left index.
    """
    s = np.asarray(s, dtype=np.float64)
    m = s.size - k + 1
    if m <= 0:
        return -1
    width = s[k - 1 :] - s[:m]
    if positive_only:
        ok = (s[k - 1 :] + s[:m]) > 0.0
        if not ok.any():
            return -1
        width = np.where(ok, width, np.inf)
    return int(np.argmin(width))


def xi_moment_sums(xi: np.ndarray) -> tuple[float, float, float, float, float, float]:
    """Raw sums behind the moment estimators.

    Returns ``(sum xi, sum xi^2, S2, S3, S4, S5)`` where ``S2 = sum xi_ij xi_ji``,
    ``S3`` sums ``xi_ij xi_il`` over distinct ordered triples, ``S4`` sums
    ``xi_ij xi_kj`` and ``S5`` sums ``xi_ij (xi_ki + xi_jk)``.
    """
    xi = np.asarray(xi, dtype=np.float64)
    row = xi.sum(axis=1)
    col = xi.sum(axis=0)
    sq = float(np.sum(xi * xi))
    s2 = float(np.sum(xi * xi.T))
    s3 = float(row @ row) - sq
    s4 = float(col @ col) - sq
    s5 = 2.0 * (float(row @ col) - s2)
    return float(row.sum()), sq, s2, s3, s4, s5


def grouped_outer_sums(u: np.ndarray):
    """Configuration-grouped outer-product sums of per-dyad vectors.

    ``u`` has shape ``(n, n, p)`` with zero diagonal. Returns ``(D, S2, S3, S4, M5)``
    with ``D = sum u_ij u_ij^T``, ``S2 = sum u_ij u_ji^T``, ``S3``/``S4`` the
    same-sender/same-receiver sums over distinct triples and
    ``M5 = sum u_ij u_ki^T`` over distinct triples (the full sender-receiver
    sum is ``M5 + M5^T``).
    """
    u = np.asarray(u, dtype=np.float64)
    n, _, p = u.shape
    flat = u.reshape(n * n, p)
    D = flat.T @ flat
    S2 = np.einsum("ija,jib->ab", u, u)
    R = u.sum(axis=1)
    C = u.sum(axis=0)
    S3 = R.T @ R - D
    S4 = C.T @ C - D
    M5 = R.T @ C - S2
    return D, S2, S3, S4, M5


def cv_losses(
    s: np.ndarray,
    fold: np.ndarray,
    n_folds: int,
    ks: np.ndarray,
    positive_only: bool,
) -> np.ndarray:
    """Held-out mean squared error of the k-shorth center.

    ``s`` is sorted and ``fold[i]`` is the fold label of ``s[i]``. Entry
    ``[c, f]`` of the result is the mean of ``(x - center)^2`` over fold ``f``
    where ``center`` is the k-shorth center of the other folds with
    ``k = ks[c, f]``; ``inf`` when no admissible interval exists.
    """
    s = np.asarray(s, dtype=np.float64)
    fold = np.asarray(fold)
    ks = np.asarray(ks, dtype=np.int64)
    out = np.full(ks.shape, np.inf)
    for f in range(n_folds):
        held = fold == f
        train = s[~held]
        test = s[held]
        if test.size == 0:
            continue
        tm, t2 = test.mean(), np.mean(test * test)
        for c in range(ks.shape[0]):
            k = int(ks[c, f])
            a = kshorth_index(train, k, positive_only)
            if a < 0:
                continue
            center = 0.5 * (train[a] + train[a + k - 1])
            out[c, f] = t2 - 2.0 * center * tm + center * center
    return out
