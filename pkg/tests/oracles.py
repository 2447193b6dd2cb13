"""Slow, obviously-correct reference computations used only by tests."""

import itertools

import numpy as np


def dyads(n):
    return [(i, j) for i in range(n) for j in range(n) if i != j]


def configuration(a, b):
    """Configuration label of an ordered dyad pair, written independently of the package."""
    i, j = a
    k, l = b
    if a == b:
        return 1
    if i == l and j == k:
        return 2
    if i == k:
        return 3
    if j == l:
        return 4
    if i == l or j == k:
        return 5
    return 0


def pairs_by_class(n):
    out = {m: [] for m in range(6)}
    ds = dyads(n)
    for a in ds:
        for b in ds:
            out[configuration(a, b)].append((a, b))
    return out


def eta_offdiag_bruteforce(xi):
    """Mean of products minus product of means over each configuration's pairs."""
    n = xi.shape[0]
    groups = pairs_by_class(n)
    res = []
    for m in (2, 3, 4, 5):
        left = np.array([xi[a] for a, _ in groups[m]])
        right = np.array([xi[b] for _, b in groups[m]])
        res.append(np.mean(left * right) - left.mean() * right.mean())
    return res


def omega_e_dense(eta, n):
    ds = dyads(n)
    vals = [0.0] + list(eta)
    M = np.zeros((len(ds), len(ds)))
    for p, a in enumerate(ds):
        for q, b in enumerate(ds):
            M[p, q] = vals[configuration(a, b)]
    return M


def kshorth_exhaustive(points, k, positive_only=False):
    """Scan every interval [s_a, s_b] with at least k points."""
    s = np.sort(np.asarray(points, dtype=float))
    best = None
    for a in range(s.size):
        for b in range(a + k - 1, s.size):
            center = 0.5 * (s[a] + s[b])
            if positive_only and not center > 0:
                continue
            w = s[b] - s[a]
            if best is None or w < best[0]:
                best = (w, center)
    return None if best is None else best[1]


def L_bruteforce(U, fitted, eta, n):
    """Sum over all dyad pairs of u_a Cov(y_a, y_b) u_b^T, divided by n^3 - n^2."""
    Om = omega_e_dense(eta, n)
    cov = np.diag(fitted) + fitted[:, None] * Om * fitted[None, :]
    return U.T @ cov @ U / (n**3 - n**2)


def brute_moment_sums(xi):
    n = xi.shape[0]
    s2 = s3 = s4 = s5 = 0.0
    for i, j, k in itertools.product(range(n), repeat=3):
        if len({i, j, k}) < 3:
            continue
        s3 += xi[i, j] * xi[i, k]
        s4 += xi[j, i] * xi[k, i]
        s5 += xi[i, j] * xi[k, i] + xi[i, j] * xi[j, k]
    for i, j in dyads(n):
        s2 += xi[i, j] * xi[j, i]
    return s2, s3, s4, s5
