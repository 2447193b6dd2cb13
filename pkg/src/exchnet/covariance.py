"""Weakly exchangeable error covariance: the five-parameter structure.

For dissociated weakly exchangeable errors the ``(n*n-n) x (n*n-n)``
covariance of the vectorized errors has only five distinct nonzero values,
one per configuration of two dyads sharing at least one node:

    eta1  Var(e_ij)
    eta2  Cov(e_ij, e_ji)          reciprocal
    eta3  Cov(e_ij, e_il)          same sender
    eta4  Cov(e_ij, e_kj)          same receiver
    eta5  Cov(e_ij, e_ki)          sender-receiver (= Cov(e_ij, e_jk))

This module estimates those parameters from residual ratios, checks the
admissible parameter set, corrects indefinite estimates and exposes the
implied error and count covariance operators without forming them.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh

from ._backend import kernels
from .errors import EstimationError, InvalidDyadError
from .relational import dyad_arrays, from_matrix, to_matrix

__all__ = [
    "PAIR_CLASSES",
    "CVResult",
    "EtaEstimate",
    "EtaVector",
    "ParameterSpaceCheck",
    "StructuredOmega0",
    "StructuredOmegaE",
    "build_omega_0",
    "build_omega_e",
    "check_parameter_space",
    "class_sizes",
    "classify_pair",
    "cv_grid",
    "cv_tune_c",
    "estimate_eta",
    "estimate_eta1_hybrid",
    "estimate_eta1_naive",
    "estimate_eta_offdiag",
    "kshorth",
    "min_eigenvalue",
    "omega_e_eigenvalues",
    "psd_correct",
    "shorth_k",
    "zeta_values",
]

PAIR_CLASSES = ("same", "reciprocal", "same-sender", "same-receiver", "sender-receiver", "disjoint")
_CLASS_ETA = {"same": 0, "reciprocal": 1, "same-sender": 2, "same-receiver": 3, "sender-receiver": 4}

PSD_SLACK = 1e-12
DENSE_EIG_MAX_N = 150
MATERIALIZE_MAX_N = 400


# ---------------------------------------------------------------------------
# Parameter vector
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EtaVector:
    eta1: float
    eta2: float = 0.0
    eta3: float = 0.0
    eta4: float = 0.0
    eta5: float = 0.0

    @classmethod
    def of(cls, values) -> "EtaVector":
        if isinstance(values, EtaVector):
            return values
        if isinstance(values, dict):
            return cls(*(float(values[f"eta{k}"]) for k in range(1, 6)))
        vals = [float(v) for v in values]
        if len(vals) != 5:
            raise ValueError(f"eta needs 5 components, got {len(vals)}")
        return cls(*vals)

    @classmethod
    def zero(cls) -> "EtaVector":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.eta1, self.eta2, self.eta3, self.eta4, self.eta5])

    def to_dict(self) -> dict[str, float]:
        return {f"eta{k + 1}": float(v) for k, v in enumerate(self.as_array())}

    def replace_eta1(self, eta1: float) -> "EtaVector":
        return EtaVector(float(eta1), self.eta2, self.eta3, self.eta4, self.eta5)

    def __iter__(self):
        return iter(self.as_array().tolist())


# ---------------------------------------------------------------------------
# Pair configurations
# ---------------------------------------------------------------------------


def classify_pair(a: tuple[int, int], b: tuple[int, int]) -> str:
    """Configuration of the dyad pair ``(a, b)``; symmetric in its arguments."""
    (i, j), (k, l) = a, b
    if i == j or k == l:
        raise InvalidDyadError("self-loops are not dyads")
    if (i, j) == (k, l):
        return "same"
    if (i, j) == (l, k):
        return "reciprocal"
    if i == k:
        return "same-sender"
    if j == l:
        return "same-receiver"
    if i == l or j == k:
        return "sender-receiver"
    return "disjoint"


def class_sizes(n: int) -> dict[str, int]:
    """Number of ordered dyad pairs in each configuration."""
    t = n**3 - 3 * n**2 + 2 * n
    sizes = {
        "same": n * n - n,
        "reciprocal": n * n - n,
        "same-sender": t,
        "same-receiver": t,
        "sender-receiver": 2 * t,
    }
    sizes["disjoint"] = (n * n - n) ** 2 - sum(sizes.values())
    return sizes


# ---------------------------------------------------------------------------
# Moment estimators
# ---------------------------------------------------------------------------


def _as_square(values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim == 2:
        if values.shape[0] != values.shape[1]:
            raise ValueError("residual-ratio matrix must be square")
        out = values.copy()
        np.fill_diagonal(out, 0.0)
        return out
    N = values.size
    n = int(round((1 + math.sqrt(1 + 4 * N)) / 2))
    if n * n - n != N:
        raise ValueError(f"{N} is not n*n - n for any n")
    return to_matrix(values, n)


def estimate_eta_offdiag(xi_hat) -> tuple[float, float, float, float]:
    """Moment estimates of ``(eta2, eta3, eta4, eta5)`` from residual ratios.

    Each estimate is the average of ``xi_a * xi_b`` over the ordered dyad
    pairs of one configuration minus the product of the averages of the two
    factors over the same pairs. On a dense array every such factor average
    equals the overall mean of ``xi``, so the centering is ``mean(xi)**2``.

    ``xi_hat`` is a per-dyad vector in edge order or an ``n x n`` array.
    """
    xi = _as_square(xi_hat)
    n = xi.shape[0]
    if n < 3:
        raise EstimationError("need at least 3 nodes for same-sender/receiver pairs")
    sizes = class_sizes(n)
    tot, _, s2, s3, s4, s5 = kernels.xi_moment_sums(xi)
    # sums of each factor over the pairs of a configuration
    f2 = tot
    f3 = (n - 2) * tot
    f5 = 2 * (n - 2) * tot
    S2, S3, S4, S5 = (sizes[c] for c in ("reciprocal", "same-sender", "same-receiver", "sender-receiver"))
    eta2 = s2 / S2 - (f2 * f2) / S2**2
    eta3 = s3 / S3 - (f3 * f3) / S3**2
    eta4 = s4 / S4 - (f3 * f3) / S4**2
    eta5 = s5 / S5 - 2.0 * (f3 * f5) / S5**2
    return float(eta2), float(eta3), float(eta4), float(eta5)


def estimate_eta1_naive(xi_hat, fitted) -> float:
    """Plug-in variance estimate; may be nonpositive.

    ``mean(xi^2) - mean(xi)^2 - mean(1 / g)``.
    """
    xi = np.asarray(xi_hat, dtype=float).ravel()
    g = np.asarray(fitted, dtype=float).ravel()
    N = xi.size
    return float(np.sum(xi * xi) / N - (np.sum(xi) / N) ** 2 - np.sum(1.0 / g) / N)


def zeta_values(xi_hat, fitted) -> np.ndarray:
    xi = np.asarray(xi_hat, dtype=float).ravel()
    g = np.asarray(fitted, dtype=float).ravel()
    return xi * xi - 1.0 - 1.0 / g


# ---------------------------------------------------------------------------
# k-shorth and its tuning
# ---------------------------------------------------------------------------


def kshorth(points, k: int, positive_center_only: bool = False) -> float | None:
    """Center of the shortest interval containing at least ``k`` of ``points``.

    Ties in width go to the interval with the smaller left endpoint. With
    ``positive_center_only`` intervals whose center is not strictly positive
    are skipped; returns None if none remain.
    """
    pts = np.sort(np.asarray(points, dtype=float).ravel())
    if pts.size == 0:
        raise ValueError("k-shorth of an empty set")
    if not 1 <= k <= pts.size:
        raise ValueError(f"k={k} outside [1, {pts.size}]")
    a = kernels.kshorth_index(pts, int(k), bool(positive_center_only))
    if a < 0:
        return None
    return float(0.5 * (pts[a] + pts[a + k - 1]))


def shorth_k(c: float, N: int) -> int:
    """``k = ceil(c log N)`` clipped to ``[1, N]``."""
    x = round(c * math.log(N), 9)
    return int(min(max(math.ceil(x), 1), N))


def cv_grid(zeta, size: int = 50) -> tuple[np.ndarray, bool]:
    """Geometric grid of ``c`` from ``2/log N`` to ``#{zeta > -max zeta}/log N``.

    Returns the grid and whether the range was degenerate (upper <= lower),
    in which case the grid is the single lower endpoint.
    """
    zeta = np.asarray(zeta, dtype=float).ravel()
    N = zeta.size
    lower = 2.0 / math.log(N)
    upper = float(np.sum(zeta > -np.max(zeta))) / math.log(N)
    if not upper > lower:
        return np.array([lower]), True
    return np.geomspace(lower, upper, size), False


@dataclass
class CVResult:
    c: float
    grid: np.ndarray
    losses: np.ndarray
    seed: int | None
    n_folds: int
    degenerate: bool = False
    warnings: list[str] = field(default_factory=list)


def cv_tune_c(
    zeta,
    seed: int | None = 0,
    n_folds: int = 10,
    grid_size: int = 50,
    positive_center_only: bool = True,
) -> CVResult:
    """Choose ``c`` by ``n_folds``-fold cross-validated squared error.

    For each candidate ``c`` the k-shorth center of the training folds
    (``k = ceil(c log N_train)``) predicts the held-out values; the loss is
    the mean over folds of the held-out mean squared error. Ties go to the
    smallest ``c``.
    """
    zeta = np.asarray(zeta, dtype=float).ravel()
    N = zeta.size
    if N < 2 * n_folds:
        raise EstimationError(f"cross-validation needs at least {2 * n_folds} points, got {N}")
    grid, degenerate = cv_grid(zeta, grid_size)
    notes = []
    if degenerate:
        notes.append("degenerate c range; using the lower endpoint 2/log N")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
        return CVResult(float(grid[0]), grid, np.zeros(1), seed, n_folds, True, notes)

    rng = np.random.default_rng(seed)
    fold = np.empty(N, dtype=np.int64)
    fold[rng.permutation(N)] = np.arange(N) % n_folds
    order = np.argsort(zeta, kind="stable")
    s = zeta[order]
    fs = fold[order]
    n_train = N - np.bincount(fold, minlength=n_folds)
    ks = np.array([[shorth_k(c, int(nt)) for nt in n_train] for c in grid], dtype=np.int64)
    losses = kernels.cv_losses(s, fs, n_folds, ks, positive_center_only)
    mean_loss = losses.mean(axis=1)
    if not np.any(np.isfinite(mean_loss)):
        notes.append("no candidate c produced a valid k-shorth interval in every fold")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
        return CVResult(float(grid[0]), grid, mean_loss, seed, n_folds, False, notes)
    best = int(np.argmin(mean_loss))
    return CVResult(float(grid[best]), grid, mean_loss, seed, n_folds, False, notes)


def estimate_eta1_hybrid(zeta, c: float, eta1_star: float | None = None) -> tuple[float, str]:
    """Plug-in variance when positive, else the positive-center k-shorth of ``zeta``.

    Returns ``(value, branch)`` with branch ``"naive"`` or ``"shorth"``.
    """
    zeta = np.asarray(zeta, dtype=float).ravel()
    if eta1_star is None:
        eta1_star = float(np.mean(zeta))
    if eta1_star > 0:
        return float(eta1_star), "naive"
    k = shorth_k(c, zeta.size)
    center = kshorth(zeta, k, positive_center_only=True)
    if center is None:
        raise EstimationError(
            f"no positive-center k-shorth interval with k={k}; try a larger c or check the data"
        )
    return center, "shorth"


# ---------------------------------------------------------------------------
# Parameter space and spectrum
# ---------------------------------------------------------------------------


@dataclass
class ParameterSpaceCheck:
    valid: bool
    violations: list[str]

    def __bool__(self) -> bool:
        return self.valid


def check_parameter_space(eta, n: int, rel_slack: float = 1e-12) -> ParameterSpaceCheck:
    """Test the closed-form nonnegative-definiteness conditions for ``n`` nodes.

    Every violated inequality is reported, not just the first.
    """
    if n < 4:
        raise ValueError("parameter-space check needs n >= 4")
    e1, e2, e3, e4, e5 = EtaVector.of(eta).as_array()
    scale = max(1.0, float(np.max(np.abs([e1, e2, e3, e4, e5]))))
    tol = rel_slack * scale
    out = []

    def need(ok: bool, text: str):
        if not ok:
            out.append(text)

    need(e1 >= -tol, "eta1 >= 0")
    need(-e1 - tol <= e2, "-eta1 <= eta2")
    need(e2 <= e1 + tol, "eta2 <= eta1")
    need(
        e5 >= -(e3 + e4) / 2 - (e2 + e1) / (2 * n - 4) - tol,
        "eta5 >= -(eta3 + eta4)/2 - (eta1 + eta2)/(2n - 4)",
    )
    need(e5 <= (e1 + e2 - e3 - e4) / 2 + tol, "eta5 <= (eta1 + eta2 - eta3 - eta4)/2")
    need(e5 >= (-e1 + e2 + e3 + e4) / 2 - tol, "eta5 >= (-eta1 + eta2 + eta3 + eta4)/2")
    iota = (
        (e4**2 + e3**2) * (n * n - 2 * n + 1)
        + 4 * e5**2 * (n * n - 6 * n + 9)
        + 2 * e3 * e4 * (1 - n * n + 2 * n)
    )
    kappa = (
        e2 * e5 * (8 * n - 24)
        + (e3 + e4) * e5 * (12 - 4 * n)
        + 4 * e2 * (e2 - (e3 + e4))
    )
    lhs = ((n - 3) * (e3 + e4) - 2 * e5 + 2 * e1) ** 2
    qscale = max(lhs, abs(iota) + abs(kappa), 1.0)
    need(lhs >= iota + kappa - rel_slack * qscale, "((n-3)(eta3+eta4) - 2 eta5 + 2 eta1)^2 >= iota + kappa")
    return ParameterSpaceCheck(not out, out)


def omega_e_eigenvalues(eta, n: int) -> dict[str, float]:
    """Distinct eigenvalues of the structured error covariance.

    The covariance commutes with simultaneous node relabeling, so it acts
    by a scalar on the constant vector, on symmetric and antisymmetric
    arrays with zero margins, and by a 2x2 matrix on the span of
    sender-only and receiver-only contrasts.
    """
    e1, e2, e3, e4, e5 = EtaVector.of(eta).as_array()
    A = e1 + (n - 2) * e3 - e4 - e5
    D = e1 - e3 + (n - 2) * e4 - e5
    B = e2 - e4 + (n - 3) * e5
    Bp = e2 - e3 + (n - 3) * e5
    tr = A + D
    disc = max((A - D) ** 2 + 4 * B * Bp, 0.0)
    vals = {
        "constant": e1 + e2 + (n - 2) * (e3 + e4) + (2 * n - 4) * e5,
        "contrast_low": 0.5 * (tr - math.sqrt(disc)),
        "contrast_high": 0.5 * (tr + math.sqrt(disc)),
        "antisymmetric": e1 - e2 - e3 - e4 + 2 * e5,
    }
    if n >= 4:
        vals["symmetric"] = e1 + e2 - e3 - e4 - 2 * e5
    return vals


def min_eigenvalue(eta, n: int, method: str = "closed") -> float:
    """Smallest eigenvalue of the error covariance for ``n`` nodes.

    ``method`` is ``"closed"`` (exact formula), ``"dense"`` (materialize and
    diagonalize) or ``"iterative"`` (Lanczos on the structured operator).
    """
    if method == "closed":
        return float(min(omega_e_eigenvalues(eta, n).values()))
    om = build_omega_e(eta, n)
    if method == "dense":
        return float(np.linalg.eigvalsh(om.materialize())[0])
    if method == "iterative":
        N = n * n - n
        op = LinearOperator((N, N), matvec=om.matvec, dtype=float)
        return float(eigsh(op, k=1, which="SA", tol=1e-10, return_eigenvectors=False)[0])
    raise ValueError(f"unknown eigenvalue method {method!r}")


def psd_correct(eta, n: int, method: str = "closed") -> tuple[EtaVector, float]:
    """Raise ``eta1`` just enough to make the error covariance PSD.

    Adding ``t`` to ``eta1`` adds ``t * I`` to the covariance, shifting every
    eigenvalue by ``t``. Returns the corrected vector and the shift applied
    (zero when already PSD).
    """
    eta = EtaVector.of(eta)
    lam = min_eigenvalue(eta, n, method)
    if lam >= 0:
        return eta, 0.0
    shift = -lam + PSD_SLACK
    return eta.replace_eta1(eta.eta1 + shift), float(shift)


# ---------------------------------------------------------------------------
# Structured covariance operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StructuredOmegaE:
    """Implicit error covariance; entries follow :func:`classify_pair`."""

    n: int
    eta: EtaVector

    @property
    def shape(self) -> tuple[int, int]:
        N = self.n * self.n - self.n
        return N, N

    def entry(self, a: tuple[int, int], b: tuple[int, int]) -> float:
        cls = classify_pair(a, b)
        if cls == "disjoint":
            return 0.0
        return float(self.eta.as_array()[_CLASS_ETA[cls]])

    def matvec(self, v) -> np.ndarray:
        e1, e2, e3, e4, e5 = self.eta.as_array()
        V = to_matrix(np.asarray(v, dtype=float), self.n)
        R = V.sum(axis=1)
        C = V.sum(axis=0)
        Vt = V.T
        out = (
            e1 * V
            + e2 * Vt
            + e3 * (R[:, None] - V)
            + e4 * (C[None, :] - V)
            + e5 * ((C[:, None] - Vt) + (R[None, :] - Vt))
        )
        return from_matrix(out)

    def materialize(self) -> np.ndarray:
        n = self.n
        if n > MATERIALIZE_MAX_N:
            raise ValueError(f"refusing to materialize a {n * n - n}-square matrix")
        s, r = dyad_arrays(n)
        S1, S2 = s[:, None], s[None, :]
        R1, R2 = r[:, None], r[None, :]
        e1, e2, e3, e4, e5 = self.eta.as_array()
        same = (S1 == S2) & (R1 == R2)
        recip = (S1 == R2) & (R1 == S2)
        sender = (S1 == S2) & ~same
        receiver = (R1 == R2) & ~same
        cross = ((S1 == R2) | (R1 == S2)) & ~recip
        M = e1 * same + e2 * recip + e3 * sender + e4 * receiver + e5 * cross
        return M.astype(float)


def build_omega_e(eta, n: int) -> StructuredOmegaE:
    return StructuredOmegaE(int(n), EtaVector.of(eta))


@dataclass(frozen=True)
class StructuredOmega0:
    """Implicit count covariance ``diag(g) + diag(g) Omega_e diag(g)``."""

    omega_e: StructuredOmegaE
    fitted: np.ndarray

    @property
    def n(self) -> int:
        return self.omega_e.n

    def entry(self, a: tuple[int, int], b: tuple[int, int]) -> float:
        from .relational import edge_index

        ia, ib = edge_index(*a, self.n), edge_index(*b, self.n)
        val = self.fitted[ia] * self.fitted[ib] * self.omega_e.entry(a, b)
        if ia == ib:
            val += self.fitted[ia]
        return float(val)

    def matvec(self, v) -> np.ndarray:
        g = self.fitted
        v = np.asarray(v, dtype=float)
        return g * v + g * self.omega_e.matvec(g * v)

    def materialize(self) -> np.ndarray:
        g = self.fitted
        return np.diag(g) + g[:, None] * self.omega_e.materialize() * g[None, :]


def build_omega_0(eta, fitted, n: int | None = None) -> StructuredOmega0:
    fitted = np.asarray(fitted, dtype=float)
    if n is None:
        n = int(round((1 + math.sqrt(1 + 4 * fitted.size)) / 2))
    return StructuredOmega0(build_omega_e(eta, n), fitted)


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------


@dataclass
class EtaEstimate:
    """Estimated covariance parameters with provenance.

    ``eta1_star`` is the raw plug-in variance; ``branch`` says whether it
    was kept (``"naive"``) or replaced by the k-shorth estimate
    (``"shorth"``); ``correction`` is the amount added to ``eta1`` to make
    the covariance PSD.
    """

    eta: EtaVector
    branch: str
    eta1_star: float
    c: float | None = None
    correction: float = 0.0
    cv_seed: int | None = None
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = self.eta.to_dict()
        d.update(
            branch=self.branch,
            eta1_star=self.eta1_star,
            c=self.c,
            psd_correction=self.correction,
            cv_seed=self.cv_seed,
        )
        return d


def estimate_eta(
    xi_hat,
    fitted,
    *,
    c: float | None = None,
    cv_seed: int | None = 0,
    correct: bool = True,
    eig_method: str = "closed",
) -> EtaEstimate:
    """Estimate all five parameters from residual ratios and fitted means."""
    xi = np.asarray(xi_hat, dtype=float).ravel()
    g = np.asarray(fitted, dtype=float).ravel()
    n = int(round((1 + math.sqrt(1 + 4 * xi.size)) / 2))
    e2, e3, e4, e5 = estimate_eta_offdiag(xi)
    star = estimate_eta1_naive(xi, g)
    notes: list[str] = []
    used_c = c
    if star <= 0:
        zeta = zeta_values(xi, g)
        if used_c is None:
            cv = cv_tune_c(zeta, seed=cv_seed)
            used_c = cv.c
            notes.extend(cv.warnings)
        e1, branch = estimate_eta1_hybrid(zeta, used_c, star)
    else:
        e1, branch = star, "naive"
    eta = EtaVector(e1, e2, e3, e4, e5)
    shift = 0.0
    if correct and n >= 3:
        eta, shift = psd_correct(eta, n, eig_method)
    return EtaEstimate(eta, branch, star, used_c, shift, cv_seed if branch == "shorth" else None, notes)
