"""Sandwich covariance and Wald intervals for the PML coefficients.

With ``u_ij = g'(x_ij' b) x_ij`` and ``v_ij = g'^2 / g  x_ij x_ij'``,

    J = (n^2 - n)^-1  sum v_ij
    L = (n^3 - n^2)^-1 [ sum v_ij + eta1 sum u_ij u_ij'
                         + eta2 sum_{reciprocal} + eta3 sum_{same sender}
                         + eta4 sum_{same receiver} + eta5 sum_{sender-receiver} ]
    Var(b_hat) ~= n^-1 J^-1 L J^-1

The grouped sums are built from per-node row and column totals of ``u``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from ._backend import kernels
from .covariance import (
    EtaEstimate,
    EtaVector,
    build_omega_0,
    check_parameter_space,
    estimate_eta,
)
from .errors import ConvergenceError, EstimationError, ParameterSpaceError
from .fit import MEAN_FLOOR, FitResult
from .links import LinkSpec, get_link, link_eval
from .relational import RelationalDataset, to_matrix

__all__ = [
    "MODES",
    "InferenceResult",
    "compute_J",
    "compute_L",
    "compute_L_bruteforce",
    "confidence_intervals",
    "norm_ppf",
    "run_inference",
    "sandwich_vcov",
]

MODES = ("model", "naive", "naive-overdispersed", "oracle")
COND_WARN = 1e12


# ---------------------------------------------------------------------------
# Standard normal quantile
# ---------------------------------------------------------------------------

# Acklam's rational approximation (relative error ~1e-9), refined below.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _acklam(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / (
            (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        )
    if p > 1.0 - _P_LOW:
        return -_acklam(1.0 - p)
    q = p - 0.5
    r = q * q
    return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / (
        ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    )


def norm_ppf(p: float) -> float:
    """Inverse standard normal CDF, accurate to about 1e-15 absolute."""
    p = float(p)
    if not 0.0 < p < 1.0:
        if p == 0.0:
            return -math.inf
        if p == 1.0:
            return math.inf
        raise ValueError(f"probability {p} outside [0, 1]")
    # work in the lower tail so the CDF residual has full relative precision
    if p > 0.5:
        return -norm_ppf(1.0 - p)
    x = _acklam(p)
    for _ in range(2):
        cdf = 0.5 * math.erfc(-x / math.sqrt(2.0))
        pdf = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        if pdf == 0.0:
            break
        e = (cdf - p) / pdf
        x = x - e / (1.0 + 0.5 * x * e)  # Halley step
    return x


# ---------------------------------------------------------------------------
# J and L
# ---------------------------------------------------------------------------


def _link_terms(data: RelationalDataset, beta, link: LinkSpec):
    g, g1, _ = link_eval(link, data.linear_predictor(beta))
    if np.any(g <= 0):
        raise EstimationError("fitted means must be positive")
    return np.maximum(g, MEAN_FLOOR), g1


def compute_J(data: RelationalDataset, beta_hat, link: LinkSpec | str = "exp") -> np.ndarray:
    link = get_link(link)
    g, g1 = _link_terms(data, beta_hat, link)
    w = g1 * g1 / g
    J = (data.X * w[:, None]).T @ data.X / data.n_dyads
    return 0.5 * (J + J.T)


def compute_L(data: RelationalDataset, beta_hat, link: LinkSpec | str, eta) -> np.ndarray:
    """Middle matrix of the sandwich via configuration-grouped sums.

    Runs in ``O(n^2 p^2)``; the count covariance is never formed.
    """
    link = get_link(link)
    eta = EtaVector.of(eta)
    e1, e2, e3, e4, e5 = eta.as_array()
    n = data.n
    g, g1 = _link_terms(data, beta_hat, link)
    X = data.X
    V = (X * (g1 * g1 / g)[:, None]).T @ X
    U = X * g1[:, None]
    D, S2, S3, S4, M5 = kernels.grouped_outer_sums(to_matrix(U, n))
    inner = V + e1 * D + e2 * S2 + e3 * S3 + e4 * S4 + e5 * (M5 + M5.T)
    L = inner / (n**3 - n**2)
    return 0.5 * (L + L.T)


def compute_L_bruteforce(data: RelationalDataset, beta_hat, link: LinkSpec | str, eta) -> np.ndarray:
    """Reference ``L`` from the materialized count covariance (small ``n`` only)."""
    link = get_link(link)
    g, g1 = _link_terms(data, beta_hat, link)
    W = data.X * (g1 / g)[:, None]
    omega0 = build_omega_0(eta, g, data.n).materialize()
    return W.T @ omega0 @ W / (data.n**3 - data.n**2)


def sandwich_vcov(J_hat, L_hat, n: int) -> tuple[np.ndarray, list[str]]:
    """``n^-1 J^-1 L J^-1`` via one Cholesky factorization of ``J``."""
    J_hat = np.atleast_2d(np.asarray(J_hat, dtype=float))
    L_hat = np.atleast_2d(np.asarray(L_hat, dtype=float))
    notes = []
    try:
        cho = linalg.cho_factor(J_hat)
    except linalg.LinAlgError:
        raise EstimationError("J is singular or not positive definite; reduce the design") from None
    cond = np.linalg.cond(J_hat)
    if not np.isfinite(cond) or cond > COND_WARN:
        notes.append(f"J is ill-conditioned (condition number {cond:.3g})")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
    A = linalg.cho_solve(cho, L_hat)  # J^-1 L
    V = linalg.cho_solve(cho, A.T).T / n  # (J^-1 L) J^-1, using symmetry of J
    return 0.5 * (V + V.T), notes


def confidence_intervals(beta_hat, vcov, alpha: float = 0.05):
    """Wald intervals; returns ``(se, lo, hi, warnings)``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    beta_hat = np.asarray(beta_hat, dtype=float)
    var = np.diag(np.atleast_2d(vcov)).copy()
    notes = []
    if np.any(var < 0):
        notes.append("negative variance on the diagonal clipped to zero")
        var = np.maximum(var, 0.0)
    se = np.sqrt(var)
    if np.any(se == 0):
        notes.append("zero standard error: degenerate interval")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
    z = norm_ppf(1.0 - alpha / 2.0)
    return se, beta_hat - z * se, beta_hat + z * se, notes


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------


@dataclass
class InferenceResult:
    mode: str
    alpha: float
    beta_hat: np.ndarray
    J_hat: np.ndarray
    L_hat: np.ndarray
    vcov: np.ndarray
    se: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    eta: EtaVector
    eta_estimate: EtaEstimate | None = None
    names: tuple[str, ...] = ()
    warnings: list[str] = field(default_factory=list)

    def covers(self, beta_true) -> np.ndarray:
        b = np.asarray(beta_true, dtype=float)
        return (self.ci_lo <= b) & (b <= self.ci_hi)

    def to_report(self) -> dict:
        """Report block; layout matches ``schemas/report.schema.json``."""
        names = self.names or tuple(f"x{k + 1}" for k in range(self.beta_hat.size))
        eta = self.eta.to_dict()
        if self.eta_estimate is not None:
            est = self.eta_estimate
            eta.update(
                branch=est.branch,
                eta1_star=est.eta1_star,
                c=est.c,
                psd_correction=est.correction,
                cv_seed=est.cv_seed,
            )
        return {
            "mode": self.mode,
            "alpha": self.alpha,
            "J": self.J_hat.tolist(),
            "L": self.L_hat.tolist(),
            "vcov": self.vcov.tolist(),
            "coefficients": [
                {
                    "name": nm,
                    "estimate": float(b),
                    "se": float(s),
                    "ci_lo": float(lo),
                    "ci_hi": float(hi),
                }
                for nm, b, s, lo, hi in zip(names, self.beta_hat, self.se, self.ci_lo, self.ci_hi)
            ],
            "eta": eta,
            "warnings": list(self.warnings),
        }


def run_inference(
    data: RelationalDataset,
    fit: FitResult,
    mode: str = "model",
    alpha: float = 0.05,
    eta_true=None,
    *,
    eta_estimate: EtaEstimate | None = None,
    cv_seed: int | None = 0,
    c: float | None = None,
    beta_for_omega=None,
) -> InferenceResult:
    """Sandwich inference for a converged fit.

    Modes: ``model`` estimates eta (hybrid eta1 plus PSD correction);
    ``naive`` uses eta = 0, i.e. independent Poisson counts;
    ``naive-overdispersed`` keeps the estimated eta1 and zeroes the rest;
    ``oracle`` uses the supplied true eta.

    ``beta_for_omega`` replaces the estimate inside the count covariance
    (oracle sensitivity runs); ``J`` always uses the estimate.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    if not fit.converged:
        raise ConvergenceError(f"cannot run inference on a non-converged fit: {fit.message}")
    link = fit.link
    beta = fit.beta_hat
    notes = list(fit.warnings)
    est = None
    if mode == "oracle":
        if eta_true is None:
            raise ValueError("oracle mode requires eta_true")
        eta = EtaVector.of(eta_true)
        if data.n >= 4:
            chk = check_parameter_space(eta, data.n)
            if not chk.valid:
                raise ParameterSpaceError("true eta is outside the parameter space", chk.violations)
    elif mode == "naive":
        eta = EtaVector.zero()
    else:
        est = eta_estimate or estimate_eta(fit.xi_hat, fit.fitted, c=c, cv_seed=cv_seed)
        notes.extend(est.warnings)
        eta = est.eta if mode == "model" else EtaVector(est.eta.eta1)
    J = compute_J(data, beta, link)
    if beta_for_omega is None:
        L = compute_L(data, beta, link, eta)
    else:
        L = _l_mixed(data, beta, np.asarray(beta_for_omega, float), link, eta)
    V, vnotes = sandwich_vcov(J, L, data.n)
    notes.extend(vnotes)
    se, lo, hi, cinotes = confidence_intervals(beta, V, alpha)
    notes.extend(cinotes)
    return InferenceResult(mode, alpha, beta, J, L, V, se, lo, hi, eta, est, fit.names, notes)


def _l_mixed(data, beta, beta_omega, link, eta) -> np.ndarray:
    # gradient factors at beta_hat, count covariance at beta_omega
    e1, e2, e3, e4, e5 = EtaVector.of(eta).as_array()
    n = data.n
    g, g1 = _link_terms(data, beta, link)
    g0, _ = _link_terms(data, beta_omega, link)
    W = data.X * (g1 / g)[:, None]
    V = (W * g0[:, None]).T @ W
    U = W * g0[:, None]
    D, S2, S3, S4, M5 = kernels.grouped_outer_sums(to_matrix(U, n))
    inner = V + e1 * D + e2 * S2 + e3 * S3 + e4 * S4 + e5 * (M5 + M5.T)
    L = inner / (n**3 - n**2)
    return 0.5 * (L + L.T)
