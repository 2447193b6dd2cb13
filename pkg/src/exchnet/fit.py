"""Pseudo-maximum-likelihood fitting of the conditional Poisson objective.

The objective is the dyad-averaged Poisson log-likelihood with the latent
errors set to one,

    l(beta) = mean_{i != j} [ y_ij log g(x_ij' beta) - g(x_ij' beta) ],

maximized by damped Newton iterations.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DataError, LinkOverflowError, RankDeficientError
from .links import LinkSpec, get_link, link_eval
from .relational import RelationalDataset

__all__ = [
    "FitOptions",
    "FitResult",
    "MEAN_FLOOR",
    "check_full_rank",
    "fit_pml",
    "pml_gradient",
    "pml_hessian",
    "pseudo_loglik",
]

log = logging.getLogger(__name__)

MEAN_FLOOR = 1e-12


@dataclass(frozen=True)
class FitOptions:
    max_iterations: int = 100
    gradient_tol: float = 1e-8
    max_halvings: int = 30
    init: str = "auto"  # "auto" | "zero"
    ridge: float = 1e-10

    def __post_init__(self):
        if self.max_iterations < 1 or self.max_halvings < 1:
            raise ValueError("iteration and step-halving limits must be >= 1")
        if self.gradient_tol <= 0 or self.ridge < 0:
            raise ValueError("tolerances must be positive")
        if self.init not in ("auto", "zero"):
            raise ValueError(f"unknown init rule {self.init!r}")


@dataclass
class FitResult:
    """Outcome of :func:`fit_pml`.

    ``converged`` is only ever True when the gradient test passed; a
    non-converged result still carries the last iterate for diagnostics.
    """

    beta_hat: np.ndarray
    objective: float
    iterations: int
    converged: bool
    fitted: np.ndarray
    xi_hat: np.ndarray
    link: LinkSpec
    gradient_norm: float
    message: str = ""
    warnings: list[str] = field(default_factory=list)
    names: tuple[str, ...] = ()


def _check_offsets(data: RelationalDataset, link: LinkSpec) -> None:
    if data.offsets is not None and link.kind != "exponential":
        raise DataError("offsets are only supported with the exponential link")


def _evaluate(data: RelationalDataset, beta, link: LinkSpec):
    _check_offsets(data, link)
    return link_eval(link, data.linear_predictor(beta))


def pseudo_loglik(data: RelationalDataset, beta, link: LinkSpec | str = "exp") -> float:
    link = get_link(link)
    g, _, _ = _evaluate(data, beta, link)
    with np.errstate(divide="ignore"):
        logg = np.log(g)
    # 0 * log(0) contributes nothing
    term = np.where(data.y > 0, data.y * logg, 0.0) - g
    return float(np.mean(term))


def pml_gradient(data: RelationalDataset, beta, link: LinkSpec | str = "exp") -> np.ndarray:
    link = get_link(link)
    g, g1, _ = _evaluate(data, beta, link)
    w = (data.y / np.maximum(g, MEAN_FLOOR) - 1.0) * g1
    return data.X.T @ w / data.n_dyads


def pml_hessian(data: RelationalDataset, beta, link: LinkSpec | str = "exp") -> np.ndarray:
    link = get_link(link)
    g, g1, g2 = _evaluate(data, beta, link)
    gs = np.maximum(g, MEAN_FLOOR)
    w = -data.y * g1 * g1 / (gs * gs) + (data.y / gs - 1.0) * g2
    H = (data.X * w[:, None]).T @ data.X / data.n_dyads
    return 0.5 * (H + H.T)


def check_full_rank(X: np.ndarray, names=None) -> None:
    """Raise :class:`RankDeficientError` naming dependent columns."""
    X = np.asarray(X, dtype=float)
    N, p = X.shape
    if p > N:
        raise RankDeficientError(f"{p} columns but only {N} dyads", list(range(p)))
    scale = np.linalg.norm(X, axis=0)
    zero = np.flatnonzero(scale == 0)
    if zero.size:
        raise RankDeficientError(f"all-zero columns {_labels(zero, names)}", zero.tolist())
    _, R, piv = linalg.qr(X / scale, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    tol = d[0] * max(N, p) * np.finfo(float).eps * 10
    rank = int(np.sum(d > tol))
    if rank < p:
        bad = np.sort(piv[rank:])
        raise RankDeficientError(
            f"design has rank {rank} < {p}; linearly dependent columns {_labels(bad, names)}",
            bad.tolist(),
        )


def _labels(idx, names):
    if names:
        return ", ".join(f"{names[k]!r}" for k in idx)
    return ", ".join(str(k) for k in idx)


def _initial_beta(data: RelationalDataset, link: LinkSpec, rule: str) -> np.ndarray:
    beta = np.zeros(data.p)
    if rule == "zero" or link.kind != "exponential":
        return beta
    const = np.flatnonzero(np.all(data.X == data.X[0], axis=0) & (data.X[0] != 0))
    if const.size:
        k = const[0]
        ybar = max(float(np.mean(data.y)), MEAN_FLOOR)
        shift = 0.0 if data.offsets is None else float(np.mean(data.offsets))
        beta[k] = (math.log(ybar) - shift) / data.X[0, k]
    return beta


def fit_pml(
    data: RelationalDataset,
    link: LinkSpec | str = "exp",
    options: FitOptions | None = None,
    beta0=None,
) -> FitResult:
    """Maximize the pseudo log-likelihood by Newton steps with step halving.

    Each accepted step does not decrease the objective beyond floating-point
    roundoff; when no halving of the Newton step is acceptable the iteration
    stops with ``converged=False``.
    """
    link = get_link(link)
    opts = options or FitOptions()
    _check_offsets(data, link)
    check_full_rank(data.X, data.names)

    if not np.any(data.y > 0):
        beta = _initial_beta(data, link, opts.init) if beta0 is None else np.asarray(beta0, float)
        return _result(
            data, beta, link, 0, False,
            "all counts are zero; the pseudo-likelihood has no finite maximizer",
        )

    beta = _initial_beta(data, link, opts.init) if beta0 is None else np.array(beta0, dtype=float)
    try:
        g = _evaluate(data, beta, link)[0]
    except LinkOverflowError:
        beta = np.zeros(data.p)
        g = _evaluate(data, beta, link)[0]

    message = f"reached max_iterations={opts.max_iterations}"
    converged = False
    it = 0
    for it in range(1, opts.max_iterations + 1):
        grad = pml_gradient(data, beta, link)
        if np.max(np.abs(grad)) <= opts.gradient_tol:
            converged = True
            it -= 1
            message = "gradient tolerance met"
            break
        H = pml_hessian(data, beta, link)
        step = _newton_step(H, grad, opts.ridge)
        noise = _roundoff_bound(data.y, g)
        gnorm = float(np.max(np.abs(grad)))
        t = 1.0
        accepted = False
        for _ in range(opts.max_halvings + 1):
            cand = beta + t * step
            try:
                gc = _evaluate(data, cand, link)[0]
                gain = _objective_gain(data.y, g, gc)
            except LinkOverflowError:
                gain = -np.inf
            if np.isfinite(gain) and gain >= 0:
                accepted = True
                break
            # below roundoff the objective cannot rank steps; the gradient can
            if gain >= -noise and np.max(np.abs(pml_gradient(data, cand, link))) < gnorm:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            message = "step halving failed to improve the objective"
            break
        beta, g = cand, gc
    else:
        grad = pml_gradient(data, beta, link)
        if np.max(np.abs(grad)) <= opts.gradient_tol:
            converged = True
            message = "gradient tolerance met"

    return _result(data, beta, link, it, converged, message)


def _objective_gain(y, g_old, g_new) -> float:
    """Objective change summed term by term.

    Differencing two full objective values loses everything below about
    1e-16 of their magnitude, which near the optimum is larger than the gain
    of a Newton step.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        dlog = np.log(g_new) - np.log(g_old)
    terms = np.where(y > 0, y * dlog, 0.0) - (g_new - g_old)
    return float(np.mean(terms))


def _roundoff_bound(y, g) -> float:
    """Rounding error scale of one objective evaluation."""
    with np.errstate(divide="ignore"):
        logg = np.abs(np.log(g))
    mag = np.where(y > 0, y * logg, 0.0) + g
    return 64.0 * np.finfo(float).eps * float(np.mean(mag))


def _newton_step(H: np.ndarray, grad: np.ndarray, ridge: float) -> np.ndarray:
    # ascent direction for a concave objective: solve (-H) d = grad
    A = -H
    try:
        c, low = linalg.cho_factor(A, check_finite=True)
        return linalg.cho_solve((c, low), grad)
    except linalg.LinAlgError:
        pass
    scale = max(float(np.max(np.abs(np.diag(A)))), 1.0)
    jitter = ridge * scale
    eye = np.eye(A.shape[0])
    for _ in range(40):
        try:
            c, low = linalg.cho_factor(A + jitter * eye)
            return linalg.cho_solve((c, low), grad)
        except linalg.LinAlgError:
            jitter *= 10.0
    # non-concave region far from the optimum: fall back to gradient ascent
    return grad


def _result(data, beta, link, iterations, converged, message) -> FitResult:
    g, _, _ = link_eval(link, data.linear_predictor(beta))
    notes = []
    if np.any(g <= MEAN_FLOOR):
        notes.append(
            f"{int(np.sum(g <= MEAN_FLOOR))} fitted means at or below the floor {MEAN_FLOOR:g}"
        )
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=3)
    gs = np.maximum(g, MEAN_FLOOR)
    grad = pml_gradient(data, beta, link)
    if not converged:
        log.info("PML fit did not converge: %s", message)
    return FitResult(
        beta_hat=np.asarray(beta, dtype=float),
        objective=pseudo_loglik(data, beta, link),
        iterations=int(iterations),
        converged=bool(converged),
        fitted=gs,
        xi_hat=data.y / gs,
        link=link,
        gradient_norm=float(np.max(np.abs(grad))),
        message=message,
        warnings=notes,
        names=data.names,
    )
