"""Error generators, count simulation and Monte-Carlo coverage experiments.

Errors follow a mixed-effects construction

    e_ij = C (a_i + b_j + gamma_{ij} + eps_ij),   gamma_{ij} = gamma_{ji},

with ``(a_i, b_i)`` bivariate truncated normal and ``gamma``/``eps``
univariate truncated normal. ``C`` is the reciprocal of the sum of the
truncated means, so ``E[e_ij] = 1``. Any component may be switched off.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Any, Sequence

import numpy as np
from scipy import integrate, special

from .covariance import EtaVector, estimate_eta, estimate_eta_offdiag
from .errors import ExchnetError, SamplerError
from .fit import FitOptions, fit_pml
from .inference import run_inference
from .links import LinkSpec, get_link, link_eval
from .relational import (
    DyadicCovariateSpec,
    RelationalDataset,
    Term,
    build_design,
    dyad_arrays,
)

__all__ = [
    "EQ6_BETA",
    "EQ6_SPEC",
    "BivariateTruncNormalParams",
    "CoverageConfig",
    "CoverageResult",
    "MixedEffectsErrorParams",
    "TruncNormalParams",
    "bivariate_trunc_normal_moments",
    "coverage_experiment",
    "draw_eq6_covariates",
    "empirical_eta",
    "eta_from_error_params",
    "gen_weakly_exch_errors",
    "make_rng",
    "sample_bivariate_trunc_normal",
    "sample_trunc_normal",
    "setting_i",
    "setting_ii",
    "simulate_counts",
    "trunc_normal_mean",
    "trunc_normal_var",
]

log = logging.getLogger(__name__)

MIN_ACCEPTANCE = 1e-6
_SQRT_HALF_PI = math.sqrt(0.5 * math.pi)


# ---------------------------------------------------------------------------
# Parameter types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TruncNormalParams:
    """Normal(mu, sigma2) truncated to ``[lower, upper]``."""

    mu: float
    sigma2: float
    lower: float = -math.inf
    upper: float = math.inf

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not self.lower < self.upper:
            raise ValueError(f"need lower < upper, got [{self.lower}, {self.upper}]")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    def standardized(self) -> tuple[float, float]:
        return (self.lower - self.mu) / self.sigma, (self.upper - self.mu) / self.sigma


@dataclass(frozen=True)
class BivariateTruncNormalParams:
    """Bivariate normal truncated to the box ``lower <= (a, b) <= upper``."""

    mu: tuple[float, float]
    sigma2: tuple[float, float]
    rho: float
    lower: tuple[float, float] = (-math.inf, -math.inf)
    upper: tuple[float, float] = (math.inf, math.inf)

    def __post_init__(self):
        if not (self.sigma2[0] > 0 and self.sigma2[1] > 0):
            raise ValueError("variances must be positive")
        if not abs(self.rho) < 1:
            raise ValueError(f"|rho| must be < 1, got {self.rho}")
        if not (self.lower[0] < self.upper[0] and self.lower[1] < self.upper[1]):
            raise ValueError("truncation box is empty")

    @property
    def cov(self) -> np.ndarray:
        sa, sb = math.sqrt(self.sigma2[0]), math.sqrt(self.sigma2[1])
        c = self.rho * sa * sb
        return np.array([[self.sigma2[0], c], [c, self.sigma2[1]]])


@dataclass(frozen=True)
class MixedEffectsErrorParams:
    """Components of the mixed-effects error; ``None`` switches one off."""

    ab: BivariateTruncNormalParams | None = None
    gamma: TruncNormalParams | None = None
    eps: TruncNormalParams | None = None

    def __post_init__(self):
        if self.ab is None and self.gamma is None and self.eps is None:
            raise ValueError("at least one error component is required")

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    @classmethod
    def from_dict(cls, doc: dict) -> "MixedEffectsErrorParams":
        def uni(d):
            return None if d is None else TruncNormalParams(
                float(d["mu"]), float(d["sigma2"]), _num(d.get("lower", -math.inf)), _num(d.get("upper", math.inf))
            )

        ab = doc.get("ab")
        if ab is not None:
            ab = BivariateTruncNormalParams(
                tuple(float(v) for v in ab["mu"]),
                tuple(float(v) for v in ab["sigma2"]),
                float(ab["rho"]),
                tuple(_num(v) for v in ab.get("lower", (-math.inf, -math.inf))),
                tuple(_num(v) for v in ab.get("upper", (math.inf, math.inf))),
            )
        return cls(ab, uni(doc.get("gamma")), uni(doc.get("eps")))


def _num(v) -> float:
    if isinstance(v, str):
        return {"inf": math.inf, "+inf": math.inf, "-inf": -math.inf}[v.lower()]
    return float(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    return obj


def setting_i() -> MixedEffectsErrorParams:
    """I.i.d. errors: truncN(-7, 1, 0, inf) rescaled to unit mean."""
    return MixedEffectsErrorParams(eps=TruncNormalParams(-7.0, 1.0, 0.0, math.inf))


def setting_ii() -> MixedEffectsErrorParams:
    """Dependent errors with sender, receiver and reciprocal components."""
    return MixedEffectsErrorParams(
        ab=BivariateTruncNormalParams((-1.0, 1.0), (1.0, 1.0), 0.5, (0.0, 0.0), (math.inf, math.inf)),
        gamma=TruncNormalParams(0.0, 1.0, 0.0, math.inf),
        eps=TruncNormalParams(1.0, 6.0, 0.0, math.inf),
    )


SETTINGS = {"i": setting_i, "ii": setting_ii}


# ---------------------------------------------------------------------------
# Univariate truncated normal
# ---------------------------------------------------------------------------


def _mills(x: float) -> float:
    """Upper-tail Mills ratio Q(x)/phi(x); zero at +inf."""
    if x == math.inf:
        return 0.0
    return _SQRT_HALF_PI * float(special.erfcx(x / math.sqrt(2.0)))


def _std_moments(a: float, b: float) -> tuple[float, float, float]:
    """Mass, mean and variance of N(0,1) truncated to ``[a, b]``.

    The mass is returned on the natural scale and may underflow to zero
    for far-tail intervals; the mean and variance do not.
    """
    if a >= 0 or b <= 0:
        flip = b <= 0
        if flip:
            a, b = -b, -a
        # right tail: scale everything by phi(a)
        decay = 0.0 if b == math.inf else math.exp(-0.5 * (b - a) * (b + a))
        zr = _mills(a) - _mills(b) * decay
        if not zr > 0 or not math.isfinite(zr):
            raise SamplerError(f"truncation interval [{a}, {b}] has no numerically resolvable mass")
        m = (1.0 - decay) / zr
        bterm = 0.0 if b == math.inf else b * decay
        v = 1.0 + (a - bterm) / zr - m * m
        mass = zr * math.exp(-0.5 * a * a) / math.sqrt(2 * math.pi)
        return mass, (-m if flip else m), max(v, 0.0)
    mass = float(special.ndtr(b) - special.ndtr(a))
    if not mass > 0:
        raise SamplerError(f"truncation interval [{a}, {b}] has zero mass")
    pa = math.exp(-0.5 * a * a) / math.sqrt(2 * math.pi) if a > -math.inf else 0.0
    pb = math.exp(-0.5 * b * b) / math.sqrt(2 * math.pi) if b < math.inf else 0.0
    apa = a * pa if a > -math.inf else 0.0
    bpb = b * pb if b < math.inf else 0.0
    m = (pa - pb) / mass
    v = 1.0 + (apa - bpb) / mass - m * m
    return mass, m, max(v, 0.0)


def trunc_normal_mean(params: TruncNormalParams) -> float:
    a, b = params.standardized()
    _, m, _ = _std_moments(a, b)
    return params.mu + params.sigma * m


def trunc_normal_var(params: TruncNormalParams) -> float:
    a, b = params.standardized()
    _, _, v = _std_moments(a, b)
    return params.sigma2 * v


def _std_trunc_ppf(u: np.ndarray, a: float, b: float) -> np.ndarray:
    """Inverse CDF of N(0,1) on ``[a, b]`` evaluated in log space."""
    flip = a > 0
    if flip:
        a, b = -b, -a
    la = float(special.log_ndtr(a)) if a > -math.inf else -math.inf
    lb = float(special.log_ndtr(b))
    r = math.exp(la - lb)  # Phi(a) / Phi(b)
    logp = lb + np.log(r + u * (1.0 - r))
    z = special.ndtri_exp(logp)
    z = np.clip(z, a, b)
    return -z if flip else z


def sample_trunc_normal(params: TruncNormalParams, rng: np.random.Generator, size=None):
    """Inverse-CDF sampling; accurate far into either tail."""
    a, b = params.standardized()
    _std_moments(a, b)  # raises on an unresolvable interval
    u = rng.random(size)
    z = _std_trunc_ppf(np.asarray(u, dtype=float), a, b)
    x = params.mu + params.sigma * z
    return float(x) if size is None else x


# ---------------------------------------------------------------------------
# Bivariate truncated normal
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def bivariate_trunc_normal_moments(params: BivariateTruncNormalParams) -> dict[str, float]:
    """Box probability and first two moments of the truncated pair.

    The outer integral over ``a`` is done by adaptive quadrature; the inner
    conditional law of ``b`` given ``a`` is a truncated normal handled in
    closed form.
    """
    (ma, mb), (va, vb), rho = params.mu, params.sigma2, params.rho
    sa, sb = math.sqrt(va), math.sqrt(vb)
    cs = sb * math.sqrt(1.0 - rho * rho)
    # the standard normal weight underflows beyond 40, and leaving wide
    # limits in place lets the quadrature miss a narrow bulk entirely
    lo = max((params.lower[0] - ma) / sa, -40.0)
    hi = min((params.upper[0] - ma) / sa, 40.0)
    if not lo < hi:
        raise SamplerError("truncation box has zero probability")

    def inner(t):
        cm = mb + rho * sb * t
        bl = (params.lower[1] - cm) / cs
        bu = (params.upper[1] - cm) / cs
        try:
            mass, m, v = _std_moments(bl, bu)
        except SamplerError:
            return 0.0, 0.0, 0.0
        phi = math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)
        w = phi * mass
        mean_b = cm + cs * m
        return w, mean_b, cs * cs * v + mean_b * mean_b

    def quad(f):
        val, _ = integrate.quad(f, lo, hi, limit=400, epsabs=1e-14, epsrel=1e-12)
        return val

    Z = quad(lambda t: inner(t)[0])
    if not Z > 0:
        raise SamplerError("truncation box has zero probability")
    Et = quad(lambda t: t * inner(t)[0]) / Z
    Et2 = quad(lambda t: t * t * inner(t)[0]) / Z
    Eb = quad(lambda t: inner(t)[0] * inner(t)[1]) / Z
    Eb2 = quad(lambda t: inner(t)[0] * inner(t)[2]) / Z
    Etb = quad(lambda t: t * inner(t)[0] * inner(t)[1]) / Z
    mean_a = ma + sa * Et
    var_a = va * (Et2 - Et * Et)
    var_b = Eb2 - Eb * Eb
    cov_ab = sa * (Etb - Et * Eb)
    return {
        "probability": Z,
        "mean_a": mean_a,
        "mean_b": Eb,
        "var_a": var_a,
        "var_b": var_b,
        "cov_ab": cov_ab,
    }


def sample_bivariate_trunc_normal(
    params: BivariateTruncNormalParams, rng: np.random.Generator, size: int | None = None
):
    """Rejection sampling from the untruncated bivariate normal.

    Raises :class:`SamplerError` if the box probability is below 1e-6.
    """
    accept = bivariate_trunc_normal_moments(params)["probability"]
    if accept < MIN_ACCEPTANCE:
        raise SamplerError(
            f"acceptance rate {accept:.3g} below {MIN_ACCEPTANCE:g}; "
            "reparameterize the truncation box or location"
        )
    m = 1 if size is None else int(size)
    chol = np.linalg.cholesky(params.cov)
    lo = np.asarray(params.lower)
    hi = np.asarray(params.upper)
    mu = np.asarray(params.mu)
    out = np.empty((m, 2))
    filled = 0
    while filled < m:
        need = m - filled
        batch = int(min(max(1.2 * need / accept + 16, 64), 5_000_000))
        z = rng.standard_normal((batch, 2)) @ chol.T + mu
        ok = z[np.all((z >= lo) & (z <= hi), axis=1)]
        take = min(need, ok.shape[0])
        out[filled : filled + take] = ok[:take]
        filled += take
    if size is None:
        return float(out[0, 0]), float(out[0, 1])
    return out


# ---------------------------------------------------------------------------
# Weakly exchangeable errors
# ---------------------------------------------------------------------------


def _component_moments(params: MixedEffectsErrorParams) -> dict[str, float]:
    mom = dict.fromkeys(("mean_a", "mean_b", "var_a", "var_b", "cov_ab",
                         "mean_g", "var_g", "mean_e", "var_e"), 0.0)
    if params.ab is not None:
        biv = bivariate_trunc_normal_moments(params.ab)
        for k in ("mean_a", "mean_b", "var_a", "var_b", "cov_ab"):
            mom[k] = biv[k]
    if params.gamma is not None:
        mom["mean_g"] = trunc_normal_mean(params.gamma)
        mom["var_g"] = trunc_normal_var(params.gamma)
    if params.eps is not None:
        mom["mean_e"] = trunc_normal_mean(params.eps)
        mom["var_e"] = trunc_normal_var(params.eps)
    return mom


def normalization_constant(params: MixedEffectsErrorParams) -> float:
    mom = _component_moments(params)
    total = mom["mean_a"] + mom["mean_b"] + mom["mean_g"] + mom["mean_e"]
    if not total > 0:
        raise SamplerError("error components must have a positive total mean")
    return 1.0 / total


def eta_from_error_params(params: MixedEffectsErrorParams) -> EtaVector:
    """Covariance parameters implied by the mixed-effects generator.

    With ``C`` the normalization constant:
    ``eta1 = C^2 (Var a + Var b + Var gamma + Var eps)``,
    ``eta2 = C^2 (2 Cov(a, b) + Var gamma)``, ``eta3 = C^2 Var a``,
    ``eta4 = C^2 Var b`` and ``eta5 = C^2 Cov(a, b)``.
    """
    mom = _component_moments(params)
    C2 = normalization_constant(params) ** 2
    return EtaVector(
        C2 * (mom["var_a"] + mom["var_b"] + mom["var_g"] + mom["var_e"]),
        C2 * (2 * mom["cov_ab"] + mom["var_g"]),
        C2 * mom["var_a"],
        C2 * mom["var_b"],
        C2 * mom["cov_ab"],
    )


def gen_weakly_exch_errors(params: MixedEffectsErrorParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """Per-dyad errors in edge order; positive with unit expectation."""
    if n < 3:
        raise ValueError("need n >= 3")
    s, r = dyad_arrays(n)
    total = np.zeros(n * n - n)
    if params.ab is not None:
        ab = sample_bivariate_trunc_normal(params.ab, rng, n)
        total += ab[s, 0] + ab[r, 1]
    if params.gamma is not None:
        iu, ju = np.triu_indices(n, k=1)
        gam = np.zeros((n, n))
        draws = sample_trunc_normal(params.gamma, rng, iu.size)
        gam[iu, ju] = draws
        gam[ju, iu] = draws
        total += gam[s, r]
    if params.eps is not None:
        total += sample_trunc_normal(params.eps, rng, n * n - n)
    return normalization_constant(params) * total


def empirical_eta(errors) -> EtaVector:
    """Configuration-grouped sample covariances of one error realization."""
    e = np.asarray(errors, dtype=float).ravel()
    e2, e3, e4, e5 = estimate_eta_offdiag(e)
    return EtaVector(float(np.var(e)), e2, e3, e4, e5)


# ---------------------------------------------------------------------------
# Counts
# ---------------------------------------------------------------------------

EQ6_SPEC = DyadicCovariateSpec(
    (Term("edge", "x1"), Term("product", "x2"), Term("absdiff", "x3"), Term("edge", "x4")),
    link="exp",
)
EQ6_BETA = (1.0, -0.5, -0.5, -1.0)


def draw_eq6_covariates(n: int, rng: np.random.Generator):
    """Node table ``{x2, x3}`` and edge table ``{x1, x4}`` for the simulation design.

    ``x1 ~ N(2, 1)`` and ``x4 ~ N(1, 1)`` per dyad, ``x2 ~ Bernoulli(0.6)`` and
    ``x3 ~ N(1, 1)`` per node.
    """
    N = n * n - n
    x1 = rng.normal(2.0, 1.0, N)
    x2 = (rng.random(n) < 0.6).astype(float)
    x3 = rng.normal(1.0, 1.0, n)
    x4 = rng.normal(1.0, 1.0, N)
    return {"x2": x2, "x3": x3}, {"x1": x1, "x4": x4}


def simulate_counts(
    X,
    beta,
    errors,
    link: LinkSpec | str,
    rng: np.random.Generator,
    *,
    offsets=None,
    names: Sequence[str] = (),
) -> RelationalDataset:
    """Draw ``y_ij ~ Poisson(g(x_ij' beta) e_ij)`` independently given the errors."""
    link = get_link(link)
    X = np.asarray(X, dtype=float)
    e = np.asarray(errors, dtype=float).ravel()
    if np.any(e <= 0):
        raise SamplerError("errors must be strictly positive")
    z = X @ np.asarray(beta, dtype=float)
    if offsets is not None:
        z = z + offsets
    g, _, _ = link_eval(link, z)
    y = rng.poisson(g * e).astype(float)
    N = X.shape[0]
    n = int(round((1 + math.sqrt(1 + 4 * N)) / 2))
    return RelationalDataset(n, y, X, offsets, tuple(names))


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for the stream ``(seed, *key)``.

    Streams for different keys are independent, so replications can run in
    any order without changing results.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))))


# ---------------------------------------------------------------------------
# Coverage experiments
# ---------------------------------------------------------------------------

METHODS = ("model", "naive", "oracle")


@dataclass
class CoverageConfig:
    """Monte-Carlo coverage design.

    ``x_realizations`` covariate draws are made per ``n``; within each, the
    design is held fixed while ``replications`` error/count draws are made.
    """

    n: Sequence[int] = (100,)
    beta: Sequence[float] = EQ6_BETA
    link: str = "exp"
    covariates: str = "eq6"
    setting: str | dict = "ii"
    replications: int = 500
    x_realizations: int = 1
    alpha: float = 0.05
    seed: int = 20240101
    methods: Sequence[str] = METHODS
    oracle_true_beta: bool = False
    threads: int = 1
    cv_seed: int = 0

    def __post_init__(self):
        if isinstance(self.n, int):
            self.n = (self.n,)
        self.n = tuple(int(v) for v in self.n)
        self.beta = tuple(float(v) for v in self.beta)
        self.methods = tuple(self.methods)
        if self.replications < 1 or self.x_realizations < 1:
            raise ValueError("replications and x_realizations must be >= 1")
        bad = set(self.methods) - set(METHODS) - {"naive-overdispersed"}
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.covariates != "eq6":
            raise ValueError(f"unknown covariate generator {self.covariates!r}")
        if len(self.beta) != len(EQ6_SPEC.terms):
            raise ValueError(f"beta must have {len(EQ6_SPEC.terms)} entries for the eq6 design")
        if any(v < 3 for v in self.n):
            raise ValueError("every n must be >= 3")

    def error_params(self) -> MixedEffectsErrorParams:
        if isinstance(self.setting, str):
            try:
                return SETTINGS[self.setting]()
            except KeyError:
                raise ValueError(f"unknown error setting {self.setting!r}") from None
        return MixedEffectsErrorParams.from_dict(self.setting)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n"] = list(self.n)
        d["beta"] = list(self.beta)
        d["methods"] = list(self.methods)
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "CoverageConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown coverage config keys {sorted(unknown)}")
        return cls(**doc)

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("threads")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


@dataclass
class CoverageResult:
    config: CoverageConfig
    eta_true: EtaVector
    table: list[dict[str, Any]]
    replications: list[dict[str, Any]]
    wall_time: float = 0.0
    notes: list[str] = field(default_factory=list)

    def coverage(self, method: str, n: int | None = None, x_realization: int | None = None) -> np.ndarray:
        """Pooled coverage per coefficient across the selected rows."""
        rows = [r for r in self.replications if r["method"] == method and r["status"] == "ok"]
        if n is not None:
            rows = [r for r in rows if r["n"] == n]
        if x_realization is not None:
            rows = [r for r in rows if r["x_realization"] == x_realization]
        p = len(self.config.beta)
        hits = np.zeros(p)
        counts = np.zeros(p)
        for r in rows:
            hits[r["coefficient_index"]] += r["covered"]
            counts[r["coefficient_index"]] += 1
        with np.errstate(invalid="ignore"):
            return hits / counts


def _one_replication(task) -> list[dict[str, Any]]:
    (cfg, params, eta_true, n, xr, rep, X, names) = task
    rng = make_rng(cfg.seed, n, xr, rep + 1)
    beta = np.asarray(cfg.beta)
    base = {"n": n, "x_realization": xr, "replication": rep}
    rows: list[dict[str, Any]] = []

    def fail(method, status):
        for k, nm in enumerate(names):
            rows.append({**base, "method": method, "coefficient": nm, "coefficient_index": k,
                         "estimate": math.nan, "se": math.nan, "ci_lo": math.nan, "ci_hi": math.nan,
                         "covered": 0, "status": status})

    try:
        e = gen_weakly_exch_errors(params, n, rng)
        data = simulate_counts(X, beta, e, cfg.link, rng, names=names)
        fit = fit_pml(data, cfg.link, FitOptions())
    except ExchnetError as exc:
        for m in cfg.methods:
            fail(m, f"fit-error: {exc}")
        return rows
    if not fit.converged:
        for m in cfg.methods:
            fail(m, f"not-converged: {fit.message}")
        return rows

    est = None
    for m in cfg.methods:
        try:
            if m in ("model", "naive-overdispersed") and est is None:
                est = estimate_eta(fit.xi_hat, fit.fitted, cv_seed=cfg.cv_seed)
            res = run_inference(
                data, fit, m, cfg.alpha,
                eta_true=eta_true if m == "oracle" else None,
                eta_estimate=est,
                beta_for_omega=beta if (m == "oracle" and cfg.oracle_true_beta) else None,
            )
        except ExchnetError as exc:
            fail(m, f"inference-error: {exc}")
            continue
        cov = res.covers(beta)
        for k, nm in enumerate(names):
            rows.append({**base, "method": m, "coefficient": nm, "coefficient_index": k,
                         "estimate": float(res.beta_hat[k]), "se": float(res.se[k]),
                         "ci_lo": float(res.ci_lo[k]), "ci_hi": float(res.ci_hi[k]),
                         "covered": int(cov[k]), "status": "ok"})
    return rows


def coverage_experiment(config: CoverageConfig, progress=None) -> CoverageResult:
    """Run the coverage study; results do not depend on ``threads``.

    Replications whose fit or inference fails are logged with a status and
    excluded from the coverage denominators; the ``failures`` column counts
    them.
    """
    t0 = time.perf_counter()
    params = config.error_params()
    eta_true = eta_from_error_params(params)
    tasks = []
    for n in config.n:
        for xr in range(config.x_realizations):
            xrng = make_rng(config.seed, n, xr, 0)
            nodes, edges = draw_eq6_covariates(n, xrng)
            X, names = build_design(nodes, edges, EQ6_SPEC, n=n)
            for rep in range(config.replications):
                tasks.append((config, params, eta_true, n, xr, rep, X, names))

    if config.threads > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            chunks = list(pool.map(_one_replication, tasks))
    else:
        chunks = []
        for k, t in enumerate(tasks):
            chunks.append(_one_replication(t))
            if progress is not None:
                progress(k + 1, len(tasks))
    rows = [r for chunk in chunks for r in chunk]

    table = []
    names = EQ6_SPEC.names
    for n in config.n:
        for xr in range(config.x_realizations):
            for m in config.methods:
                sel = [r for r in rows if r["n"] == n and r["x_realization"] == xr and r["method"] == m]
                for k, nm in enumerate(names):
                    rk = [r for r in sel if r["coefficient_index"] == k]
                    ok = [r for r in rk if r["status"] == "ok"]
                    nfail = len(rk) - len(ok)
                    if ok:
                        cov = sum(r["covered"] for r in ok) / len(ok)
                        se = math.sqrt(cov * (1 - cov) / len(ok))
                    else:
                        cov = se = math.nan
                    table.append({"n": n, "method": m, "coefficient": nm, "coverage": cov,
                                  "mc_se": se, "failures": nfail, "x_realization": xr,
                                  "successes": len(ok)})
    return CoverageResult(config, eta_true, table, rows, time.perf_counter() - t0)
