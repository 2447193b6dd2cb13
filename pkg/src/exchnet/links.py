"""Positive link functions with analytic first and second derivatives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LinkOverflowError

__all__ = ["LINK_KINDS", "LinkSpec", "get_link", "link_eval"]

LINK_KINDS = ("exponential", "logistic", "arccot")
_LOG_MAX = float(np.log(np.finfo(float).max))

_ALIASES = {
    "exp": "exponential",
    "exponential": "exponential",
    "log": "exponential",
    "logistic": "logistic",
    "logit": "logistic",
    "arccot": "arccot",
    "arc-cotangent": "arccot",
    "arccotangent": "arccot",
}


@dataclass(frozen=True)
class LinkSpec:
    """A link ``g: R -> (0, inf)`` together with ``g'`` and ``g''``.

    Parameters
    ----------
    kind : {"exponential", "logistic", "arccot"}
    overflow_bound : float
        Largest linear predictor accepted by the exponential link. Values
        above it raise :class:`LinkOverflowError` instead of saturating.
    """

    kind: str = "exponential"
    overflow_bound: float = 700.0

    def __post_init__(self):
        kind = _ALIASES.get(str(self.kind).lower())
        if kind is None:
            raise ValueError(f"unknown link {self.kind!r}; choose one of {LINK_KINDS}")
        object.__setattr__(self, "kind", kind)
        if not 0 < self.overflow_bound <= _LOG_MAX:
            raise ValueError(f"overflow_bound must lie in (0, {_LOG_MAX:.4f}]")

    @property
    def short_name(self) -> str:
        return {"exponential": "exp", "logistic": "logistic", "arccot": "arccot"}[self.kind]

    def __call__(self, z):
        return link_eval(self, z)


def get_link(link: str | LinkSpec) -> LinkSpec:
    if isinstance(link, LinkSpec):
        return link
    return LinkSpec(link)


def link_eval(spec: LinkSpec | str, z):
    """Evaluate ``(g(z), g'(z), g''(z))``.

    Scalars in, floats out; arrays in, arrays out.

    The arc-cotangent link is oriented as ``g(z) = arccot(-z) = pi/2 + arctan(z)``
    so that it is increasing with range ``(0, pi)``.
    """
    spec = get_link(spec)
    scalar = np.ndim(z) == 0
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise LinkOverflowError("linear predictor contains non-finite values")

    if spec.kind == "exponential":
        zmax = float(np.max(z)) if z.size else 0.0
        if zmax > spec.overflow_bound:
            raise LinkOverflowError(
                f"linear predictor {zmax:.6g} exceeds the exponential-link bound "
                f"{spec.overflow_bound:g}"
            )
        g = np.exp(z)
        g1 = g
        g2 = g
    elif spec.kind == "logistic":
        # sigma(z) evaluated on the branch that never overflows
        ez = np.exp(-np.abs(z))
        g = np.where(z >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))
        q = np.where(z >= 0, ez / (1.0 + ez), 1.0 / (1.0 + ez))
        g1 = g * q
        g2 = g1 * (q - g)
    else:
        g = 0.5 * np.pi + np.arctan(z)
        w = 1.0 / (1.0 + z * z)
        g1 = w
        g2 = -2.0 * z * w * w

    if scalar:
        return float(g), float(g1), float(g2)
    return g, g1, g2
