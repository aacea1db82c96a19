"""Entropy-regularised smooth maximum with its gradient and scaled Hessian.

For the Shannon entropy the smooth max at temperature ``lam`` is
``lam * log(sum(exp(a / lam)))``; its gradient is the softmax of ``a / lam``
and ``eta = lam * Hessian = diag(nu) - nu nu'``.
"""

import enum
from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import InvalidArgument


class SmoothMaxKind(enum.Enum):
    """Available smooth-max approximators.

    Any future member must provide the (value, gradient, scaled Hessian)
    triple with the convex, monotone, translation-equivariant properties of
    the Shannon case.
    """

    SHANNON = "shannon"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidArgument(f"unknown smooth max {value!r}") from None


@dataclass(frozen=True)
class SmoothMaxEval:
    value: float
    nu: np.ndarray
    eta: np.ndarray
    lam: float


def _check(a, lam):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1 or a.shape[0] < 1:
        raise InvalidArgument("smooth max needs a non-empty 1-d vector")
    if not np.all(np.isfinite(a)):
        raise InvalidArgument("smooth max input must be finite")
    if not (np.isfinite(lam) and lam > 0):
        raise InvalidArgument(f"lambda must be positive and finite, got {lam!r}")
    return a, float(lam)


def _value_and_nu(a, lam, kind):
    a, lam = _check(a, lam)
    SmoothMaxKind.parse(kind)
    return _backend.lse_softmax(a, lam)


def smax(a, lam, kind=SmoothMaxKind.SHANNON):
    """Smooth maximum of ``a`` at temperature ``lam``."""
    return float(_value_and_nu(a, lam, kind)[0])


def nu(a, lam, kind=SmoothMaxKind.SHANNON):
    """Gradient of :func:`smax` (soft-argmax); a point of the simplex."""
    return _value_and_nu(a, lam, kind)[1]


def eta_from_nu(p):
    return np.diag(p) - np.outer(p, p)


def eta(a, lam, kind=SmoothMaxKind.SHANNON):
    """``lam`` times the Hessian of :func:`smax`: symmetric, PSD, zero row sums."""
    return eta_from_nu(nu(a, lam, kind))


def evaluate(a, lam, kind=SmoothMaxKind.SHANNON):
    value, p = _value_and_nu(a, lam, kind)
    return SmoothMaxEval(value=float(value), nu=p, eta=eta_from_nu(p), lam=float(lam))
