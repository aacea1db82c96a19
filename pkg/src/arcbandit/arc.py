"""The ARC index: predictive reward, learning premium and decision steps.

For every arm the index is ``alpha_i = f_i + w * L_i`` where ``f`` is the
expected one-step reward under the posterior, ``L`` the learning premium and
``w = beta / (1 - beta)`` (or a partial geometric sum with a finite horizon).
The randomised policy samples from ``softmax(alpha / lam)``.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _backend
from .belief import GaussianBelief, as_arm_set
from .errors import InvalidArgument
from .smoothmax import SmoothMaxKind

DEFAULT_QUAD_NODES = 32


@dataclass(frozen=True)
class RewardEval:
    """Predictive rewards and their derivatives in ``(m, d)``.

    ``df_dd`` is ``K x p x p`` for Gaussian beliefs (derivative with respect
    to each entry of ``d``) and ``K x p`` for count beliefs.  ``g`` is
    ``E[h'(.)]`` for each arm, the slope of the reward along its projection.
    """

    f: np.ndarray
    df_dm: np.ndarray
    df_dd: np.ndarray
    d2f_dm2: np.ndarray
    g: np.ndarray


@dataclass(frozen=True)
class Premium:
    L: np.ndarray
    B: np.ndarray
    M: np.ndarray
    Sigma: np.ndarray


@dataclass(frozen=True)
class ArcConfig:
    beta: float = 0.99
    rho: float = 1.0
    kappa: float = 1.0
    lambda_floor: float = 1e-8
    smooth_max: SmoothMaxKind = SmoothMaxKind.SHANNON
    horizon: Optional[int] = None
    sigma_cap: Optional[float] = 1e3

    def __post_init__(self):
        object.__setattr__(self, "smooth_max", SmoothMaxKind.parse(self.smooth_max))
        if not 0.0 < self.beta < 1.0:
            raise InvalidArgument(f"beta must lie in (0, 1), got {self.beta}")
        if not self.rho > 0:
            raise InvalidArgument(f"rho must be positive, got {self.rho}")
        if not 0.0 < self.kappa <= 2.0:
            raise InvalidArgument(f"kappa must lie in (0, 2], got {self.kappa}")
        if not self.lambda_floor > 0:
            raise InvalidArgument("lambda_floor must be positive")
        if self.horizon is not None and self.horizon < 1:
            raise InvalidArgument("horizon must be a positive integer")
        if self.sigma_cap is not None and not self.sigma_cap > 0:
            raise InvalidArgument("sigma_cap must be positive")


@dataclass(frozen=True)
class ArcIndex:
    """Index values.  ``B``, ``M`` and ``Sigma`` are ``None`` on closed-form paths."""

    alpha: np.ndarray
    L: np.ndarray
    f: np.ndarray
    lambda_used: float
    B: Optional[np.ndarray] = None
    M: Optional[np.ndarray] = None
    Sigma: Optional[np.ndarray] = None
    method: str = "generic"


# --------------------------------------------------------------------------
# predictive reward
# --------------------------------------------------------------------------

def _hermite(n):
    x, w = np.polynomial.hermite_e.hermegauss(n)
    return x, w / np.sqrt(2.0 * np.pi)


def predictive_reward(belief, arms, n_nodes=DEFAULT_QUAD_NODES):
    """``f_i = E[r_i(Y)]`` under the posterior predictive, with derivatives.

    Affine rewards are handled exactly.  Otherwise ``E h(mu + s Z)`` and its
    first two derivatives are evaluated with ``n_nodes``-point Gauss-Hermite
    quadrature; the ``d`` derivative uses ``d2f/dm2 = 2 df/dd`` along the
    reward projection.
    """
    arms = as_arm_set(arms)
    k, p = len(arms), belief.p
    if arms.p != p:
        raise InvalidArgument(f"arms have p={arms.p}, belief has p={p}")
    if arms.family == "count":
        if isinstance(belief, GaussianBelief):
            raise InvalidArgument("count arms need a Beta or Gamma belief")
        slope = arms.weights * arms.trials
        return RewardEval(f=slope @ belief.m, df_dm=slope, df_dd=np.zeros((k, p)),
                          d2f_dm2=np.zeros((k, p, p)), g=np.ones(k))
    if not isinstance(belief, GaussianBelief):
        raise InvalidArgument("Gaussian arms need a Gaussian belief")

    a = arms.a
    mu = a @ belief.m + arms.v
    f = mu.copy()
    g = np.ones(k)
    g2 = np.zeros(k)
    if not arms.all_linear:
        x, w = _hermite(n_nodes)
        s = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", a, belief.d, a), 0.0) + arms.tau2)
        for i in np.flatnonzero(~arms.linear):
            y = mu[i] + s[i] * x
            r = arms[i].reward
            f[i] = w @ r.h(y)
            g[i] = w @ r.dh(y)
            g2[i] = w @ r.d2h(y)
        if not np.all(np.isfinite(f)):
            raise InvalidArgument("reward callbacks produced non-finite values")
    outer = a[:, :, None] * a[:, None, :]
    d2f = outer * g2[:, None, None]
    return RewardEval(f=f, df_dm=a * g[:, None], df_dd=0.5 * d2f, d2f_dm2=d2f, g=g)


# --------------------------------------------------------------------------
# learning premium
# --------------------------------------------------------------------------

def _check_lam(lam):
    if not (np.isfinite(lam) and lam > 0):
        raise InvalidArgument(f"lambda must be positive and finite, got {lam!r}")


def learning_premium(reward, dyn, lam, kind=SmoothMaxKind.SHANNON):
    """Generic second-order learning premium.

    ``B = sum_j nu_j df_j/dd``, ``M = sum_j nu_j df_j/dm`` and
    ``Sigma = sum_j nu_j d2f_j/dm2 + (1/lam) sum_jk eta_jk df_j/dm df_k/dm'``;
    then ``L_i = <B, b_i> + <M, mu_i> + <Sigma, sigma_i sigma_i'> / 2``.
    """
    _check_lam(lam)
    SmoothMaxKind.parse(kind)
    _, nu = _backend.lse_softmax(np.asarray(reward.f, dtype=np.float64), float(lam))
    df = reward.df_dm
    B = np.tensordot(nu, reward.df_dd, axes=1)
    M = nu @ df
    # df' eta df in centred form: no cancellation when nu saturates
    dev = df - M
    Sigma = np.tensordot(nu, reward.d2f_dm2, axes=1) + (dev.T * nu) @ dev / lam
    L = np.empty(len(dyn))
    for i, c in enumerate(dyn):
        L[i] = (np.sum(B * c.b) + M @ c.mu + 0.5 * np.sum(Sigma * c.sigma_sq))
    return Premium(L=L, B=B, M=M, Sigma=Sigma)


def learning_premium_info_arm(f, ddiag, s, g, lam, kind=SmoothMaxKind.SHANNON):
    """Closed-form premium when every arm observes every coordinate.

    ``s[i, j]`` is the precision of arm ``i``'s observation of coordinate
    ``j`` and arm ``j``'s reward reads coordinate ``j`` with slope ``g[j]``.
    """
    _check_lam(lam)
    SmoothMaxKind.parse(kind)
    s = np.atleast_2d(np.asarray(s, dtype=np.float64))
    ddiag = np.asarray(ddiag, dtype=np.float64)
    if np.any(s < 0):
        raise InvalidArgument("observation precisions must be >= 0")
    if s.shape[1] != ddiag.shape[0] or len(f) != ddiag.shape[0]:
        raise InvalidArgument("f, d and s dimensions disagree")
    _, nu = _backend.lse_softmax(np.asarray(f, dtype=np.float64), float(lam))
    return _backend.info_premium(nu, ddiag, s, np.asarray(g, dtype=np.float64), float(lam))


def learning_premium_linear(d, c, prec, f, g, lam, kind=SmoothMaxKind.SHANNON):
    """Closed-form premium for arms with one scalar observation each.

    ``c`` is ``p x K`` (column ``i`` is arm ``i``'s loading), ``prec`` the
    observation precisions and ``g`` the reward slopes along ``c_i``.
    """
    _check_lam(lam)
    if SmoothMaxKind.parse(kind) is not SmoothMaxKind.SHANNON:
        raise InvalidArgument("the linear closed form needs the Shannon smooth max")
    d = np.atleast_2d(np.asarray(d, dtype=np.float64))
    c = np.asarray(c, dtype=np.float64)
    if c.ndim == 1:
        c = c[:, None]
    prec = np.asarray(prec, dtype=np.float64)
    k = c.shape[1]
    if c.shape[0] != d.shape[0] or prec.shape != (k,) or len(f) != k or len(g) != k:
        raise InvalidArgument("d, c, precision, f and g dimensions disagree")
    if np.any(prec < 0):
        raise InvalidArgument("observation precisions must be >= 0")
    cdc = c.T @ d @ c
    x = cdc * np.asarray(g, dtype=np.float64)[None, :]
    with np.errstate(divide="ignore"):
        sinv = np.where(prec > 0, prec / (1.0 + prec * np.diag(cdc)), 0.0)
    _, nu = _backend.lse_softmax(np.asarray(f, dtype=np.float64), float(lam))
    return _backend.linear_premium(nu, x, sinv, float(lam))


# --------------------------------------------------------------------------
# index and decisions
# --------------------------------------------------------------------------

def lambda_schedule(belief, config):
    """Temperature ``max(rho * ||d||**kappa, lambda_floor)``."""
    return max(config.rho * belief.norm() ** config.kappa, config.lambda_floor)


def premium_weight(beta, steps_to_go=None):
    """``beta / (1 - beta)``, or ``sum_{s=1}^{t-1} beta**s`` with ``t`` steps to go."""
    if steps_to_go is None:
        return beta / (1.0 - beta)
    if steps_to_go < 1:
        raise InvalidArgument("steps_to_go must be >= 1")
    return beta * (1.0 - beta ** (steps_to_go - 1)) / (1.0 - beta)


def _closed_form(belief, arms, reward, lam, kind):
    if arms.family != "gaussian":
        return None
    if arms.info_structure and belief.is_diagonal():
        L = learning_premium_info_arm(reward.f, np.diag(belief.d), arms.s,
                                      reward.g * arms.u_self, lam, kind)
        return L, "info_arm"
    if arms.scalar_structure and kind is SmoothMaxKind.SHANNON:
        L = learning_premium_linear(belief.d, arms.c_cols, arms.prec, reward.f,
                                    reward.g * arms.u_scalar, lam, kind)
        return L, "linear"
    return None


def arc_index(belief, arms, config, steps_to_go=None, lam=None, method="auto"):
    """ARC index of every arm.

    ``method`` is ``"auto"`` (closed form when the arm structure allows it),
    ``"generic"`` or ``"closed"`` (error if no closed form applies).  With
    ``config.horizon`` set and ``steps_to_go`` omitted the horizon itself is
    used as the number of remaining steps.
    """
    arms = as_arm_set(arms)
    kind = config.smooth_max
    if lam is None:
        lam = lambda_schedule(belief, config)
    _check_lam(lam)
    if steps_to_go is None and config.horizon is not None:
        steps_to_go = config.horizon
    weight = premium_weight(config.beta, steps_to_go)
    reward = predictive_reward(belief, arms)

    closed = None if method == "generic" else _closed_form(belief, arms, reward, lam, kind)
    if closed is not None:
        L, used = closed
        return ArcIndex(alpha=reward.f + weight * L, L=L, f=reward.f,
                        lambda_used=float(lam), method=used)
    if method == "closed":
        raise InvalidArgument("no closed-form premium applies to these arms")
    if method not in ("auto", "generic"):
        raise InvalidArgument(f"unknown method {method!r}")
    dyn = arms.dynamics(belief, config.sigma_cap)
    prem = learning_premium(reward, dyn, lam, kind)
    return ArcIndex(alpha=reward.f + weight * prem.L, L=prem.L, f=reward.f,
                    lambda_used=float(lam), B=prem.B, M=prem.M, Sigma=prem.Sigma,
                    method="generic")


def arc_step(index, zeta):
    """Return ``(U, A)``: the action simplex and the arm picked by ``zeta``."""
    if not 0.0 <= zeta <= 1.0:
        raise InvalidArgument("zeta must lie in [0, 1]")
    _, u = _backend.lse_softmax(np.asarray(index.alpha, dtype=np.float64), index.lambda_used)
    return u, int(_backend.select_index(u, float(zeta)))


def arc_index_step(index):
    """Deterministic variant: the first arm maximising ``alpha``."""
    return int(np.argmax(index.alpha))
