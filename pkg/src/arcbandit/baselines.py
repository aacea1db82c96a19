"""Comparison policies sharing the belief/arm abstractions used by ARC.

Each policy object exposes ``select(belief, arms, t, horizon, rng)`` where
``t`` is the 1-based step index and ``rng`` the policy's own generator.  The
module-level ``*_step`` functions are the underlying decision rules.
Ties are always broken toward the lowest arm index.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import ClassVar, Optional

import numpy as np
from scipy import special, stats

from . import _backend
from .arc import ArcConfig, _hermite, arc_index, arc_index_step, arc_step, predictive_reward
from .belief import BetaBelief, GaussianBelief, _gain, as_arm_set
from .errors import InvalidArgument

log = logging.getLogger(__name__)

LAMBDA_FLOOR = 1e-8
P_CLIP = 1e-12


# --------------------------------------------------------------------------
# shared helpers
# --------------------------------------------------------------------------

def psd_sqrt(d):
    """Symmetric square root of a PSD matrix (works when ``d`` is singular)."""
    w, v = np.linalg.eigh(d)
    return (v * np.sqrt(np.maximum(w, 0.0))) @ v.T


def sample_posterior(belief, rng, size=None):
    """Draw ``theta`` from the belief; shape ``(p,)`` or ``(size, p)``."""
    shape = (belief.p,) if size is None else (size, belief.p)
    if isinstance(belief, GaussianBelief):
        z = rng.standard_normal(shape)
        return belief.m + z @ psd_sqrt(belief.d)
    if isinstance(belief, BetaBelief):
        a, b = belief.shapes()
        return rng.beta(a, b, size=shape)
    shape_par, rate = belief.shape_rate()
    return rng.gamma(shape_par, 1.0 / rate, size=shape)


def conditional_means(arms, thetas):
    """``E[r_i | theta]`` for each row of ``thetas`` (or a single vector)."""
    arms = as_arm_set(arms)
    thetas = np.asarray(thetas, dtype=np.float64)
    single = thetas.ndim == 1
    thetas = np.atleast_2d(thetas)
    if arms.family == "count":
        out = thetas @ (arms.weights * arms.trials).T
    else:
        out = thetas @ arms.a.T + arms.v
        if not arms.all_linear:
            x, w = _hermite(32)
            for i in np.flatnonzero(~arms.linear):
                y = out[:, i:i + 1] + np.sqrt(arms.tau2[i]) * x[None, :]
                out[:, i] = arms[i].reward.h(y) @ w
    return out[0] if single else out


def argmax_first(x):
    return int(np.argmax(x))


# --------------------------------------------------------------------------
# decision rules
# --------------------------------------------------------------------------

def epsilon_greedy_step(f, epsilon, rng):
    if not 0.0 <= epsilon <= 1.0:
        raise InvalidArgument("epsilon must lie in [0, 1]")
    f = np.asarray(f)
    if rng.random() < epsilon:
        return int(rng.integers(f.shape[0]))
    return argmax_first(f)


def boltzmann_lambda(rho, kappa, d_norm, floor=LAMBDA_FLOOR):
    return max(rho * d_norm ** kappa, floor)


def boltzmann_step(f, rho, kappa, d_norm, rng, floor=LAMBDA_FLOOR):
    if not rho > 0:
        raise InvalidArgument("rho must be positive")
    lam = boltzmann_lambda(rho, kappa, d_norm, floor)
    _, u = _backend.lse_softmax(np.asarray(f, dtype=np.float64), lam)
    return int(_backend.select_index(u, rng.random()))


def thompson_step(belief, arms, rng):
    theta = sample_posterior(belief, rng)
    return argmax_first(conditional_means(arms, theta))


def ucb_level(t, total_horizon, c):
    """Quantile level ``1 - 1 / (t * log(T)**c)``, clipped away from 0 and 1."""
    if t < 1 or total_horizon < 2:
        raise InvalidArgument("Bayes-UCB needs t >= 1 and T >= 2")
    if c < 0:
        raise InvalidArgument("c must be >= 0")
    p = 1.0 - 1.0 / (t * math.log(total_horizon) ** c)
    return min(max(p, P_CLIP), 1.0 - P_CLIP)


def bayes_ucb_step(belief, arms, t, total_horizon, c=0.0, rng=None, mc_samples=1000):
    """Arm with the largest posterior quantile of its conditional mean reward.

    Exact for Gaussian beliefs with affine rewards and for count arms that
    read a single coordinate; otherwise the quantile is estimated from
    ``mc_samples`` posterior draws.
    """
    arms = as_arm_set(arms)
    p = ucb_level(t, total_horizon, c)
    if arms.family == "gaussian" and arms.all_linear:
        f = arms.a @ belief.m + arms.v
        sd = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", arms.a, belief.d, arms.a), 0.0))
        return argmax_first(f + special.ndtri(p) * sd)
    if arms.family == "count":
        slope = arms.weights * arms.trials
        if np.all(np.count_nonzero(slope, axis=1) <= 1):
            j = np.argmax(np.abs(slope), axis=1)
            s = slope[np.arange(len(arms)), j]
            if isinstance(belief, BetaBelief):
                a, b = belief.shapes()
                q = stats.beta.ppf(np.where(s >= 0, p, 1 - p), a[j], b[j])
            else:
                shape, rate = belief.shape_rate()
                q = stats.gamma.ppf(np.where(s >= 0, p, 1 - p), shape[j], scale=1.0 / rate[j])
            return argmax_first(s * q)
    if rng is None:
        raise InvalidArgument("a generator is needed for the sampled quantile")
    means = conditional_means(arms, sample_posterior(belief, rng, mc_samples))
    return argmax_first(np.quantile(means, p, axis=0))


def _kg_next_means(belief, arms, i, z, rng):
    """Samples of ``f(m', d')`` after one pull of arm ``i`` (rows are samples)."""
    if arms.family == "count":
        n = arms.trials[i]
        live = n > 0
        theta = sample_posterior(belief, rng, z.shape[0])
        if isinstance(belief, BetaBelief):
            y = rng.binomial(n.astype(np.int64), theta)
        else:
            y = rng.poisson(n * theta)
        inv_d = 1.0 / belief.d
        m_new = np.where(live, (belief.m * inv_d + y) / (inv_d + n), belief.m)
        return m_new @ (arms.weights * arms.trials).T
    mask, c, prec = arms._obs[i]
    if not mask.any():
        return np.tile(predictive_reward(belief, arms).f, (z.shape[0], 1))
    gain, dc = _gain(belief.d, c, prec)
    s = c.T @ dc + np.diag(1.0 / prec)
    chol = np.linalg.cholesky(s)
    shift = z[:, :chol.shape[0]] @ (gain @ chol).T
    if arms.all_linear:
        return (belief.m + shift) @ arms.a.T + arms.v
    d_new = belief.d - gain @ dc.T
    d_new = 0.5 * (d_new + d_new.T)
    return np.vstack([predictive_reward(GaussianBelief(belief.m + row, d_new), arms).f
                      for row in shift])


def kg_index(belief, arms, beta, mc_samples, rng):
    """Knowledge-gradient index with common random numbers across arms."""
    if mc_samples < 1:
        raise InvalidArgument("mc_samples must be >= 1")
    arms = as_arm_set(arms)
    f = predictive_reward(belief, arms).f
    top = f.max()
    q_max = max(arms[i].q for i in range(len(arms))) if arms.family == "gaussian" else 1
    z = rng.standard_normal((mc_samples, q_max))
    gain = np.empty(len(arms))
    for i in range(len(arms)):
        gain[i] = _kg_next_means(belief, arms, i, z, rng).max(axis=1).mean() - top
    return f + beta / (1.0 - beta) * gain


def kg_step(belief, arms, beta, mc_samples, rng):
    return argmax_first(kg_index(belief, arms, beta, mc_samples, rng))


def information_gain(belief, arms):
    """``g_i = 0.5 * log det(I + P^1/2 c' d c P^1/2)`` for each Gaussian arm."""
    arms = as_arm_set(arms)
    g = np.zeros(len(arms))
    for i in range(len(arms)):
        mask, c, prec = arms._obs[i]
        if not mask.any():
            continue
        r = np.sqrt(prec)
        core = (c.T @ belief.d @ c) * np.outer(r, r)
        sign, logdet = np.linalg.slogdet(np.eye(r.shape[0]) + core)
        g[i] = 0.5 * logdet if sign > 0 else 0.0
    return np.maximum(g, 0.0)


def _ratio(delta, gain):
    if gain > 0:
        return delta * delta / gain
    return 0.0 if delta == 0 else math.inf


def ids_distribution(delta, g, tol=1e-14):
    """Minimise ``(u . delta)**2 / (u . g)`` over the simplex.

    An optimum is supported on at most two arms, so every pair is scanned and
    the one-dimensional problem on each pair is solved in closed form.
    ``0 / 0`` is read as 0.
    """
    delta = np.asarray(delta, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    k = delta.shape[0]
    if k == 1:
        return np.ones(1), _ratio(delta[0], g[0])
    best, best_u = math.inf, None
    scale = max(np.max(np.abs(delta)), np.max(np.abs(g)), 1.0)
    for i in range(k):
        for j in range(i + 1, k):
            dd, dg = delta[i] - delta[j], g[i] - g[j]
            if abs(dd) <= tol * scale and abs(dg) <= tol * scale:
                cands = [0.5]
            else:
                cands = [1.0, 0.0]
                if dd != 0:
                    cands.append(-delta[j] / dd)
                if dd != 0 and dg != 0:
                    cands.append(delta[j] / dd - 2.0 * g[j] / dg)
            for q in cands:
                q = min(max(q, 0.0), 1.0)
                val = _ratio(delta[j] + q * dd, g[j] + q * dg)
                if val < best and not (math.isfinite(best) and best - val <= tol * max(best, 1.0)):
                    best, best_u = val, (i, j, q)
    u = np.zeros(k)
    if best_u is None:
        return u, math.inf
    i, j, q = best_u
    u[i] += q
    u[j] += 1.0 - q
    return u, best


def ids_step(belief, arms, mc_samples, rng):
    """Return ``(U, arm)`` for variance-free information-directed sampling."""
    if not isinstance(belief, GaussianBelief):
        raise InvalidArgument("IDS needs a Gaussian belief")
    if mc_samples < 1:
        raise InvalidArgument("mc_samples must be >= 1")
    arms = as_arm_set(arms)
    g = information_gain(belief, arms)
    means = conditional_means(arms, sample_posterior(belief, rng, mc_samples))
    delta = np.maximum(means.max(axis=1).mean() - means.mean(axis=0), 0.0)
    if not np.any(g > 0):
        log.warning("IDS: no arm carries information, acting greedily")
        arm = argmax_first(predictive_reward(belief, arms).f)
        u = np.zeros(len(arms))
        u[arm] = 1.0
        return u, arm
    u, _ = ids_distribution(delta, g)
    return u, int(_backend.select_index(u, rng.random()))


# --------------------------------------------------------------------------
# policy objects
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Policy:
    kind: ClassVar[str] = ""

    def select(self, belief, arms, t, horizon, rng, env_means=None):
        raise NotImplementedError

    def to_dict(self):
        out = {"type": self.kind}
        for key, value in asdict(self).items():
            if not key.startswith("_") and value is not None:
                out[key] = value
        return out


@dataclass(frozen=True)
class Greedy(Policy):
    kind: ClassVar[str] = "greedy"

    def select(self, belief, arms, t, horizon, rng, env_means=None):
        return argmax_first(predictive_reward(belief, arms).f)


@dataclass(frozen=True)
class EpsilonGreedy(Policy):
    epsilon: float = 0.1
    kind: ClassVar[str] = "epsilon_greedy"

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise InvalidArgument("epsilon must lie in [0, 1]")

    def select(self, belief, arms, t, horizon, rng, env_means=None):
        return epsilon_greedy_step(predictive_reward(belief, arms).f, self.epsilon, rng)


@dataclass(frozen=True)
class Boltzmann(Policy):
    rho: float = 1.0
    kappa: float = 1.0
    lambda_floor: float = LAMBDA_FLOOR
    kind: ClassVar[str] = "boltzmann"

    def __post_init__(self):
        if not self.rho > 0:
            raise InvalidArgument("rho must be positive")

    def select(self, belief, arms, t, horizon, rng, env_means=None):
        f = predictive_reward(belief, arms).f
        return boltzmann_step(f, self.rho, self.kappa, belief.norm(), rng, self.lambda_floor)


@dataclass(frozen=True)
class Thompson(Policy):
    kind: ClassVar[str] = "thompson"

    def select(self, belief, arms, t, horizon, rng, env_means=None):
        return thompson_step(belief, arms, rng)


@dataclass(frozen=True)
class BayesUcb(Policy):
    c: float = 0.0
    total_horizon: Optional[int] = None
    kind: ClassVar[str] = "bayes_ucb"

    def __post_init__(self):
        if self.c < 0:
            raise InvalidArgument("c must be >= 0")

    def select(self, belief, arms, t, horizon, rng, env_means=None):
        total = self.total_horizon or horizon
        return bayes_ucb_step(belief, arms, t, max(total, 2), self.c, rng)


@dataclass(frozen=True)
class KnowledgeGradient(Policy):
    beta: Optional[float] = None
    mc_samples: int = 100
    kind: ClassVar[str] = "kg"

    def __post_init__(self):
        if self.mc_samples < 1:
            raise InvalidArgument("mc_samples must be >= 1")

    def select(self, belief, arms, t, horizon, rng, env_means=None):
        beta = self.beta if self.beta is not None else default_beta(horizon)
        return kg_step(belief, arms, beta, self.mc_samples, rng)


@dataclass(frozen=True)
class Ids(Policy):
    mc_samples: int = 100
    kind: ClassVar[str] = "ids"

    def __post_init__(self):
        if self.mc_samples < 1:
            raise InvalidArgument("mc_samples must be >= 1")

    def select(self, belief, arms, t, horizon, rng, env_means=None):
        return ids_step(belief, arms, self.mc_samples, rng)[1]


def default_beta(horizon):
    """The usual ``1 - 1/T`` discount, kept inside (0, 1)."""
    return 1.0 - 1.0 / max(int(horizon), 2)


@dataclass(frozen=True)
class _ArcBase(Policy):
    """``config`` is an :class:`ArcConfig`; ``beta=None`` means ``1 - 1/T``."""

    beta: Optional[float] = None
    rho: float = 1.0
    kappa: float = 1.0
    lambda_floor: float = 1e-8
    finite_horizon: bool = False
    sigma_cap: Optional[float] = 1e3
    _configs: dict = field(default_factory=dict, repr=False, compare=False)

    def config(self, horizon):
        cfg = self._configs.get(horizon)
        if cfg is None:
            beta = self.beta if self.beta is not None else default_beta(horizon)
            cfg = ArcConfig(beta=beta, rho=self.rho, kappa=self.kappa,
                            lambda_floor=self.lambda_floor, sigma_cap=self.sigma_cap)
            self._configs[horizon] = cfg
        return cfg

    def index(self, belief, arms, t, horizon):
        steps = horizon - t + 1 if self.finite_horizon else None
        return arc_index(belief, arms, self.config(horizon), steps_to_go=steps)


@dataclass(frozen=True)
class Arc(_ArcBase):
    kind: ClassVar[str] = "arc"

    def select(self, belief, arms, t, horizon, rng, env_means=None):
        return arc_step(self.index(belief, arms, t, horizon), rng.random())[1]


@dataclass(frozen=True)
class ArcIndexPolicy(_ArcBase):
    kind: ClassVar[str] = "arc_index"

    def select(self, belief, arms, t, horizon, rng, env_means=None):
        return arc_index_step(self.index(belief, arms, t, horizon))


@dataclass(frozen=True)
class Oracle(Policy):
    """Plays the best arm under the true parameter (for testing the harness)."""

    kind: ClassVar[str] = "oracle"

    def select(self, belief, arms, t, horizon, rng, env_means=None):
        if env_means is None:
            raise InvalidArgument("the oracle policy needs the true conditional means")
        return argmax_first(env_means)


POLICIES = {cls.kind: cls for cls in (Greedy, EpsilonGreedy, Boltzmann, Thompson, BayesUcb,
                                      KnowledgeGradient, Ids, Arc, ArcIndexPolicy, Oracle)}


def make_policy(obj):
    """Build a policy from ``{"type": ..., **params}``."""
    obj = dict(obj)
    kind = obj.pop("type", None)
    if kind not in POLICIES:
        raise InvalidArgument(f"unknown policy type {kind!r}")
    obj.pop("label", None)
    try:
        return POLICIES[kind](**obj)
    except TypeError as exc:
        raise InvalidArgument(f"bad parameters for {kind}: {exc}") from None
