"""Ground-truth bandit environments.

Every environment consumes a fixed-size block of random numbers per step
regardless of the arm pulled, so two policies driven by the same noise
stream see the same noise at the same time step.
"""

from dataclasses import asdict, dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import stats

from .belief import (ArmSet, BetaBelief, CountArmModel, GammaBelief, GaussianArmModel,
                     GaussianBelief, Reward)
from .errors import InvalidArgument

KINDS = ("classical", "informative", "linear", "bernoulli", "poisson")
GAUSSIAN_KINDS = ("classical", "informative", "linear")


@dataclass(frozen=True)
class Observation:
    """``values`` has one entry per observed component of the arm; entries
    with ``mask`` false carry no information and are ignored by updates."""

    arm: int
    values: np.ndarray
    mask: np.ndarray
    reward: float


def cyclic_loadings(k):
    """``b_i = e_i + e_{i+1}`` with ``b_K = e_1 + e_K``."""
    b = np.eye(k)
    b[np.arange(k), (np.arange(k) + 1) % k] += 1.0
    return b


@dataclass(frozen=True, eq=False)
class EnvironmentSpec:
    """Declarative description of an environment and its priors.

    For Gaussian kinds ``prior_mean``/``prior_var`` give the initial belief
    ``N(prior_mean * 1, prior_var * I)`` and ``theta_mean``/``theta_var`` the
    ground-truth law ``N(theta_mean * 1, theta_var * I)``.  For the count kinds
    both pairs are ``(m, d)`` of the Beta or Gamma law.  ``loadings`` (linear,
    rows are ``b_i``) and ``trials`` (count kinds) default to the cyclic
    loadings and to one trial per pull.
    """

    kind: str
    n_arms: int
    noise_var: float = 5.0
    penalty: float = 1.0
    loadings: Optional[list] = None
    trials: Optional[list] = None
    prior_mean: Optional[float] = None
    prior_var: Optional[float] = None
    theta_mean: Optional[float] = None
    theta_var: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown environment kind {self.kind!r}")
        if int(self.n_arms) != self.n_arms or self.n_arms < 2:
            raise InvalidArgument("need at least two arms")
        if not self.noise_var > 0:
            raise InvalidArgument("noise_var must be positive")
        gaussian = self.kind in GAUSSIAN_KINDS
        defaults = {
            "prior_mean": 0.0 if gaussian else (0.5 if self.kind == "bernoulli" else 1.0),
            "prior_var": 1e3 if gaussian else (0.5 if self.kind == "bernoulli" else 1.0),
        }
        for name, value in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)
        if self.theta_mean is None:
            object.__setattr__(self, "theta_mean", 1.0 if gaussian else self.prior_mean)
        if self.theta_var is None:
            object.__setattr__(self, "theta_var", 1.0 if gaussian else self.prior_var)
        if self.theta_var < 0 or not self.prior_var > 0:
            raise InvalidArgument("variances must be non-negative (prior_var positive)")
        if self.loadings is not None:
            b = np.asarray(self.loadings, dtype=np.float64)
            if b.ndim != 2 or b.shape[0] != self.n_arms:
                raise InvalidArgument("loadings must have one row per arm")
        if self.trials is not None:
            n = np.asarray(self.trials, dtype=np.float64)
            if n.shape != (self.n_arms,) or np.any(n <= 0):
                raise InvalidArgument("trials must be positive, one per arm")

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, obj):
        return cls(**obj)

    # ------------------------------------------------------------------
    @property
    def gaussian(self):
        return self.kind in GAUSSIAN_KINDS

    @cached_property
    def p(self):
        if self.kind == "linear" and self.loadings is not None:
            return np.asarray(self.loadings).shape[1]
        return self.n_arms

    @cached_property
    def loading_matrix(self):
        if self.loadings is not None:
            return np.asarray(self.loadings, dtype=np.float64)
        return cyclic_loadings(self.n_arms)

    @cached_property
    def trial_vector(self):
        if self.trials is None:
            return np.ones(self.n_arms)
        return np.asarray(self.trials, dtype=np.float64)

    @cached_property
    def arms(self):
        k, p, prec = self.n_arms, self.p, 1.0 / self.noise_var
        eye = np.eye(p)
        if self.kind == "classical":
            models = [GaussianArmModel(eye[:, i], [prec]) for i in range(k)]
        elif self.kind == "linear":
            models = [GaussianArmModel(b, [prec]) for b in self.loading_matrix]
        elif self.kind == "informative":
            models = [GaussianArmModel(eye, np.full(p, prec),
                                       Reward(weights=eye[0], offset=-self.penalty))]
            models += [GaussianArmModel(eye, prec * eye[i], Reward(weights=eye[i]))
                       for i in range(1, k)]
        else:
            n = self.trial_vector
            models = [CountArmModel(n[i] * eye[i], eye[i]) for i in range(k)]
        return ArmSet(models)

    def initial_belief(self):
        p = self.p
        if self.gaussian:
            return GaussianBelief(np.full(p, float(self.prior_mean)),
                                  float(self.prior_var) * np.eye(p))
        cls = BetaBelief if self.kind == "bernoulli" else GammaBelief
        return cls(np.full(p, float(self.prior_mean)), np.full(p, float(self.prior_var)))

    # ------------------------------------------------------------------
    def sample_theta(self, rng):
        p, mean, var = self.p, float(self.theta_mean), float(self.theta_var)
        if self.gaussian:
            return mean + np.sqrt(var) * rng.standard_normal(p)
        if var == 0:
            return np.full(p, mean)
        if self.kind == "bernoulli":
            return rng.beta(mean / var, (1.0 - mean) / var, size=p)
        return rng.gamma(mean / var, var, size=p)

    def conditional_means(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if self.kind == "classical":
            return theta.copy()
        if self.kind == "informative":
            out = theta.copy()
            out[0] -= self.penalty
            return out
        if self.kind == "linear":
            return self.loading_matrix @ theta
        return self.trial_vector * theta

    def instant_regret(self, theta, arm):
        means = self.conditional_means(theta)
        return float(means.max() - means[arm])

    def noise_block(self, rng):
        """The per-step random numbers, drawn whatever arm is pulled."""
        if self.gaussian:
            return rng.standard_normal(max(self.p, self.n_arms) + 1)
        return rng.random(self.n_arms)

    def observe(self, theta, arm, rng=None, noise=None):
        if not 0 <= arm < self.n_arms:
            raise InvalidArgument(f"arm {arm} out of range")
        if noise is None:
            noise = self.noise_block(rng)
        theta = np.asarray(theta, dtype=np.float64)
        sd = np.sqrt(self.noise_var)
        if self.kind == "classical":
            v = theta[arm] + sd * noise[arm]
            return Observation(arm, np.array([v]), np.array([True]), float(v))
        if self.kind == "linear":
            v = self.loading_matrix[arm] @ theta + sd * noise[arm]
            return Observation(arm, np.array([v]), np.array([True]), float(v))
        if self.kind == "informative":
            p = self.p
            values = theta + sd * noise[:p]
            if arm == 0:
                reward = theta[0] - self.penalty + sd * noise[p]
                return Observation(0, values, np.ones(p, dtype=bool), float(reward))
            mask = np.zeros(p, dtype=bool)
            mask[arm] = True
            values = np.where(mask, values, 0.0)
            return Observation(arm, values, mask, float(values[arm]))
        n = self.trial_vector[arm]
        if self.kind == "bernoulli":
            y = stats.binom.ppf(noise[arm], n, theta[arm])
        else:
            y = stats.poisson.ppf(noise[arm], n * theta[arm])
        values = np.zeros(self.p)
        values[arm] = y
        mask = np.zeros(self.p, dtype=bool)
        mask[arm] = True
        return Observation(arm, values, mask, float(y))

    def update(self, belief, obs):
        return self.arms.update(belief, obs.arm, obs.values)


def sample_theta(spec, rng):
    return spec.sample_theta(rng)


def observe(spec, theta, arm, rng):
    return spec.observe(theta, arm, rng)


def instant_regret(spec, theta, arm):
    return spec.instant_regret(theta, arm)
