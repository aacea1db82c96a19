import numpy as np
import pytest

from arcbandit.envs import EnvironmentSpec, cyclic_loadings, instant_regret, observe, sample_theta
from arcbandit.errors import InvalidArgument


def test_theta_sampling(rng):
    spec = EnvironmentSpec("classical", 5)
    draws = np.array([sample_theta(spec, rng) for _ in range(10_000)])
    assert np.abs(draws.mean() - 1.0) <= 3 / np.sqrt(50_000)
    fixed = EnvironmentSpec("linear", 4, theta_mean=2.5, theta_var=0.0)
    np.testing.assert_array_equal(fixed.sample_theta(rng), np.full(4, 2.5))
    a = sample_theta(spec, np.random.default_rng(3))
    np.testing.assert_array_equal(a, sample_theta(spec, np.random.default_rng(3)))


def test_count_theta_law(rng):
    spec = EnvironmentSpec("bernoulli", 3, theta_mean=0.3, theta_var=0.05)
    draws = np.array([spec.sample_theta(rng) for _ in range(20_000)]).ravel()
    assert abs(draws.mean() - 0.3) <= 4 * np.sqrt(0.3 * 0.7 * 0.05 / (1.05 * draws.size))
    assert draws.min() >= 0 and draws.max() <= 1
    spec = EnvironmentSpec("poisson", 3, theta_mean=2.0, theta_var=0.5)
    draws = np.array([spec.sample_theta(rng) for _ in range(20_000)]).ravel()
    assert abs(draws.mean() - 2.0) <= 4 * np.sqrt(1.0 / draws.size)


def test_noise_free_observation(rng):
    theta = np.array([0.3, -1.2, 2.0])
    for kind in ("classical", "informative"):
        spec = EnvironmentSpec(kind, 3, noise_var=1e-12)
        for arm in range(3):
            assert observe(spec, theta, arm, rng).reward == pytest.approx(
                theta[arm] - (kind == "informative" and arm == 0), abs=1e-5)
    spec = EnvironmentSpec("linear", 3, noise_var=1e-12)
    obs = observe(spec, theta, 2, rng)
    assert obs.values[0] == pytest.approx(theta[2] + theta[0], abs=1e-5)


def test_informative_reward_mean(rng):
    spec = EnvironmentSpec("informative", 3, penalty=1.0)
    theta = np.array([2.0, 0.0, 0.0])
    rewards = np.array([observe(spec, theta, 0, rng).reward for _ in range(100_000)])
    assert abs(rewards.mean() - 1.0) <= 3 * np.sqrt(5.0 / rewards.size)
    obs = observe(spec, theta, 0, rng)
    assert obs.mask.all() and obs.values.shape == (3,)
    side = observe(spec, theta, 2, rng)
    np.testing.assert_array_equal(side.mask, [False, False, True])
    assert side.reward == side.values[2]


def test_linear_loadings(rng):
    b = cyclic_loadings(50)
    np.testing.assert_array_equal(np.flatnonzero(b[49]), [0, 49])
    np.testing.assert_array_equal(np.flatnonzero(b[0]), [0, 1])
    spec = EnvironmentSpec("linear", 50)
    theta = spec.sample_theta(rng)
    vals = np.array([spec.observe(theta, 49, rng).values[0] for _ in range(20_000)])
    assert abs(vals.mean() - (theta[0] + theta[49])) <= 3 * np.sqrt(5.0 / vals.size)


def test_regret_examples():
    spec = EnvironmentSpec("classical", 2)
    assert instant_regret(spec, [3.0, 1.0], 1) == 2.0
    assert instant_regret(spec, [3.0, 1.0], 0) == 0.0
    info = EnvironmentSpec("informative", 3, penalty=1.0)
    assert instant_regret(info, [5.0, 1.0, 1.0], 0) == 0.0
    assert instant_regret(info, [5.0, 1.0, 1.0], 1) == 3.0
    assert instant_regret(info, [1.0, 1.0, 0.5], 0) == 1.0


def test_regret_nonnegative(rng):
    for kind in ("classical", "informative", "linear", "bernoulli", "poisson"):
        spec = EnvironmentSpec(kind, 4)
        for _ in range(50):
            theta = spec.sample_theta(rng)
            means = spec.conditional_means(theta)
            r = [spec.instant_regret(theta, a) for a in range(4)]
            assert min(r) >= 0
            assert [x == 0 for x in r] == list(means == means.max())


def test_noise_block_has_fixed_size(rng):
    for kind, size in (("classical", 5), ("informative", 5), ("linear", 5), ("bernoulli", 4)):
        spec = EnvironmentSpec(kind, 4)
        assert spec.noise_block(rng).shape == (size,)


def test_shared_noise_is_consumed_identically():
    spec = EnvironmentSpec("informative", 4)
    theta = np.ones(4)
    r1, r2 = np.random.default_rng(9), np.random.default_rng(9)
    for arm in (0, 3, 1, 0, 2):
        spec.observe(theta, arm, r1)
        spec.observe(theta, (arm + 1) % 4, r2)
    assert r1.random() == r2.random()


def test_count_observations(rng):
    spec = EnvironmentSpec("bernoulli", 3, trials=[1, 5, 10])
    theta = np.array([0.2, 0.5, 0.9])
    ys = np.array([spec.observe(theta, 2, rng).values[2] for _ in range(20_000)])
    assert set(np.unique(ys)) <= set(range(11))
    assert abs(ys.mean() - 9.0) <= 4 * np.sqrt(0.9 / ys.size)
    spec = EnvironmentSpec("poisson", 2)
    ys = np.array([spec.observe([0.5, 3.0], 1, rng).reward for _ in range(20_000)])
    assert abs(ys.mean() - 3.0) <= 4 * np.sqrt(3.0 / ys.size)


def test_validation():
    with pytest.raises(InvalidArgument):
        EnvironmentSpec("contextual", 3)
    with pytest.raises(InvalidArgument):
        EnvironmentSpec("classical", 1)
    with pytest.raises(InvalidArgument):
        EnvironmentSpec("classical", 3, noise_var=0.0)
    with pytest.raises(InvalidArgument):
        EnvironmentSpec("linear", 3, loadings=[[1.0, 0.0]])
    with pytest.raises(InvalidArgument):
        EnvironmentSpec("poisson", 2, trials=[1.0, -1.0])
    with pytest.raises(InvalidArgument):
        EnvironmentSpec("classical", 3).observe(np.zeros(3), 3, np.random.default_rng(0))


def test_spec_round_trip():
    spec = EnvironmentSpec("linear", 3, loadings=[[1, 0], [0, 1], [1, 1]], noise_var=2.0)
    back = EnvironmentSpec.from_dict(spec.to_dict())
    assert back.to_dict() == spec.to_dict()
    assert back.p == 2


@pytest.mark.parametrize("kind", ["classical", "informative", "linear", "bernoulli", "poisson"])
def test_posterior_consistency(kind):
    k, steps, seeds = 3, 2000, 20
    good = 0
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        spec = EnvironmentSpec(kind, k)
        theta = spec.sample_theta(rng)
        belief = spec.initial_belief()
        err0 = np.linalg.norm(belief.m - theta)
        errs = []
        for t in range(steps):
            belief = spec.update(belief, spec.observe(theta, t % k, rng))
            if (t + 1) % 100 == 0:
                errs.append(np.linalg.norm(belief.m - theta))
        slope = np.polyfit(np.log(np.arange(1, len(errs) + 1)), np.log(errs), 1)[0]
        if errs[-1] < err0 and slope < 0:
            good += 1
    assert good >= 0.95 * seeds
