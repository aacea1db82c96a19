from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from arcbandit.belief import (D_FLOOR, ArmSet, BetaBelief, CountArmModel, GammaBelief,
                              GaussianArmModel, GaussianBelief, Reward, beta_binomial_update,
                              belief_from_json, belief_to_json, count_dynamics, count_update,
                              diagonalise_observation, gamma_poisson_update, gaussian_dynamics,
                              gaussian_update)
from arcbandit.errors import InvalidArgument


def random_spd(rng, p, scale=1.0):
    a = rng.normal(size=(p, p))
    return scale * (a @ a.T / p + 0.1 * np.eye(p))


def random_arm(rng, p, q):
    return GaussianArmModel(rng.normal(size=(p, q)), rng.uniform(0.2, 3.0, q))


# ---------------------------------------------------------------- Gaussian

def test_scalar_update_example():
    out = gaussian_update(GaussianBelief([0.0], [[1.0]]), GaussianArmModel([1.0], [1.0]), [2.0])
    assert out.m[0] == pytest.approx(1.0) and out.d[0, 0] == pytest.approx(0.5)


def test_zero_precision_is_a_no_op(rng):
    b = GaussianBelief(rng.normal(size=3), random_spd(rng, 3))
    arm = GaussianArmModel(rng.normal(size=(3, 2)), [0.0, 0.0])
    assert gaussian_update(b, arm, [5.0, -1.0]) is b
    dyn = gaussian_dynamics(b, arm)
    assert not dyn.b.any() and not dyn.sigma_sq.any()


def test_woodbury_matches_direct_inverse(rng):
    for _ in range(50):
        p, q = 3, int(rng.integers(1, 4))
        d = random_spd(rng, p)
        m = rng.normal(size=p)
        arm = random_arm(rng, p, q)
        y = rng.normal(size=q)
        out = gaussian_update(GaussianBelief(m, d), arm, y)
        prec = np.diag(arm.precision)
        d_new = np.linalg.inv(np.linalg.inv(d) + arm.c @ prec @ arm.c.T)
        m_new = d_new @ (np.linalg.solve(d, m) + arm.c @ prec @ y)
        np.testing.assert_allclose(out.d, d_new, atol=1e-8)
        np.testing.assert_allclose(out.m, m_new, atol=1e-8)


def test_partially_observed_components(rng):
    d = random_spd(rng, 3)
    c = rng.normal(size=(3, 2))
    full = gaussian_update(GaussianBelief(np.zeros(3), d), GaussianArmModel(c, [2.0, 0.0]),
                           [1.0, 123.0])
    part = gaussian_update(GaussianBelief(np.zeros(3), d), GaussianArmModel(c[:, :1], [2.0]),
                           [1.0])
    np.testing.assert_allclose(full.m, part.m)
    np.testing.assert_allclose(full.d, part.d)


def test_dynamics_scalar_and_degenerate():
    for d, s in ((0.3, 2.0), (1.0, 1.0), (5.0, 0.2)):
        dyn = gaussian_dynamics(GaussianBelief([0.0], [[d]]), GaussianArmModel([1.0], [s]))
        assert dyn.b[0, 0] == pytest.approx(-d * d * s / (1 + d * s))
        assert dyn.sigma_sq[0, 0] == pytest.approx(d * d * s / (1 + d * s))
        assert dyn.mu[0] == 0
    dyn = gaussian_dynamics(GaussianBelief(np.zeros(2), np.zeros((2, 2))),
                            GaussianArmModel(np.eye(2), [1.0, 1.0]))
    assert not dyn.b.any() and not dyn.sigma_sq.any() and not dyn.mu.any()


def _predictive_updates(belief, arm, n, rng):
    """Updated means for ``n`` observations drawn from the predictive law."""
    s = arm.c.T @ belief.d @ arm.c + np.diag(1.0 / arm.precision)
    y = belief.m @ arm.c + rng.multivariate_normal(np.zeros(arm.q), s, size=n)
    gain = belief.d @ arm.c @ np.linalg.inv(s)
    return belief.m + (y - belief.m @ arm.c) @ gain.T


def test_sigma_sq_matches_sampled_covariance(rng):
    b = GaussianBelief(rng.normal(size=3), random_spd(rng, 3))
    arm = random_arm(rng, 3, 2)
    n = 100_000
    moves = _predictive_updates(b, arm, n, rng) - b.m
    cov = np.cov(moves.T)
    sig = gaussian_dynamics(b, arm).sigma_sq
    se = np.sqrt((np.outer(np.diag(sig), np.diag(sig)) + sig ** 2) / n)
    assert np.all(np.abs(cov - sig) <= 3 * se + 1e-12)
    np.testing.assert_allclose(gaussian_dynamics(b, arm).b, -sig)


def test_martingale_gaussian(rng):
    b = GaussianBelief(rng.normal(size=2), random_spd(rng, 2))
    arm = random_arm(rng, 2, 1)
    moves = _predictive_updates(b, arm, 10_000, rng) - b.m
    se = moves.std(axis=0, ddof=1) / np.sqrt(moves.shape[0])
    assert np.all(np.abs(moves.mean(axis=0)) <= 3 * se)


def test_batch_equals_sequential(rng):
    for _ in range(20):
        b = GaussianBelief(rng.normal(size=3), random_spd(rng, 3))
        a1, a2 = random_arm(rng, 3, 1), random_arm(rng, 3, 2)
        y1, y2 = rng.normal(size=1), rng.normal(size=2)
        seq = gaussian_update(gaussian_update(b, a1, y1), a2, y2)
        stacked = GaussianArmModel(np.hstack([a1.c, a2.c]), np.concatenate([a1.precision,
                                                                             a2.precision]))
        batch = gaussian_update(b, stacked, np.concatenate([y1, y2]))
        np.testing.assert_allclose(seq.m, batch.m, atol=1e-8)
        np.testing.assert_allclose(seq.d, batch.d, atol=1e-8)


@given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 4))
def test_non_expansion_and_psd(seed, p, q):
    rng = np.random.default_rng(seed)
    b = GaussianBelief(rng.normal(size=p), random_spd(rng, p, scale=rng.uniform(0.01, 100)))
    for _ in range(5):
        arm = random_arm(rng, p, q)
        new = gaussian_update(b, arm, rng.normal(size=q))
        assert new.norm() <= b.norm() * (1 + 1e-10)
        assert np.linalg.eigvalsh(new.d).min() >= -1e-10
        np.testing.assert_array_equal(new.d, new.d.T)
        b = new


def test_validation():
    with pytest.raises(InvalidArgument):
        GaussianBelief([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(InvalidArgument):
        GaussianArmModel(np.eye(2), [1.0, -1.0])
    with pytest.raises(InvalidArgument):
        gaussian_update(GaussianBelief([0.0], [[1.0]]), GaussianArmModel([1.0], [1.0]), [1.0, 2.0])
    with pytest.raises(InvalidArgument):
        gaussian_update(GaussianBelief([0.0, 0.0], np.eye(2)), GaussianArmModel([1.0], [1.0]),
                        [1.0])
    with pytest.raises(InvalidArgument):
        Reward(func=np.sin)


def test_diagonalise_observation(rng):
    c_t = rng.normal(size=(3, 2))
    p_full = random_spd(rng, 2)
    c, w, q = diagonalise_observation(c_t, p_full)
    np.testing.assert_allclose(c @ np.diag(w) @ c.T, c_t @ p_full @ c_t.T, atol=1e-10)
    b = GaussianBelief(np.zeros(3), random_spd(rng, 3))
    y_t = rng.normal(size=2)
    out = gaussian_update(b, GaussianArmModel(c, w), q.T @ y_t)
    d_direct = np.linalg.inv(np.linalg.inv(b.d) + c_t @ p_full @ c_t.T)
    np.testing.assert_allclose(out.d, d_direct, atol=1e-8)
    np.testing.assert_allclose(out.m, d_direct @ c_t @ p_full @ y_t, atol=1e-8)


# ---------------------------------------------------------------- counts

def test_beta_example():
    out = beta_binomial_update(BetaBelief([0.5], [0.5]), 1, 1, 0)
    assert out.m[0] == pytest.approx(2 / 3, abs=1e-15) and out.d[0] == pytest.approx(1 / 3, abs=1e-15)
    b = BetaBelief([0.5], [0.5])
    assert beta_binomial_update(b, 0, 0, 0) is b
    arm = CountArmModel([1.0], [1.0])
    assert count_dynamics(b, arm).b[0] == pytest.approx(-1 / 6)


def test_gamma_example():
    out = gamma_poisson_update(GammaBelief([1.0], [1.0]), 1, 3, 0)
    assert out.m[0] == pytest.approx(2.0) and out.d[0] == pytest.approx(0.5)
    z = gamma_poisson_update(GammaBelief([1.0], [1.0]), 1, 1, 0)
    assert z.m[0] == pytest.approx(1.0) and z.d[0] == pytest.approx(0.5)
    assert count_dynamics(GammaBelief([1.0], [1.0]), CountArmModel([1.0], [1.0])).b[0] == \
        pytest.approx(-0.5)


def test_beta_against_rational_conjugacy(rng):
    for _ in range(200):
        a, b = int(rng.integers(1, 30)), int(rng.integers(1, 30))
        n = int(rng.integers(0, 20))
        y = int(rng.integers(0, n + 1))
        out = beta_binomial_update(BetaBelief.from_shapes([a], [b]), n, y, 0)
        m_exact = Fraction(a + y, a + b + n)
        d_exact = Fraction(1, a + b + n)
        assert abs(Fraction(out.m[0]) - m_exact) <= 4e-16 * m_exact
        assert abs(Fraction(out.d[0]) - d_exact) <= 4e-16 * d_exact


def test_gamma_against_rational_conjugacy(rng):
    for _ in range(200):
        shape, rate = int(rng.integers(1, 30)), int(rng.integers(1, 30))
        n, y = int(rng.integers(1, 10)), int(rng.integers(0, 40))
        out = gamma_poisson_update(GammaBelief.from_shape_rate([shape], [rate]), n, y, 0)
        assert abs(Fraction(out.m[0]) - Fraction(shape + y, rate + n)) <= 4e-16 * (shape + y) / (rate + n)
        assert abs(Fraction(out.d[0]) - Fraction(1, rate + n)) <= 4e-16 / (rate + n)


def test_count_drift_is_exact_and_deterministic(rng):
    for cls in (BetaBelief, GammaBelief):
        m = rng.uniform(0.1, 0.9, 4)
        d = rng.uniform(0.01, 0.05, 4)
        b = cls(m, d)
        n = np.array([0.0, 1.0, 3.0, 7.0])
        arm = CountArmModel(n, np.ones(4))
        dyn = count_dynamics(b, arm)
        outs = [count_update(b, arm, np.floor(n * u)) for u in (0.0, 0.5, 1.0)]
        for out in outs:
            np.testing.assert_allclose(out.d - b.d, dyn.b, rtol=1e-12, atol=1e-16)
            assert np.all(out.d <= b.d) and np.all(out.d[1:] < b.d[1:])


def test_beta_sigma_sq_by_enumeration():
    # exact predictive variance of the new mean (beta-binomial, enumerated)
    for a, b, n in ((1, 1, 1), (2, 5, 3), (7, 3, 10)):
        bel = BetaBelief.from_shapes([a], [b])
        dyn = count_dynamics(bel, CountArmModel([n], [1.0]))
        probs = stats.betabinom.pmf(np.arange(n + 1), n, a, b)
        new_m = (a + np.arange(n + 1)) / (a + b + n)
        mean = probs @ new_m
        assert mean == pytest.approx(bel.m[0], abs=1e-14)
        assert dyn.sigma_sq[0, 0] == pytest.approx(probs @ (new_m - mean) ** 2, rel=1e-10)


def test_gamma_sigma_sq_by_negative_binomial():
    for shape, rate, n in ((1.0, 1.0, 1.0), (3.0, 0.5, 2.0), (10.0, 4.0, 0.5)):
        bel = GammaBelief.from_shape_rate([shape], [rate])
        dyn = count_dynamics(bel, CountArmModel([n], [1.0]))
        var_y = stats.nbinom.var(shape, rate / (rate + n))
        assert dyn.sigma_sq[0, 0] == pytest.approx(var_y / (rate + n) ** 2, rel=1e-12)
    capped = count_dynamics(GammaBelief([1e4], [10.0]), CountArmModel([100.0], [1.0]), sigma_cap=1.0)
    assert capped.sigma_sq[0, 0] == 1.0


def test_martingale_counts(rng):
    for cls in (BetaBelief, GammaBelief):
        b = cls([0.3, 0.6], [0.1, 0.2])
        arm = CountArmModel([4.0, 0.0], [1.0, 0.0])
        diffs = []
        for _ in range(10_000):
            if cls is BetaBelief:
                theta = rng.beta(*[x[0] for x in b.shapes()])
                y = rng.binomial(4, theta)
            else:
                shape, rate = b.shape_rate()
                y = rng.poisson(4 * rng.gamma(shape[0], 1 / rate[0]))
            diffs.append(count_update(b, arm, [y, 0]).m[0] - b.m[0])
        diffs = np.array(diffs)
        assert abs(diffs.mean()) <= 3 * diffs.std(ddof=1) / np.sqrt(diffs.size)


def test_count_validation_and_floor():
    with pytest.raises(InvalidArgument):
        beta_binomial_update(BetaBelief([0.5], [0.5]), 2, 3, 0)
    with pytest.raises(InvalidArgument):
        gamma_poisson_update(GammaBelief([1.0], [1.0]), 1, -1, 0)
    with pytest.raises(InvalidArgument):
        BetaBelief([1.2], [0.1])
    tiny = GammaBelief([1.0], [2e-12])
    out = gamma_poisson_update(tiny, 1e12, 5, 0)
    assert out.d[0] == D_FLOOR
    assert gamma_poisson_update(out, 1.0, 3, 0) is out


def test_serialisation_round_trip(rng):
    for b in (GaussianBelief(rng.normal(size=3), random_spd(rng, 3)),
              BetaBelief([0.2, 0.7], [0.1, 0.05]), GammaBelief([3.0], [0.5])):
        back = belief_from_json(belief_to_json(b))
        assert type(back) is type(b)
        np.testing.assert_array_equal(back.m, b.m)
        np.testing.assert_array_equal(back.d, b.d)
    with pytest.raises(InvalidArgument):
        belief_from_json('{"family": "dirichlet", "m": [1], "d": [1]}')


def test_arm_set_structure():
    eye = np.eye(3)
    info = ArmSet([GaussianArmModel(eye, [1, 1, 1], Reward(weights=eye[0]))] +
                  [GaussianArmModel(eye, eye[i], Reward(weights=eye[i])) for i in (1, 2)])
    assert info.info_structure and not info.scalar_structure
    lin = ArmSet([GaussianArmModel(eye[i], [1.0]) for i in range(3)])
    assert lin.scalar_structure and not lin.info_structure
    with pytest.raises(InvalidArgument):
        ArmSet([GaussianArmModel(eye[0], [1.0]), CountArmModel([1.0], [1.0])])
    b = GaussianBelief(np.zeros(3), eye)
    for i in range(3):
        y = np.arange(3.0) if i == 0 else np.eye(3)[i]
        np.testing.assert_allclose(info.update(b, i, y).d, gaussian_update(b, info[i], y).d)
