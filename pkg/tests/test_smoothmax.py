import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from arcbandit import smoothmax as sm
from arcbandit.errors import InvalidArgument

# values below were evaluated at 30 digits with mpmath
LN_1_PLUS_E = 1.3132616875182228
NU_1_0 = (0.7310585786300049, 0.2689414213699951)
ETA_11 = 0.19661193324148185

vectors = st.lists(st.floats(-50, 50), min_size=1, max_size=8).map(np.array)
lams = st.floats(0.05, 10.0)


def test_constant_vector():
    for k in (1, 2, 7):
        for lam in (0.01, 1.0, 3.0):
            assert sm.smax(np.full(k, 2.5), lam) == pytest.approx(2.5 + lam * math.log(k), abs=1e-12)


def test_two_point_values():
    assert sm.smax([1.0, 0.0], 1.0) == pytest.approx(LN_1_PLUS_E, abs=1e-14)
    np.testing.assert_allclose(sm.nu([1.0, 0.0], 1.0), NU_1_0, atol=1e-15)
    assert sm.eta([1.0, 0.0], 1.0)[0, 0] == pytest.approx(ETA_11, abs=1e-15)


def test_small_lambda_hits_max():
    assert abs(sm.smax([10.0, 0.0], 0.01) - 10.0) < 1e-12


def test_symmetric_cases():
    np.testing.assert_array_equal(sm.nu([0.0, 0.0], 0.3), [0.5, 0.5])
    np.testing.assert_allclose(sm.eta([0.0, 0.0], 1.0), [[0.25, -0.25], [-0.25, 0.25]])


def test_translation_invariance_example():
    np.testing.assert_allclose(sm.nu(np.array([1.0, 0.0]) + 5.0, 1.0), sm.nu([1.0, 0.0], 1.0),
                               atol=1e-15)


def test_no_overflow():
    a = np.array([300.0, 299.0, -200.0])
    ev = sm.evaluate(a, 1e-4)
    assert np.isfinite(ev.value) and ev.value == pytest.approx(300.0)
    np.testing.assert_allclose(ev.nu, [1.0, 0.0, 0.0])


@pytest.mark.parametrize("a,lam", [([np.nan], 1.0), ([np.inf, 0.0], 1.0), ([1.0], 0.0),
                                   ([1.0], -1.0), ([], 1.0), ([[1.0]], 1.0)])
def test_invalid(a, lam):
    with pytest.raises(InvalidArgument):
        sm.smax(a, lam)


def test_unknown_kind():
    with pytest.raises(InvalidArgument):
        sm.SmoothMaxKind.parse("tsallis")
    assert sm.SmoothMaxKind.parse("Shannon") is sm.SmoothMaxKind.SHANNON


@given(vectors, lams)
def test_sandwich_and_simplex(a, lam):
    ev = sm.evaluate(a, lam)
    assert a.max() - 1e-9 <= ev.value <= a.max() + lam * math.log(a.size) + 1e-9
    assert np.all(ev.nu >= 0) and abs(ev.nu.sum() - 1) < 1e-12
    np.testing.assert_allclose(ev.eta, ev.eta.T, atol=0)
    np.testing.assert_allclose(ev.eta.sum(axis=1), 0.0, atol=1e-10)
    assert np.linalg.eigvalsh(ev.eta).min() > -1e-12


@given(vectors, lams, st.floats(-20, 20))
def test_translation_equivariance(a, lam, c):
    assert sm.smax(a + c, lam) == pytest.approx(sm.smax(a, lam) + c, abs=1e-9)
    np.testing.assert_allclose(sm.nu(a + c, lam), sm.nu(a, lam), atol=1e-9)


@given(vectors, lams, st.data())
def test_monotone(a, lam, data):
    bump = np.array(data.draw(st.lists(st.floats(0, 5), min_size=a.size, max_size=a.size)))
    assert sm.smax(a + bump, lam) >= sm.smax(a, lam) - 1e-12


def test_finite_difference_gradient_and_hessian(rng):
    h = 1e-5
    for _ in range(200):
        k = int(rng.integers(1, 9))
        a = rng.normal(0, 2, k)
        lam = float(rng.uniform(0.2, 3))
        nu = sm.nu(a, lam)
        eye = np.eye(k)
        fd = np.array([(sm.smax(a + h * eye[i], lam) - sm.smax(a - h * eye[i], lam)) / (2 * h)
                       for i in range(k)])
        np.testing.assert_allclose(fd, nu, atol=1e-6)
        fd_h = np.array([(sm.nu(a + h * eye[i], lam) - sm.nu(a - h * eye[i], lam)) / (2 * h)
                         for i in range(k)])
        np.testing.assert_allclose(fd_h, sm.eta(a, lam) / lam, atol=1e-5)
