import mpmath
import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from shapelim.segments import exp_double_integral, exp_integral, segment_moments

mpmath.mp.dps = 40


def _oracle(a: float, b: float):
    a, b = mpmath.mpf(a), mpmath.mpf(b)
    top = max(a, b)
    # quad stops on absolute error, so integrate the unit-scale kernel
    return [float(mpmath.exp(top) * mpmath.quad(lambda s: s**r * mpmath.exp((1 - s) * a + s * b - top), [0, 1]))
            for r in range(3)]


def test_matches_mpmath_on_fixed_pairs():
    pairs = [(0.0, 0.0), (1.0, 1.0 + 1e-12), (-3.0, 2.0), (5.0, -40.0), (-700.0, -699.5), (0.3, 0.31)]
    for a, b in pairs:
        got = [float(v) for v in segment_moments(a, b)]
        want = _oracle(a, b)
        np.testing.assert_allclose(got, want, rtol=1e-13, err_msg=f"a={a} b={b}")


@settings(max_examples=60, deadline=None)
@given(st.floats(-50, 50), st.floats(-30, 30))
def test_matches_mpmath_random(a, d):
    got = [float(v) for v in segment_moments(a, a + d)]
    np.testing.assert_allclose(got, _oracle(a, a + d), rtol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(-20, 20), st.floats(-20, 20))
def test_reflection(a, b):
    i0, i1, i2 = segment_moments(a, b)
    j0, j1, j2 = segment_moments(b, a)
    np.testing.assert_allclose(i0, j0, rtol=1e-14)
    np.testing.assert_allclose(i1, j0 - j1, rtol=1e-12, atol=1e-300)
    np.testing.assert_allclose(i2, j0 - 2 * j1 + j2, rtol=1e-9, atol=1e-300)


def test_no_overflow_for_large_values():
    i0, i1, i2 = segment_moments(700.0, -700.0)
    assert np.all(np.isfinite([i0, i1, i2]))


def test_integrals_broadcast_and_scale():
    a = np.array([0.0, 1.0, -2.0])
    b = np.array([1.0, 1.0, 3.0])
    L = np.array([2.0, 0.5, 1.5])
    i0, i1, _ = segment_moments(a, b)
    np.testing.assert_allclose(exp_integral(a, b, L), i0 * L)
    np.testing.assert_allclose(exp_double_integral(a, b, L), L**2 * (i0 - i1))
    # flat segment: int_0^L int_0^u e dt du = e L^2 / 2
    np.testing.assert_allclose(exp_double_integral(1.0, 1.0, 2.0), np.e * 2.0, rtol=1e-15)
