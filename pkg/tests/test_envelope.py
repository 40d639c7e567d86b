import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize, stats

from shapelim.envelope import (
    EnvelopeFunctionalTable,
    envelope_functionals,
    envelope_table,
    lower_envelope,
    simulate_driving,
)


def _qp_oracle(z: np.ndarray, x: np.ndarray) -> np.ndarray:
    # concave g = alpha + beta x - sum_j c_j (x - x_j)_+ with c_j >= 0; free terms split in two
    ramps = -np.maximum(x[:, None] - x[None, 1:-1], 0.0)
    one = np.ones_like(x)
    A = np.column_stack((one, -one, x, -x, ramps))
    coef, _ = optimize.nnls(A, z, maxiter=50 * A.shape[1])
    return A @ coef


@pytest.mark.parametrize("seed", range(4))
def test_matches_least_squares_oracle(seed):
    d = simulate_driving(2, 1.0, 0.01, seed)
    e = lower_envelope(d)
    assert e.certificate.passed
    Y, h = d.Y, d.h
    z = np.diff(Y, 2) / h**2
    g_qp = _qp_oracle(z, d.t[1:-1])
    assert np.max(np.abs(e.g - g_qp)) <= 1e-6


def test_zero_noise_is_its_own_envelope():
    h = 0.005
    e = lower_envelope(simulate_driving(2, 3.0, h, noise=False))
    d = e.driving
    assert d.Y[d.M] == 0.0
    assert np.max(np.abs(e.H - d.Y)) <= 1e-10
    f = envelope_functionals(e)
    assert f["H2_0"] == pytest.approx(-2 * h**2, abs=1e-9)
    assert f["H3_0"] == pytest.approx(12 * h, abs=1e-6)
    assert f["argmax"] == 0.0


def test_brownian_variance_at_unit_time():
    w_plus, w_minus = [], []
    for r in range(2000):
        d = simulate_driving(2, 1.0, 0.01, [99, r])
        w_plus.append(d.W[-1])
        w_minus.append(d.W[0])
        assert d.W[d.M] == 0.0 and d.Y[d.M] == 0.0
    assert 0.9 <= np.var(w_plus) <= 1.1
    assert 0.9 <= np.var(w_minus) <= 1.1
    assert abs(np.corrcoef(w_plus, w_minus)[0, 1]) < 0.1


def test_narrow_path_is_inner_part_of_wide_path():
    wide = simulate_driving(2, 3.0, 0.01, 5)
    narrow = simulate_driving(2, 2.0, 0.01, 5)
    off = wide.M - narrow.M
    np.testing.assert_array_equal(wide.W[off:-off], narrow.W)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 4]))
def test_certificate_on_random_paths(seed, k):
    e = lower_envelope(simulate_driving(k, 2.0, 0.01, seed))
    assert e.converged and e.certificate.passed
    assert np.all(e.touch_residuals >= -1e-8)


def test_table_determinism_and_distinct_rows(tmp_path):
    a = envelope_table(2, 2.0, 0.01, 2, 3, workers=1)
    b = envelope_table(2, 2.0, 0.01, 2, 3, workers=1)
    assert a.H2_0[0] != a.H2_0[1]
    np.testing.assert_array_equal(a.H2_0, b.H2_0)
    np.testing.assert_array_equal(a.argmax, b.argmax)
    a.write(tmp_path / "t.csv", tmp_path / "t.json")
    back = EnvelopeFunctionalTable.read(tmp_path / "t.csv", tmp_path / "t.json")
    np.testing.assert_array_equal(back.H3_0, a.H3_0)
    assert (back.k, back.K, back.h, back.seed, back.R) == (2, 2.0, 0.01, 3, 2)
    assert back.certificate_max == a.certificate_max


def test_functionals_stable_in_window_width():
    narrow = envelope_table(2, 2.0, 0.005, 1000, 7)
    wide = envelope_table(2, 3.0, 0.005, 1000, 7)
    assert abs(np.median(narrow.H2_0) - np.median(wide.H2_0)) <= 0.05
    assert abs(np.median(narrow.argmax) - np.median(wide.argmax)) <= 0.05


def test_scaling_in_a_and_sigma():
    std = envelope_table(2, 3.0, 0.005, 1000, 7)
    a, sigma = 2.0, 0.5
    lam = (a / sigma) ** 0.4
    kap = sigma * lam**4
    scaled = envelope_table(2, 5.2, 0.01, 1000, 70, a=a, sigma=sigma)
    assert stats.ks_2samp(scaled.H2_0 / (kap / lam**2), std.H2_0).statistic <= 0.08
    assert stats.ks_2samp(scaled.argmax / lam, std.argmax).statistic <= 0.08
    se = std.H2_0.std() / np.sqrt(std.R)
    assert abs(std.H2_0.mean()) <= 2 * se


def test_rejects_bad_grids():
    with pytest.raises(ValueError):
        simulate_driving(2, 1.0, 0.3)
    with pytest.raises(ValueError):
        simulate_driving(3, 1.0, 0.01)
