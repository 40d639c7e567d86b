"""Stable kernels for integrals of exp over linear segments.

For a segment on which a log-density runs linearly from ``a`` to ``b`` the
normalised moments

    I_r(a, b) = int_0^1 s**r * exp((1 - s) * a + s * b) ds,   r = 0, 1, 2

give the integral of the density (``I_0``), its gradient with respect to the
endpoint values and the Hessian.  Direct formulas like
``(exp(b) - exp(a)) / (b - a)`` lose all precision when ``a`` and ``b`` are
close, so a power series is used for small differences and the larger of the
two endpoints is always factored out to avoid overflow.
"""

from __future__ import annotations

import numpy as np

_SERIES_CUTOFF = 1.0
_SERIES_TERMS = 28


def _j_series(d: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # j_r(d) = sum_k d**k / (k! (k + r + 1))
    j0 = np.zeros_like(d)
    j1 = np.zeros_like(d)
    j2 = np.zeros_like(d)
    term = np.ones_like(d)
    for k in range(_SERIES_TERMS):
        j0 += term / (k + 1)
        j1 += term / (k + 2)
        j2 += term / (k + 3)
        term = term * d / (k + 1)
    return j0, j1, j2


def _j_closed(d: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    e = np.exp(d)
    j0 = np.expm1(d) / d
    j1 = (e * (d - 1.0) + 1.0) / d**2
    j2 = (e * (d * d - 2.0 * d + 2.0) - 2.0) / d**3
    return j0, j1, j2


def _j_nonpositive(d: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """j_r(d) = int_0^1 s**r exp(d s) ds for d <= 0."""
    small = np.abs(d) < _SERIES_CUTOFF
    j0 = np.empty_like(d)
    j1 = np.empty_like(d)
    j2 = np.empty_like(d)
    if small.any():
        s0, s1, s2 = _j_series(d[small])
        j0[small], j1[small], j2[small] = s0, s1, s2
    big = ~small
    if big.any():
        c0, c1, c2 = _j_closed(d[big])
        j0[big], j1[big], j2[big] = c0, c1, c2
    return j0, j1, j2


def segment_moments(a, b) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(I0, I1, I2)`` for linear log-values running from ``a`` to ``b``.

    Works elementwise on arrays.  ``I0 * length`` is the exact integral of
    ``exp`` over a segment of that length.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = np.broadcast_arrays(a, b)
    flip = b > a
    hi = np.where(flip, b, a)
    lo = np.where(flip, a, b)
    j0, j1, j2 = _j_nonpositive(np.atleast_1d(lo - hi).astype(float))
    scale = np.exp(np.atleast_1d(hi))
    i0 = scale * j0
    i1 = scale * j1
    i2 = scale * j2
    fl = np.atleast_1d(flip)
    # reflect s -> 1 - s when the segment rises
    r1 = np.where(fl, i0 - i1, i1)
    r2 = np.where(fl, i0 - 2.0 * i1 + i2, i2)
    shape = a.shape
    return i0.reshape(shape), r1.reshape(shape), r2.reshape(shape)


def exp_integral(a, b, length) -> np.ndarray:
    """Integral of ``exp`` over a segment of ``length`` with end log-values a, b."""
    i0, _, _ = segment_moments(a, b)
    return i0 * np.asarray(length, dtype=float)


def exp_double_integral(a, b, length) -> np.ndarray:
    """``int_0^L int_0^u exp(phi(t)) dt du`` for linear ``phi`` from a to b.

    Equals ``L**2 * (I0 - I1)``.
    """
    i0, i1, _ = segment_moments(a, b)
    length = np.asarray(length, dtype=float)
    return length**2 * (i0 - i1)
