"""Pure-Python/NumPy reference implementations of the hot kernels.

These are the import-time fallback when the compiled extension is missing
(or when NEUROLOOP_PURE_PYTHON is set). The compiled versions perform the
same floating-point operations in the same order, so both backends agree to
the last bit for the filter and to rounding noise for Burg.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def sosfilt_stream(sos: np.ndarray, x: np.ndarray, zi: np.ndarray) -> np.ndarray:
    """Cascaded biquad filtering, direct form II transposed, streaming.

    Parameters
    ----------
    sos : (n_sections, 6) array, rows (b0, b1, b2, 1, a1, a2)
    x : (n_channels, n_samples) input
    zi : (n_channels, n_sections, 2) delay state, updated in place

    Returns the filtered (n_channels, n_samples) array.
    """
    sos = np.asarray(sos, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    n_sections = sos.shape[0]
    y = np.empty_like(x)
    for n in range(x.shape[1]):
        v = x[:, n].copy()
        for s in range(n_sections):
            b0, b1, b2, _, a1, a2 = sos[s]
            w = b0 * v + zi[:, s, 0]
            zi[:, s, 0] = b1 * v - a1 * w + zi[:, s, 1]
            zi[:, s, 1] = b2 * v - a2 * w
            v = w
        y[:, n] = v
    return y


def burg(x: np.ndarray, order: int) -> tuple[np.ndarray, float]:
    """Burg-method AR coefficients in the convention x_t = sum a_k x_{t-k} + e.

    Returns (a, noise_var) where a has length `order`. Raises ZeroDivisionError
    via the caller's check when the signal has no energy; here a zero
    denominator raises FloatingPointError.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    ef = x.copy()
    eb = x.copy()
    a = np.zeros(order + 1)
    a[0] = 1.0
    noise = float(x @ x) / n
    for m in range(order):
        efp = ef[m + 1:]
        ebp = eb[m:n - 1]
        den = float(efp @ efp) + float(ebp @ ebp)
        if den <= 0.0:
            raise FloatingPointError("zero prediction-error energy")
        k = -2.0 * float(efp @ ebp) / den
        # a <- [a, 0] + k * reverse([a, 0])
        prev = a[:m + 2].copy()
        a[:m + 2] = prev + k * prev[::-1]
        ef_new = efp + k * ebp
        eb_new = ebp + k * efp
        ef[m + 1:] = ef_new
        eb[m + 1:] = eb_new
        noise *= (1.0 - k * k)
    return -a[1:], noise
