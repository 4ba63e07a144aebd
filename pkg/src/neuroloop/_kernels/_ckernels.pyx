# Compiled twins of the _pykernels hot loops. Same floating-point operation
# order as the NumPy fallback so results match bit for bit (the extension is
# built with fp-contract off).

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "c"


def sosfilt_stream(sos, x, zi):
    """Cascaded biquad filtering (DF2T), state updated in place."""
    cdef const double[:, ::1] sos_v = np.ascontiguousarray(sos, dtype=np.float64)
    cdef const double[:, ::1] x_v = np.ascontiguousarray(x, dtype=np.float64)
    y = np.empty_like(np.asarray(x_v))
    cdef double[:, ::1] y_v = y
    cdef double[:, :, ::1] zi_v = zi
    cdef Py_ssize_t n_ch = x_v.shape[0]
    cdef Py_ssize_t n_samp = x_v.shape[1]
    cdef Py_ssize_t n_sec = sos_v.shape[0]
    cdef Py_ssize_t c, n, s
    cdef double v, w, b0, b1, b2, a1, a2
    for c in range(n_ch):
        for n in range(n_samp):
            v = x_v[c, n]
            for s in range(n_sec):
                b0 = sos_v[s, 0]
                b1 = sos_v[s, 1]
                b2 = sos_v[s, 2]
                a1 = sos_v[s, 4]
                a2 = sos_v[s, 5]
                w = b0 * v + zi_v[c, s, 0]
                zi_v[c, s, 0] = b1 * v - a1 * w + zi_v[c, s, 1]
                zi_v[c, s, 1] = b2 * v - a2 * w
                v = w
            y_v[c, n] = v
    return y


def burg(x, int order):
    """Burg AR estimate, convention x_t = sum a_k x_{t-k} + e_t."""
    cdef const double[::1] x_v = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = x_v.shape[0]
    ef_arr = np.array(x_v, dtype=np.float64)
    eb_arr = np.array(x_v, dtype=np.float64)
    a_arr = np.zeros(order + 1)
    prev_arr = np.zeros(order + 1)
    cdef double[::1] ef = ef_arr
    cdef double[::1] eb = eb_arr
    cdef double[::1] a = a_arr
    cdef double[::1] prev = prev_arr
    cdef Py_ssize_t m, t, i
    cdef double den, num, k, fv, bv, noise
    a[0] = 1.0
    noise = 0.0
    for t in range(n):
        noise += x_v[t] * x_v[t]
    noise /= n
    for m in range(order):
        den = 0.0
        num = 0.0
        for t in range(m + 1, n):
            fv = ef[t]
            bv = eb[t - 1]
            den += fv * fv + bv * bv
            num += fv * bv
        if den <= 0.0:
            raise FloatingPointError("zero prediction-error energy")
        k = -2.0 * num / den
        for i in range(m + 2):
            prev[i] = a[i]
        for i in range(m + 2):
            a[i] = prev[i] + k * prev[m + 1 - i]
        for t in range(n - 1, m, -1):
            fv = ef[t]
            bv = eb[t - 1]
            ef[t] = fv + k * bv
            eb[t] = bv + k * fv
        noise *= (1.0 - k * k)
    out = -a_arr[1:]
    return out, noise
