"""Compiled jet-propagation kernels.

Per-unit jets are flat vectors of m = 1 + d + d*d slots (value, gradient,
flattened Hessian), matching the numpy backend's layout. Affine layers then
reduce over contiguous slot vectors, which compiles to vectorizable loops.
Gradients accumulate sequentially over points, so results are deterministic.
"""

import numpy as np

from libc.math cimport tanh

NAME = "compiled"


cdef inline void _tanh_jet(const double[:, ::1] A, double[:, ::1] Z, double[::1] t,
                           Py_ssize_t h, Py_ssize_t d) noexcept nogil:
    """Z = tanh-composed jet of pre-activation jet A for one point; t keeps tanh values."""
    cdef Py_ssize_t j, k, l, m = 1 + d + d * d
    cdef double tv, d1, d2
    for j in range(h):
        tv = tanh(A[j, 0])
        t[j] = tv
        d1 = 1.0 - tv * tv
        d2 = -2.0 * tv * d1
        Z[j, 0] = tv
        for k in range(d):
            Z[j, 1 + k] = d1 * A[j, 1 + k]
        for k in range(d):
            for l in range(d):
                Z[j, 1 + d + k * d + l] = d1 * A[j, 1 + d + k * d + l] \
                    + d2 * A[j, 1 + k] * A[j, 1 + l]


def forward(const double[:, ::1] W1, const double[::1] b1,
            const double[:, ::1] W2, const double[::1] b2,
            const double[:, ::1] W3, const double[::1] b3,
            const double[:, ::1] X):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t h1 = W1.shape[0], h2 = W2.shape[0]
    cdef Py_ssize_t m = 1 + d + d * d
    cdef Py_ssize_t p, j, o, k, l, s

    A1_arr = np.empty((n, h1, m)); Z1_arr = np.empty((n, h1, m))
    A2_arr = np.empty((n, h2, m)); Z2_arr = np.empty((n, h2, m))
    t1_arr = np.empty((n, h1)); t2_arr = np.empty((n, h2))
    v_arr = np.empty(n); g_arr = np.empty((n, d)); h_arr = np.empty((n, d, d))
    cdef double[:, :, ::1] A1 = A1_arr, Z1 = Z1_arr, A2 = A2_arr, Z2 = Z2_arr
    cdef double[:, ::1] t1 = t1_arr, t2 = t2_arr
    cdef double[::1] v = v_arr
    cdef double[:, ::1] g = g_arr
    cdef double[:, :, ::1] h = h_arr

    cdef double a, w
    cdef double acc[32]
    with nogil:
        for p in range(n):
            # layer-1 pre-activation jet: value W1 x + b1, gradient row W1, Hessian 0
            for j in range(h1):
                a = b1[j]
                for k in range(d):
                    a += W1[j, k] * X[p, k]
                A1[p, j, 0] = a
                for k in range(d):
                    A1[p, j, 1 + k] = W1[j, k]
                for s in range(1 + d, m):
                    A1[p, j, s] = 0.0
            _tanh_jet(A1[p], Z1[p], t1[p], h1, d)
            for o in range(h2):
                for s in range(m):
                    acc[s] = 0.0
                for j in range(h1):
                    w = W2[o, j]
                    for s in range(m):
                        acc[s] += w * Z1[p, j, s]
                A2[p, o, 0] = acc[0] + b2[o]
                for s in range(1, m):
                    A2[p, o, s] = acc[s]
            _tanh_jet(A2[p], Z2[p], t2[p], h2, d)
            a = b3[0]
            for k in range(d):
                g[p, k] = 0.0
                for l in range(d):
                    h[p, k, l] = 0.0
            for o in range(h2):
                w = W3[0, o]
                a += w * Z2[p, o, 0]
                for k in range(d):
                    g[p, k] += w * Z2[p, o, 1 + k]
                for k in range(d):
                    for l in range(d):
                        h[p, k, l] += w * Z2[p, o, 1 + d + k * d + l]
            v[p] = a

    tape = (np.asarray(X), A1_arr, Z1_arr, A2_arr, Z2_arr, t1_arr, t2_arr)
    return v_arr, g_arr, h_arr, tape


cdef inline void _tanh_reverse(const double[:, ::1] wZ, const double[:, ::1] A,
                               const double[::1] t, double[:, ::1] wA,
                               Py_ssize_t h, Py_ssize_t d) noexcept nogil:
    """Cotangent on the pre-activation jet A given the one on the tanh output jet."""
    cdef Py_ssize_t j, k, l
    cdef double tv, d1, d2, dd2, s1, s2, s3, gsum
    for j in range(h):
        tv = t[j]
        d1 = 1.0 - tv * tv
        d2 = -2.0 * tv * d1
        dd2 = -2.0 * d1 * (1.0 - 3.0 * tv * tv)
        s1 = 0.0
        s2 = 0.0
        s3 = 0.0
        for k in range(d):
            s1 += wZ[j, 1 + k] * A[j, 1 + k]
        for k in range(d):
            for l in range(d):
                s2 += wZ[j, 1 + d + k * d + l] * A[j, 1 + d + k * d + l]
                s3 += wZ[j, 1 + d + k * d + l] * A[j, 1 + k] * A[j, 1 + l]
        wA[j, 0] = wZ[j, 0] * d1 + d2 * (s1 + s2) + dd2 * s3
        for k in range(d):
            gsum = 0.0
            for l in range(d):
                gsum += (wZ[j, 1 + d + k * d + l] + wZ[j, 1 + d + l * d + k]) * A[j, 1 + l]
            wA[j, 1 + k] = d1 * wZ[j, 1 + k] + d2 * gsum
        for k in range(d):
            for l in range(d):
                wA[j, 1 + d + k * d + l] = d1 * wZ[j, 1 + d + k * d + l]


def backward(const double[:, ::1] W1, const double[::1] b1,
             const double[:, ::1] W2, const double[::1] b2,
             const double[:, ::1] W3, const double[::1] b3,
             tape,
             const double[::1] wv, const double[:, ::1] wg, const double[:, :, ::1] wh):
    cdef const double[:, ::1] X = tape[0]
    cdef const double[:, :, ::1] A1 = tape[1]
    cdef const double[:, :, ::1] Z1 = tape[2]
    cdef const double[:, :, ::1] A2 = tape[3]
    cdef const double[:, :, ::1] Z2 = tape[4]
    cdef const double[:, ::1] t1 = tape[5]
    cdef const double[:, ::1] t2 = tape[6]
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef Py_ssize_t h1 = W1.shape[0], h2 = W2.shape[0]
    cdef Py_ssize_t m = 1 + d + d * d
    cdef Py_ssize_t p, j, o, k, l, s

    dW1_arr = np.zeros((h1, d)); db1_arr = np.zeros(h1)
    dW2_arr = np.zeros((h2, h1)); db2_arr = np.zeros(h2)
    dW3_arr = np.zeros((1, h2)); db3_arr = np.zeros(1)
    cdef double[:, ::1] dW1 = dW1_arr, dW2 = dW2_arr, dW3 = dW3_arr
    cdef double[::1] db1 = db1_arr, db2 = db2_arr, db3 = db3_arr

    wOut_arr = np.empty(m)
    wZ2_arr = np.empty((h2, m)); wA2_arr = np.empty((h2, m))
    wZ1_arr = np.empty((h1, m)); wA1_arr = np.empty((h1, m))
    cdef double[::1] wOut = wOut_arr
    cdef double[:, ::1] wZ2 = wZ2_arr, wA2 = wA2_arr, wZ1 = wZ1_arr, wA1 = wA1_arr

    cdef double w, dot
    cdef double acc[32]
    with nogil:
        for p in range(n):
            wOut[0] = wv[p]
            for k in range(d):
                wOut[1 + k] = wg[p, k]
            for k in range(d):
                for l in range(d):
                    wOut[1 + d + k * d + l] = wh[p, k, l]
            # output affine reverse
            db3[0] += wOut[0]
            for o in range(h2):
                dot = 0.0
                for s in range(m):
                    dot += wOut[s] * Z2[p, o, s]
                dW3[0, o] += dot
                w = W3[0, o]
                for s in range(m):
                    wZ2[o, s] = w * wOut[s]
            _tanh_reverse(wZ2, A2[p], t2[p], wA2, h2, d)
            # affine-2 reverse
            for o in range(h2):
                db2[o] += wA2[o, 0]
                for j in range(h1):
                    dot = 0.0
                    for s in range(m):
                        dot += wA2[o, s] * Z1[p, j, s]
                    dW2[o, j] += dot
            for j in range(h1):
                for s in range(m):
                    acc[s] = 0.0
                for o in range(h2):
                    w = W2[o, j]
                    for s in range(m):
                        acc[s] += w * wA2[o, s]
                for s in range(m):
                    wZ1[j, s] = acc[s]
            _tanh_reverse(wZ1, A1[p], t1[p], wA1, h1, d)
            # affine-1 reverse: the gradient slots of A1 are W1 itself, so their
            # cotangents land in dW1 directly; Hessian slots are identically zero
            for j in range(h1):
                db1[j] += wA1[j, 0]
                for k in range(d):
                    dW1[j, k] += wA1[j, 0] * X[p, k] + wA1[j, 1 + k]
    return dW1_arr, db1_arr, dW2_arr, db2_arr, dW3_arr, db3_arr
