# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; same signatures and conventions as ``_pykernels``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef enum:
    NS = 4


def reaction_diffusion(double[:, ::1] y, double[::1] theta0, double[::1] theta_minus,
                       double[::1] theta_n, double[::1] consts, double[::1] lo, double[::1] up):
    cdef Py_ssize_t N = y.shape[0], i
    cdef double Q = consts[0], P = consts[1], kp = consts[2], kn = consts[3]
    cdef double gp = consts[4], gn = consts[5], om = consts[6], dn = consts[7], dp = consts[8]
    cdef double qm, pp, n, p, q0, p0, tunnel, t0, tm, tn
    f_arr = np.empty((N, NS))
    A_arr = np.zeros((N, NS, NS))
    cdef double[:, ::1] f = f_arr
    cdef double[:, :, ::1] A = A_arr

    for i in range(N):
        qm = y[i, 0]
        pp = y[i, 1]
        n = y[i, 2]
        p = y[i, 3]
        q0 = Q - qm
        p0 = P - pp
        t0 = theta0[i]
        tm = theta_minus[i]
        tn = theta_n[i]
        tunnel = om * (Q * p0 - qm * P)

        f[i, 0] = t0 * q0 + kn * n * q0 - tm * qm - kp * p * qm + tunnel
        f[i, 1] = tn * p0 + gp * p * p0 - gn * n * pp + tunnel
        f[i, 2] = tm * qm + tn * p0 - kn * n * q0 - gn * n * pp
        f[i, 3] = t0 * q0 - kp * p * qm - gp * p * p0
        if i > 0:
            f[i, 2] += dn * lo[i] * (y[i - 1, 2] - n)
            f[i, 3] += dp * lo[i] * (y[i - 1, 3] - p)
        if i < N - 1:
            f[i, 2] += dn * up[i] * (y[i + 1, 2] - n)
            f[i, 3] += dp * up[i] * (y[i + 1, 3] - p)

        A[i, 0, 0] = -t0 - kn * n - tm - kp * p - om * P
        A[i, 0, 1] = -om * Q
        A[i, 0, 2] = kn * q0
        A[i, 0, 3] = -kp * qm
        A[i, 1, 0] = -om * P
        A[i, 1, 1] = -tn - gp * p - gn * n - om * Q
        A[i, 1, 2] = -gn * pp
        A[i, 1, 3] = gp * p0
        A[i, 2, 0] = tm + kn * n
        A[i, 2, 1] = -tn - gn * n
        A[i, 2, 2] = -kn * q0 - gn * pp - dn * (lo[i] + up[i])
        A[i, 3, 0] = -t0 - kp * p
        A[i, 3, 1] = gp * p
        A[i, 3, 3] = -kp * qm - gp * p0 - dp * (lo[i] + up[i])
    return f_arr, A_arr


cdef int _lu4(double* a, int* piv) nogil:
    """In-place LU with partial pivoting of a row-major 4x4 matrix."""
    cdef int k, r, c, best
    cdef double amax, tmp
    for k in range(NS):
        best = k
        amax = abs(a[k * NS + k])
        for r in range(k + 1, NS):
            if abs(a[r * NS + k]) > amax:
                amax = abs(a[r * NS + k])
                best = r
        piv[k] = best
        if amax == 0.0:
            return -1
        if best != k:
            for c in range(NS):
                tmp = a[k * NS + c]
                a[k * NS + c] = a[best * NS + c]
                a[best * NS + c] = tmp
        for r in range(k + 1, NS):
            a[r * NS + k] /= a[k * NS + k]
            for c in range(k + 1, NS):
                a[r * NS + c] -= a[r * NS + k] * a[k * NS + c]
    return 0


cdef void _lu4_solve(double* lu, int* piv, double* b) nogil:
    cdef int k, r
    cdef double tmp
    for k in range(NS):
        if piv[k] != k:
            tmp = b[k]
            b[k] = b[piv[k]]
            b[piv[k]] = tmp
    for r in range(1, NS):
        for k in range(r):
            b[r] -= lu[r * NS + k] * b[k]
    for r in range(NS - 1, -1, -1):
        for k in range(r + 1, NS):
            b[r] -= lu[r * NS + k] * b[k]
        b[r] /= lu[r * NS + r]


def newton_solve(double[:, :, ::1] A, double h, double[::1] lo, double[::1] up,
                 double[::1] consts, double[:, ::1] rhs):
    cdef Py_ssize_t N = A.shape[0], i
    cdef int s, t
    cdef double dn = consts[7], dp = consts[8]
    cdef double blk[NS * NS]
    cdef double col[NS]
    cdef int piv[NS]
    cdef double lcoef[NS]
    cdef double ucoef[NS]

    C_arr = np.zeros((N, NS, NS))
    x_arr = np.empty((N, NS))
    cdef double[:, :, ::1] C = C_arr
    cdef double[:, ::1] x = x_arr

    for s in range(NS):
        lcoef[s] = 0.0
        ucoef[s] = 0.0

    with nogil:
        for i in range(N):
            # B_i = (I - h A_i) - L_i C_{i-1}, L_i = -h diag(0, 0, dn lo, dp lo)
            for s in range(NS):
                for t in range(NS):
                    blk[s * NS + t] = -h * A[i, s, t]
                blk[s * NS + s] += 1.0
            lcoef[2] = -h * dn * lo[i]
            lcoef[3] = -h * dp * lo[i]
            for s in range(NS):
                col[s] = rhs[i, s]
            if i > 0:
                for s in range(2, NS):
                    for t in range(NS):
                        blk[s * NS + t] -= lcoef[s] * C[i - 1, s, t]
                    col[s] -= lcoef[s] * x[i - 1, s]
            if _lu4(blk, piv) != 0:
                with gil:
                    raise ZeroDivisionError("singular Newton block at cell %d" % i)
            _lu4_solve(blk, piv, col)
            for s in range(NS):
                x[i, s] = col[s]
            if i < N - 1:
                ucoef[2] = -h * dn * up[i]
                ucoef[3] = -h * dp * up[i]
                # C_i = B_i^{-1} U_i; U_i is diagonal with entries only on the carrier columns
                for t in range(2, NS):
                    for s in range(NS):
                        col[s] = 0.0
                    col[t] = ucoef[t]
                    _lu4_solve(blk, piv, col)
                    for s in range(NS):
                        C[i, s, t] = col[s]
        for i in range(N - 2, -1, -1):
            for s in range(NS):
                for t in range(2, NS):
                    x[i, s] -= C[i, s, t] * x[i + 1, t]
    return x_arr


def annulus_sums(values, index, Py_ssize_t nbins):
    cdef double[::1] v = np.ascontiguousarray(values, dtype=np.float64).ravel()
    cdef cnp.int64_t[::1] idx = np.ascontiguousarray(index, dtype=np.int64).ravel()
    out_arr = np.zeros(nbins)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t k, m = v.shape[0], j
    for k in range(m):
        j = idx[k]
        if 0 <= j < nbins:
            out[j] += v[k]
    return out_arr
