# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tracking-loop kernels (see ``_kernels_py`` for the reference)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, cos, sin, M_PI

cnp.import_array()


cdef inline double _sign(double v) nogil:
    if v > 0.0:
        return 1.0
    if v < 0.0:
        return -1.0
    return 0.0


def pfb_clock_sync(x, double[:, ::1] banks_rev, double[:, ::1] dbanks_rev, long sps,
                   double alpha, double beta, double max_dev, double k, double rate_f,
                   long count):
    cdef double complex[::1] xv = np.ascontiguousarray(x, dtype=np.complex128)
    cdef Py_ssize_t nfilts = banks_rev.shape[0]
    cdef Py_ssize_t ntaps = banks_rev.shape[1]
    cdef Py_ssize_t n = xv.shape[0]
    cdef Py_ssize_t cap = (n // sps) + 4
    y_arr = np.empty(cap, dtype=np.complex128)
    k_arr = np.empty(cap)
    r_arr = np.empty(cap)
    e_arr = np.empty(cap)
    cdef double complex[::1] y_out = y_arr
    cdef double[::1] k_out = k_arr
    cdef double[::1] r_out = r_arr
    cdef double[::1] e_out = e_arr
    cdef Py_ssize_t i = 0, j, filt
    cdef double yr, yi, dyr, dyi, b, db, e, xr, xi
    with nogil:
        while True:
            filt = <Py_ssize_t>floor(k)
            while filt >= nfilts:
                k -= nfilts
                filt -= nfilts
                count += 1
            while filt < 0:
                k += nfilts
                filt += nfilts
                count -= 1
            if count < 0:
                count = 0
            if count + ntaps > n or i >= cap:
                break
            yr = 0.0
            yi = 0.0
            dyr = 0.0
            dyi = 0.0
            for j in range(ntaps):
                b = banks_rev[filt, j]
                db = dbanks_rev[filt, j]
                xr = xv[count + j].real
                xi = xv[count + j].imag
                yr += b * xr
                yi += b * xi
                dyr += db * xr
                dyi += db * xi
            e = yr * dyr + yi * dyi
            rate_f = rate_f + beta * e
            if rate_f > max_dev:
                rate_f = max_dev
            elif rate_f < -max_dev:
                rate_f = -max_dev
            y_out[i] = yr + 1j * yi
            k_out[i] = k
            r_out[i] = rate_f
            e_out[i] = e
            k = k + rate_f + alpha * e
            i += 1
            count += sps
    return y_arr[:i], k_arr[:i], r_arr[:i], e_arr[:i], k, rate_f, count


def cma_equalize(x, weights, double mu, double modulus, double e_lo, double e_hi):
    cdef double complex[::1] xv = np.ascontiguousarray(x, dtype=np.complex128)
    w_arr = np.array(weights, dtype=np.complex128)
    cdef double complex[::1] w = w_arr
    cdef Py_ssize_t ntaps = w.shape[0]
    cdef Py_ssize_t nout = xv.shape[0] - ntaps + 1
    if nout < 0:
        nout = 0
    cdef Py_ssize_t center = ntaps // 2
    z_arr = np.empty(nout, dtype=np.complex128)
    c_arr = np.empty(nout)
    cdef double complex[::1] z_out = z_arr
    cdef double[::1] cost = c_arr
    cdef Py_ssize_t n, i
    cdef long resets = 0
    cdef double complex z, err, xin
    cdef double mag2, energy
    with nogil:
        for n in range(nout):
            z = 0.0
            for i in range(ntaps):
                z = z + w[i] * xv[n + ntaps - 1 - i]
            mag2 = z.real * z.real + z.imag * z.imag
            err = z * (mag2 - modulus)
            energy = 0.0
            for i in range(ntaps):
                xin = xv[n + ntaps - 1 - i]
                w[i] = w[i] - mu * err * xin.conjugate()
                energy += w[i].real * w[i].real + w[i].imag * w[i].imag
            if not (e_lo <= energy <= e_hi):
                for i in range(ntaps):
                    w[i] = 0.0
                w[center] = 1.0
                resets += 1
            z_out[n] = z
            cost[n] = (mag2 - modulus) * (mag2 - modulus)
    return z_arr, c_arr, w_arr, resets


def costas_track(x, double phase, double freq, double alpha, double beta, double max_freq):
    cdef double complex[::1] xv = np.ascontiguousarray(x, dtype=np.complex128)
    cdef Py_ssize_t n = xv.shape[0]
    v_arr = np.empty(n, dtype=np.complex128)
    p_arr = np.empty(n)
    f_arr = np.empty(n)
    e_arr = np.empty(n)
    cdef double complex[::1] v_out = v_arr
    cdef double[::1] p_out = p_arr
    cdef double[::1] f_out = f_arr
    cdef double[::1] e_out = e_arr
    cdef Py_ssize_t i
    cdef double c, s, xr, xi, vr, vi, e
    cdef double two_pi = 2.0 * M_PI
    with nogil:
        for i in range(n):
            c = cos(phase)
            s = sin(phase)
            xr = xv[i].real
            xi = xv[i].imag
            vr = xr * c + xi * s
            vi = xi * c - xr * s
            e = _sign(vr) * vi - _sign(vi) * vr
            v_out[i] = vr + 1j * vi
            p_out[i] = phase
            f_out[i] = freq
            e_out[i] = e
            freq = freq + beta * e
            if freq > max_freq:
                freq = max_freq
            elif freq < -max_freq:
                freq = -max_freq
            phase = phase + alpha * e + freq
            phase = phase - two_pi * floor((phase + M_PI) / two_pi)
    return v_arr, p_arr, f_arr, e_arr, phase, freq
