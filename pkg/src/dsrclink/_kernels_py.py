"""Pure-Python tracking-loop kernels.

Same signatures and arithmetic order as the compiled ``_kernels`` module,
used when the extension is unavailable or ``DSRCLINK_PURE_PYTHON`` is set.
"""

import math

import numpy as np


def pfb_clock_sync(x, banks_rev, dbanks_rev, sps, alpha, beta, max_dev, k, rate_f, count):
    """Polyphase clock sync over one block.

    ``x`` already carries the filter history at its head. ``banks_rev`` rows
    are time-reversed sub-filters so that output ``y`` for window start
    ``count`` is ``dot(banks_rev[f], x[count:count + L])``. ``k`` is the
    fractional bank position, ``rate_f`` the rate deviation in bank units per
    symbol.

    Returns ``(y, k_traj, rate_traj, err_traj, k, rate_f, count)`` where the
    trajectories hold one entry per output symbol.
    """
    x = np.asarray(x, dtype=np.complex128)
    nfilts, ntaps = banks_rev.shape
    n = x.shape[0]
    cap = (n // sps) + 4
    y_out = np.empty(cap, dtype=np.complex128)
    k_out = np.empty(cap)
    r_out = np.empty(cap)
    e_out = np.empty(cap)
    i = 0
    while True:
        filt = int(math.floor(k))
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
        win = x[count:count + ntaps]
        y = np.dot(banks_rev[filt], win)
        dy = np.dot(dbanks_rev[filt], win)
        e = y.real * dy.real + y.imag * dy.imag
        rate_f = rate_f + beta * e
        if rate_f > max_dev:
            rate_f = max_dev
        elif rate_f < -max_dev:
            rate_f = -max_dev
        y_out[i] = y
        k_out[i] = k
        r_out[i] = rate_f
        e_out[i] = e
        k = k + rate_f + alpha * e
        i += 1
        count += sps
    return y_out[:i], k_out[:i], r_out[:i], e_out[:i], k, rate_f, count


def cma_equalize(x, weights, mu, modulus, e_lo, e_hi):
    """Constant-modulus equalizer over one block.

    ``x`` carries ``len(weights) - 1`` history samples at its head; output
    ``z[n] = sum_i w[i] * x[n + L - 1 - i]``.

    Returns ``(z, cost, weights, resets)``.
    """
    x = np.asarray(x, dtype=np.complex128)
    w = np.array(weights, dtype=np.complex128)
    ntaps = w.shape[0]
    nout = x.shape[0] - ntaps + 1
    center = ntaps // 2
    z_out = np.empty(max(nout, 0), dtype=np.complex128)
    cost = np.empty(max(nout, 0))
    resets = 0
    for n in range(nout):
        win = x[n:n + ntaps][::-1]
        z = np.dot(w, win)
        mag2 = z.real * z.real + z.imag * z.imag
        err = z * (mag2 - modulus)
        w = w - mu * err * np.conj(win)
        energy = np.dot(w.real, w.real) + np.dot(w.imag, w.imag)
        if not (e_lo <= energy <= e_hi):
            w = np.zeros(ntaps, dtype=np.complex128)
            w[center] = 1.0
            resets += 1
        z_out[n] = z
        cost[n] = (mag2 - modulus) * (mag2 - modulus)
    return z_out, cost, w, resets


def _sign(v: float) -> float:
    return 1.0 if v > 0.0 else (-1.0 if v < 0.0 else 0.0)


def costas_track(x, phase, freq, alpha, beta, max_freq):
    """Fourth-order Costas loop over one block.

    Returns ``(v, phase_traj, freq_traj, err_traj, phase, freq)``; the
    trajectories record the state used for each output.
    """
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[0]
    v_out = np.empty(n, dtype=np.complex128)
    p_out = np.empty(n)
    f_out = np.empty(n)
    e_out = np.empty(n)
    two_pi = 2.0 * math.pi
    samples = x.tolist()
    for i in range(n):
        c = math.cos(phase)
        s = math.sin(phase)
        xr = samples[i].real
        xi = samples[i].imag
        vr = xr * c + xi * s
        vi = xi * c - xr * s
        e = _sign(vr) * vi - _sign(vi) * vr
        v_out[i] = complex(vr, vi)
        p_out[i] = phase
        f_out[i] = freq
        e_out[i] = e
        freq = freq + beta * e
        if freq > max_freq:
            freq = max_freq
        elif freq < -max_freq:
            freq = -max_freq
        phase = phase + alpha * e + freq
        phase = phase - two_pi * math.floor((phase + math.pi) / two_pi)
    return v_out, p_out, f_out, e_out, phase, freq
