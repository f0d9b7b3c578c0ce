"""Shared DSP primitives: RRC design, streaming FIR, polyphase banks, NCO.

Streams are 1-D ``complex128`` numpy arrays; one element is one baseband
I/Q sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FirTaps:
    """Real FIR coefficients plus the samples-per-symbol they were designed for."""

    coefficients: np.ndarray
    sps: int

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=np.float64)
        if c.ndim != 1 or c.size < 1:
            raise ValueError("coefficients must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        if int(self.sps) < 1:
            raise ValueError("sps must be a positive integer")
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "sps", int(self.sps))

    def __len__(self):
        return self.coefficients.size

    @property
    def group_delay(self) -> float:
        """Delay in samples introduced by filtering with these taps."""
        return (self.coefficients.size - 1) / 2.0


@dataclass(frozen=True)
class PolyphaseBank:
    """Stride decimation of a prototype filter and of its central difference.

    ``banks[k]`` holds ``prototype[k], prototype[k + nfilts], ...`` padded with
    zeros to a common length.
    """

    nfilts: int
    banks: np.ndarray
    derivative_banks: np.ndarray
    prototype_len: int

    @property
    def taps_per_bank(self) -> int:
        return self.banks.shape[1]

    def reinterleave(self) -> np.ndarray:
        """Inverse of the decomposition (trailing zero padding removed)."""
        return self.banks.T.reshape(-1)[: self.prototype_len]


def design_rrc(sps: int, rolloff: float, ntaps: int) -> FirTaps:
    """Design a unit-energy root-raised-cosine filter.

    Parameters
    ----------
    sps : int
        Samples per symbol, at least 2.
    rolloff : float
        Excess bandwidth factor in (0, 1].
    ntaps : int
        Odd filter length; ``4 * sps + 1`` or more is recommended.

    Returns
    -------
    FirTaps
        Taps centred on index ``ntaps // 2`` with ``sum(taps**2) == 1``.
    """
    if int(sps) != sps or sps < 2:
        raise ValueError(f"sps must be an integer >= 2, got {sps}")
    if not 0.0 < rolloff <= 1.0:
        raise ValueError(f"rolloff must lie in (0, 1], got {rolloff}")
    if int(ntaps) != ntaps or ntaps < 1 or ntaps % 2 == 0:
        raise ValueError(f"ntaps must be a positive odd integer, got {ntaps}")
    sps = int(sps)
    ntaps = int(ntaps)
    b = float(rolloff)

    # time in symbol periods
    t = (np.arange(ntaps) - ntaps // 2) / sps
    h = np.empty(ntaps)
    at_zero = np.isclose(t, 0.0, atol=1e-12)
    at_edge = np.isclose(np.abs(t), 1.0 / (4.0 * b), atol=1e-12)
    regular = ~(at_zero | at_edge)

    tr = t[regular]
    num = np.sin(np.pi * tr * (1 - b)) + 4 * b * tr * np.cos(np.pi * tr * (1 + b))
    den = np.pi * tr * (1 - (4 * b * tr) ** 2)
    h[regular] = num / den
    h[at_zero] = 1.0 - b + 4.0 * b / np.pi
    h[at_edge] = (b / np.sqrt(2.0)) * (
        (1 + 2 / np.pi) * np.sin(np.pi / (4 * b)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b))
    )

    h /= np.sqrt(np.sum(h * h))
    # enforce exact even symmetry against rounding in the closed form
    h = 0.5 * (h + h[::-1])
    return FirTaps(h, sps)


def fir_filter(taps: FirTaps | np.ndarray, x: np.ndarray) -> np.ndarray:
    """Streaming FIR with zero-initialised history.

    The output has the same length as the input and is *not* delay
    compensated: an impulse at sample 0 reproduces the tap list, so the
    group delay is ``(len(taps) - 1) / 2`` samples.
    """
    c = taps.coefficients if isinstance(taps, FirTaps) else np.asarray(taps)
    x = np.asarray(x)
    if x.size == 0:
        return x.astype(np.result_type(x, c, np.float64))
    return np.convolve(x, c)[: x.size]


def polyphase_decompose(prototype: FirTaps | np.ndarray, nfilts: int) -> PolyphaseBank:
    """Split a prototype designed at ``sps * nfilts`` into ``nfilts`` sub-filters.

    The prototype is the caller's responsibility: it must be designed at the
    ``nfilts``-fold oversampled rate for the banks to act as fractional-delay
    matched filters. Derivative banks decompose the central difference
    ``(p[m+1] - p[m-1]) / 2`` of the prototype in the same way.
    """
    if int(nfilts) != nfilts or nfilts < 1:
        raise ValueError(f"nfilts must be a positive integer, got {nfilts}")
    nfilts = int(nfilts)
    p = prototype.coefficients if isinstance(prototype, FirTaps) else np.asarray(prototype, float)
    n = p.size
    per_bank = -(-n // nfilts)
    padded = np.zeros(per_bank * nfilts)
    padded[:n] = p

    ext = np.concatenate(([0.0], p, [0.0]))
    dp = np.zeros(per_bank * nfilts)
    dp[:n] = 0.5 * (ext[2:] - ext[:-2])

    banks = padded.reshape(per_bank, nfilts).T.copy()
    dbanks = dp.reshape(per_bank, nfilts).T.copy()
    return PolyphaseBank(nfilts, banks, dbanks, n)


def wrap_phase(phase: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    return (phase + np.pi) % (2.0 * np.pi) - np.pi


def nco_advance(phase: float, freq: float, n: int) -> tuple[float, np.ndarray]:
    """Advance a numerically controlled oscillator by ``n`` samples.

    Returns the wrapped phase after ``n`` steps and the ``n`` unit rotators
    ``exp(j * (phase + k * freq))`` for ``k = 0 .. n-1``.
    """
    k = np.arange(int(n), dtype=np.float64)
    angles = phase + k * freq
    rot = np.cos(angles) + 1j * np.sin(angles)
    return float(wrap_phase(phase + n * freq)), rot


def loop_gains(bandwidth: float, damping: float = np.sqrt(2.0) / 2.0, detector_gain: float = 1.0):
    """Proportional and integral gains of a second-order tracking loop.

    ``bandwidth`` is the normalised natural frequency in radians per update.
    Both gains are divided by ``detector_gain`` so the loop dynamics do not
    depend on the error detector's slope.
    """
    denom = 1.0 + 2.0 * damping * bandwidth + bandwidth * bandwidth
    alpha = 4.0 * damping * bandwidth / denom
    beta = 4.0 * bandwidth * bandwidth / denom
    return alpha / detector_gain, beta / detector_gain
