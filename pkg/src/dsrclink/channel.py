"""Impairment chain standing in for the over-the-air hop.

The order is fixed: multipath, then sample-clock timing, then carrier
offset, then AWGN.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .dsp import nco_advance

NOISELESS = "noiseless"


@dataclass
class ChannelConfig:
    taps: list = field(default_factory=lambda: [1.0 + 0j])
    cfo: float = 0.0  # cycles/sample
    phase0: float = 0.0  # radians
    timing_frac: float = 0.0  # fraction of a sample
    clock_ppm: float = 0.0
    snr_eb_n0_db: float | str = NOISELESS
    seed: int = 0

    def __post_init__(self):
        self.taps = [complex(t) for t in self.taps]
        if not self.taps or not any(t != 0 for t in self.taps):
            raise ValueError("taps: need at least one nonzero tap")
        if not 0.0 <= self.timing_frac < 1.0:
            raise ValueError("timing_frac: must lie in [0, 1)")
        if abs(self.clock_ppm) > 1000:
            raise ValueError("clock_ppm: magnitude must be <= 1000")
        if isinstance(self.snr_eb_n0_db, str):
            if self.snr_eb_n0_db != NOISELESS:
                raise ValueError(f"snr_eb_n0_db: expected a number or {NOISELESS!r}")
        else:
            self.snr_eb_n0_db = float(self.snr_eb_n0_db)


def paper_lab(**overrides) -> ChannelConfig:
    """Short line-of-sight bench link: direct path only, 25 dB Eb/N0.

    This is a modelling choice; no channel measurements of the bench exist.
    """
    params = dict(taps=[1.0], cfo=0.0, phase0=0.0, timing_frac=0.0, clock_ppm=0.0,
                  snr_eb_n0_db=25.0)
    params.update(overrides)
    return ChannelConfig(**params)


PRESETS = {"paper-lab": paper_lab, "ideal": lambda **kw: ChannelConfig(**kw)}


def apply_multipath(x: np.ndarray, taps) -> np.ndarray:
    taps = np.asarray(taps, dtype=np.complex128)
    return np.convolve(x, taps)[: len(x)]


def apply_cfo(x: np.ndarray, cfo: float, phase0: float = 0.0) -> np.ndarray:
    if cfo == 0.0 and phase0 == 0.0:
        return np.array(x, dtype=np.complex128)
    _, rot = nco_advance(phase0, 2.0 * np.pi * cfo, len(x))
    return x * rot


def apply_timing(x: np.ndarray, timing_frac: float = 0.0, clock_ppm: float = 0.0) -> np.ndarray:
    """Resample ``x`` with a fractional delay and a sample-clock skew.

    Output sample ``m`` is the cubic-spline interpolant of ``x`` at
    ``m / (1 + clock_ppm * 1e-6) - timing_frac``, so a positive skew yields
    more samples per symbol. Samples before the start are taken as zero.
    """
    if abs(clock_ppm) > 1000:
        raise ValueError("clock_ppm: magnitude must be <= 1000")
    x = np.asarray(x, dtype=np.complex128)
    if timing_frac == 0.0 and clock_ppm == 0.0:
        return x.copy()
    n = len(x)
    step = 1.0 / (1.0 + clock_ppm * 1e-6)
    m_count = int(np.floor((n - 1 + timing_frac) / step + 1e-9)) + 1
    t = np.arange(m_count) * step - timing_frac
    pad = 4
    knots = np.arange(-pad, n, dtype=np.float64)
    spline = CubicSpline(knots, np.concatenate((np.zeros(pad), x)))
    return spline(np.clip(t, -pad, n - 1))


def apply_awgn(x: np.ndarray, snr_eb_n0_db, bits_per_symbol: int = 2, sps: int = 4,
               seed: int | np.random.SeedSequence = 0) -> np.ndarray:
    """Add circular complex Gaussian noise at the requested Eb/N0.

    The per-sample noise variance is ``P * sps / (bits_per_symbol * Eb/N0)``
    with ``P`` the measured mean sample power of ``x``.
    """
    x = np.asarray(x, dtype=np.complex128)
    if isinstance(snr_eb_n0_db, str):
        if snr_eb_n0_db != NOISELESS:
            raise ValueError(f"snr_eb_n0_db: expected a number or {NOISELESS!r}")
        return x.copy()
    power = np.mean(np.abs(x) ** 2) if x.size else 0.0
    if not np.isfinite(power) or power == 0.0:
        raise ValueError("signal power is zero or non-finite; SNR is undefined")
    es_n0 = bits_per_symbol * 10.0 ** (snr_eb_n0_db / 10.0)
    sigma2 = power * sps / es_n0
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((2, x.size)) * np.sqrt(sigma2 / 2.0)
    return x + noise[0] + 1j * noise[1]


def run_channel(x: np.ndarray, cfg: ChannelConfig, sps: int = 4) -> np.ndarray:
    y = apply_multipath(x, cfg.taps)
    y = apply_timing(y, cfg.timing_frac, cfg.clock_ppm)
    y = apply_cfo(y, cfg.cfo, cfg.phase0)
    return apply_awgn(y, cfg.snr_eb_n0_db, 2, sps, cfg.seed)
