"""Receive chain: polyphase clock sync, CMA equalizer, Costas loop, decisions.

Each loop keeps its state in a small dataclass that is passed in and handed
back, so a stream can be processed in blocks. Loss of lock is reported as a
flag, never raised.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dsp import PolyphaseBank, design_rrc, fir_filter, loop_gains, polyphase_decompose
from .tx import DEFAULT_MAPPING, differential_decode, pack_bytes

DAMPING = np.sqrt(2.0) / 2.0


@dataclass
class RxConfig:
    sps: int = 4
    rolloff: float = 0.35
    nfilts: int = 32
    proto_ntaps: int | None = None  # default: 32-symbol span, as the TX filter
    clock_bw: float = 0.004
    max_rate_dev: float = 0.01  # relative to sps
    cma_enabled: bool = True
    cma_taps: int = 11
    cma_mu: float = 1e-3
    cma_modulus: float = 1.0
    costas_bw: float = 2 * np.pi / 100
    costas_max_freq: float = 0.25  # rad/symbol
    differential: bool = True
    mapping: np.ndarray = field(default_factory=lambda: DEFAULT_MAPPING.copy())
    pack_mode: str = "low2"
    agc: bool = True
    lock_window: int = 2000
    clock_lock_threshold: float = 4.0  # bank units, std of detrended timing
    costas_lock_threshold: float = 0.2

    def __post_init__(self):
        if self.sps < 2:
            raise ValueError("sps: must be >= 2")
        if self.nfilts < 1:
            raise ValueError("nfilts: must be >= 1")
        if self.cma_taps < 1:
            raise ValueError("cma_taps: must be >= 1")
        if self.clock_bw <= 0 or self.costas_bw <= 0:
            raise ValueError("loop bandwidths must be positive")
        self.mapping = np.asarray(self.mapping, dtype=np.complex128)

    @property
    def prototype_ntaps(self) -> int:
        if self.proto_ntaps is not None:
            return self.proto_ntaps
        return 32 * self.sps * self.nfilts + 1


def ted_gain(prototype: np.ndarray, nfilts: int, sps: int) -> float:
    """Slope of the averaged timing-error S-curve, in bank units.

    Computed from the raised-cosine cascade ``conv(p, p)`` of a unit-energy
    prototype for independent unit-power symbols.
    """
    g = np.convolve(prototype, prototype)
    center = len(prototype) - 1
    dg = np.zeros_like(g)
    dg[1:-1] = 0.5 * (g[2:] - g[:-2])
    d2g = np.zeros_like(g)
    d2g[1:-1] = g[2:] - 2 * g[1:-1] + g[:-2]
    step = nfilts * sps
    idx = center + step * np.arange(-(center // step), center // step + 1)
    return float(np.sum(dg[idx] ** 2 + g[idx] * d2g[idx]))


@dataclass
class ClockSyncState:
    bank: PolyphaseBank
    sps: int
    alpha: float
    beta: float
    max_dev: float  # bank units per symbol
    filt_index: float
    rate_f: float = 0.0
    history: np.ndarray | None = None
    count: int = 0

    @property
    def rate(self) -> float:
        """Samples-per-symbol estimate."""
        return self.sps + self.rate_f / self.bank.nfilts

    @property
    def zero_offset_bank(self) -> float:
        """Bank position that samples an undelayed matched pulse at its peak."""
        return ((self.bank.prototype_len - 1) / 2.0) % self.bank.nfilts

    @classmethod
    def create(cls, cfg: RxConfig) -> "ClockSyncState":
        nf = cfg.nfilts
        proto = design_rrc(cfg.sps * nf, cfg.rolloff, cfg.prototype_ntaps).coefficients
        kp = ted_gain(proto, nf, cfg.sps)
        bank = polyphase_decompose(proto * np.sqrt(nf), nf)
        # derivative banks normalised so the error reads in bank units
        bank = PolyphaseBank(nf, bank.banks, bank.derivative_banks / abs(kp), bank.prototype_len)
        alpha, beta = loop_gains(cfg.clock_bw, DAMPING)
        return cls(bank=bank, sps=cfg.sps, alpha=alpha, beta=beta,
                   max_dev=cfg.max_rate_dev * cfg.sps * nf, filt_index=nf / 2.0)


@dataclass
class CmaState:
    weights: np.ndarray
    step_mu: float = 1e-3
    modulus_r: float = 1.0
    history: np.ndarray | None = None
    resets: int = 0
    energy_band: tuple = (0.01, 100.0)

    @classmethod
    def create(cls, ntaps: int = 11, step_mu: float = 1e-3, modulus_r: float = 1.0) -> "CmaState":
        w = np.zeros(ntaps, dtype=np.complex128)
        w[ntaps // 2] = 1.0
        return cls(weights=w, step_mu=step_mu, modulus_r=modulus_r)


@dataclass
class CostasState:
    alpha: float
    beta: float
    phase: float = 0.0
    freq: float = 0.0  # rad/symbol
    max_freq: float = 0.25
    order: int = 4

    @classmethod
    def create(cls, bandwidth: float = 2 * np.pi / 100, max_freq: float = 0.25) -> "CostasState":
        # detector slope for unit-modulus QPSK is sqrt(2)
        alpha, beta = loop_gains(bandwidth, DAMPING, np.sqrt(2.0))
        return cls(alpha=alpha, beta=beta, max_freq=max_freq)


def clock_sync(x: np.ndarray, state: ClockSyncState):
    """Resample a matched-filter input to one sample per symbol.

    Returns ``(symbols, state, trace)``; ``trace`` holds per-symbol arrays
    ``filt_index``, ``rate`` (samples/symbol) and ``error`` (bank units).
    """
    bank = state.bank
    ntaps = bank.taps_per_bank
    if state.history is None:
        state.history = np.zeros(ntaps - 1, dtype=np.complex128)
    xe = np.concatenate((state.history, np.asarray(x, dtype=np.complex128)))
    y, kt, rt, et, k, rate_f, count = kernels.pfb_clock_sync(
        xe, np.ascontiguousarray(bank.banks[:, ::-1]),
        np.ascontiguousarray(bank.derivative_banks[:, ::-1]),
        state.sps, state.alpha, state.beta, state.max_dev,
        float(state.filt_index), float(state.rate_f), int(state.count))
    start = min(max(count - 1, 0), len(xe))
    state.history = xe[start:]
    state.count = count - start
    state.filt_index = k
    state.rate_f = rate_f
    trace = {"filt_index": kt, "rate": state.sps + rt / bank.nfilts, "error": et}
    return y, state, trace


def cma_equalize(y: np.ndarray, state: CmaState):
    """Blind constant-modulus equalization at one sample per symbol.

    Returns ``(z, state, cost)`` with ``cost`` the per-symbol ``(|z|^2 - R)^2``.
    """
    ntaps = len(state.weights)
    if state.history is None:
        state.history = np.zeros(ntaps - 1, dtype=np.complex128)
    xe = np.concatenate((state.history, np.asarray(y, dtype=np.complex128)))
    z, cost, w, resets = kernels.cma_equalize(xe, state.weights, state.step_mu, state.modulus_r,
                                              *state.energy_band)
    state.weights = w
    state.resets += int(resets)
    state.history = xe[len(xe) - (ntaps - 1):] if ntaps > 1 else xe[:0]
    return z, state, cost


def costas_error(v: np.ndarray) -> np.ndarray:
    """Fourth-order Costas phase detector."""
    v = np.asarray(v)
    return np.sign(v.real) * v.imag - np.sign(v.imag) * v.real


def costas_track(z: np.ndarray, state: CostasState):
    """Carrier phase/frequency tracking; returns ``(v, state, trace)``."""
    v, pt, ft, et, phase, freq = kernels.costas_track(
        np.asarray(z, dtype=np.complex128), float(state.phase), float(state.freq),
        state.alpha, state.beta, state.max_freq)
    state.phase = phase
    state.freq = freq
    return v, state, {"phase": pt, "freq": ft, "error": et}


def decide(v: np.ndarray, mapping: np.ndarray = DEFAULT_MAPPING) -> np.ndarray:
    """Nearest-point hard decisions; ties go to the lowest dibit."""
    v = np.asarray(v, dtype=np.complex128)
    d = np.abs(v[:, None] - np.asarray(mapping)[None, :])
    return np.argmin(d, axis=1).astype(np.uint8)


def genie_symbols(x: np.ndarray, sps: int = 4, rolloff: float = 0.35, ntaps: int = 129) -> np.ndarray:
    """Matched filter and sample at the known TX+RX delay (no loops)."""
    mf = fir_filter(design_rrc(sps, rolloff, ntaps), x)
    return mf[ntaps - 1::sps]


def unwrap_timing(filt_index: np.ndarray, nfilts: int) -> np.ndarray:
    """Continuous timing phase in bank units (undoes the wraps into [0, nfilts))."""
    k = np.asarray(filt_index, dtype=np.float64)
    return np.unwrap(k * (2 * np.pi / nfilts)) * (nfilts / (2 * np.pi))


def _costas_metric(err: np.ndarray) -> float:
    """Variance of the amplitude-normalised phase-detector output.

    Normalising by ``|v|`` keeps a shrunken noise-only stream (CMA halves the
    power of Gaussian input) from passing for a locked one.
    """
    return float(np.var(err)) if err.size else float("inf")


def _clock_metric(timing: np.ndarray) -> float:
    """Spread of the timing phase about its linear trend.

    The timing detector's raw output is dominated by data-dependent
    self-noise even when locked, so lock is judged on the smoothed timing
    estimate instead: a constant clock skew is a straight line.
    """
    if timing.size < 3:
        return float("inf")
    t = np.arange(timing.size, dtype=np.float64)
    coef = np.polyfit(t, timing, 1)
    return float(np.std(timing - np.polyval(coef, t)))


def _lock_index(series: np.ndarray, window: int, threshold: float, metric):
    """End index of the first window whose metric drops below ``threshold``."""
    for start in range(0, max(len(series) - window, 0) + 1, max(window // 4, 1)):
        if metric(series[start:start + window]) < threshold:
            return start + window
    return None


def circular_mean(values: np.ndarray, period: float) -> float:
    ang = 2 * np.pi * np.asarray(values) / period
    m = np.angle(np.mean(np.exp(1j * ang)))
    r = float((m * period / (2 * np.pi)) % period)
    return 0.0 if r >= period else r


@dataclass
class RxResult:
    dibits: np.ndarray  # after differential decode
    decisions: np.ndarray  # raw hard decisions
    data: np.ndarray  # packed bytes
    matched: np.ndarray  # clock-sync output
    equalized: np.ndarray
    symbols: np.ndarray  # Costas output
    clock: dict
    cma_cost: np.ndarray
    costas: dict
    clock_locked: bool
    clock_lock_index: int | None
    costas_locked: bool
    costas_lock_index: int | None
    cma_resets: int
    rate_estimate: float
    freq_estimate: float
    bank_position: float
    zero_offset_bank: float
    agc_gain: float

    def report_fields(self) -> dict:
        return {
            "clock_locked": self.clock_locked,
            "clock_lock_index": self.clock_lock_index,
            "rate_estimate": self.rate_estimate,
            "bank_position": self.bank_position,
            "cma_resets": self.cma_resets,
            "costas_locked": self.costas_locked,
            "costas_lock_index": self.costas_lock_index,
            "freq_estimate": self.freq_estimate,
        }


def run_rx(x: np.ndarray, cfg: RxConfig | None = None) -> RxResult:
    """Clock sync, CMA, Costas, decisions, differential decode, byte packing."""
    cfg = cfg or RxConfig()
    x = np.asarray(x, dtype=np.complex128)
    gain = 1.0
    if cfg.agc:
        power = np.mean(np.abs(x) ** 2)
        if power > 0:
            gain = 1.0 / np.sqrt(cfg.sps * power)
    cs = ClockSyncState.create(cfg)
    y, cs, ctrace = clock_sync(x * gain, cs)

    cma = CmaState.create(cfg.cma_taps, cfg.cma_mu, cfg.cma_modulus)
    if cfg.cma_enabled:
        z, cma, cost = cma_equalize(y, cma)
    else:
        z, cost = y, (np.abs(y) ** 2 - cfg.cma_modulus) ** 2

    costas = CostasState.create(cfg.costas_bw, cfg.costas_max_freq)
    v, costas, ptrace = costas_track(z, costas)

    raw = decide(v, cfg.mapping)
    dibits = differential_decode(raw, cfg.mapping) if cfg.differential else raw
    data = pack_bytes(dibits, cfg.pack_mode)

    half = len(v) // 2
    win = cfg.lock_window
    timing = unwrap_timing(ctrace["filt_index"], cfg.nfilts)
    ctrace["timing"] = timing
    perr = ptrace["error"] / np.maximum(np.abs(v), 1e-12)
    return RxResult(
        dibits=dibits, decisions=raw, data=data, matched=y, equalized=z, symbols=v,
        clock=ctrace, cma_cost=cost, costas=ptrace,
        clock_locked=_clock_metric(timing[-win:]) < cfg.clock_lock_threshold,
        clock_lock_index=_lock_index(timing, win, cfg.clock_lock_threshold, _clock_metric),
        costas_locked=_costas_metric(perr[-win:]) < cfg.costas_lock_threshold,
        costas_lock_index=_lock_index(perr, win, cfg.costas_lock_threshold, _costas_metric),
        cma_resets=cma.resets,
        rate_estimate=float(np.mean(ctrace["rate"][half:])) if half else float(cs.rate),
        freq_estimate=float(np.mean(ptrace["freq"][half:])) if half else float(costas.freq),
        bank_position=(circular_mean(np.floor(ctrace["filt_index"][half:]), cfg.nfilts)
                       if half else float("nan")),
        zero_offset_bank=cs.zero_offset_bank,
        agc_gain=float(gain),
    )
