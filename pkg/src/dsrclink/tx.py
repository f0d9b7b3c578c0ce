"""Transmit chain: byte sources, dibit unpacking, Gray mapping, pulse shaping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsp import design_rrc, fir_filter

# Gray mapping: bit 0 selects the sign of I, bit 1 the sign of Q.
DEFAULT_MAPPING = np.array([1 + 1j, -1 + 1j, 1 - 1j, -1 - 1j]) / np.sqrt(2.0)

SEQUENCE1 = (0, 1, 2, 3)
SEQUENCE2 = (0, 255, 72, 101, 108, 108, 111, 87, 111, 114, 108, 100)

UNPACK_MODES = ("low2", "full_byte_msb_first", "full_byte_lsb_first")


@dataclass
class TxConfig:
    sps: int = 4
    rolloff: float = 0.35
    ntaps: int = 129
    differential: bool = True
    mapping: np.ndarray = field(default_factory=lambda: DEFAULT_MAPPING.copy())
    amplitude: float = 1.0

    def __post_init__(self):
        self.mapping = np.asarray(self.mapping, dtype=np.complex128)
        if self.mapping.shape != (4,):
            raise ValueError("mapping: need exactly four constellation points")
        mags = np.abs(self.mapping)
        if not np.allclose(mags, mags[0], rtol=1e-9):
            raise ValueError("mapping: constellation points must have equal magnitude")
        # each point rotated by 90 degrees must land on another point
        rotated = self.mapping * 1j
        if not all(np.min(np.abs(self.mapping - r)) < 1e-9 * mags[0] for r in rotated):
            raise ValueError("mapping: points must be 90-degree rotations of one another")
        if self.amplitude <= 0:
            raise ValueError("amplitude: must be positive")

    def rrc(self):
        return design_rrc(self.sps, self.rolloff, self.ntaps)


@dataclass(frozen=True)
class ByteSource:
    """Either ``random_uniform`` over ``[lo, hi)`` or a repeating ``vector``."""

    kind: str
    lo: int = 0
    hi: int = 4
    seed: int = 0
    values: tuple = ()

    @classmethod
    def random_uniform(cls, lo: int, hi: int, seed: int = 0) -> "ByteSource":
        return cls("random_uniform", lo=lo, hi=hi, seed=seed)

    @classmethod
    def vector(cls, values) -> "ByteSource":
        return cls("vector", values=tuple(int(v) for v in values))


def source_bytes(src: ByteSource, n: int) -> np.ndarray:
    """Produce ``n`` bytes from ``src`` (deterministic for a given seed)."""
    if src.kind == "random_uniform":
        if not 0 <= src.lo < src.hi <= 256:
            raise ValueError(f"random_uniform needs 0 <= lo < hi <= 256, got [{src.lo}, {src.hi})")
        rng = np.random.default_rng(src.seed)
        return rng.integers(src.lo, src.hi, size=n, dtype=np.uint8)
    if src.kind == "vector":
        if len(src.values) == 0:
            raise ValueError("vector source needs a non-empty value list")
        vals = np.asarray(src.values)
        if vals.min() < 0 or vals.max() > 255:
            raise ValueError("vector source values must be bytes (0..255)")
        return np.resize(vals.astype(np.uint8), n)
    raise ValueError(f"unknown source kind {src.kind!r}")


def unpack_dibits(data: np.ndarray, mode: str = "low2") -> np.ndarray:
    data = np.asarray(data, dtype=np.uint8)
    if mode == "low2":
        if data.size and data.max() >= 4:
            raise ValueError("low2 mode requires every byte < 4")
        return data.copy()
    shifts = np.array([6, 4, 2, 0], dtype=np.uint8)
    if mode == "full_byte_lsb_first":
        shifts = shifts[::-1]
    elif mode != "full_byte_msb_first":
        raise ValueError(f"unknown unpack mode {mode!r}")
    return ((data[:, None] >> shifts) & 3).reshape(-1).astype(np.uint8)


def pack_bytes(dibits: np.ndarray, mode: str = "low2") -> np.ndarray:
    """Inverse of :func:`unpack_dibits`; a trailing partial byte is dropped."""
    d = np.asarray(dibits, dtype=np.uint8)
    if mode == "low2":
        return d.copy()
    shifts = np.array([6, 4, 2, 0], dtype=np.uint8)
    if mode == "full_byte_lsb_first":
        shifts = shifts[::-1]
    elif mode != "full_byte_msb_first":
        raise ValueError(f"unknown unpack mode {mode!r}")
    n = d.size // 4
    groups = d[: 4 * n].reshape(n, 4)
    return np.bitwise_or.reduce(groups << shifts, axis=1).astype(np.uint8)


def diff_encode(dibits: np.ndarray, initial: int = 0) -> np.ndarray:
    d = np.asarray(dibits, dtype=np.int64)
    return ((np.cumsum(d) + initial) % 4).astype(np.uint8)


def diff_decode(dibits: np.ndarray, initial: int = 0) -> np.ndarray:
    d = np.asarray(dibits, dtype=np.int64)
    prev = np.concatenate(([initial], d[:-1]))
    return ((d - prev) % 4).astype(np.uint8)


def quadrant_index(mapping: np.ndarray = DEFAULT_MAPPING) -> np.ndarray:
    """Dibit -> position around the circle (0..3, counter-clockwise from dibit 0).

    A 90-degree rotation adds one to every quadrant index, so differential
    coding must act on these indices, not on the Gray labels.
    """
    ang = np.angle(np.asarray(mapping) / mapping[0])
    return (np.rint(ang / (np.pi / 2)).astype(np.int64) % 4).astype(np.uint8)


def differential_encode(dibits: np.ndarray, mapping: np.ndarray = DEFAULT_MAPPING) -> np.ndarray:
    """Rotation-invariant differential coding of Gray dibits."""
    quad = quadrant_index(mapping)
    to_dibit = np.argsort(quad).astype(np.uint8)
    return to_dibit[diff_encode(quad[np.asarray(dibits, dtype=np.intp)])]


def differential_decode(dibits: np.ndarray, mapping: np.ndarray = DEFAULT_MAPPING) -> np.ndarray:
    """Inverse of :func:`differential_encode`."""
    quad = quadrant_index(mapping)
    to_dibit = np.argsort(quad).astype(np.uint8)
    return to_dibit[diff_decode(quad[np.asarray(dibits, dtype=np.intp)])]


def map_symbols(dibits: np.ndarray, cfg: TxConfig) -> np.ndarray:
    return cfg.amplitude * cfg.mapping[np.asarray(dibits, dtype=np.intp)]


def shape_pulses(symbols: np.ndarray, cfg: TxConfig) -> np.ndarray:
    """Zero-stuff to ``cfg.sps`` samples per symbol and apply the RRC filter."""
    up = np.zeros(len(symbols) * cfg.sps, dtype=np.complex128)
    up[:: cfg.sps] = symbols
    return fir_filter(cfg.rrc(), up)


def transmit(src: ByteSource, n_bytes: int, cfg: TxConfig, mode: str = "low2"):
    """Run the whole transmit chain.

    Returns ``(samples, payload_dibits)`` where ``payload_dibits`` are the
    dibits before differential encoding.
    """
    data = source_bytes(src, n_bytes)
    dibits = unpack_dibits(data, mode)
    coded = differential_encode(dibits, cfg.mapping) if cfg.differential else dibits
    return shape_pulses(map_symbols(coded, cfg), cfg), dibits
