"""Post-processing: sync detection, marker framing, error rates, exporters.

Exported tables are tab-separated text with a one-line header; numbers are
written with a fixed format so identical inputs give identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import signal
from scipy.special import erfc

from .tx import DEFAULT_MAPPING, pack_bytes


def qfunc(x):
    """Gaussian tail probability."""
    return 0.5 * erfc(np.asarray(x) / np.sqrt(2.0))


def qpsk_ber(eb_n0_db):
    """Gray-coded QPSK bit error rate over AWGN."""
    return qfunc(np.sqrt(2.0 * 10.0 ** (np.asarray(eb_n0_db) / 10.0)))


def qpsk_ser(eb_n0_db):
    q = qpsk_ber(eb_n0_db)
    return 2.0 * q - q * q


@dataclass(frozen=True)
class FrameMarker:
    prefix: tuple = (0, 255)
    payload_len: int = 10

    def __post_init__(self):
        if len(set(self.prefix)) != len(self.prefix):
            raise ValueError("marker prefix bytes must be distinct")


@dataclass
class LinkReport:
    scenario: str = ""
    backend: str = ""
    symbols: int = 0
    sync_index: int | None = None
    sync_rotation: int | None = None
    ser_post_sync: float | None = None
    ber_post_sync: float | None = None
    evm_rms: float | None = None
    clock_locked: bool | None = None
    clock_lock_index: int | None = None
    rate_estimate: float | None = None
    bank_position: float | None = None
    cma_resets: int | None = None
    costas_locked: bool | None = None
    costas_lock_index: int | None = None
    freq_estimate: float | None = None
    frames_found: int | None = None
    payload_text: str | None = None
    extra: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            if f.name == "extra":
                continue
            lines.append(f"{f.name}={_fmt(getattr(self, f.name))}")
        for key in sorted(self.extra):
            lines.append(f"{key}={_fmt(self.extra[key])}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def parse_report(text: str) -> dict:
    """Read a ``key=value`` report back into strings."""
    out = {}
    for line in text.splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out


def find_sync(dibits: np.ndarray, expected, k_periods: int = 3):
    """Earliest index where ``k_periods`` full periods of ``expected`` follow.

    All cyclic rotations of ``expected`` are tried because the absolute
    alignment is unknown. Returns ``(sync_index, rotation)`` with
    ``dibits[sync_index + i] == expected[(rotation + i) % P]``, or
    ``(None, None)``.
    """
    expected = np.asarray(expected, dtype=np.uint8)
    if expected.size == 0:
        raise ValueError("expected sequence must be non-empty")
    if k_periods < 2:
        raise ValueError("k_periods must be >= 2")
    d = np.asarray(dibits, dtype=np.uint8)
    period = expected.size
    span = period * k_periods
    if d.size < span:
        return None, None
    idx = np.arange(d.size - span + 1)
    best = None
    # r0 indexes the alignment of the whole stream: dibit i is compared with
    # expected[(r0 + i) % period]
    for r0 in range(period):
        ok = d == expected[(r0 + np.arange(d.size)) % period]
        run = _run_length_from(ok)
        hits = np.nonzero(run[idx] >= span)[0]
        if hits.size:
            i = int(hits[0])
            if best is None or i < best[0]:
                best = (i, (r0 + i) % period)
    return best if best is not None else (None, None)


def _run_length_from(ok: np.ndarray) -> np.ndarray:
    """Length of the run of True values starting at each index."""
    n = ok.size
    bad = np.append(np.nonzero(~ok)[0], n)
    next_bad = bad[np.searchsorted(bad, np.arange(n))]
    return next_bad - np.arange(n)


def detect_frames(data: np.ndarray, marker: FrameMarker = FrameMarker()):
    """All marker-prefixed frames, scanned greedily left to right.

    A frame is the prefix followed by ``payload_len`` bytes; truncated frames
    at the end are dropped and a frame's bytes are never reused.
    """
    b = np.asarray(data, dtype=np.uint8)
    plen = len(marker.prefix)
    need = plen + marker.payload_len
    frames = []
    i = 0
    while i + need <= b.size:
        if all(b[i + j] == marker.prefix[j] for j in range(plen)):
            frames.append((i, bytes(b[i + plen:i + need].tolist())))
            i += need
        else:
            i += 1
    return frames


def frame_dibits(dibits: np.ndarray, marker: FrameMarker = FrameMarker(),
                 mode: str = "full_byte_msb_first"):
    """Pack dibits at each of the four byte phases and keep the best framing.

    Returns ``(phase, frames)`` for the phase with the most frames.
    """
    best = (0, [])
    for phase in range(4):
        frames = detect_frames(pack_bytes(np.asarray(dibits)[phase:], mode), marker)
        if len(frames) > len(best[1]):
            best = (phase, frames)
    return best


def payload_text(frames) -> str:
    """Most common payload among ``frames`` decoded as ASCII."""
    if not frames:
        return ""
    payloads = [p for _, p in frames]
    common = max(sorted(set(payloads)), key=payloads.count)
    return common.decode("ascii", errors="replace")


_POPCOUNT2 = np.array([0, 1, 1, 2], dtype=np.int64)


def compute_error_rates(rx: np.ndarray, reference: np.ndarray, sync_index: int = 0,
                        rotation: int = 0, periodic: bool = True):
    """Symbol and bit error rates after ``sync_index``.

    With ``periodic`` the reference is one period tiled from ``rotation``;
    otherwise it is a plain stream aligned so ``rx[sync_index + i]`` pairs
    with ``reference[rotation + i]``.
    """
    rx = np.asarray(rx, dtype=np.uint8)[sync_index:]
    ref = np.asarray(reference, dtype=np.uint8)
    if periodic:
        ref = ref[(rotation + np.arange(rx.size)) % ref.size]
    else:
        ref = ref[rotation:rotation + rx.size]
        rx = rx[:ref.size]
    if rx.size == 0:
        raise ValueError("empty post-sync region")
    diff = rx ^ ref
    ser = float(np.count_nonzero(diff)) / rx.size
    ber = float(_POPCOUNT2[diff].sum()) / (2 * rx.size)
    return ser, ber


def find_lag(rx: np.ndarray, tx: np.ndarray, max_lag: int = 256, window: int = 4096):
    """Delay of ``rx`` relative to ``tx`` that best matches a late window."""
    rx = np.asarray(rx)
    tx = np.asarray(tx)
    n = min(rx.size - max_lag, tx.size)
    if n <= 0:
        return None
    w = min(window, n)
    s = n - w
    errs = [np.count_nonzero(rx[s + lag:s + lag + w] != tx[s:s + w]) for lag in range(max_lag)]
    return int(np.argmin(errs))


def compute_evm(v: np.ndarray, mapping: np.ndarray = DEFAULT_MAPPING, window: float = 0.25) -> float:
    """RMS error vector magnitude in percent over the final ``window`` fraction."""
    v = np.asarray(v, dtype=np.complex128)
    n = int(np.floor(v.size * window))
    if n < 1:
        raise ValueError("EVM window is empty")
    tail = v[v.size - n:]
    mapping = np.asarray(mapping)
    d = np.min(np.abs(tail[:, None] - mapping[None, :]), axis=1)
    ref = np.sqrt(np.mean(np.abs(mapping) ** 2))
    return float(100.0 * np.sqrt(np.mean(d * d)) / ref)


def export_psd(x: np.ndarray, nfft: int = 1024, overlap: float = 0.5):
    """Averaged Hann-windowed periodogram with DC-centred bins.

    Returns ``(freqs, power_db)``; ``freqs`` in cycles/sample.
    """
    if nfft < 2 or nfft & (nfft - 1):
        raise ValueError(f"nfft must be a power of two, got {nfft}")
    x = np.asarray(x, dtype=np.complex128)
    f, p = signal.welch(x, fs=1.0, window="hann", nperseg=nfft, noverlap=int(nfft * overlap),
                        return_onesided=False, detrend=False, scaling="density")
    f = np.fft.fftshift(f)
    p = np.fft.fftshift(p)
    return f, 10.0 * np.log10(np.maximum(p, 1e-300))


def export_constellation(v: np.ndarray, n: int = 2000) -> np.ndarray:
    v = np.asarray(v, dtype=np.complex128)[-n:]
    return np.column_stack((v.real, v.imag))


def export_eye(x_matched: np.ndarray, sps: int, span: int = 2, offset: int = 0) -> np.ndarray:
    """Cut the matched-filter output into symbol-clock aligned traces.

    ``offset`` is a symbol instant. Each trace has ``span * sps + 1`` samples
    and puts a symbol instant at its middle sample. Returns a 2-D complex
    array, one trace per row.
    """
    x = np.asarray(x_matched, dtype=np.complex128)
    length = span * sps + 1
    start = offset - (span * sps) // 2
    while start < 0:
        start += sps
    count = (x.size - start - length) // sps + 1
    if count <= 0:
        return np.zeros((0, length), dtype=np.complex128)
    rows = start + sps * np.arange(count)[:, None] + np.arange(length)[None, :]
    return x[rows]


def eye_opening(traces: np.ndarray) -> np.ndarray:
    """Vertical opening of the in-phase eye per trace sample position."""
    re = traces.real
    upper = np.where(re > 0, re, np.inf).min(axis=0)
    lower = np.where(re < 0, re, -np.inf).max(axis=0)
    return np.maximum(upper - lower, 0.0) * np.isfinite(upper - lower)


def write_table(path: Path, header: str, columns) -> None:
    cols = [np.asarray(c) for c in columns]
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in zip(*cols):
            fh.write("\t".join(_cell(v) for v in row) + "\n")


def _cell(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.6e}"


def write_psd(path: Path, freqs, power_db) -> None:
    write_table(path, "freq_cycles_per_sample\tpower_db", (freqs, power_db))


def write_constellation(path: Path, rows: np.ndarray) -> None:
    write_table(path, "re\tim", (rows[:, 0], rows[:, 1]))


def write_eye(path: Path, traces: np.ndarray) -> None:
    ntr, length = traces.shape
    trace = np.repeat(np.arange(ntr), length)
    pos = np.tile(np.arange(length), ntr)
    flat = traces.reshape(-1)
    write_table(path, "trace\tsample\tre\tim", (trace, pos, flat.real, flat.imag))


def write_dibits(path: Path, dibits: np.ndarray) -> None:
    Path(path).write_bytes(np.asarray(dibits, dtype=np.uint8).tobytes())


def read_dibits(path: Path) -> np.ndarray:
    return np.frombuffer(Path(path).read_bytes(), dtype=np.uint8)
