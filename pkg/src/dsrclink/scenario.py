"""Scenario files and the end-to-end runner (TX -> channel -> RX -> analysis)."""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import analysis as an
from .channel import PRESETS, ChannelConfig, run_channel
from .dsp import design_rrc, fir_filter
from .kernels import BACKEND
from .rx import RxConfig, genie_symbols, run_rx
from .tx import (SEQUENCE1, SEQUENCE2, UNPACK_MODES, ByteSource, TxConfig, map_symbols,
                 shape_pulses, transmit, unpack_dibits)

log = logging.getLogger(__name__)

SCENARIOS = ("random_uniform", "sequence1", "sequence2", "ber_sweep", "ablation")
STATISTICS_SCENARIOS = ("random_uniform", "ber_sweep")
ARTIFACTS = ("psd.tsv", "constellation.tsv", "eye.tsv", "rx_dibits.bin", "report.txt")
BER_TOLERANCE = 0.15


class ConfigError(ValueError):
    """Invalid scenario; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class Scenario:
    name: str
    tx: TxConfig = field(default_factory=TxConfig)
    channel: ChannelConfig = field(default_factory=lambda: PRESETS["paper-lab"]())
    rx: RxConfig = field(default_factory=RxConfig)
    duration: int = 100_000  # symbols
    seed: int = 0
    output_dir: str = "out"
    unpack: str | None = None
    source: ByteSource | None = None
    k_periods: int = 3
    nfft: int = 1024
    constellation_points: int = 2000
    ber_points: tuple = (4.0, 6.0, 8.0)
    ber_bits: int = 4_000_000
    max_ser: float = 0.0
    marker: an.FrameMarker = field(default_factory=an.FrameMarker)

    def __post_init__(self):
        if self.name not in SCENARIOS:
            raise ConfigError("name", f"unknown scenario {self.name!r}; expected one of {SCENARIOS}")
        if self.duration < 1:
            raise ConfigError("duration", "must be positive")
        if self.name in STATISTICS_SCENARIOS and self.duration < 10_000:
            raise ConfigError("duration", "statistics scenarios need at least 10000 symbols")
        if self.unpack is None:
            self.unpack = "full_byte_msb_first" if self.name in ("sequence2", "ablation") else "low2"
        if self.unpack not in UNPACK_MODES:
            raise ConfigError("tx.unpack", f"expected one of {UNPACK_MODES}")

    def byte_source(self) -> ByteSource:
        if self.source is not None:
            return self.source
        if self.name == "sequence1":
            return ByteSource.vector(SEQUENCE1)
        if self.name in ("sequence2", "ablation"):
            return ByteSource.vector(SEQUENCE2)
        return ByteSource.random_uniform(0, 4, seed=_seed(self.seed, 0, 0))

    @property
    def dibits_per_byte(self) -> int:
        return 1 if self.unpack == "low2" else 4


def _seed(seed: int, cell: int, stream: int) -> int:
    """Independent integer seed for (scenario seed, cell index, stream id)."""
    return int(np.random.SeedSequence([int(seed), cell, stream]).generate_state(1)[0])


# -- loading --------------------------------------------------------------

_TX_KEYS = {f.name for f in fields(TxConfig)}
_RX_KEYS = {f.name for f in fields(RxConfig)}
_CH_KEYS = {f.name for f in fields(ChannelConfig)}


def _build(section: str, cls, data: dict, allowed: set, base=None):
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"{section}.{sorted(unknown)[0]}", "unknown field")
    try:
        return replace(base, **data) if base is not None else cls(**data)
    except ValueError as exc:
        msg = str(exc)
        key = msg.split(":", 1)[0] if ":" in msg else ""
        if key in allowed:
            raise ConfigError(f"{section}.{key}", msg.split(":", 1)[1].strip()) from None
        raise ConfigError(section, msg) from None
    except TypeError as exc:
        raise ConfigError(section, str(exc)) from None


def scenario_from_dict(data: dict) -> Scenario:
    data = dict(data or {})
    if "name" not in data:
        raise ConfigError("name", "missing")
    tx = dict(data.pop("tx", {}) or {})
    unpack = tx.pop("unpack", None)
    if "mapping" in tx:
        tx["mapping"] = [_complex(t, "tx.mapping") for t in tx["mapping"]]
    txc = _build("tx", TxConfig, tx, _TX_KEYS)

    ch = dict(data.pop("channel", {}) or {})
    preset = ch.pop("preset", "paper-lab")
    if preset not in PRESETS:
        raise ConfigError("channel.preset", f"unknown preset {preset!r}")
    if "taps" in ch:
        ch["taps"] = [_complex(t, "channel.taps") for t in ch["taps"]]
    chc = _build("channel", ChannelConfig, ch, _CH_KEYS, base=PRESETS[preset]())

    rx = dict(data.pop("rx", {}) or {})
    rx.setdefault("sps", txc.sps)
    rx.setdefault("rolloff", txc.rolloff)
    rx.setdefault("differential", txc.differential)
    rx.setdefault("mapping", txc.mapping / txc.amplitude)
    if unpack and "pack_mode" not in rx:
        rx["pack_mode"] = unpack
    rxc = _build("rx", RxConfig, rx, _RX_KEYS)

    src = data.pop("source", None)
    source = None
    if src is not None:
        kind = src.get("kind")
        if kind == "vector":
            source = ByteSource.vector(src.get("values", []))
        elif kind == "random_uniform":
            source = ByteSource.random_uniform(src.get("lo", 0), src.get("hi", 4), src.get("seed", 0))
        else:
            raise ConfigError("source.kind", f"unknown source kind {kind!r}")

    sweep = dict(data.pop("ber_sweep", {}) or {})
    marker = dict(data.pop("marker", {}) or {})
    kw = {}
    for key in ("name", "duration", "seed", "output_dir", "k_periods", "nfft",
                "constellation_points", "max_ser"):
        if key in data:
            kw[key] = data.pop(key)
    if data:
        raise ConfigError(sorted(data)[0], "unknown field")
    if "eb_n0_db" in sweep:
        kw["ber_points"] = tuple(float(v) for v in sweep.pop("eb_n0_db"))
    if "bits" in sweep:
        kw["ber_bits"] = int(sweep.pop("bits"))
    if sweep:
        raise ConfigError(f"ber_sweep.{sorted(sweep)[0]}", "unknown field")
    if marker:
        kw["marker"] = an.FrameMarker(tuple(marker.get("prefix", (0, 255))),
                                      int(marker.get("payload_len", 10)))
    if unpack is not None:
        kw["unpack"] = unpack
    if rxc.pack_mode == "low2" and kw.get("name") in ("sequence2", "ablation") and not unpack:
        rxc.pack_mode = "full_byte_msb_first"
    return Scenario(tx=txc, channel=chc, rx=rxc, source=source, **kw)


def _complex(v, where: str) -> complex:
    """``1.0``, ``[re, im]`` or ``{mag: .., deg: ..}`` to a complex number."""
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ConfigError(where, "complex values are [re, im] pairs")
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, dict):
        return complex(float(v.get("mag", 1.0)) * np.exp(1j * np.deg2rad(float(v.get("deg", 0.0)))))
    return complex(v)


def load_scenario(path: str | Path) -> Scenario:
    """Load a YAML scenario file, or a built-in scenario by name."""
    p = Path(path)
    if not p.exists() and str(path) in builtin_scenarios():
        text = resources.files("dsrclink").joinpath("scenarios", f"{path}.yaml").read_text()
    else:
        text = p.read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("file", f"not valid YAML ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError("file", "expected a mapping of scenario fields")
    return scenario_from_dict(data)


def builtin_scenarios() -> list[str]:
    folder = resources.files("dsrclink").joinpath("scenarios")
    return sorted(f.name[:-5] for f in folder.iterdir() if f.name.endswith(".yaml"))


# -- running --------------------------------------------------------------

def expected_dibits(s: Scenario) -> np.ndarray | None:
    src = s.byte_source()
    if src.kind != "vector":
        return None
    return unpack_dibits(np.asarray(src.values, dtype=np.uint8), s.unpack)


def simulate(s: Scenario, cell: int = 0):
    """Run TX, channel and RX; returns ``(tx_dibits, rx_samples, RxResult)``."""
    n_bytes = -(-s.duration // s.dibits_per_byte)
    x, tx_dibits = transmit(s.byte_source(), n_bytes, s.tx, s.unpack)
    ch = replace(s.channel, seed=_seed(s.seed, cell, 1))
    y = run_channel(x, ch, s.tx.sps)
    return tx_dibits, y, run_rx(y, s.rx)


def _analyse(s: Scenario, tx_dibits, result) -> an.LinkReport:
    rep = an.LinkReport(scenario=s.name, backend=BACKEND, symbols=len(result.dibits))
    for key, val in result.report_fields().items():
        setattr(rep, key, val)
    rep.evm_rms = an.compute_evm(result.symbols, s.rx.mapping)
    expected = expected_dibits(s)
    if expected is not None:
        idx, rot = an.find_sync(result.dibits, expected, s.k_periods)
        rep.sync_index, rep.sync_rotation = idx, rot
        if idx is not None:
            rep.ser_post_sync, rep.ber_post_sync = an.compute_error_rates(
                result.dibits, expected, idx, rot)
    else:
        lag = an.find_lag(result.dibits, tx_dibits)
        if lag is not None:
            rep.extra["lag"] = lag
            ok = result.dibits[lag:lag + len(tx_dibits)] == tx_dibits[:len(result.dibits) - lag]
            run = an._run_length_from(ok)
            hits = np.nonzero(run >= 64)[0]
            if hits.size:
                start = int(hits[0])
                rep.sync_index = lag + start
                rep.ser_post_sync, rep.ber_post_sync = an.compute_error_rates(
                    result.dibits, tx_dibits, lag + start, start, periodic=False)
    if s.name in ("sequence2", "ablation"):
        phase, frames = an.frame_dibits(result.dibits, s.marker, s.rx.pack_mode)
        rep.frames_found = len(frames)
        rep.payload_text = an.payload_text(frames)
    return rep


def _eye_traces(s: Scenario, y: np.ndarray, result, nsym: int = 400) -> np.ndarray:
    """Matched-filter eye traces over the last ``nsym`` recovered symbols."""
    rrc = design_rrc(s.rx.sps, s.rx.rolloff, s.tx.ntaps)
    mf = fir_filter(rrc, y * result.agc_gain)
    timing = result.clock["timing"]
    if timing.size == 0:
        return np.zeros((0, 2 * s.rx.sps + 1), dtype=np.complex128)
    i = max(timing.size - nsym, 0)
    nf = s.rx.nfilts
    center = (s.rx.prototype_ntaps - 1) / 2.0
    instant = i * s.rx.sps + (timing[i] - center) / nf + (len(rrc) - 1) / 2.0
    seg = mf[max(int(round(instant)), 0):]
    return an.export_eye(seg, s.rx.sps, span=2, offset=0)


def write_artifacts(out: Path, s: Scenario, y, result, rep: an.LinkReport) -> None:
    out.mkdir(parents=True, exist_ok=True)
    f, p = an.export_psd(y, s.nfft)
    an.write_psd(out / "psd.tsv", f, p)
    an.write_constellation(out / "constellation.tsv",
                           an.export_constellation(result.symbols, s.constellation_points))
    an.write_eye(out / "eye.tsv", _eye_traces(s, y, result))
    an.write_dibits(out / "rx_dibits.bin", result.dibits)
    (out / "report.txt").write_text(rep.to_text())


def check_report(s: Scenario, rep: an.LinkReport) -> list[str]:
    """Acceptance thresholds for ``--check``; returns failure descriptions."""
    fails = []
    if s.name == "sequence1" or (s.name == "random_uniform"):
        if rep.sync_index is None:
            fails.append("no sync found")
        elif s.name == "sequence1" and rep.sync_index <= 0:
            fails.append("sync_index is not positive")
        if rep.ser_post_sync is None or rep.ser_post_sync > s.max_ser:
            fails.append(f"ser_post_sync {rep.ser_post_sync} exceeds {s.max_ser}")
    if s.name == "sequence2":
        if not rep.frames_found:
            fails.append("no frames found")
        if rep.payload_text != "HelloWorld":
            fails.append(f"payload {rep.payload_text!r} != 'HelloWorld'")
    return fails


def run_scenario(s: Scenario, out: str | Path | None = None):
    """Run one scenario and write its artifacts; returns ``(report, failures)``."""
    if s.name == "ber_sweep":
        return run_ber_sweep(s, out)
    if s.name == "ablation":
        return run_ablation(s, out)
    out = Path(out if out is not None else s.output_dir)
    tx_dibits, y, result = simulate(s)
    rep = _analyse(s, tx_dibits, result)
    write_artifacts(out, s, y, result, rep)
    return rep, check_report(s, rep)


# -- BER sweep ------------------------------------------------------------

def genie_ber_point(eb_n0_db: float, n_bits: int, seed, tx: TxConfig | None = None):
    """Measured (ber, ser, n_bits) with ideal timing/phase over AWGN only."""
    from .channel import apply_awgn
    from .rx import decide

    tx = tx or TxConfig(differential=False)
    nsym = n_bits // 2
    guard = tx.ntaps
    rng_src = np.random.default_rng(_seed(seed, 0, 0))
    dibits = rng_src.integers(0, 4, size=nsym + 2 * guard, dtype=np.uint8)
    x = shape_pulses(map_symbols(dibits, tx), tx)
    y = apply_awgn(x, eb_n0_db, 2, tx.sps, seed=_seed(seed, 0, 1))
    v = genie_symbols(y, tx.sps, tx.rolloff, tx.ntaps) / tx.amplitude
    rx = decide(v, tx.mapping)[:nsym]
    ser, ber = an.compute_error_rates(rx, dibits[:nsym], 0, 0, periodic=False)
    return ber, ser, 2 * nsym, v[:nsym], dibits[:nsym]


def _ber_cell(args):
    i, ebn0, bits, seed = args
    ber, ser, n, v, _ = genie_ber_point(ebn0, bits, _seed(seed, i, 2))
    return ber, ser, n, v[-2000:]


def run_ber_sweep(s: Scenario, out=None, jobs: int = 1):
    out = Path(out if out is not None else s.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = [(i, e, s.ber_bits, s.seed) for i, e in enumerate(s.ber_points)]
    results = _map(_ber_cell, cells, jobs)
    rows = []
    fails = []
    for (i, ebn0, _, _), (ber, ser, n, _) in zip(cells, results):
        theory = float(an.qpsk_ber(ebn0))
        rel = abs(ber - theory) / theory
        rows.append((ebn0, ber, theory, rel, ser, float(an.qpsk_ser(ebn0)), n))
        if rel > BER_TOLERANCE:
            fails.append(f"Eb/N0 {ebn0} dB: BER {ber:.4g} vs {theory:.4g} ({100 * rel:.1f}% off)")
    cols = list(zip(*rows))
    an.write_table(out / "ber.tsv", "eb_n0_db\tber\tber_theory\trel_error\tser\tser_theory\tbits",
                   [np.asarray(c) for c in cols[:6]] + [np.asarray(cols[6], dtype=np.int64)])
    mid = results[len(results) // 2][3]
    an.write_constellation(out / "constellation.tsv", an.export_constellation(mid, len(mid)))
    rep = an.LinkReport(scenario=s.name, backend=BACKEND, symbols=sum(r[2] for r in results) // 2)
    for ebn0, ber, theory, rel, *_ in rows:
        rep.extra[f"ber_{ebn0:g}dB"] = ber
        rep.extra[f"ber_theory_{ebn0:g}dB"] = theory
    (out / "report.txt").write_text(rep.to_text())
    return rep, fails


# -- ablation -------------------------------------------------------------

ABLATION_AXES = {
    "differential": (True, False),
    "pack": ("full_byte_msb_first", "full_byte_lsb_first"),
    "bw_scale": (1.0, 4.0),
    "rotation_deg": (0.0, 90.0),
}


def ablation_cells(s: Scenario):
    """All grid cells as ``(index, settings, scenario)``."""
    cells = []
    for i, combo in enumerate(itertools.product(*ABLATION_AXES.values())):
        settings = dict(zip(ABLATION_AXES, combo))
        tx = replace(s.tx, differential=settings["differential"])
        rx = replace(s.rx, differential=settings["differential"], pack_mode=settings["pack"],
                     clock_bw=s.rx.clock_bw * settings["bw_scale"],
                     costas_bw=s.rx.costas_bw * settings["bw_scale"])
        ch = replace(s.channel, phase0=s.channel.phase0 + np.deg2rad(settings["rotation_deg"]))
        cell = replace(s, name="sequence2", tx=tx, rx=rx, channel=ch, unpack="full_byte_msb_first")
        cells.append((i, settings, cell))
    return cells


def _ablation_cell(args):
    i, seed, cell = args
    tx_dibits, _, result = simulate(replace(cell, seed=seed), cell=i)
    rep = _analyse(cell, tx_dibits, result)
    return rep.frames_found, rep.payload_text, rep.sync_index


def run_ablation(s: Scenario, out=None, jobs: int = 1):
    """Sequence-2 framing across the ablation grid; writes ``ablation.tsv``."""
    out = Path(out if out is not None else s.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = ablation_cells(s)
    results = _map(_ablation_cell, [(i, s.seed, c) for i, _, c in cells], jobs)
    lines = ["cell\tdifferential\tpack\tbw_scale\trotation_deg\tframes_found\tpayload\tsuccess"]
    table = []
    for (i, st, _), (frames, text, _) in zip(cells, results):
        ok = text == "HelloWorld"
        table.append({**st, "cell": i, "frames_found": frames, "payload": text, "success": ok})
        lines.append("\t".join([str(i), str(st["differential"]).lower(), st["pack"],
                                f"{st['bw_scale']:g}", f"{st['rotation_deg']:g}", str(frames),
                                text.encode("ascii", "backslashreplace").decode(), str(ok).lower()]))
    (out / "ablation.tsv").write_text("\n".join(lines) + "\n")
    rep = an.LinkReport(scenario="ablation", backend=BACKEND, symbols=s.duration)
    rep.extra["cells"] = len(table)
    rep.extra["cells_failed"] = sum(not r["success"] for r in table)
    (out / "report.txt").write_text(rep.to_text())

    fails = []
    control = _find(table, True, "full_byte_msb_first", 1.0, 0.0)
    if not control["success"]:
        fails.append("control cell did not decode HelloWorld")
    rotated = _find(table, False, "full_byte_msb_first", 1.0, 90.0)
    if rotated["frames_found"] != 0:
        fails.append("differential-off rotated cell still found frames")
    if not _find(table, True, "full_byte_msb_first", 1.0, 90.0)["success"]:
        fails.append("differential-on rotated cell failed")
    return table, fails


def _find(table, differential, pack, bw, rot):
    for row in table:
        if (row["differential"] == differential and row["pack"] == pack
                and row["bw_scale"] == bw and row["rotation_deg"] == rot):
            return row
    raise KeyError("cell missing")


def _map(fn, items, jobs):
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]
