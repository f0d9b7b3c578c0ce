import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from dsrclink.analysis import (FrameMarker, LinkReport, compute_error_rates, compute_evm,
                               detect_frames, export_constellation, export_eye, export_psd,
                               eye_opening, find_lag, find_sync, frame_dibits, parse_report,
                               payload_text, qpsk_ber, read_dibits, write_constellation,
                               write_dibits, write_eye, write_psd)
from dsrclink.channel import apply_awgn
from dsrclink.dsp import fir_filter
from dsrclink.rx import decide, genie_symbols
from dsrclink.tx import (DEFAULT_MAPPING, SEQUENCE1, SEQUENCE2, TxConfig, map_symbols,
                         shape_pulses, unpack_dibits)

dibit_arrays = arrays(np.uint8, st.integers(0, 300), elements=st.integers(0, 3))


def complex_noise(rng, n, var=1.0):
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) * np.sqrt(var / 2)


class TestFindSync:
    def test_garbage_prefix(self):
        stream = np.concatenate(([2, 2], np.tile(SEQUENCE1, 5)))
        assert find_sync(stream, SEQUENCE1, k_periods=2) == (2, 0)

    def test_aligned_stream(self):
        assert find_sync(np.tile(SEQUENCE1, 4), SEQUENCE1) == (0, 0)

    def test_rotation_reported(self):
        stream = np.tile(SEQUENCE1, 6)[3:]  # starts at 3, 0, 1, ...
        assert find_sync(stream, SEQUENCE1) == (0, 3)

    @pytest.mark.parametrize("seed", range(5))
    def test_noise_has_no_sync(self, seed):
        # each (start, rotation) pair matches 12 dibits with probability 4^-12, so the
        # union bound over ~10^3 starts and 4 rotations is about 2.4e-4 per stream
        noise = np.random.default_rng(seed).integers(0, 4, 1000).astype(np.uint8)
        assert find_sync(noise, SEQUENCE1, k_periods=3) == (None, None)

    def test_too_short(self):
        assert find_sync(np.array([0, 1, 2]), SEQUENCE1) == (None, None)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            find_sync(np.zeros(10), [])
        with pytest.raises(ValueError):
            find_sync(np.zeros(10), SEQUENCE1, k_periods=1)

    @given(stream=dibit_arrays, period=st.lists(st.integers(0, 3), min_size=1, max_size=6),
           k=st.integers(2, 4), plant=st.integers(0, 100))
    def test_self_verifying(self, stream, period, k, plant):
        period = np.array(period, dtype=np.uint8)
        planted = np.concatenate((stream[:plant], np.tile(period, k + 1), stream[plant:]))
        idx, rot = find_sync(planted, period, k)
        assert idx is not None and idx <= min(plant, stream.size)
        window = planted[idx:idx + k * period.size]
        expected = period[(rot + np.arange(window.size)) % period.size]
        np.testing.assert_array_equal(window, expected)


class TestFrames:
    def test_three_frames(self):
        frames = detect_frames(np.tile(SEQUENCE2, 3).astype(np.uint8))
        assert [off for off, _ in frames] == [0, 12, 24]
        assert all(p.decode("ascii") == "HelloWorld" for _, p in frames)

    def test_empty(self):
        assert detect_frames(np.zeros(0, dtype=np.uint8)) == []

    def test_truncated_frame_dropped(self):
        data = np.concatenate((SEQUENCE2, SEQUENCE2[:8])).astype(np.uint8)
        assert len(detect_frames(data)) == 1

    def test_greedy_no_reuse(self):
        marker = FrameMarker(prefix=(0, 255), payload_len=2)
        data = np.array([0, 255, 0, 255, 0, 255, 7, 7], dtype=np.uint8)
        assert detect_frames(data, marker) == [(0, bytes([0, 255])), (4, bytes([7, 7]))]

    def test_marker_validation(self):
        with pytest.raises(ValueError):
            FrameMarker(prefix=(5, 5))

    @given(data=arrays(np.uint8, st.integers(0, 400), elements=st.sampled_from([0, 255, 72, 1])),
           payload=st.integers(0, 6))
    def test_offsets_increasing_and_disjoint(self, data, payload):
        marker = FrameMarker(payload_len=payload)
        frames = detect_frames(data, marker)
        size = 2 + payload
        offsets = [off for off, _ in frames]
        assert all(b - a >= size for a, b in zip(offsets, offsets[1:]))
        for off, p in frames:
            assert tuple(data[off:off + 2]) == (0, 255) and len(p) == payload

    def test_frame_dibits_finds_byte_phase(self):
        dibits = unpack_dibits(np.tile(SEQUENCE2, 4).astype(np.uint8), "full_byte_msb_first")
        phase, frames = frame_dibits(np.concatenate(([1, 3, 2], dibits)))
        assert phase == 3 and len(frames) == 4
        assert payload_text(frames) == "HelloWorld"

    def test_payload_text_majority(self):
        frames = [(0, b"HelloWorld"), (12, b"HelloWorle"), (24, b"HelloWorld")]
        assert payload_text(frames) == "HelloWorld"
        assert payload_text([]) == ""


class TestErrorRates:
    def test_identical(self):
        x = np.tile(SEQUENCE1, 10).astype(np.uint8)
        assert compute_error_rates(x, SEQUENCE1) == (0.0, 0.0)

    @given(x=dibit_arrays.filter(lambda a: a.size > 0))
    def test_self_comparison_is_zero(self, x):
        assert compute_error_rates(x, x, periodic=False) == (0.0, 0.0)

    def test_single_adjacent_error(self):
        n = 400
        x = np.zeros(n, dtype=np.uint8)
        y = x.copy()
        y[17] = 1
        assert compute_error_rates(y, x, periodic=False) == (1 / n, 1 / (2 * n))
        y[17] = 3  # diagonal neighbour: both bits wrong
        assert compute_error_rates(y, x, periodic=False) == (1 / n, 2 / (2 * n))

    def test_rotation_and_offset(self):
        stream = np.concatenate(([3, 3, 3], np.tile(SEQUENCE1, 5)[2:]))
        assert compute_error_rates(stream, SEQUENCE1, 3, 2) == (0.0, 0.0)
        assert compute_error_rates(stream, SEQUENCE1, 3, 0)[0] == 1.0

    def test_empty_region_rejected(self):
        with pytest.raises(ValueError):
            compute_error_rates(np.zeros(4, np.uint8), SEQUENCE1, sync_index=4)

    def test_genie_ber_matches_q_function(self):
        rng = np.random.default_rng(99)
        cfg = TxConfig()
        d = rng.integers(0, 4, 500_000).astype(np.uint8)  # 10^6 bits
        y = apply_awgn(shape_pulses(map_symbols(d, cfg), cfg), 6.0, 2, cfg.sps, seed=3)
        v = genie_symbols(y, cfg.sps, cfg.rolloff, cfg.ntaps)
        _, ber = compute_error_rates(decide(v), d[:v.size], periodic=False)
        assert float(qpsk_ber(6.0)) == pytest.approx(2.4e-3, rel=0.02)
        assert ber == pytest.approx(float(qpsk_ber(6.0)), rel=0.15)

    def test_find_lag(self, rng):
        tx = rng.integers(0, 4, 6000).astype(np.uint8)
        rx = np.concatenate((rng.integers(0, 4, 37), tx)).astype(np.uint8)
        assert find_lag(rx, tx) == 37


class TestEvm:
    def test_exact_points(self):
        assert compute_evm(np.tile(DEFAULT_MAPPING, 10), window=1.0) == 0.0

    def test_radial_scaling(self):
        assert compute_evm(1.1 * np.tile(DEFAULT_MAPPING, 10), window=1.0) == pytest.approx(10.0)

    def test_awgn_es_n0_20db(self, rng):
        sym = DEFAULT_MAPPING[rng.integers(0, 4, 200_000)]
        v = sym + complex_noise(rng, sym.size, 10 ** -2.0)
        assert compute_evm(v) == pytest.approx(10.0, abs=1.0)

    def test_uses_final_window(self):
        v = np.concatenate((np.full(300, 5.0 + 0j), np.tile(DEFAULT_MAPPING, 25)))
        assert compute_evm(v, window=0.25) == 0.0

    def test_empty_window(self):
        with pytest.raises(ValueError):
            compute_evm(DEFAULT_MAPPING[:3], window=0.25)


class TestPsd:
    def test_tone(self):
        nfft = 1024
        f0 = 100 / nfft
        x = np.exp(2j * np.pi * f0 * np.arange(64 * nfft))
        f, p = export_psd(x, nfft)
        assert f[np.argmax(p)] == pytest.approx(f0)
        assert p.max() - np.median(p) >= 30.0
        assert np.all(np.diff(f) > 0) and f[nfft // 2] == 0.0

    def test_white_noise_flat(self, rng):
        nfft = 256
        f, p = export_psd(complex_noise(rng, 200 * nfft), nfft)  # ~400 averages
        assert np.max(np.abs(p - np.mean(p))) < 3.0

    def test_shaped_qpsk_half_power_edges(self, rng):
        cfg = TxConfig()
        x = shape_pulses(map_symbols(rng.integers(0, 4, 100_000), cfg), cfg)
        f, p = export_psd(x, 1024)
        ref = np.mean(p[np.abs(f) < 0.05])
        bin_width = 1 / 1024
        for side in (-1, 1):
            band = f * side > 0.05
            edge = f[band][np.argmin(np.abs(p[band] - (ref - 3.0)))]
            assert edge == pytest.approx(side * 0.5 / cfg.sps, abs=bin_width)

    @pytest.mark.parametrize("nfft", [1000, 0, 1])
    def test_rejects_non_power_of_two(self, nfft):
        with pytest.raises(ValueError):
            export_psd(np.ones(4096, dtype=complex), nfft)

    def test_deterministic_files(self, tmp_path, rng):
        x = complex_noise(rng, 8192)
        write_psd(tmp_path / "a.tsv", *export_psd(x, 512))
        write_psd(tmp_path / "b.tsv", *export_psd(x, 512))
        assert (tmp_path / "a.tsv").read_bytes() == (tmp_path / "b.tsv").read_bytes()
        assert (tmp_path / "a.tsv").read_text().splitlines()[0] == "freq_cycles_per_sample\tpower_db"


class TestConstellationAndEye:
    def test_exact_symbols_cluster(self, rng):
        rows = export_constellation(DEFAULT_MAPPING[rng.integers(0, 4, 5000)], 2000)
        assert rows.shape == (2000, 2)
        pts = rows[:, 0] + 1j * rows[:, 1]
        assert np.max(np.abs(pts - DEFAULT_MAPPING[decide(pts)])) < 1e-6

    def test_noiseless_chain_cluster_bounded_by_residual_isi(self, rng):
        cfg = TxConfig()
        d = rng.integers(0, 4, 10_000)
        v = genie_symbols(shape_pulses(map_symbols(d, cfg), cfg))
        g = np.convolve(cfg.rrc().coefficients, cfg.rrc().coefficients)
        peak = cfg.ntaps - 1
        isi_bound = np.sum(np.abs(g[peak % cfg.sps::cfg.sps])) - g[peak]
        rows = export_constellation(v, 2000)
        pts = rows[:, 0] + 1j * rows[:, 1]
        assert np.max(np.abs(pts - DEFAULT_MAPPING[decide(pts)])) <= isi_bound

    def test_eye_opens_widest_at_symbol_instant(self, rng):
        cfg = TxConfig()
        x = shape_pulses(map_symbols(rng.integers(0, 4, 5000), cfg), cfg)
        mf = fir_filter(cfg.rrc(), x)
        traces = export_eye(mf[1000:], cfg.sps, span=2, offset=(cfg.ntaps - 1 - 1000) % cfg.sps)
        assert traces.shape[1] == 2 * cfg.sps + 1
        opening = eye_opening(traces)
        assert np.argmax(opening) in (0, cfg.sps, 2 * cfg.sps)
        assert opening[cfg.sps] == pytest.approx(opening.max())

    def test_cluster_spread_at_6db(self, rng):
        cfg = TxConfig()
        d = rng.integers(0, 4, 200_000)
        y = apply_awgn(shape_pulses(map_symbols(d, cfg), cfg), 6.0, 2, cfg.sps, seed=8)
        v = genie_symbols(y)
        err = v - DEFAULT_MAPPING[d[:v.size]]
        # per-dimension noise variance after the unit-energy matched filter is N0/2
        expected = 1.0 / (2 * 2 * 10 ** 0.6)
        for k in range(4):
            sel = d[:v.size] == k
            assert np.var(err[sel].real) == pytest.approx(expected, rel=0.10)
            assert np.var(err[sel].imag) == pytest.approx(expected, rel=0.10)

    def test_eye_file_layout(self, tmp_path):
        traces = np.arange(18, dtype=complex).reshape(2, 9)
        write_eye(tmp_path / "eye.tsv", traces)
        lines = (tmp_path / "eye.tsv").read_text().splitlines()
        assert lines[0] == "trace\tsample\tre\tim" and len(lines) == 19
        assert lines[10].split("\t")[:2] == ["1", "0"]

    def test_constellation_file(self, tmp_path):
        write_constellation(tmp_path / "c.tsv", np.array([[1.0, -1.0]]))
        assert (tmp_path / "c.tsv").read_text() == "re\tim\n1.000000e+00\t-1.000000e+00\n"


class TestReportAndDibits:
    def test_dibit_file_round_trip(self, tmp_path, rng):
        d = rng.integers(0, 4, 1000).astype(np.uint8)
        write_dibits(tmp_path / "rx.bin", d)
        assert (tmp_path / "rx.bin").stat().st_size == 1000
        np.testing.assert_array_equal(read_dibits(tmp_path / "rx.bin"), d)

    def test_report_text(self):
        rep = LinkReport(scenario="sequence1", sync_index=17, ser_post_sync=0.0, clock_locked=True,
                         payload_text=None, extra={"ber_4": 0.0125})
        parsed = parse_report(rep.to_text())
        assert parsed["sync_index"] == "17" and parsed["clock_locked"] == "true"
        assert parsed["ser_post_sync"] == "0" and parsed["payload_text"] == "none"
        assert parsed["ber_4"] == "0.0125"
