"""Time the compiled and pure-Python tracking-loop kernels on the same input.

Usage::

    python3 benchmarks/bench_kernels.py [--symbols 20000] [--repeat 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from dsrclink import _kernels_py
from dsrclink.channel import ChannelConfig, run_channel
from dsrclink.rx import ClockSyncState, CmaState, CostasState, RxConfig
from dsrclink.tx import TxConfig, map_symbols, shape_pulses

try:
    from dsrclink import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def make_input(nsym: int) -> np.ndarray:
    rng = np.random.default_rng(0)
    cfg = TxConfig()
    x = shape_pulses(map_symbols(rng.integers(0, 4, nsym), cfg), cfg)
    y = run_channel(x, ChannelConfig(taps=[1, 0.2j], cfo=5e-5, timing_frac=0.3, clock_ppm=50,
                                     snr_eb_n0_db=20.0, seed=1))
    return y / np.sqrt(cfg.sps * np.mean(np.abs(y) ** 2))


def cases(x: np.ndarray):
    cs = ClockSyncState.create(RxConfig())
    b = cs.bank
    xe = np.concatenate((np.zeros(b.taps_per_bank - 1, dtype=complex), x))
    clock = (xe, np.ascontiguousarray(b.banks[:, ::-1]),
             np.ascontiguousarray(b.derivative_banks[:, ::-1]), cs.sps, cs.alpha, cs.beta,
             cs.max_dev, cs.filt_index, 0.0, 0)
    sym = x[::4].copy()
    cma = (np.concatenate((np.zeros(10, dtype=complex), sym)), CmaState.create().weights,
           1e-3, 1.0, 0.01, 100.0)
    st = CostasState.create()
    costas = (sym, 0.0, 0.0, st.alpha, st.beta, st.max_freq)
    return {"pfb_clock_sync": clock, "cma_equalize": cma, "costas_track": costas}


def best_time(fn, args, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--symbols", type=int, default=20_000)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    x = make_input(args.symbols)
    print(f"{args.symbols} symbols, best of {args.repeat}")
    print(f"{'kernel':16s} {'python (s)':>11s} {'cython (s)':>11s} {'speedup':>8s}")
    for name, fargs in cases(x).items():
        t_py = best_time(getattr(_kernels_py, name), fargs, args.repeat)
        if _kernels_c is None:
            print(f"{name:16s} {t_py:11.4f} {'n/a':>11s} {'n/a':>8s}")
            continue
        t_c = best_time(getattr(_kernels_c, name), fargs, args.repeat)
        print(f"{name:16s} {t_py:11.4f} {t_c:11.4f} {t_py / t_c:7.1f}x")


if __name__ == "__main__":
    main()
