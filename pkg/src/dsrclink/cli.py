"""Command-line entry point: ``dsrclink run|sweep|ablate``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace

from .kernels import BACKEND
from .scenario import (ConfigError, Scenario, load_scenario, run_ablation, run_ber_sweep,
                       run_scenario)

log = logging.getLogger("dsrclink")


def _apply_overrides(s: Scenario, args) -> Scenario:
    kw = {}
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "duration", None) is not None:
        kw["duration"] = args.duration
    if getattr(args, "out", None) is not None:
        kw["output_dir"] = args.out
    return replace(s, **kw) if kw else s


def _finish(name: str, fails: list[str], check: bool, elapsed: float) -> int:
    print(f"{name}: done in {elapsed:.2f} s (kernels: {BACKEND})")
    for f in fails:
        print(f"  FAIL {f}")
    if check:
        print(f"check: {'FAIL' if fails else 'PASS'}")
        return 1 if fails else 0
    return 0


def cmd_run(args) -> int:
    s = _apply_overrides(load_scenario(args.scenario), args)
    t0 = time.perf_counter()
    if s.name == "ber_sweep":
        rep, fails = run_ber_sweep(s, s.output_dir, jobs=args.jobs)
    elif s.name == "ablation":
        _, fails = run_ablation(s, s.output_dir, jobs=args.jobs)
        rep = None
    else:
        rep, fails = run_scenario(s, s.output_dir)
    if rep is not None:
        sys.stdout.write(rep.to_text())
    return _finish(s.name, fails, args.check, time.perf_counter() - t0)


def cmd_sweep(args) -> int:
    s = Scenario(name="ber_sweep", seed=args.seed or 0, output_dir=args.out or "out/ber_sweep",
                 duration=max(args.bits // 2, 10_000), ber_points=tuple(args.ebn0),
                 ber_bits=args.bits)
    t0 = time.perf_counter()
    rep, fails = run_ber_sweep(s, s.output_dir, jobs=args.jobs)
    sys.stdout.write(rep.to_text())
    return _finish("ber_sweep", fails, args.check, time.perf_counter() - t0)


def cmd_ablate(args) -> int:
    if args.scenario:
        s = load_scenario(args.scenario)
        s = replace(s, name="ablation")
    else:
        s = Scenario(name="ablation", duration=20_000, output_dir="out/ablation")
    s = _apply_overrides(s, args)
    t0 = time.perf_counter()
    table, fails = run_ablation(s, s.output_dir, jobs=args.jobs)
    for row in table:
        print(f"cell {row['cell']:2d} diff={str(row['differential']):5s} pack={row['pack']:20s} "
              f"bw x{row['bw_scale']:g} rot={row['rotation_deg']:3g} frames={row['frames_found']:4d} "
              f"{'ok' if row['success'] else 'FAIL'}")
    return _finish("ablation", fails, args.check, time.perf_counter() - t0)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dsrclink", description="Software QPSK link simulator.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario file (or built-in scenario name)")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--duration", type=int, help="symbol count override")
    r.add_argument("--check", action="store_true", help="exit nonzero if acceptance thresholds fail")
    r.add_argument("--jobs", type=int, default=1)
    r.set_defaults(func=cmd_run)

    w = sub.add_parser("sweep", help="genie-synchronised BER sweep against theory")
    w.add_argument("--ebn0", type=float, nargs="+", default=[4.0, 6.0, 8.0])
    w.add_argument("--bits", type=int, default=4_000_000)
    w.add_argument("--seed", type=int)
    w.add_argument("--out")
    w.add_argument("--check", action="store_true")
    w.add_argument("--jobs", type=int, default=1)
    w.set_defaults(func=cmd_sweep)

    a = sub.add_parser("ablate", help="sequence-2 ablation grid")
    a.add_argument("scenario", nargs="?")
    a.add_argument("--seed", type=int)
    a.add_argument("--out")
    a.add_argument("--duration", type=int)
    a.add_argument("--check", action="store_true")
    a.add_argument("--jobs", type=int, default=1)
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: invalid scenario: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
