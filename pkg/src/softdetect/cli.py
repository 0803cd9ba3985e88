"""Command-line driver: ``softdetect {llr-sweep,ber,complexity}``.

Each flag can also be set through an environment variable named
``SOFTDETECT_`` + the flag in upper case with dashes as underscores
(``--snr-db`` -> ``SOFTDETECT_SNR_DB``). Command-line values win.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import sim
from .coding import IrccSpec
from .detector import DetectorMode

ENV_PREFIX = "SOFTDETECT_"


def _env(flag: str, default):
    return os.environ.get(ENV_PREFIX + flag.lstrip("-").upper().replace("-", "_"), default)


def _float_list(text: str) -> tuple:
    try:
        return tuple(float(v) for v in str(text).replace(" ", "").split(",") if v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated number list: {text!r}")


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated integer list: {text!r}")


def _grid(text: str) -> tuple:
    parts = str(text).split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"grid must be min:max:step, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be numeric, got {text!r}")


def _add(p, flag, **kw):
    kw["default"] = _env(flag, kw.get("default"))
    p.add_argument(flag, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="softdetect",
        description="Soft detection experiments for (non-)bijective constellations.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("llr-sweep", help="detector LLRs along the real axis")
    _add(sw, "--constellation", default="dsm-epa:16")
    _add(sw, "--snr-db", type=_float_list, default="12")
    _add(sw, "--bit-index", type=int, default=0)
    _add(sw, "--grid", type=_grid, default="-2:2:0.01")
    _add(sw, "--prior-llrs", default=None, help="file with N a-priori LLRs")
    _add(sw, "--out", default=None)

    ber = sub.add_parser("ber", help="iterative BICM-ID bit error rate")
    _add(ber, "--constellation", default="dsm-epa:4")
    _add(ber, "--detector", default="app",
         help="app | maxlog-bit | maxlog-sym | maxlog-bitsym")
    _add(ber, "--snr-db", type=_float_list, default="6")
    _add(ber, "--info-len", type=int, default=10_000)
    _add(ber, "--iters", type=int, default=20)
    _add(ber, "--seed", type=int, default=0)
    _add(ber, "--code", default=None,
         help=f"IRCC table (j R_j alpha_j); '{sim.DEFAULT_CODE_ALIAS}' for the built-in "
              "mixture; omitted: single rate-1/2 code")
    _add(ber, "--max-blocks", type=int, default=100)
    _add(ber, "--target-errors", type=int, default=100)
    _add(ber, "--workers", type=int, default=1)
    _add(ber, "--out", default=None)

    cx = sub.add_parser("complexity", help="prior-aggregation branch counts")
    _add(cx, "--n-list", type=_int_list, default="2,4,6,8,10,12,14,16")
    _add(cx, "--out", default=None)
    return parser


def _fix_negative_values(argv):
    # "--grid -2:2:0.01" would otherwise be parsed as an option
    out, it = [], iter(argv)
    for a in it:
        if a in ("--grid", "--snr-db"):
            nxt = next(it, None)
            out.append(a if nxt is None else f"{a}={nxt}")
        else:
            out.append(a)
    return out


def _print_rows(header, rows):
    print(",".join(header))
    for row in rows:
        print(",".join(sim.fmt(v) for v in row))


def main(argv=None) -> int:
    parser = build_parser()
    argv = _fix_negative_values(sys.argv[1:] if argv is None else list(argv))
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "llr-sweep":
            cfg = sim.SimConfig(
                constellation=args.constellation, snr_db=args.snr_db,
                bit_index=args.bit_index, grid=args.grid,
                prior_llrs=args.prior_llrs, out=args.out,
            )
            rows = sim.run_llr_sweep(cfg)
            if not args.out:
                _print_rows(sim.SWEEP_HEADER, rows)
        elif args.command == "ber":
            DetectorMode.parse(args.detector)
            if args.code and args.code != sim.DEFAULT_CODE_ALIAS:
                IrccSpec.load(args.code)
            cfg = sim.SimConfig(
                constellation=args.constellation, detector=args.detector,
                snr_db=args.snr_db, info_len=args.info_len, iters=args.iters,
                seed=args.seed, code=args.code, max_blocks=args.max_blocks,
                target_errors=args.target_errors, workers=args.workers,
                out=args.out,
            )
            records = sim.run_ber(cfg)
            if not args.out:
                _print_rows(sim.BER_HEADER, [
                    (r.snr_db, r.iteration, r.bit_errors, r.bits, r.ber, r.blocks)
                    for r in records
                ])
        else:
            rows = sim.run_complexity(args.n_list, args.out)
            if not args.out:
                _print_rows(sim.COMPLEXITY_HEADER, rows)
    except (ValueError, OSError, KeyError, argparse.ArgumentTypeError) as exc:
        print(f"softdetect: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
