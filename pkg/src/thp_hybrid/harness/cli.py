"""Command-line entry point: ``thp-hybrid run`` and ``thp-hybrid check``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .checks import run_checks
from .experiments import PRESETS, make_spec, run_preset

log = logging.getLogger("thp_hybrid")

# flag name -> ExperimentSpec field
_FIELDS = {"snr_db": "snr_db", "symbols": "symbols", "algos": "algos", "delay_ms": "delays_ms",
           "out": "out", "jobs": "jobs"}
_CONFIG_ONLY = ("tol", "max_iter", "f_d", "slot_s", "frames", "train_frames", "eval_points",
                "eval_spacing_s", "tau_prox", "system")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thp-hybrid", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment preset and write CSV/JSON results")
    run.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    run.add_argument("--snr-db", type=float, nargs="+")
    run.add_argument("--seeds", type=int, help="number of channel seeds (0..n-1)")
    run.add_argument("--symbols", type=int, help="symbol vectors per point")
    run.add_argument("--algos", nargs="+")
    run.add_argument("--delay-ms", type=float, nargs="+")
    run.add_argument("--out", help="output directory")
    run.add_argument("--config", help="JSON file whose keys override any flag")
    run.add_argument("--jobs", type=int, default=1)

    sub.add_parser("check", help="run the built-in invariant and oracle checks")
    return parser


def spec_from_args(args):
    overrides = {field: getattr(args, flag) for flag, field in _FIELDS.items()}
    if args.seeds is not None:
        overrides["seeds"] = tuple(range(args.seeds))
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
        for key, value in cfg.items():
            if key == "seeds":
                overrides["seeds"] = tuple(range(value)) if isinstance(value, int) else tuple(value)
            elif key in _FIELDS:
                overrides[_FIELDS[key]] = value
            elif key in _CONFIG_ONLY:
                overrides[key] = value
            else:
                raise SystemExit(f"unknown config key {key!r}")
    return make_spec(args.preset, **overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "check":
        failures = run_checks()
        print(f"{failures} failed" if failures else "all checks passed")
        return 1 if failures else 0

    spec = spec_from_args(args)
    log.info("running preset %s with %d seeds", spec.preset, len(spec.seeds))
    report = run_preset(spec)
    agg = report.aggregate("mse")
    ser = report.aggregate("ser")
    for key in sorted(agg):
        algo, snr, delay = key
        line = f"{algo:24s} snr={snr:5.1f}dB delay={delay:4.1f}ms mse={agg[key]:.5f}"
        if key in ser:
            line += f" ser={ser[key]:.5f}"
        print(line)
    for name, (header, rows) in report.tables.items():
        print(f"[{name}] " + ",".join(header))
        for row in rows:
            print("  " + ",".join(str(v) for v in row))
    if spec.out:
        print(f"results written to {spec.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
