"""Command-line front end.

Exit codes: 0 ok, 2 configuration or usage error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .config import ConfigError, load_scenario
from .mechanics import StabilityError
from .model import DomainError
from .spectra import NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("nanomech")


def _window(text: str):
    try:
        lo, hi = (float(v) * 1e3 for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected LO,HI in kHz")
    if not lo < hi:
        raise argparse.ArgumentTypeError("window needs LO < HI")
    return lo, hi


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nanomech", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, metavar="PATH")
        sp.add_argument("--out", required=True, metavar="DIR")
        sp.add_argument("--seed", type=int, help="overrides [run] seed")
        sp.add_argument("--averages", type=int, help="overrides [run] averages")
        return sp

    common(sub.add_parser("simulate", help="trajectory, Welch PSD and detected spectrum"))
    for name, text in (("calibrate", "temperature sweep -> coupling g"),
                       ("budget", "imprecision / saturation budget vs power")):
        common(sub.add_parser(name, help=text)).add_argument("--workers", type=int)
    common(sub.add_parser("project", help="quantum-limited projection table"))
    g = common(sub.add_parser("gaincal", help="high-power gain from a fixed drive tone"))
    g.add_argument("--high-config", required=True, metavar="PATH")
    f = common(sub.add_parser("fit", help="fit a Lorentzian to a spectrum CSV"), config=False)
    f.add_argument("--input", required=True, metavar="CSV")
    f.add_argument("--window-khz", type=_window, metavar="LO,HI")
    f.add_argument("--model", choices=("lorentzian", "sqrt"), default="lorentzian")
    return p


def _scenario(path, args):
    scn = load_scenario(path)
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.averages is not None:
        if args.averages < 1:
            raise ConfigError("--averages must be >= 1")
        over["averages"] = args.averages
    return scn.replace("run", **over) if over else scn


def dispatch(args) -> dict:
    from . import runner
    from .io import read_spectrum

    if args.command == "fit":
        try:
            spectrum = read_spectrum(args.input)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read spectrum: {exc}", source=args.input)
        return runner.run_fit(spectrum, args.out, args.window_khz, sqrt_model=args.model == "sqrt")

    scn = _scenario(args.config, args)
    if args.command == "simulate":
        return runner.run_simulate(scn, args.out)
    if args.command == "calibrate":
        return runner.run_calibrate(scn, args.out, args.workers)
    if args.command == "budget":
        return runner.run_budget(scn, args.out, args.workers)["summary"]
    if args.command == "project":
        return runner.run_project(scn, args.out)
    if args.command == "gaincal":
        return runner.run_gaincal(scn, _scenario(args.high_config, args), args.out)
    raise ConfigError(f"unknown command {args.command}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = dispatch(args)
    except (ConfigError, DomainError, StabilityError, FileNotFoundError) as exc:
        print(f"nanomech: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, ArithmeticError) as exc:
        print(f"nanomech: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for key, value in summary.items():
        print(f"{key} = {value}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
