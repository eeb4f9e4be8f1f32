"""
Command-line surface: eval, curve, simulate, empirical and fit.

Exit codes: 0 success, 2 invalid input, 3 numerical failure, 4 partial fit.
"""
import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from config import (DEFAULT_FIT, DEFAULT_SIMULATION,
                    OUTPUT_SIGNIFICANT_DIGITS, MEASURED_PRESETS)
from core.errors import (InsufficientDataError, NumericalError,
                         ParameterDomainError, TraceFormatError)
from core.fit_runner import FitRunner
from core.model import available_statistics_map, curve, special_case_params
from core.simulator import generate, measure, read_trace, write_trace
from core.state_models import (ChannelParams, DopplerParams, EnvelopeTrace,
                               SimConfig)


logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_PARTIAL = 4

_SPECIAL_CASES = ("rayleigh", "rice", "nakagami", "kappa_mu")


def _fmt(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "NaN"
    return f"{value:.{OUTPUT_SIGNIFICANT_DIGITS}g}"


def _write_lines(path: str, lines: List[str]) -> None:
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _add_channel_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("channel parameters")
    group.add_argument("--preset", choices=sorted(MEASURED_PRESETS),
                       help="Start from a measured parameter row.")
    group.add_argument("--kappa", type=float)
    group.add_argument("--mu", type=float)
    group.add_argument("--m", type=float)
    group.add_argument("--rbar", type=float, help="rms envelope level.")
    group.add_argument("--rho", type=float, help="Slope correlation.")


def _add_grid_flags(parser: argparse.ArgumentParser, db_from: float,
                    db_to: float, points: int) -> None:
    parser.add_argument("--db-from", type=float, default=db_from)
    parser.add_argument("--db-to", type=float, default=db_to)
    parser.add_argument("--points", type=int, default=points)


def _channel_values(args: argparse.Namespace) -> Dict[str, float]:
    values = dict(MEASURED_PRESETS[args.preset]) if args.preset else {}
    explicit = {"kappa": args.kappa, "mu": args.mu, "m": args.m,
                "r_bar": args.rbar, "rho": args.rho}
    values.update({k: v for k, v in explicit.items() if v is not None})
    missing = [k for k in ("kappa", "mu", "m") if k not in values]
    if missing:
        raise ParameterDomainError(
            "--" + ", --".join(missing) + " required without --preset")
    return values


def _channel_params(args: argparse.Namespace) -> ChannelParams:
    values = _channel_values(args)
    values.pop("f_m", None)
    return ChannelParams(**values)


def _grid(args: argparse.Namespace) -> np.ndarray:
    if args.points < 2:
        raise ParameterDomainError(
            f"points >= 2 violated: got {args.points}")
    if not args.db_from < args.db_to:
        raise ParameterDomainError(
            f"db-from < db-to violated: {args.db_from} >= {args.db_to}")
    return np.linspace(args.db_from, args.db_to, args.points)


def cmd_eval(args: argparse.Namespace) -> int:
    p = _channel_params(args)
    evaluate = available_statistics_map[args.stat]
    kwargs = ({"shadow_ratio": args.shadow_ratio}
              if args.stat in ("lcr", "afd") else {})
    print(_fmt(evaluate(p, args.r, **kwargs)))
    return EXIT_OK


def _special_params(args: argparse.Namespace) -> ChannelParams:
    if args.special == "rayleigh":
        shape = ()
    elif args.special == "rice":
        shape = (args.kappa,)
    elif args.special == "nakagami":
        shape = (args.mu,)
    else:
        shape = (args.kappa, args.mu)
    if any(value is None for value in shape):
        raise ParameterDomainError(
            f"--special {args.special} reads its shape from --kappa/--mu")
    return special_case_params(args.special, *shape)


def cmd_curve(args: argparse.Namespace) -> int:
    grid = _grid(args)
    p = _special_params(args) if args.special else _channel_params(args)
    result = curve(p, args.stat, grid, shadow_ratio=args.shadow_ratio)

    lines = ["threshold_db,value"]
    for threshold, value in zip(result.thresholds_db, result.values):
        lines.append(f"{_fmt(threshold)},{_fmt(value)}")
    _write_lines(args.out, lines)
    if result.failures:
        logger.warning(f"{len(result.failures)} of {len(grid)} points "
                       "failed and were written as NaN")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    values = _channel_values(args)
    f_m = args.fm if args.fm is not None else values.get("f_m")
    if f_m is None:
        raise ParameterDomainError("--fm required without --preset")
    if args.rho is None and values.get("rho", 0.0) != 0.0:
        logger.info("Dropping the preset slope correlation; "
                    "simulated slopes are uncorrelated")
        values["rho"] = 0.0
    values.pop("f_m", None)

    cfg = SimConfig(
        params=ChannelParams(**values),
        doppler=DopplerParams(f_m=f_m),
        shadow_doppler_hz=args.shadow_fm,
        sample_rate_hz=args.fs,
        duration_s=args.duration,
        seed=args.seed,
        n_sinusoids=args.sinusoids,
    )
    write_trace(generate(cfg), args.out)
    return EXIT_OK


def cmd_empirical(args: argparse.Namespace) -> int:
    trace = read_trace(args.input)
    stats = measure(trace, DopplerParams(f_m=args.fm), _grid(args))

    # fade_fraction counts closed fades only and equals afd * lcr;
    # fraction_below also counts a fade cut off by the end of the record
    fade_fraction = stats.fade_time_s / stats.duration_s
    fraction_below = stats.time_below_s / stats.duration_s
    lines = ["threshold_db,lcr_normalized,afd_normalized,upcrossings,n_fades,"
             "fade_fraction,fraction_below"]
    for row in zip(stats.thresholds_db, stats.lcr_normalized,
                   stats.afd_normalized, stats.upcrossings, stats.n_fades,
                   fade_fraction, fraction_below):
        threshold, lcr, afd, up, fades, faded, below = row
        lines.append(f"{_fmt(float(threshold))},{_fmt(float(lcr))},"
                     f"{_fmt(float(afd))},{int(up)},{int(fades)},"
                     f"{_fmt(float(faded))},{_fmt(float(below))}")
    _write_lines(args.out, lines)
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    trace = read_trace(args.input)
    if args.fs is not None:
        trace = EnvelopeTrace(samples=trace.samples, sample_rate_hz=args.fs)

    if args.shadow_fm is not None and args.shadow_fm <= 0.0:
        raise ParameterDomainError(
            f"shadow-fm > 0 violated: got {args.shadow_fm}")
    outcome = FitRunner().process_trace(trace,
                                        shadow_ratio=args.shadow_ratio,
                                        grid=_grid(args),
                                        shadow_doppler_hz=args.shadow_fm)
    Path(args.out).write_text(outcome.report.model_dump_json(indent=2) + "\n",
                              encoding="utf-8")
    print("kappa_hat\tmu_hat\tr_bar_hat\tm_hat\tf_m_hat\trho_hat")
    print(outcome.report.table_row())
    if outcome.partial:
        print(f"error: LCR stage failed: {outcome.lcr_error}",
              file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def create_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kms-fading",
        description="Second-order statistics of kappa-mu shadowed fading.")
    parser.add_argument("--verbose", action="store_true",
                        help="Log stage progress.")
    parser.add_argument("--debug", action="store_true",
                        help="Log numerical details.")
    commands = parser.add_subparsers(dest="command", required=True)

    stats = sorted(available_statistics_map)

    p_eval = commands.add_parser("eval", help="Evaluate one statistic.")
    p_eval.add_argument("--stat", choices=stats, required=True)
    _add_channel_flags(p_eval)
    p_eval.add_argument("--r", type=float, required=True,
                        help="Amplitude, same units as --rbar.")
    p_eval.add_argument("--shadow-ratio", type=float, default=1.0)
    p_eval.set_defaults(handler=cmd_eval)

    p_curve = commands.add_parser("curve", help="Tabulate a statistic.")
    p_curve.add_argument("--stat", choices=stats, required=True)
    _add_channel_flags(p_curve)
    p_curve.add_argument("--special", choices=_SPECIAL_CASES,
                         help="Classical family; shape from --kappa/--mu.")
    _add_grid_flags(p_curve, -30.0, 10.0, 101)
    p_curve.add_argument("--shadow-ratio", type=float, default=1.0)
    p_curve.add_argument("--out", required=True)
    p_curve.set_defaults(handler=cmd_curve)

    p_sim = commands.add_parser("simulate", help="Synthesize a trace.")
    _add_channel_flags(p_sim)
    p_sim.add_argument("--fm", type=float, help="Maximum Doppler, Hz.")
    p_sim.add_argument("--fs", type=float, required=True,
                       help="Sample rate, Hz.")
    p_sim.add_argument("--duration", type=float, required=True,
                       help="Seconds.")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--shadow-fm", type=float,
                       help="Shadowing bandwidth, Hz (default f_m/10).")
    p_sim.add_argument("--sinusoids", type=int,
                       default=DEFAULT_SIMULATION.n_sinusoids)
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(handler=cmd_simulate)

    p_emp = commands.add_parser("empirical", help="Measure a trace.")
    p_emp.add_argument("--in", dest="input", required=True)
    p_emp.add_argument("--fm", type=float, required=True)
    _add_grid_flags(p_emp, DEFAULT_FIT.lcr_db_from, DEFAULT_FIT.lcr_db_to,
                    DEFAULT_FIT.lcr_points)
    p_emp.add_argument("--out", required=True)
    p_emp.set_defaults(handler=cmd_empirical)

    p_fit = commands.add_parser("fit", help="Estimate parameters.")
    p_fit.add_argument("--in", dest="input", required=True)
    p_fit.add_argument("--fs", type=float,
                       help="Sample rate, Hz (default: from the trace).")
    shadow = p_fit.add_mutually_exclusive_group()
    shadow.add_argument("--shadow-ratio", type=float, default=1.0)
    shadow.add_argument("--shadow-fm", type=float,
                        help="Shadowing bandwidth, Hz; the ratio then "
                             "follows the fitted f_m.")
    _add_grid_flags(p_fit, DEFAULT_FIT.lcr_db_from, DEFAULT_FIT.lcr_db_to,
                    DEFAULT_FIT.lcr_points)
    p_fit.add_argument("--out", required=True)
    p_fit.set_defaults(handler=cmd_fit)

    return parser


def _validation_message(e: ValidationError) -> str:
    error = e.errors()[0]
    message = error["msg"].removeprefix("Value error, ")
    location = ".".join(str(part) for part in error.get("loc", ()))
    return f"{location}: {message}" if location else message


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv, run the command and map failures onto exit codes."""
    parser = create_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    if args.debug:
        logging.getLogger().setLevel(logging.DEBUG)
    elif args.verbose:
        logging.getLogger().setLevel(logging.INFO)

    try:
        return args.handler(args)
    except ValidationError as e:
        print(f"error: {_validation_message(e)}", file=sys.stderr)
        return EXIT_INPUT
    except (ParameterDomainError, TraceFormatError,
            InsufficientDataError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
