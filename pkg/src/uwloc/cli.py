"""Command line: ``simulate``, ``crlb``, ``estimate`` and ``validate``.

Exit codes: 0 success, 1 bad input or configuration, 2 numerical failure
(the message names the stage), 3 when ``validate`` finds the efficiency
gap above ``--tol``. Output goes to ``--out`` or, without it, to stdout;
nothing else is written.
"""

import argparse
from dataclasses import replace
import sys

from . import analysis, harness
from .config import read_experiment, read_measurements, read_scenario, report_to_text
from .errors import ConfigError, LocalizationError
from .estimator import D2_FORMS, DDOT_FORMS, WEIGHTING_MODES, estimate

DEFAULT_SEED = 0
MIN_ESTIMATOR_SENSORS = 6


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser():
    parser = _Parser(prog="uwloc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="Monte Carlo sweep, CSV of MSE and bounds")
    source = sim.add_mutually_exclusive_group()
    source.add_argument("--preset", choices=("fig3", "fig4", "fig5", "fig6"))
    source.add_argument("--config", help="experiment file (scenario plus experiment.* keys)")
    sim.add_argument("--scenario", default="default",
                     help="scenario file used with --preset (default: built-in layout)")
    sim.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sim.add_argument("--trials", type=int)
    sim.add_argument("--workers", type=int, default=1)
    sim.add_argument("--out")

    bound = sub.add_parser("crlb", help="bounds for both speed cases along a sweep")
    bound.add_argument("--preset", choices=("fig2", "fig2b"), default="fig2")
    bound.add_argument("--scenario", default="default")
    bound.add_argument("--out")

    est = sub.add_parser("estimate", help="estimate from one measurement file")
    est.add_argument("--in", dest="inp", required=True)
    est.add_argument("--mode", choices=WEIGHTING_MODES, default="full_covariance")
    est.add_argument("--n-iter", type=int, default=2)
    est.add_argument("--out")

    val = sub.add_parser("validate", help="small-noise efficiency check")
    val.add_argument("--scenario", default="default")
    val.add_argument("--sigma-d-db", type=float, default=-30.0)
    val.add_argument("--sigma-s-db", type=float, default=-30.0)
    val.add_argument("--d2-form", choices=D2_FORMS, default="full")
    val.add_argument("--ddot-form", choices=DDOT_FORMS, default="corrected")
    val.add_argument("--tol", type=float, default=0.05)
    val.add_argument("--out")
    return parser


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
        return
    try:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as err:
        raise ConfigError(f"{out}: cannot write ({err.strerror})") from None


def _simulate(args):
    if args.config:
        exp = read_experiment(args.config, MIN_ESTIMATOR_SENSORS)
    else:
        scenario = read_scenario(args.scenario, MIN_ESTIMATOR_SENSORS)
        exp = harness.figure_presets(scenario)[args.preset or "fig3"]
    if args.trials is not None:
        if args.trials < 1:
            raise ConfigError("--trials must be at least 1")
        exp = replace(exp, trials=args.trials)
    results = harness.run_experiment(exp, args.seed, workers=max(1, args.workers))
    _emit(harness.results_to_csv(results), args.out)
    return 0


def _crlb(args):
    scenario = read_scenario(args.scenario)
    exp = harness.figure_presets(scenario)[args.preset]
    _emit(harness.crlb_rows_to_csv(harness.crlb_sweep(exp)), args.out)
    return 0


def _estimate(args):
    if not 1 <= args.n_iter <= 5:
        raise ConfigError(f"--n-iter must be in 1..5, got {args.n_iter}")
    data = read_measurements(args.inp, MIN_ESTIMATOR_SENSORS)
    if args.mode == "full_covariance" and data.noise is None:
        raise ConfigError(f"{args.inp}: full_covariance weighting needs the noise keys "
                          "(noise.sigma_d_db, noise.sigma_s_db, noise.speed)")
    report = estimate(data.meas, data.sensors, data.noise, n_iter=args.n_iter, mode=args.mode)
    _emit(report_to_text(report), args.out)
    return 0


def validation_table(check, tol):
    lines = ["block,max_rel_deviation"]
    for name, value in check.g3_deviation.items():
        lines.append(f"G3.{name},{value:.3e}")
    for name, value in check.g4_deviation.items():
        lines.append(f"G4.{name},{value:.3e}")
    flags = check.condition_flags
    lines.append(f"condition.reference_range,{flags[0]}")
    lines.append(f"condition.slow_motion,{flags[1]}")
    lines.append(f"condition.short_delay,{flags[2]}")
    lines.append(f"max_rel_gap,{check.max_rel_gap:.3e}")
    lines.append(f"tolerance,{tol:.3e}")
    lines.append(f"status,{'pass' if check.max_rel_gap <= tol else 'fail'}")
    return "\n".join(lines) + "\n"


def _validate(args):
    scenario = read_scenario(args.scenario)
    scenario = replace(scenario, sigma_d_db=args.sigma_d_db, sigma_s_db=args.sigma_s_db)
    check = analysis.efficiency_check(scenario.source, scenario.array, scenario.noise(),
                                      d2_form=args.d2_form, ddot_form=args.ddot_form)
    _emit(validation_table(check, args.tol), args.out)
    return 0 if check.max_rel_gap <= args.tol else 3


COMMANDS = {"simulate": _simulate, "crlb": _crlb, "estimate": _estimate, "validate": _validate}


def parse_and_dispatch(argv=None):
    """Run one command and return its exit code; diagnostics go to stderr."""
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except LocalizationError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 2


def main():
    sys.exit(parse_and_dispatch())


if __name__ == "__main__":
    main()
