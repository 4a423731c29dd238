# invfilter/cli/commands/run.py
import logging
import sys

from invfilter.cli.commands.common import (
    EXIT_FAILED,
    EXIT_INFEASIBLE,
    EXIT_OK,
    config_error,
    load,
    prepare_out_dir,
)
from invfilter.models.schemas import RunStatus
from invfilter.services.monitors import (
    fit_exponential_rate,
    margin_series,
    monitor_convergence,
    monitor_cpl,
    monitor_invariance,
)
from invfilter.services.report_exporter import generate_run_report, write_trajectory_csv
from invfilter.services.simulator import simulate
from invfilter.utils.config import settings
from invfilter.utils.errors import ConfigurationError, FitDomainError

logger = logging.getLogger(__name__)


def register(subparsers):
    parser = subparsers.add_parser("run", help="Simulate a scenario and write trajectory.csv and report.txt")
    parser.add_argument("scenario", help="Path to the scenario JSON file")
    parser.add_argument("--out", default="out", help="Output directory (created if missing)")
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    try:
        _, scenario = load(args.scenario)
        out_dir = prepare_out_dir(args.out)
    except ConfigurationError as exc:
        return config_error(exc)
    except OSError as exc:
        return config_error(ConfigurationError(f"{args.out}: {exc.strerror}"))

    log = simulate(scenario)
    write_trajectory_csv(log, out_dir / "trajectory.csv")

    series = margin_series(log)
    invariance = convergence = None
    if series and series[0][1] < -settings.MONITOR_TOL:
        convergence = monitor_convergence(log)
    else:
        invariance = monitor_invariance(log)
    cpl = monitor_cpl(log) if scenario.problem is not None else None

    fit, fit_note = None, ""
    try:
        fit = fit_exponential_rate(series)
    except FitDomainError as exc:
        fit_note = str(exc)

    report = generate_run_report(log, invariance=invariance, convergence=convergence, cpl=cpl, fit=fit, fit_note=fit_note)
    (out_dir / "report.txt").write_text(report, encoding="utf-8")
    logger.info(f"Wrote {out_dir / 'trajectory.csv'} and {out_dir / 'report.txt'}")
    print(report, end="")

    if log.status is RunStatus.INFEASIBLE:
        print(f"infeasible: {log.failure}", file=sys.stderr)
        return EXIT_INFEASIBLE
    monitors = [m for m in (invariance, convergence, cpl) if m is not None]
    if log.status is not RunStatus.COMPLETED or not all(m.passed for m in monitors):
        return EXIT_FAILED
    return EXIT_OK
