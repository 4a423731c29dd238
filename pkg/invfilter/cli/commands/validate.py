# invfilter/cli/commands/validate.py
import logging

import numpy as np

from invfilter.cli.commands.common import EXIT_FAILED, EXIT_OK, config_error, load
from invfilter.models.schemas import UNBOUNDED, StateDomain
from invfilter.services.bclf import is_bclf
from invfilter.services.cbf import is_cbf
from invfilter.services.report_exporter import generate_validity_report
from invfilter.utils.errors import ConfigurationError
from invfilter.utils.numerics import check_gradient, random_points

logger = logging.getLogger(__name__)

GRADIENT_SAMPLES = 64


def register(subparsers):
    parser = subparsers.add_parser("validate", help="Run the sampling validity checks on a scenario")
    parser.add_argument("scenario", help="Path to the scenario JSON file")
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    try:
        scenario_file, scenario = load(args.scenario)
    except ConfigurationError as exc:
        return config_error(exc)

    samples = scenario_file.validation
    domain = StateDomain(lower=scenario_file.domain.lower, upper=scenario_file.domain.upper)
    rng = np.random.default_rng(scenario.seed)
    gradient_points = random_points(domain, GRADIENT_SAMPLES, rng)
    valid = True

    for barrier in scenario.barriers:
        ok, bad = check_gradient(barrier.h, barrier.grad_h, gradient_points)
        print(f"gradient of {barrier.label}: {'PASS' if ok else f'FAIL at {len(bad)} points'}")
        report = is_cbf(barrier, scenario.system, scenario.box, samples.state_samples, samples.control_grid, seed=scenario.seed)
        print(generate_validity_report(f"is_cbf({barrier.label}, k={barrier.k_gain:g})", report))
        valid = valid and ok and report.passed

    problem = scenario.problem
    if problem is not None:
        for i, objective in enumerate(problem.objectives):
            ok, bad = check_gradient(objective.V, objective.grad_V, gradient_points)
            print(f"gradient of {objective.label}: {'PASS' if ok else f'FAIL at {len(bad)} points'}")
            valid = valid and ok
            bounds = sorted({b for b in problem.table.bounds[i] if b is not UNBOUNDED}, reverse=True)
            for bound in bounds:
                report = is_bclf(
                    objective,
                    scenario.system,
                    scenario.box,
                    bound,
                    problem.epsilon,
                    domain,
                    samples.state_samples,
                    samples.control_grid,
                    seed=scenario.seed,
                )
                print(generate_validity_report(f"is_bclf({objective.label}, b={bound:g}, eps={problem.epsilon:g})", report))
                valid = valid and report.passed

    print(f"{scenario.name}: {'valid' if valid else 'INVALID'}")
    logger.info(f"Validation of {scenario.name} finished: {'valid' if valid else 'invalid'}")
    return EXIT_OK if valid else EXIT_FAILED
