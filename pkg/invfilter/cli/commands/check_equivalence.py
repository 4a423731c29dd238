# invfilter/cli/commands/check_equivalence.py
import logging

from invfilter.cli.commands.common import EXIT_FAILED, EXIT_OK, config_error, load, prepare_out_dir
from invfilter.services.equivalence import reduce_cbf_to_bclf, sets_agree, split_samples
from invfilter.services.report_exporter import disagreements_csv, generate_agreement_report
from invfilter.utils.config import settings
from invfilter.utils.errors import ConfigurationError

logger = logging.getLogger(__name__)


def register(subparsers):
    parser = subparsers.add_parser(
        "check-equivalence",
        help="Compare the CBF admissible set with the saturation set of the reduced priority problem",
    )
    parser.add_argument("scenario", help="Path to a scenario JSON file with a barrier")
    parser.add_argument(
        "--samples",
        type=int,
        default=settings.EQUIVALENCE_SAMPLES,
        help="Total number of (x, u) pairs to compare",
    )
    parser.add_argument("--out", default="out", help="Output directory (created if missing)")
    parser.set_defaults(handler=handle)


def handle(args) -> int:
    try:
        scenario_file, scenario = load(args.scenario)
        if not scenario.barriers:
            raise ConfigurationError(f"{args.scenario}: check-equivalence needs a scenario with a barrier")
        state_samples, control_samples = split_samples(args.samples)
        out_dir = prepare_out_dir(args.out)
    except ConfigurationError as exc:
        return config_error(exc)
    except OSError as exc:
        return config_error(ConfigurationError(f"{args.out}: {exc.strerror}"))

    barrier = scenario.barriers[0]
    overrides = scenario_file.equivalence
    problem = None
    if overrides.k is not None and overrides.k != barrier.k_gain:
        logger.info(f"Comparing against a priority problem with k={overrides.k} (barrier uses k={barrier.k_gain})")
        problem = reduce_cbf_to_bclf(barrier.model_copy(update={"k_gain": overrides.k}))

    report = sets_agree(
        barrier,
        scenario.system,
        scenario.box,
        state_samples,
        control_samples,
        mode=overrides.mode,
        problem=problem,
        seed=scenario.seed,
    )
    text = generate_agreement_report(report, scenario.name)
    (out_dir / "agreement.txt").write_text(text, encoding="utf-8")
    (out_dir / "disagreements.csv").write_text(disagreements_csv(report), encoding="utf-8")
    print(text, end="")
    return EXIT_OK if report.passed else EXIT_FAILED
