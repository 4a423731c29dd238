# invfilter/cli/commands/common.py
import logging
import sys
from pathlib import Path
from typing import Tuple, Union

from invfilter.models.scenario import ScenarioFile
from invfilter.models.schemas import Scenario
from invfilter.services.scenario_loader import build_scenario, load_scenario_file
from invfilter.utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3


def load(path: Union[str, Path]) -> Tuple[ScenarioFile, Scenario]:
    """Parse and build a scenario; ConfigurationError carries the location"""
    scenario_file = load_scenario_file(path)
    return scenario_file, build_scenario(scenario_file)


def config_error(exc: ConfigurationError) -> int:
    logger.error(f"Configuration error: {exc}")
    print(f"error: {exc}", file=sys.stderr)
    return EXIT_CONFIG


def prepare_out_dir(out: Union[str, Path]) -> Path:
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir
