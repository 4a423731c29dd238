# invfilter/services/scenario_loader.py
import json
import logging
from pathlib import Path
from typing import List, Union

from pydantic import ValidationError

from invfilter.config.builtins import BuiltinCatalog
from invfilter.models.scenario import ScenarioFile
from invfilter.models.schemas import (
    BarrierSpec,
    BclfProblem,
    ControlBox,
    Objective,
    PriorityTable,
    Scenario,
    StateDomain,
)
from invfilter.utils.errors import ConfigurationError
from invfilter.utils.polynomials import Polynomial

logger = logging.getLogger(__name__)


def _describe(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        location = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{location}: {err['msg']}")
    return "; ".join(parts)


def parse_scenario(text: str, source: str = "<string>") -> ScenarioFile:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return ScenarioFile.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(f"{source}: {_describe(exc)}") from exc


def load_scenario_file(path: Union[str, Path]) -> ScenarioFile:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"{path}: cannot read scenario file ({exc.strerror})") from exc
    scenario_file = parse_scenario(text, str(path))
    logger.info(f"Loaded scenario {scenario_file.name!r} from {path}")
    return scenario_file


def _check_arity(label: str, poly: Polynomial, state_dim: int):
    if poly.terms and poly.arity != state_dim:
        raise ConfigurationError(f"{label}: polynomial terms have {poly.arity} powers, the state has {state_dim} components")


def build_barriers(scenario_file: ScenarioFile, state_dim: int) -> List[BarrierSpec]:
    if scenario_file.barrier is None:
        return []
    section = scenario_file.barrier
    _check_arity(f"barrier {section.label}", section.polynomial, state_dim)
    domain = StateDomain(lower=scenario_file.domain.lower, upper=scenario_file.domain.upper)
    h = section.polynomial.evaluator()
    return [
        BarrierSpec(
            label=section.label,
            h=h,
            grad_h=h.gradient,
            k_gain=scenario_file.k,
            domain=domain,
        )
    ]


def build_problem(scenario_file: ScenarioFile, state_dim: int) -> Union[BclfProblem, None]:
    if scenario_file.objectives is None:
        return None
    objectives = []
    for section in scenario_file.objectives:
        _check_arity(f"objective {section.label}", section.polynomial, state_dim)
        V = section.polynomial.evaluator()
        objectives.append(Objective.from_user(section.label, V, V.gradient, section.sense))
    table = PriorityTable.from_user(scenario_file.table, [s.sense for s in scenario_file.objectives])
    return BclfProblem(objectives=objectives, table=table, k_gain=scenario_file.k, epsilon=scenario_file.epsilon)


def build_scenario(scenario_file: ScenarioFile) -> Scenario:
    """Resolve builtins and polynomials into a validated Scenario"""
    try:
        system = BuiltinCatalog.get_system(scenario_file.system.name, scenario_file.system.params)
        if len(scenario_file.domain.lower) != system.state_dim:
            raise ConfigurationError(
                f"domain has {len(scenario_file.domain.lower)} components, the state has {system.state_dim}"
            )
        return Scenario(
            name=scenario_file.name,
            system=system,
            controller=scenario_file.controller,
            barriers=build_barriers(scenario_file, system.state_dim),
            problem=build_problem(scenario_file, system.state_dim),
            box=ControlBox(lower=scenario_file.control_box.lower, upper=scenario_file.control_box.upper),
            x0=scenario_file.x0,
            dt=scenario_file.dt,
            horizon=scenario_file.horizon,
            nominal=BuiltinCatalog.get_policy(scenario_file.nominal, system.control_dim),
            seed=scenario_file.seed,
        )
    except ValidationError as exc:
        raise ConfigurationError(f"scenario {scenario_file.name!r}: {_describe(exc)}") from exc
    except ValueError as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"scenario {scenario_file.name!r}: {exc}") from exc


def load_scenario(path: Union[str, Path]) -> Scenario:
    return build_scenario(load_scenario_file(path))
