# invfilter/models/scenario.py
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from invfilter.models.schemas import ControllerKind, EquivalenceMode, Sense
from invfilter.utils.config import settings
from invfilter.utils.polynomials import Polynomial

ParamValue = Union[float, List[float]]
TableEntry = Union[float, Literal["inf", "-inf"]]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SystemSection(_Section):
    name: str
    params: Dict[str, ParamValue] = Field(default_factory=dict)


class BarrierSection(_Section):
    label: str = "h"
    polynomial: Polynomial


class ObjectiveSection(_Section):
    label: str
    polynomial: Polynomial
    sense: Sense = Sense.LE


class BoxSection(_Section):
    lower: List[float] = Field(..., min_length=1)
    upper: List[float] = Field(..., min_length=1)


class PolicySection(_Section):
    policy: str
    params: Dict[str, ParamValue] = Field(default_factory=dict)


class EquivalenceSection(_Section):
    """Overrides for check-equivalence; `k` replaces the gain on the BCLF side only"""

    k: Optional[float] = Field(default=None, gt=0)
    mode: EquivalenceMode = EquivalenceMode.ROW_ACTIVE


class ValidationSection(_Section):
    state_samples: int = Field(default_factory=lambda: settings.VALIDATION_STATE_SAMPLES, ge=1)
    control_grid: int = Field(default_factory=lambda: settings.VALIDATION_CONTROL_GRID, ge=1)


class ScenarioFile(_Section):
    """On-disk scenario document; evaluators are built from it by the scenario loader"""

    name: str = "scenario"
    system: SystemSection
    controller: ControllerKind
    barrier: Optional[BarrierSection] = None
    objectives: Optional[List[ObjectiveSection]] = None
    table: Optional[List[List[TableEntry]]] = None
    k: float = Field(default_factory=lambda: settings.DEFAULT_K, gt=0)
    epsilon: float = Field(default_factory=lambda: settings.DEFAULT_EPSILON, gt=0)
    x0: List[float] = Field(..., min_length=1)
    dt: float = Field(..., gt=0)
    horizon: float = Field(..., gt=0)
    control_box: BoxSection
    domain: BoxSection
    nominal: Union[List[float], PolicySection]
    seed: int = 0
    equivalence: EquivalenceSection = Field(default_factory=EquivalenceSection)
    validation: ValidationSection = Field(default_factory=ValidationSection)

    @field_validator("table")
    @classmethod
    def _rectangular(cls, rows):
        if rows is not None and len({len(r) for r in rows}) > 1:
            raise ValueError("table rows must all have the same number of columns")
        return rows

    @model_validator(mode="after")
    def _check_sections(self):
        if self.barrier is not None and (self.objectives is not None or self.table is not None):
            raise ValueError("give either a barrier or objectives with a table, not both")
        if self.barrier is None and self.objectives is None:
            raise ValueError("scenario needs a barrier or objectives with a table")
        if (self.objectives is None) != (self.table is None):
            raise ValueError("objectives and table must be given together")
        if self.objectives is not None and len(self.table) != len(self.objectives):
            raise ValueError(f"table has {len(self.table)} rows for {len(self.objectives)} objectives")
        return self
