# invfilter/models/schemas.py
import logging
import math
from enum import Enum
from typing import Annotated, Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    field_validator,
    model_validator,
)

from invfilter.utils.config import settings

logger = logging.getLogger(__name__)


def as_vector(value) -> np.ndarray:
    arr = np.array(value, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


# Read-only float vector; serializes to a plain list
Vector = Annotated[
    np.ndarray,
    BeforeValidator(as_vector),
    PlainSerializer(lambda a: [float(v) for v in a], return_type=list),
]

StateEvaluator = Callable[[np.ndarray], np.ndarray]
ScalarEvaluator = Callable[[np.ndarray], float]


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)


# ========== Enumerations ==========
class Sense(str, Enum):
    LE = "le"
    GE = "ge"


class Unbounded(str, Enum):
    INF = "inf"


UNBOUNDED = Unbounded.INF
BoundEntry = Union[float, Unbounded]


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"


class ControllerKind(str, Enum):
    CBF = "cbf"
    BCLF = "bclf"
    SATURATING = "saturating"
    NOMINAL = "nominal"


class ControllerTier(str, Enum):
    FILTER = "cbf"
    SAT_INC = "sat+inc"
    SAT_ONLY = "sat-only"
    SATURATING = "saturating"
    NOMINAL = "nominal"


class EquivalenceMode(str, Enum):
    ROW_ACTIVE = "row_active"
    CPL = "cpl"


class RunStatus(str, Enum):
    COMPLETED = "completed"
    INFEASIBLE = "infeasible"
    DIVERGED = "diverged"


def bound_satisfied(value: float, bound: BoundEntry) -> bool:
    """V <= b, where the unbounded marker accepts every value"""
    return bound is UNBOUNDED or value <= bound


def bound_reached(value: float, bound: BoundEntry) -> bool:
    """V >= b; never true against the unbounded marker"""
    return bound is not UNBOUNDED and value >= bound


def _order_key(bound: BoundEntry) -> float:
    return math.inf if bound is UNBOUNDED else bound


# ========== Boxes ==========
class Box(_Frozen):
    lower: Vector
    upper: Vector

    @model_validator(mode="after")
    def _check_bounds(self):
        if self.lower.shape != self.upper.shape or self.lower.size == 0:
            raise ValueError("box lower and upper must be non-empty vectors of equal length")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ValueError("box must be bounded")
        if np.any(self.lower > self.upper):
            raise ValueError(f"box is empty: lower {self.lower.tolist()} exceeds upper {self.upper.tolist()}")
        return self

    @property
    def dim(self) -> int:
        return int(self.lower.size)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, point: np.ndarray, tol: float = 0.0) -> bool:
        point = np.asarray(point, dtype=float)
        return bool(np.all(point >= self.lower - tol) and np.all(point <= self.upper + tol))

    def clip(self, point: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(point, dtype=float), self.lower, self.upper)

    def maximizing_vertex(self, coefficients: np.ndarray) -> np.ndarray:
        """Vertex maximizing coefficients . u over the box"""
        return np.where(np.asarray(coefficients) >= 0.0, self.upper, self.lower)

    def minimizing_vertex(self, coefficients: np.ndarray) -> np.ndarray:
        return np.where(np.asarray(coefficients) >= 0.0, self.lower, self.upper)


class ControlBox(Box):
    """Admissible controls; plays the role of both U and U_adm"""


class StateDomain(Box):
    """Axis-aligned sampling box standing in for the domain D"""


# ========== Dynamics ==========
class ControlAffineSystem(_Frozen):
    """xdot = f(x) + g(x) u"""

    name: str = "system"
    state_dim: int = Field(..., ge=1)
    control_dim: int = Field(..., ge=1)
    drift: StateEvaluator
    input_matrix: StateEvaluator


class GeneralSystem(_Frozen):
    """xdot = f(x, u); only the sampling validity checker accepts this form"""

    name: str = "system"
    state_dim: int = Field(..., ge=1)
    control_dim: int = Field(..., ge=1)
    dynamics: Callable[[np.ndarray, np.ndarray], np.ndarray]

    @classmethod
    def from_affine(cls, system: ControlAffineSystem) -> "GeneralSystem":
        def dynamics(x: np.ndarray, u: np.ndarray) -> np.ndarray:
            return np.asarray(system.drift(x), dtype=float) + np.asarray(system.input_matrix(x), dtype=float) @ u

        return cls(name=system.name, state_dim=system.state_dim, control_dim=system.control_dim, dynamics=dynamics)


# ========== Barriers and objectives ==========
class BarrierSpec(_Frozen):
    """h with C = {x : h(x) >= 0} and alpha(y) = y / k_gain"""

    label: str = "h"
    h: ScalarEvaluator
    grad_h: StateEvaluator
    k_gain: float = Field(..., gt=0)
    domain: StateDomain


class Objective(_Frozen):
    """A BCLF candidate, always stored in <= sense"""

    label: str
    V: ScalarEvaluator
    grad_V: StateEvaluator
    original_sense: Sense = Sense.LE

    @classmethod
    def from_user(cls, label: str, V: ScalarEvaluator, grad_V: StateEvaluator, sense: Sense = Sense.LE) -> "Objective":
        sense = Sense(sense)
        if sense is Sense.GE:
            return cls(
                label=label,
                V=lambda x: -float(V(x)),
                grad_V=lambda x: -np.asarray(grad_V(x), dtype=float),
                original_sense=sense,
            )
        return cls(label=label, V=V, grad_V=grad_V, original_sense=sense)

    def user_value(self, x: np.ndarray) -> float:
        value = float(self.V(x))
        return -value if self.original_sense is Sense.GE else value


class PriorityTable(_Frozen):
    """Bounds b_ij in <= sense; column 0 is unbounded and columns tighten with j"""

    bounds: Tuple[Tuple[BoundEntry, ...], ...]

    @field_validator("bounds", mode="before")
    @classmethod
    def _normalize_entries(cls, rows):
        normalized = []
        for i, row in enumerate(rows):
            entries = []
            for j, entry in enumerate(row):
                entries.append(_canonical_entry(entry, i, j))
            normalized.append(tuple(entries))
        return tuple(normalized)

    @model_validator(mode="after")
    def _check_shape(self):
        if not self.bounds:
            raise ValueError("priority table needs at least one objective row")
        widths = {len(row) for row in self.bounds}
        if len(widths) != 1:
            raise ValueError(f"priority table rows have different lengths: {sorted(widths)}")
        for i, row in enumerate(self.bounds):
            if row[0] is not UNBOUNDED:
                raise ValueError(f"row {i}: b_i0 must be unbounded so that level 0 always exists")
            for j in range(1, len(row)):
                if _order_key(row[j]) > _order_key(row[j - 1]):
                    raise ValueError(f"row {i}: bound loosens between level {j - 1} and level {j}")
        return self

    @classmethod
    def from_user(cls, rows: Sequence[Sequence], senses: Sequence[Sense]) -> "PriorityTable":
        """Negate the rows of GE objectives; a GE row starts with -inf"""
        if len(rows) != len(senses):
            raise ValueError(f"table has {len(rows)} rows for {len(senses)} objectives")
        canonical = []
        for i, (row, sense) in enumerate(zip(rows, senses)):
            if Sense(sense) is Sense.GE:
                canonical.append([_negate_user_entry(entry, i, j) for j, entry in enumerate(row)])
            else:
                canonical.append(list(row))
        return cls(bounds=canonical)

    @property
    def n_objectives(self) -> int:
        return len(self.bounds)

    @property
    def top_level(self) -> int:
        """J, the index of the last column"""
        return len(self.bounds[0]) - 1

    def bound(self, i: int, j: int) -> BoundEntry:
        return self.bounds[i][j]

    def column(self, j: int) -> List[BoundEntry]:
        return [row[j] for row in self.bounds]


def _canonical_entry(entry, i: int, j: int) -> BoundEntry:
    if entry is UNBOUNDED:
        return UNBOUNDED
    if isinstance(entry, str):
        if entry.strip().lower() in ("inf", "+inf", "infinity"):
            return UNBOUNDED
        raise ValueError(f"entry ({i}, {j}): unsupported bound {entry!r}")
    value = float(entry)
    if math.isnan(value) or value == -math.inf:
        raise ValueError(f"entry ({i}, {j}): bound must be finite or +inf, got {entry!r}")
    if value == math.inf:
        return UNBOUNDED
    return value


def _negate_user_entry(entry, i: int, j: int) -> BoundEntry:
    if isinstance(entry, str):
        text = entry.strip().lower()
        if text in ("-inf", "-infinity"):
            return UNBOUNDED
        raise ValueError(f"entry ({i}, {j}): a >= row only admits -inf as unbounded, got {entry!r}")
    value = float(entry)
    if value == -math.inf:
        return UNBOUNDED
    if not math.isfinite(value):
        raise ValueError(f"entry ({i}, {j}): a >= row only admits -inf as unbounded, got {entry!r}")
    return -value


# ========== Constraints ==========
class Halfspace(_Frozen):
    """a . u <= c (LE) or a . u >= c (GE)"""

    normal: Vector
    offset: float
    sense: Sense
    label: str = ""

    @model_validator(mode="after")
    def _check_finite(self):
        self._check(self.normal, self.offset, self.label)
        return self

    @classmethod
    def of(cls, normal, offset: float, sense: Sense, label: str = "") -> "Halfspace":
        """Per-step construction; same checks as the validator without a pydantic pass"""
        normal = as_vector(normal)
        offset = float(offset)
        halfspace = cls.model_construct(normal=normal, offset=offset, sense=sense, label=label)
        halfspace._check(normal, offset, label)
        return halfspace

    def _check(self, normal: np.ndarray, offset: float, label: str):
        if not (math.isfinite(offset) and np.isfinite(normal).all()):
            raise ValueError(f"halfspace {label or '?'} has a non-finite normal or offset")
        if not normal.any() and self.flagged:
            logger.warning(f"Halfspace {label or '?'} has a zero normal and cannot be satisfied by any control")

    @property
    def dim(self) -> int:
        return int(self.normal.size)

    def slack(self, u: np.ndarray) -> float:
        """Non-negative exactly when u satisfies the halfspace"""
        value = float(self.normal @ np.asarray(u, dtype=float))
        return self.offset - value if self.sense is Sense.LE else value - self.offset

    def satisfied(self, u: np.ndarray, tol: float = 0.0) -> bool:
        return self.slack(u) >= -tol

    @property
    def is_degenerate(self) -> bool:
        return not np.any(self.normal)

    @property
    def flagged(self) -> bool:
        """Zero normal with an offset no control can meet"""
        return self.is_degenerate and self.slack(np.zeros_like(self.normal)) < -settings.MEMBERSHIP_TOL

    def as_le(self) -> Tuple[np.ndarray, float]:
        if self.sense is Sense.LE:
            return np.asarray(self.normal), self.offset
        return -np.asarray(self.normal), -self.offset


class CbfConstraint(_Frozen):
    """L_f h + L_g h . u + alpha(h) >= 0 at one state"""

    halfspace: Halfspace
    barrier: BarrierSpec
    lie_f: float
    lie_g: Vector
    h_value: float
    alpha_value: float

    def residual_at(self, u: np.ndarray) -> float:
        return self.lie_f + float(self.lie_g @ np.asarray(u, dtype=float)) + self.alpha_value


# ========== Priority problems ==========
class BclfProblem(_Frozen):
    objectives: List[Objective]
    table: PriorityTable
    k_gain: float = Field(default_factory=lambda: settings.DEFAULT_K, gt=0)
    epsilon: float = Field(default_factory=lambda: settings.DEFAULT_EPSILON, gt=0)

    @model_validator(mode="after")
    def _check_rows(self):
        if self.table.n_objectives != len(self.objectives):
            raise ValueError(f"table has {self.table.n_objectives} rows but there are {len(self.objectives)} objectives")
        return self

    @property
    def top_level(self) -> int:
        return self.table.top_level


class CplReport(BaseModel):
    level: int
    top_level: int
    satisfied: List[bool]
    values: List[float]


class BclfControlResult(_Frozen):
    control: Vector
    tier: ControllerTier
    cpl: CplReport
    focus: List[int] = Field(default_factory=list)
    constraints: List[Halfspace] = Field(default_factory=list)


# ========== Solver ==========
class MinNormProblem(_Frozen):
    target: Vector
    halfspaces: List[Halfspace] = Field(default_factory=list)
    box: ControlBox

    @model_validator(mode="after")
    def _check_dims(self):
        _check_problem_dims(self.target, self.halfspaces, self.box)
        return self

    @classmethod
    def of(cls, target, halfspaces: Sequence[Halfspace], box: ControlBox) -> "MinNormProblem":
        target = as_vector(target)
        halfspaces = list(halfspaces)
        _check_problem_dims(target, halfspaces, box)
        return cls.model_construct(target=target, halfspaces=halfspaces, box=box)


def _check_problem_dims(target: np.ndarray, halfspaces: Sequence[Halfspace], box: ControlBox):
    m = target.size
    if box.dim != m:
        raise ValueError(f"box has dimension {box.dim}, target has {m}")
    for idx, hs in enumerate(halfspaces):
        if hs.dim != m:
            raise ValueError(f"halfspace {idx} has normal of dimension {hs.dim}, expected {m}")


class SolveResult(_Frozen):
    status: SolveStatus
    point: Optional[Vector] = None
    active_set: List[int] = Field(default_factory=list)
    multipliers: List[float] = Field(default_factory=list)
    certificate: List[int] = Field(default_factory=list)
    labels: List[str] = Field(default_factory=list)
    max_violation: float = 0.0
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL

    def certificate_labels(self) -> List[str]:
        return [self.labels[i] for i in self.certificate]

    def active_labels(self) -> List[str]:
        return [self.labels[i] for i in self.active_set]


class FeasibilityResult(_Frozen):
    feasible: bool
    witness: Optional[Vector] = None
    certificate: List[str] = Field(default_factory=list)


# ========== Validity checks ==========
class ValidityReport(_Frozen):
    kind: str
    passed: bool
    vacuous: bool = False
    samples_checked: int = 0
    failures: int = 0
    worst_state: Optional[Vector] = None
    worst_value: Optional[float] = None
    threshold: float = 0.0
    detail: str = ""


# ========== Equivalence ==========
class Disagreement(_Frozen):
    state: Vector
    control: Vector
    cbf_residual: float
    sat_slack: float
    in_cbf: bool
    in_sat: bool


class AgreementReport(_Frozen):
    mode: EquivalenceMode
    pairs_checked: int = 0
    agreements: int = 0
    boundary_pairs: int = 0
    asymmetric_states: int = 0
    disagreements: List[Disagreement] = Field(default_factory=list)
    max_identity_error: float = 0.0
    identity_tol: float = 1e-12

    @property
    def passed(self) -> bool:
        return not self.disagreements and self.max_identity_error <= self.identity_tol

    def merge(self, other: "AgreementReport") -> "AgreementReport":
        if other.mode is not self.mode:
            raise ValueError("cannot merge agreement reports of different modes")
        return AgreementReport(
            mode=self.mode,
            pairs_checked=self.pairs_checked + other.pairs_checked,
            agreements=self.agreements + other.agreements,
            boundary_pairs=self.boundary_pairs + other.boundary_pairs,
            asymmetric_states=self.asymmetric_states + other.asymmetric_states,
            disagreements=self.disagreements + other.disagreements,
            max_identity_error=max(self.max_identity_error, other.max_identity_error),
            identity_tol=min(self.identity_tol, other.identity_tol),
        )


# ========== Simulation ==========
class Scenario(_Frozen):
    name: str = "scenario"
    system: ControlAffineSystem
    controller: ControllerKind
    barriers: List[BarrierSpec] = Field(default_factory=list)
    problem: Optional[BclfProblem] = None
    box: ControlBox
    x0: Vector
    dt: float = Field(..., gt=0)
    horizon: float = Field(..., gt=0)
    nominal: StateEvaluator
    seed: int = 0

    @model_validator(mode="after")
    def _check_scenario(self):
        if self.horizon < self.dt:
            raise ValueError(f"horizon {self.horizon} is shorter than one step of {self.dt}")
        if self.x0.size != self.system.state_dim:
            raise ValueError(f"x0 has dimension {self.x0.size}, system state has {self.system.state_dim}")
        if self.box.dim != self.system.control_dim:
            raise ValueError(f"control box has dimension {self.box.dim}, system control has {self.system.control_dim}")
        if self.controller is ControllerKind.CBF and not self.barriers:
            raise ValueError("a cbf controller needs at least one barrier")
        if self.controller is ControllerKind.BCLF and self.problem is None:
            raise ValueError("a bclf controller needs objectives and a priority table")
        if not self.barriers and self.problem is None:
            raise ValueError("scenario needs a barrier or a priority problem to monitor")
        if self.barriers and self.problem is not None:
            raise ValueError("scenario takes either barriers or a priority problem, not both")
        slowest = min(self.gains)
        if self.dt > slowest / 100.0:
            raise ValueError(f"dt {self.dt} exceeds k/100 = {slowest / 100.0}; the step cannot resolve the constraint time scale")
        return self

    @property
    def gains(self) -> List[float]:
        if self.problem is not None:
            return [self.problem.k_gain]
        return [b.k_gain for b in self.barriers]

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


class StepRecord(BaseModel):
    t: float
    x: List[float]
    u: List[float]
    values: List[float]
    cpl: Optional[int] = None
    tier: str
    min_residual: float


class TrajectoryLog(BaseModel):
    scenario_name: str
    state_dim: int
    control_dim: int
    value_kind: str  # "h" for barriers, "V" for objectives
    dt: float
    top_level: Optional[int] = None
    initial_bounds: List[Optional[float]] = Field(default_factory=list)
    records: List[StepRecord] = Field(default_factory=list)
    status: RunStatus = RunStatus.COMPLETED
    failure: Optional[str] = None
    certificate: List[str] = Field(default_factory=list)
    gradient_warnings: int = 0

    def margins(self, record: StepRecord) -> List[float]:
        """Distance to the monitored set boundary, non-negative inside the set"""
        if self.value_kind == "h":
            return list(record.values)
        return [b - v for b, v in zip(self.initial_bounds, record.values) if b is not None]

    @property
    def min_value(self) -> Optional[float]:
        margins = [min(self.margins(r)) for r in self.records if self.margins(r)]
        return min(margins) if margins else None

    @property
    def cpl_trace(self) -> List[int]:
        return [r.cpl for r in self.records if r.cpl is not None]

    @property
    def cpl_decreases(self) -> int:
        trace = self.cpl_trace
        return sum(1 for a, b in zip(trace, trace[1:]) if b < a)

    @property
    def level_changes(self) -> List[Tuple[float, int, int]]:
        changes = []
        for prev, cur in zip(self.records, self.records[1:]):
            if prev.cpl is not None and cur.cpl is not None and cur.cpl != prev.cpl:
                changes.append((cur.t, prev.cpl, cur.cpl))
        return changes


class InvarianceReport(BaseModel):
    passed: bool
    min_margin: Optional[float] = None
    worst_step: Optional[int] = None
    worst_time: Optional[float] = None
    tol: float


class ConvergenceReport(BaseModel):
    passed: bool
    entry_step: Optional[int] = None
    entry_time: Optional[float] = None
    final_margin: Optional[float] = None
    tol: float


class CplEvent(BaseModel):
    step: int
    t: float
    from_level: int
    to_level: int


class CplMonitorReport(BaseModel):
    passed: bool
    initial_level: Optional[int] = None
    final_level: Optional[int] = None
    top_level: Optional[int] = None
    decreases: List[CplEvent] = Field(default_factory=list)
    increases: List[CplEvent] = Field(default_factory=list)
    continuous_sat_inc: bool = False
    reached_top: bool = False


class RateFit(BaseModel):
    time_constant: float
    slope: float
    intercept: float
    samples_used: int
    decaying: bool
