"""Pydantic schemas for every JSON artifact (instances, solutions, stats).

Files and request bodies are validated against these models before any domain
object is built, so malformed input never reaches the solver.
"""
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

PointList = List[List[float]]


def _check_points(points: PointList) -> PointList:
    if not points:
        raise ValueError("at least one breakpoint is required")
    for p in points:
        if len(p) != 2:
            raise ValueError(f"breakpoint {p} must be an [x, y] pair")
    return points


class OperationModel(BaseModel):
    model_config = ConfigDict(extra='forbid')

    id: str
    consumption: float = Field(ge=0)
    duration: int = Field(ge=1)
    earliest: int = Field(ge=0)
    latest: int = Field(ge=0)

    @model_validator(mode='after')
    def window_ordered(self):
        if self.earliest > self.latest:
            raise ValueError(f"operation {self.id}: earliest {self.earliest} after latest {self.latest}")
        return self


class VehicleModel(BaseModel):
    model_config = ConfigDict(extra='forbid')

    id: str
    operations: List[OperationModel] = Field(default_factory=list)


class ChargerModel(BaseModel):
    model_config = ConfigDict(extra='forbid')

    id: str
    capacity: int = Field(ge=1)
    phi: PointList

    @field_validator('phi')
    @classmethod
    def phi_points(cls, points):
        return _check_points(points)


class BatteryModel(BaseModel):
    model_config = ConfigDict(extra='forbid')

    q_min: float = 0.0
    q_max: float = Field(gt=0)
    initial: float = 0.0

    @model_validator(mode='after')
    def bounds_ordered(self):
        if not self.q_min <= self.initial <= self.q_max:
            raise ValueError("battery requires q_min <= initial <= q_max")
        if self.q_min >= self.q_max:
            raise ValueError("battery requires q_min < q_max")
        return self


class InstanceModel(BaseModel):
    model_config = ConfigDict(extra='forbid')

    name: Optional[str] = None
    delta_p: float = Field(gt=0)
    prices: List[float]
    chargers: List[ChargerModel]
    vehicles: List[VehicleModel]
    battery: BatteryModel
    wdf: PointList

    @field_validator('wdf')
    @classmethod
    def wdf_points(cls, points):
        return _check_points(points)

    @field_validator('prices')
    @classmethod
    def some_periods(cls, prices):
        if not prices:
            raise ValueError("at least one period is required")
        return prices


class ActionModel(BaseModel):
    model_config = ConfigDict(extra='forbid')

    charge: Optional[str] = None
    serve: Optional[str] = None

    @model_validator(mode='after')
    def exactly_one(self):
        if (self.charge is None) == (self.serve is None):
            raise ValueError("an action names either a charger or an operation")
        return self


class ScheduleModel(BaseModel):
    model_config = ConfigDict(extra='forbid')

    vehicle: str
    actions: List[Optional[ActionModel]]
    energy: List[float]
    cost: Optional[float] = None

    @model_validator(mode='after')
    def same_length(self):
        if len(self.actions) != len(self.energy):
            raise ValueError(f"vehicle {self.vehicle}: actions and energy differ in length")
        return self


class SolutionModel(BaseModel):
    model_config = ConfigDict(extra='forbid')

    instance: Optional[str] = None
    status: str
    objective: Optional[float] = None
    bound: Optional[float] = None
    energy_cost: Optional[float] = None
    degradation_cost: Optional[float] = None
    # written by the grid oracle
    delta_q: Optional[float] = None
    states: Optional[int] = None
    schedules: List[ScheduleModel] = Field(default_factory=list)


class StatsModel(BaseModel):
    model_config = ConfigDict(extra='forbid')

    objective: Optional[float] = None
    bound: Optional[float] = None
    gap: Optional[float] = None
    nodes: int = 0
    cg_iterations: int = 0
    columns_generated: int = 0
    time_ms: int = 0
    status: str


class GenerateRequest(BaseModel):
    model_config = ConfigDict(extra='forbid')

    family: str = 'small'
    seed: int = 0
    overrides: Dict[str, float] = Field(default_factory=dict)


class SolveRequest(BaseModel):
    model_config = ConfigDict(extra='forbid')

    instance: InstanceModel
    config: Dict[str, object] = Field(default_factory=dict)


class ValidateRequest(BaseModel):
    model_config = ConfigDict(extra='forbid')

    instance: InstanceModel
    solution: SolutionModel
