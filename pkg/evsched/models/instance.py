"""Problem instance: periods and prices, chargers, vehicles with operations,
battery window and wear-density function."""
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Tuple

from pydantic import ValidationError

from evsched.battery import ChargingFunction, PiecewiseLinear, WearDensityFunction
from evsched.errors import EvschedError, InvalidInstanceError
from evsched.models.schemas import InstanceModel


@dataclass(frozen=True)
class Operation:
    id: str
    consumption: float
    duration: int
    earliest: int
    latest: int

    def precedes(self, other: 'Operation') -> bool:
        """True if ``self`` must be served before ``other``.

        ``other`` cannot be completed before the latest departure of ``self``.
        """
        return other.earliest + other.duration > self.latest

    def to_dict(self) -> dict:
        return {'id': self.id, 'consumption': self.consumption, 'duration': self.duration,
                'earliest': self.earliest, 'latest': self.latest}


@dataclass(frozen=True)
class Vehicle:
    id: str
    operations: Tuple[Operation, ...] = ()

    @property
    def total_consumption(self) -> float:
        return sum(op.consumption for op in self.operations)

    def operation_index(self, op_id: str) -> int:
        for i, op in enumerate(self.operations):
            if op.id == op_id:
                return i
        raise KeyError(op_id)


@dataclass(frozen=True)
class Charger:
    id: str
    capacity: int
    phi: ChargingFunction


@dataclass(frozen=True)
class Battery:
    q_max: float
    q_min: float = 0.0
    initial: float = 0.0


@dataclass(frozen=True)
class Instance:
    delta_p: float
    prices: Tuple[float, ...]
    chargers: Tuple[Charger, ...]
    vehicles: Tuple[Vehicle, ...]
    battery: Battery
    wdf: WearDensityFunction
    name: Optional[str] = None
    metadata: Dict[str, Any] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        self.validate()

    @property
    def n_periods(self) -> int:
        return len(self.prices)

    @property
    def fleet_size(self) -> int:
        return len(self.vehicles)

    @property
    def min_capacity(self) -> int:
        return min((c.capacity for c in self.chargers), default=1)

    def charger_index(self, charger_id: str) -> int:
        for i, c in enumerate(self.chargers):
            if c.id == charger_id:
                return i
        raise KeyError(charger_id)

    def vehicle_index(self, vehicle_id: str) -> int:
        for i, v in enumerate(self.vehicles):
            if v.id == vehicle_id:
                return i
        raise KeyError(vehicle_id)

    def validate(self) -> None:
        n = self.n_periods
        bat = self.battery
        if n < 1:
            raise InvalidInstanceError("instance needs at least one period")
        if not all(math.isfinite(p) for p in self.prices):
            raise InvalidInstanceError("prices must be finite")
        if not bat.q_min <= bat.initial <= bat.q_max or bat.q_min >= bat.q_max:
            raise InvalidInstanceError("battery requires q_min <= initial <= q_max and q_min < q_max")
        _unique('charger', [c.id for c in self.chargers])
        _unique('vehicle', [v.id for v in self.vehicles])
        for c in self.chargers:
            if c.capacity < 1:
                raise InvalidInstanceError(f"charger {c.id}: capacity must be at least 1")
            if abs(c.phi.q_max - bat.q_max) > 1e-6:
                raise InvalidInstanceError(
                    f"charger {c.id}: charging function reaches {c.phi.q_max}, battery holds {bat.q_max}")
        xs = self.wdf.socs
        if xs[0] > bat.q_min + 1e-9 or xs[-1] < bat.q_max - 1e-9:
            raise InvalidInstanceError(f"wdf must cover [{bat.q_min}, {bat.q_max}]")
        floor = self.wdf.min_density
        for i, p in enumerate(self.prices):
            if p + floor <= 0:
                raise InvalidInstanceError(f"period {i}: price plus minimum wear density must be positive")
        for v in self.vehicles:
            _unique(f'operation of vehicle {v.id}', [op.id for op in v.operations])
            for op in v.operations:
                if op.earliest < 0 or op.earliest > op.latest:
                    raise InvalidInstanceError(f"operation {op.id}: invalid window [{op.earliest}, {op.latest}]")
                if op.latest + op.duration > n:
                    raise InvalidInstanceError(f"operation {op.id}: returns after the horizon")
                if op.duration < 1:
                    raise InvalidInstanceError(f"operation {op.id}: duration must be at least one period")
                if op.consumption < 0 or op.consumption > bat.q_max - bat.q_min + 1e-9:
                    raise InvalidInstanceError(f"operation {op.id}: consumption exceeds the battery window")

    @classmethod
    def from_model(cls, model: InstanceModel) -> 'Instance':
        try:
            chargers = tuple(Charger(c.id, c.capacity, ChargingFunction(PiecewiseLinear(c.phi)))
                             for c in model.chargers)
            wdf = WearDensityFunction(PiecewiseLinear(model.wdf))
        except EvschedError as e:
            raise InvalidInstanceError(str(e)) from e
        vehicles = tuple(
            Vehicle(v.id, tuple(Operation(o.id, o.consumption, o.duration, o.earliest, o.latest)
                                for o in v.operations))
            for v in model.vehicles)
        b = model.battery
        return cls(delta_p=model.delta_p, prices=tuple(model.prices), chargers=chargers, vehicles=vehicles,
                   battery=Battery(q_max=b.q_max, q_min=b.q_min, initial=b.initial), wdf=wdf, name=model.name)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'Instance':
        try:
            model = InstanceModel.model_validate(data)
        except ValidationError as e:
            raise InvalidInstanceError(f"invalid instance: {e}") from e
        return cls.from_model(model)

    def to_dict(self) -> dict:
        out = {
            'delta_p': self.delta_p,
            'prices': list(self.prices),
            'chargers': [{'id': c.id, 'capacity': c.capacity, 'phi': c.phi.to_json()} for c in self.chargers],
            'vehicles': [{'id': v.id, 'operations': [op.to_dict() for op in v.operations]} for v in self.vehicles],
            'battery': {'q_min': self.battery.q_min, 'q_max': self.battery.q_max, 'initial': self.battery.initial},
            'wdf': self.wdf.to_json(),
        }
        if self.name is not None:
            out = {'name': self.name, **out}
        return out


def _unique(what: str, ids) -> None:
    seen = set()
    for i in ids:
        if i in seen:
            raise InvalidInstanceError(f"duplicate {what} id {i!r}")
        seen.add(i)
