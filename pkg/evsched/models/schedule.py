"""Vehicle schedules, master-problem columns and cost accounting."""
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from evsched.errors import InvalidInstanceError, ScheduleError
from evsched.models.instance import Instance

SOC_TOL = 1e-7


@dataclass(frozen=True)
class VehicleSchedule:
    """Per-period plan of one vehicle.

    ``charging[i]`` is the charger index used in period ``i`` (or None),
    ``departures`` holds ``(operation index, departure period)`` pairs and
    ``energy[i]`` the SoC change of period ``i``; consumption is booked on the
    departure period.
    """
    vehicle_id: str
    charging: Tuple[Optional[int], ...]
    departures: Tuple[Tuple[int, int], ...]
    energy: Tuple[float, ...]
    cost: Optional[float] = None

    @classmethod
    def build(cls, inst: Instance, vehicle: int, charges: Mapping[int, Tuple[int, float]],
              departures: Mapping[int, int]) -> 'VehicleSchedule':
        """Schedule from ``{period: (charger, amount)}`` and ``{operation: period}``."""
        n = inst.n_periods
        veh = inst.vehicles[vehicle]
        charging: List[Optional[int]] = [None] * n
        energy = [0.0] * n
        for p, (f, amount) in charges.items():
            charging[p] = f
            energy[p] = float(amount)
        for o, p in departures.items():
            energy[p] -= veh.operations[o].consumption
        deps = tuple(sorted(((o, p) for o, p in departures.items()), key=lambda t: (t[1], t[0])))
        return cls(veh.id, tuple(charging), deps, tuple(energy))

    @classmethod
    def idle(cls, inst: Instance, vehicle: int) -> 'VehicleSchedule':
        return cls.build(inst, vehicle, {}, {})

    def with_cost(self, inst: Instance) -> 'VehicleSchedule':
        return VehicleSchedule(self.vehicle_id, self.charging, self.departures, self.energy,
                               schedule_cost(self, inst))

    @property
    def usage(self) -> FrozenSet[Tuple[int, int]]:
        return frozenset((p, f) for p, f in enumerate(self.charging) if f is not None)

    def action_matrix(self, inst: Instance) -> np.ndarray:
        """Binary matrix over periods x (chargers + operations)."""
        n_f = len(inst.chargers)
        x = np.zeros((inst.n_periods, n_f + len(inst.vehicles[inst.vehicle_index(self.vehicle_id)].operations)),
                     dtype=np.int8)
        for p, f in enumerate(self.charging):
            if f is not None:
                x[p, f] = 1
        for o, p in self.departures:
            x[p, n_f + o] = 1
        return x

    def charger_allocation(self, inst: Instance) -> np.ndarray:
        return self.action_matrix(inst)[:, :len(inst.chargers)]

    def soc_trace(self, inst: Instance) -> List[float]:
        soc = inst.battery.initial
        out = []
        for e in self.energy:
            soc += e
            out.append(soc)
        return out

    def to_dict(self, inst: Instance) -> dict:
        veh = inst.vehicles[inst.vehicle_index(self.vehicle_id)]
        actions: List[Optional[dict]] = [None] * len(self.energy)
        for p, f in enumerate(self.charging):
            if f is not None:
                actions[p] = {'charge': inst.chargers[f].id}
        for o, p in self.departures:
            actions[p] = {'serve': veh.operations[o].id}
        cost = self.cost if self.cost is not None else schedule_cost(self, inst)
        return {'vehicle': self.vehicle_id, 'actions': actions, 'energy': list(self.energy), 'cost': cost}

    @classmethod
    def from_dict(cls, data: Mapping, inst: Instance) -> 'VehicleSchedule':
        try:
            veh = inst.vehicles[inst.vehicle_index(data['vehicle'])]
        except KeyError as e:
            raise InvalidInstanceError(f"unknown vehicle {data.get('vehicle')!r}") from e
        charging: List[Optional[int]] = []
        deps = []
        for p, action in enumerate(data['actions']):
            action = action or {}
            if action.get('charge') is not None:
                try:
                    charging.append(inst.charger_index(action['charge']))
                except KeyError as e:
                    raise InvalidInstanceError(f"unknown charger {action['charge']!r}") from e
                continue
            charging.append(None)
            if action.get('serve') is not None:
                try:
                    deps.append((veh.operation_index(action['serve']), p))
                except KeyError as e:
                    raise InvalidInstanceError(f"unknown operation {action['serve']!r}") from e
        return cls(veh.id, tuple(charging), tuple(deps), tuple(float(e) for e in data['energy']),
                   data.get('cost'))


def charging_terms(s: VehicleSchedule, inst: Instance) -> List[Tuple[int, float, float]]:
    """(period, energy cost, degradation cost) of every charging period."""
    bat = inst.battery
    soc = bat.initial
    out = []
    for i, e in enumerate(s.energy):
        after = soc + e
        if after < bat.q_min - SOC_TOL or after > bat.q_max + SOC_TOL:
            raise ScheduleError(f"vehicle {s.vehicle_id}: SoC {after:.6g} leaves "
                                f"[{bat.q_min}, {bat.q_max}] in period {i}")
        if e > 0:
            energy_cost = inst.prices[i] * e
            wear = inst.wdf.cost(soc, after)
            if energy_cost + wear > 0:
                out.append((i, energy_cost, wear))
        soc = after
    return out


def schedule_cost(s: VehicleSchedule, inst: Instance) -> float:
    return sum(ec + wc for _, ec, wc in charging_terms(s, inst))


def schedule_cost_breakdown(s: VehicleSchedule, inst: Instance) -> Tuple[float, float]:
    terms = charging_terms(s, inst)
    return sum(t[1] for t in terms), sum(t[2] for t in terms)


def _check_duplicates(schedules: Sequence[VehicleSchedule]) -> None:
    seen = set()
    for s in schedules:
        if s.vehicle_id in seen:
            raise ScheduleError(f"duplicate schedule for vehicle {s.vehicle_id}")
        seen.add(s.vehicle_id)


def fleet_cost(schedules: Sequence[VehicleSchedule], inst: Instance) -> float:
    _check_duplicates(schedules)
    return sum(schedule_cost(s, inst) for s in schedules)


def fleet_cost_breakdown(schedules: Sequence[VehicleSchedule], inst: Instance) -> Tuple[float, float]:
    _check_duplicates(schedules)
    energy = wear = 0.0
    for s in schedules:
        a, b = schedule_cost_breakdown(s, inst)
        energy += a
        wear += b
    return energy, wear


@dataclass(frozen=True)
class Violation:
    kind: str
    vehicle: Optional[str] = None
    period: Optional[int] = None
    charger: Optional[str] = None
    operation: Optional[str] = None
    detail: str = ''

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None and v != ''}


@dataclass
class FleetReport:
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> List[str]:
        return [v.kind for v in self.violations]

    def to_dict(self) -> dict:
        return {'ok': self.ok, 'violations': [v.to_dict() for v in self.violations]}


def _check_schedule(s: VehicleSchedule, inst: Instance, report: FleetReport) -> None:
    n = inst.n_periods
    bat = inst.battery
    veh = inst.vehicles[inst.vehicle_index(s.vehicle_id)]
    add = report.violations.append
    if len(s.energy) != n or len(s.charging) != n:
        add(Violation('length', s.vehicle_id, detail=f"expected {n} periods"))
        return
    blocked: Dict[int, int] = {}
    departing: Dict[int, int] = {}
    returning = set()
    served: Dict[int, int] = {}
    for o, p in s.departures:
        op = veh.operations[o]
        if o in served:
            add(Violation('duplicate_departure', s.vehicle_id, p, operation=op.id))
            continue
        served[o] = p
        if not op.earliest <= p <= op.latest:
            add(Violation('window', s.vehicle_id, p, operation=op.id,
                          detail=f"window [{op.earliest}, {op.latest}]"))
        if p + op.duration > n:
            add(Violation('horizon', s.vehicle_id, p, operation=op.id))
        if p in departing or p in blocked:
            add(Violation('overlap', s.vehicle_id, p, operation=op.id))
        departing[p] = o
        for r in range(p + 1, min(n, p + op.duration)):
            if r in blocked or r in departing:
                add(Violation('overlap', s.vehicle_id, r, operation=op.id))
            blocked[r] = o
        returning.add(p + op.duration)
    for o, op in enumerate(veh.operations):
        if o not in served:
            add(Violation('unserved', s.vehicle_id, operation=op.id))
    soc = bat.initial
    for i in range(n):
        f = s.charging[i]
        e = s.energy[i]
        if f is not None:
            charger = inst.chargers[f]
            if i in departing:
                add(Violation('row_sum', s.vehicle_id, i, charger=charger.id))
            if i in blocked:
                add(Violation('blocked', s.vehicle_id, i, charger=charger.id))
            if i in returning:
                add(Violation('return_charging', s.vehicle_id, i, charger=charger.id))
            limit = charger.phi.charge(soc, inst.delta_p) - soc
            if not 0 < e <= limit + SOC_TOL:
                add(Violation('charge_amount', s.vehicle_id, i, charger=charger.id,
                              detail=f"energy {e:.6g} outside (0, {limit:.6g}]"))
        elif i in departing:
            expected = -veh.operations[departing[i]].consumption
            if abs(e - expected) > SOC_TOL:
                add(Violation('energy', s.vehicle_id, i, detail=f"expected {expected:.6g}, got {e:.6g}"))
        elif abs(e) > SOC_TOL:
            add(Violation('energy', s.vehicle_id, i, detail=f"idle period with energy {e:.6g}"))
        soc += e
        if soc < bat.q_min - SOC_TOL or soc > bat.q_max + SOC_TOL:
            add(Violation('soc', s.vehicle_id, i, detail=f"SoC {soc:.6g}"))


def validate_fleet(schedules: Iterable[VehicleSchedule], inst: Instance) -> FleetReport:
    report = FleetReport()
    schedules = list(schedules)
    known = {v.id for v in inst.vehicles}
    seen = set()
    for s in schedules:
        if s.vehicle_id not in known:
            report.violations.append(Violation('unknown_vehicle', s.vehicle_id))
            continue
        if s.vehicle_id in seen:
            report.violations.append(Violation('duplicate_vehicle', s.vehicle_id))
            continue
        seen.add(s.vehicle_id)
        _check_schedule(s, inst, report)
    for v in inst.vehicles:
        if v.id not in seen:
            report.violations.append(Violation('missing_vehicle', v.id))
    usage = np.zeros((inst.n_periods, len(inst.chargers)), dtype=int)
    for s in schedules:
        if s.vehicle_id in known and len(s.charging) == inst.n_periods:
            for p, f in s.usage:
                usage[p, f] += 1
    for p, f in zip(*np.nonzero(usage)):
        charger = inst.chargers[f]
        if usage[p, f] > charger.capacity:
            report.violations.append(Violation('capacity', period=int(p), charger=charger.id,
                                               detail=f"{usage[p, f]} vehicles, capacity {charger.capacity}"))
    return report


@dataclass(frozen=True)
class DualPrices:
    capacity: np.ndarray
    convexity: np.ndarray

    @classmethod
    def zeros(cls, inst: Instance) -> 'DualPrices':
        return cls(np.zeros((inst.n_periods, len(inst.chargers))), np.zeros(inst.fleet_size))


@dataclass(frozen=True)
class Column:
    vehicle: int
    schedule: VehicleSchedule
    cost: float
    usage: FrozenSet[Tuple[int, int]]

    @classmethod
    def from_schedule(cls, inst: Instance, vehicle: int, schedule: VehicleSchedule) -> 'Column':
        cost = schedule_cost(schedule, inst)
        schedule = VehicleSchedule(schedule.vehicle_id, schedule.charging, schedule.departures,
                                   schedule.energy, cost)
        return cls(vehicle, schedule, cost, schedule.usage)

    @property
    def key(self):
        return self.vehicle, self.usage, round(self.cost, 9)

    def uses(self, period: int, charger: int) -> bool:
        return (period, charger) in self.usage


def reduced_cost(col: Column, duals: DualPrices) -> float:
    return col.cost - float(duals.convexity[col.vehicle]) - sum(float(duals.capacity[p, f]) for p, f in col.usage)
