"""Vehicle-specific time-expanded pricing network.

Vertex ids are period-major: 0 is the source, period ``p`` owns the garage
vertex ``1 + p * (1 + F)`` followed by one station vertex per charger, and the
sink comes last. Every arc increases the period index, so ascending vertex ids
are a topological order.
"""
import enum
import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

from evsched.errors import DualSignError
from evsched.models.instance import Instance
from evsched.models.schedule import DualPrices
from evsched.profile import StationCosts

logger = logging.getLogger(__name__)

DUAL_SIGN_TOL = 1e-9


class ArcKind(enum.Enum):
    SOURCE = 'source'
    CHARGING = 'charging'
    IDLE = 'idle'
    SERVICE = 'service'


@dataclass(frozen=True, slots=True)
class Arc:
    index: int
    tail: int
    head: int
    kind: ArcKind
    period: int
    charger: Optional[int] = None
    consumption: float = 0.0
    operation: Optional[int] = None


class PricingNetwork:
    def __init__(self, inst: Instance, vehicle: int, costs: Optional[StationCosts] = None):
        self.inst = inst
        self.costs = costs if costs is not None else StationCosts(inst)
        self.vehicle = vehicle
        self.n = n = inst.n_periods
        self.n_chargers = nf = len(inst.chargers)
        self.source = 0
        self.sink = 1 + n * (1 + nf)
        n_vertices = self.sink + 1
        self.vertex_period: List[int] = [-1] * n_vertices
        self.vertex_charger: List[Optional[int]] = [None] * n_vertices
        for p in range(n):
            self.vertex_period[self.garage(p)] = p
            for f in range(nf):
                v = self.station(p, f)
                self.vertex_period[v] = p
                self.vertex_charger[v] = f
        self.vertex_period[self.sink] = n
        self.arcs: List[Arc] = []
        self.out_arcs: List[List[int]] = [[] for _ in range(n_vertices)]
        self.in_arcs: List[List[int]] = [[] for _ in range(n_vertices)]
        self.active: List[bool] = [True] * n_vertices
        self._build()
        self.kappa: List[float] = [0.0] * len(self.arcs)
        self.forbidden: frozenset = frozenset()
        self._distance: Optional[List[float]] = None

    @property
    def n_vertices(self) -> int:
        return self.sink + 1

    def garage(self, p: int) -> int:
        return self.sink if p >= self.n else 1 + p * (1 + self.n_chargers)

    def station(self, p: int, f: int) -> int:
        return 1 + p * (1 + self.n_chargers) + 1 + f

    def vertices_of(self, p: int) -> List[int]:
        if p >= self.n:
            return [self.sink]
        g = self.garage(p)
        return list(range(g, g + 1 + self.n_chargers))

    def period(self, v: int) -> int:
        return self.vertex_period[v]

    def charger(self, v: int) -> Optional[int]:
        return self.vertex_charger[v]

    def is_station(self, v: int) -> bool:
        return self.vertex_charger[v] is not None

    def is_garage(self, v: int) -> bool:
        return v not in (self.source, self.sink) and self.vertex_charger[v] is None

    def _add(self, tail: int, head: int, kind: ArcKind, period: int, **kw) -> None:
        arc = Arc(len(self.arcs), tail, head, kind, period, **kw)
        self.arcs.append(arc)
        self.out_arcs[tail].append(arc.index)
        self.in_arcs[head].append(arc.index)

    def _build(self) -> None:
        n = self.n
        for v in self.vertices_of(0):
            self._add(self.source, v, ArcKind.SOURCE, -1)
        for p in range(n):
            nxt = self.vertices_of(p + 1)
            g = self.garage(p)
            for f in range(self.n_chargers):
                s = self.station(p, f)
                for v in nxt:
                    self._add(s, v, ArcKind.CHARGING, p, charger=f)
            for v in nxt:
                self._add(g, v, ArcKind.IDLE, p)
        veh = self.inst.vehicles[self.vehicle]
        for o, op in enumerate(veh.operations):
            for p in range(op.earliest, op.latest + 1):
                self._add(self.garage(p), self.garage(p + op.duration), ArcKind.SERVICE, p,
                          consumption=op.consumption, operation=o)

    def set_forbidden(self, pairs: Iterable[Tuple[int, int]]) -> None:
        """Mask the station vertices of forbidden (period, charger) pairs."""
        self.forbidden = frozenset(pairs)
        self.active = [True] * self.n_vertices
        for p, f in self.forbidden:
            self.active[self.station(p, f)] = False
        self._distance = None

    def arc_active(self, a: Arc) -> bool:
        return self.active[a.tail] and self.active[a.head]

    def active_arcs(self) -> List[Arc]:
        return [a for a in self.arcs if self.arc_active(a)]

    def set_duals(self, duals: DualPrices) -> None:
        cap = duals.capacity
        conv = float(duals.convexity[self.vehicle])
        kappa = self.kappa
        for a in self.arcs:
            if a.kind is ArcKind.CHARGING:
                pi = float(cap[a.period, a.charger])
                if pi > DUAL_SIGN_TOL:
                    raise DualSignError(f"capacity dual {pi} at period {a.period}, charger {a.charger} is positive")
                kappa[a.index] = -min(pi, 0.0)
            elif a.kind is ArcKind.SOURCE:
                kappa[a.index] = -conv
            else:
                kappa[a.index] = 0.0
        self._distance = None

    def distance_to_sink(self) -> List[float]:
        """Least fixed arc cost from every vertex to the sink over active vertices."""
        if self._distance is None:
            dist = [math.inf] * self.n_vertices
            dist[self.sink] = 0.0
            for v in range(self.sink - 1, -1, -1):
                if not self.active[v]:
                    continue
                best = math.inf
                for i in self.out_arcs[v]:
                    a = self.arcs[i]
                    if self.active[a.head]:
                        best = min(best, self.kappa[i] + dist[a.head])
                dist[v] = best
            self._distance = dist
        return self._distance

    def label(self, v: int) -> str:
        if v == self.source:
            return 'source'
        if v == self.sink:
            return 'sink'
        p = self.period(v)
        f = self.charger(v)
        return f"g{p}" if f is None else f"s{p}_{self.inst.chargers[f].id}"

    def to_dot(self) -> str:
        lines = [f'digraph "vehicle_{self.inst.vehicles[self.vehicle].id}" {{', '  rankdir=LR;']
        for v in range(self.n_vertices):
            style = '' if self.active[v] else ', style=dashed'
            lines.append(f'  {v} [label="{self.label(v)}"{style}];')
        for a in self.arcs:
            if not self.arc_active(a):
                continue
            extra = f"q={a.consumption:g}" if a.kind is ArcKind.SERVICE else a.kind.value
            lines.append(f'  {a.tail} -> {a.head} [label="{extra} k={self.kappa[a.index]:g}"];')
        lines.append('}')
        return '\n'.join(lines)


def build_network(inst: Instance, vehicle: int, costs: Optional[StationCosts] = None) -> PricingNetwork:
    net = PricingNetwork(inst, vehicle, costs)
    logger.debug("network for vehicle %d: %d vertices, %d arcs", vehicle, net.n_vertices, len(net.arcs))
    return net


def set_duals(net: PricingNetwork, duals: DualPrices, vehicle: Optional[int] = None) -> None:
    if vehicle is not None and vehicle != net.vehicle:
        raise ValueError(f"network belongs to vehicle {net.vehicle}, not {vehicle}")
    net.set_duals(duals)
