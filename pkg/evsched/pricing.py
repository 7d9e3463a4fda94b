"""Label-setting search for the least reduced-cost schedule of one vehicle.

Labels carry a cost profile: the highest SoC reachable at a vertex for every
total cost, given the charging decisions committed along the path and one
still open decision at the last visited station. Charging arcs either keep
the open station and commit a full period of charging at the new one
(intermediate charging), or close the open station at a profile breakpoint
and open the new one (replacement).
"""
import bisect
import enum
import heapq
import json
import logging
import math
import time
from dataclasses import dataclass, field
from itertools import combinations, count, pairwise
from typing import IO, Dict, Iterable, List, NamedTuple, Optional, Sequence

from evsched.battery import PROFILE_TOL
from evsched.config import SolverConfig
from evsched.errors import PricingLimitError, TimeLimitReached
from evsched.models.instance import Instance
from evsched.models.schedule import Column, DualPrices, VehicleSchedule, reduced_cost
from evsched.network import Arc, ArcKind, PricingNetwork
from evsched.profile import CostProfile, charging_cost

logger = logging.getLogger(__name__)

RC_TOL = 1e-6
DOMINANCE_TOL = PROFILE_TOL
# largest label set used for one set-dominance test
SET_LIMIT = 32

__all__ = ['charging_cost', 'Mode', 'Decision', 'Label', 'PricingOptions', 'PricingStats', 'PricingResult',
           'propagate_regular', 'propagate_replace', 'propagate_intermediate', 'expand_charging',
           'dominates_pairwise', 'dominates_set', 'soc_reachable_check', 'potential', 'reconstruct',
           'LabelingSolver', 'price_vehicle', 'solve_pricing']


class Mode(str, enum.Enum):
    REGULAR = 'regular'
    REPLACE = 'replace'
    INTERMEDIATE = 'intermediate'


class Decision(NamedTuple):
    mode: Mode
    arc: int
    # c' for replacements, tau for intermediate charging
    value: float = 0.0


@dataclass(eq=False)
class Label:
    profile: CostProfile
    served: int
    vertex: int
    parent: Optional['Label'] = None
    decision: Optional[Decision] = None
    key: float = 0.0
    seq: int = 0
    dead: bool = False
    settled: bool = False

    @property
    def c_min(self) -> float:
        return self.profile.c_min

    @property
    def q_min_val(self) -> float:
        return self.profile.q_min_val

    @property
    def q_max_val(self) -> float:
        return self.profile.q_max_val

    def __repr__(self):
        return f"Label(v={self.vertex}, served={self.served:b}, {self.profile.breakpoints})"


@dataclass
class PricingOptions:
    dominance: str = 'set'
    intermediate_charging: bool = True
    use_potential: bool = True
    # stop once the cheapest open label cannot price out
    stop_at_nonnegative: bool = True
    label_limit: Optional[int] = None
    deadline: Optional[float] = None
    trace: Optional[IO[str]] = None

    @classmethod
    def from_config(cls, config: SolverConfig, **kwargs) -> 'PricingOptions':
        return cls(dominance=config.dominance, intermediate_charging=config.intermediate_charging,
                   use_potential=config.use_potential, label_limit=config.label_limit, **kwargs)


@dataclass
class PricingStats:
    created: int = 0
    pruned: int = 0
    extracted: int = 0

    def to_dict(self) -> dict:
        return {'created': self.created, 'pruned': self.pruned, 'extracted': self.extracted}


@dataclass
class PricingResult:
    label: Optional[Label]
    cost: float
    schedule: Optional[VehicleSchedule]
    stats: PricingStats = field(default_factory=PricingStats)


def _child(label: Label, profile: CostProfile, arc: Arc, decision: Decision) -> Label:
    served = label.served
    if arc.operation is not None:
        served |= 1 << arc.operation
    return Label(profile, served, arc.head, label, decision)


def propagate_regular(label: Label, arc: Arc, net: PricingNetwork) -> Optional[Label]:
    """Shift the profile by the arc's fixed cost and consumption; None if nothing stays above q_min."""
    bat = net.inst.battery
    profile = label.profile.shift_and_cut(net.kappa[arc.index], arc.consumption, bat.q_min, bat.q_max)
    if profile is None:
        return None
    return _child(label, profile, arc, Decision(Mode.REGULAR, arc.index))


def propagate_replace(label: Label, arc: Arc, c_prime: float, net: PricingNetwork) -> Label:
    """Close the open station at cost ``c_prime`` and open the tail station of ``arc``."""
    inst = net.inst
    Z = label.profile
    q0 = Z.value(c_prime)
    if q0 == -math.inf:
        raise ValueError(f"replacement cost {c_prime} lies left of the profile start {Z.c_min}")
    phi = inst.chargers[arc.charger].phi
    q_up = min(phi.charge(q0, inst.delta_p), inst.battery.q_max)
    C = net.costs.energy[arc.period]
    base = c_prime + net.kappa[arc.index]
    c0 = C(q0)
    pts = [(base, q0)]
    for qb in C.xs:
        if q0 + 1e-9 < qb < q_up - 1e-9:
            pts.append((base + C(qb) - c0, qb))
    if q_up > q0 + 1e-9:
        pts.append((base + C(q_up) - c0, q_up))
    return _child(label, CostProfile.from_breakpoints(pts), arc, Decision(Mode.REPLACE, arc.index, c_prime))


def propagate_intermediate(label: Label, arc: Arc, tau: float, net: PricingNetwork,
                           remaining: Optional[float] = None) -> Label:
    """Charge exactly ``tau`` minutes at the tail station and keep the open station.

    ``remaining`` is the consumption still to be served; SoC beyond
    ``q_min + remaining`` is cut off.
    """
    inst = net.inst
    bat = inst.battery
    Z = label.profile
    phi = inst.chargers[arc.charger].phi
    C = net.costs.energy[arc.period]
    lo, hi = Z.q_min_val, Z.q_max_val

    candidates = set(Z.ys)
    candidates.update(C.xs)
    for qb in C.xs:
        if phi.inverse(qb) - tau >= 0:
            candidates.add(phi.charge_before(qb, tau))
    for tb in phi.pwl.xs:
        candidates.add(phi(tb))
        if tb >= tau:
            candidates.add(phi(tb - tau))

    kappa = net.kappa[arc.index]
    pts = []
    for q_a in sorted(min(max(q, lo), hi) for q in candidates if lo - 1e-9 <= q <= hi + 1e-9):
        q = min(phi.charge(q_a, tau), bat.q_max)
        pts.append((Z.inverse(q_a) + kappa + C(q) - C(q_a), q))
    cap = bat.q_max if remaining is None else min(bat.q_max, bat.q_min + remaining)
    profile = CostProfile.from_points(pts, cap=cap)
    return _child(label, profile, arc, Decision(Mode.INTERMEDIATE, arc.index, tau))


def dominates_pairwise(a: Label, b: Label, tol: float = DOMINANCE_TOL) -> bool:
    """True if ``a`` serves at least ``b``'s operations and reaches at least its SoC at every cost."""
    if b.served & ~a.served:
        return False
    Za, Zb = a.profile, b.profile
    if Za.c_min > Zb.c_min + tol:
        return False
    for c in Za.xs + Zb.xs:
        if c < Zb.c_min:
            continue
        if Za.value(c, tol) < Zb(c) - tol:
            return False
    return True


def _envelope_at(profiles: Sequence[CostProfile], c: float, tol: float):
    best, arg = -math.inf, -1
    for i, Z in enumerate(profiles):
        v = Z.value(c, tol)
        if v > best:
            best, arg = v, i
    return best, arg


def dominates_set(labels: Iterable[Label], b: Label, tol: float = DOMINANCE_TOL) -> bool:
    """True if the pointwise maximum of ``labels`` dominates ``b``.

    Between consecutive breakpoints every member is linear, so the envelope
    minus ``b`` is convex there and attains its minimum at an end of the
    interval or where two members cross. Only members already active at the
    left end take part in an interval; the right end is a limit from the left.
    """
    labels = list(labels)
    if not labels:
        return False
    common = ~0
    for s in labels:
        common &= s.served
    if b.served & ~common:
        return False
    Zb = b.profile
    profiles = [s.profile for s in labels]
    grid = sorted({c for Z in profiles for c in Z.xs if c > Zb.c_min} | set(Zb.xs))
    if _envelope_at(profiles, grid[-1], tol)[0] < Zb(grid[-1]) - tol:
        return False
    for c0, c1 in pairwise(grid):
        inner = [Z for Z in profiles if Z.c_min <= c0 + tol]
        if not inner:
            return False
        v0 = [Z.value(c0, tol) for Z in inner]
        v1 = [Z.value(c1, tol) for Z in inner]
        points = [(c0, max(v0)), (c1, max(v1))]
        for i, j in combinations(range(len(inner)), 2):
            d0, d1 = v0[i] - v0[j], v1[i] - v1[j]
            if d0 * d1 >= 0:
                continue
            t = c0 + (c1 - c0) * d0 / (d0 - d1)
            points.append((t, _envelope_at(inner, t, tol)[0]))
        if any(v < Zb(t) - tol for t, v in points):
            return False
    return True


def _is_dominated(cand: Label, pool: Iterable[Label], mode: str, tol: float = DOMINANCE_TOL) -> bool:
    if mode == 'off':
        return False
    cover = [l for l in pool if l is not cand and not l.dead and not (cand.served & ~l.served)]
    if not any(l.c_min <= cand.c_min + tol for l in cover):
        return False
    if any(dominates_pairwise(l, cand, tol) for l in cover):
        return True
    # members starting later still cover the tail of cand
    if mode != 'set' or len(cover) < 2:
        return False
    if len(cover) > SET_LIMIT:
        cover = sorted(cover, key=lambda l: -l.q_max_val)[:SET_LIMIT]
    return dominates_set(cover, cand, tol)


def expand_charging(label: Label, arc: Arc, targets: Iterable[Label], net: PricingNetwork,
                    options: Optional[PricingOptions] = None, remaining: Optional[float] = None) -> List[Label]:
    """All non-dominated labels created by propagating ``label`` along a charging arc.

    Emits the no-charge label, one replacement per profile breakpoint and,
    unless disabled, a full period of intermediate charging. The batch is
    pruned against ``targets`` (labels already at the head) and against itself.
    """
    options = options or PricingOptions()
    batch: List[Optional[Label]] = []
    regular = propagate_regular(label, arc, net)
    if regular is not None:
        batch.append(regular)
    if options.intermediate_charging:
        batch.append(propagate_intermediate(label, arc, net.inst.delta_p, net, remaining))
    for c in label.profile.xs:
        batch.append(propagate_replace(label, arc, c, net))
    if options.dominance == 'off':
        return [l for l in batch if l is not None]
    targets = [t for t in targets if not t.dead]
    for i in range(len(batch) - 1, -1, -1):
        cand = batch[i]
        others = targets + [l for j, l in enumerate(batch) if j != i and l is not None]
        if _is_dominated(cand, others, options.dominance):
            batch[i] = None
    return [l for l in batch if l is not None]


class _Context:
    """Per-vehicle data shared by feasibility checks and the potential."""

    def __init__(self, net: PricingNetwork):
        self.net = net
        inst = net.inst
        self.ops = inst.vehicles[net.vehicle].operations
        self.full_mask = (1 << len(self.ops)) - 1
        self.preds = [[j for j, other in enumerate(self.ops) if j != i and other.precedes(op)]
                      for i, op in enumerate(self.ops)]
        self._remaining: Dict[int, float] = {}

    def remaining(self, served: int) -> float:
        r = self._remaining.get(served)
        if r is None:
            r = sum(op.consumption for i, op in enumerate(self.ops) if not served >> i & 1)
            self._remaining[served] = r
        return r


def _context(net: PricingNetwork, ctx: Optional[_Context]) -> _Context:
    return ctx if ctx is not None else _Context(net)


def soc_reachable_check(label: Label, net: PricingNetwork, ctx: Optional[_Context] = None) -> bool:
    """False if some unserved operation cannot be powered before its latest departure."""
    ctx = _context(net, ctx)
    inst = net.inst
    rate = net.costs.max_rate
    p = max(net.period(label.vertex), 0)
    for i, op in enumerate(ctx.ops):
        if label.served >> i & 1:
            continue
        preds = [ctx.ops[j] for j in ctx.preds[i] if not label.served >> j & 1]
        free = op.latest - p - sum(o.duration + 1 for o in preds)
        ub = rate * max(0, free) * inst.delta_p - sum(o.consumption for o in preds)
        if ub + label.q_max_val < op.consumption + inst.battery.q_min - DOMINANCE_TOL:
            return False
    return True


def potential(label: Label, net: PricingNetwork, ctx: Optional[_Context] = None) -> float:
    """Lower bound on the reduced cost of any completion of ``label`` to the sink.

    The energy still missing is either bought along the profile of the open
    station or later at the cheapest remaining price plus the least wear
    density; the cheaper mix is taken.
    """
    ctx = _context(net, ctx)
    Z = label.profile
    dist = net.distance_to_sink()[label.vertex]
    if math.isinf(dist):
        return math.inf
    need = max(0.0, net.inst.battery.q_min + ctx.remaining(label.served) - Z.q_min_val)
    if need <= 0:
        return Z.c_min + dist
    span = Z.q_max_val - Z.q_min_val
    rate = net.costs.future_rate(net.period(label.vertex))
    if math.isinf(rate):
        if need > span + DOMINANCE_TOL:
            return math.inf
        return Z.inverse(Z.q_min_val + need) + dist
    top = min(need, span)
    xs = {0.0, top}
    xs.update(q - Z.q_min_val for q in Z.ys if q - Z.q_min_val < top)
    extra = min(Z.inverse(Z.q_min_val + x) - Z.c_min + rate * (need - x) for x in xs)
    return Z.c_min + extra + dist


def reconstruct(label: Label, net: PricingNetwork) -> VehicleSchedule:
    """Walk parent links back from a sink label at its least cost and rebuild the schedule."""
    inst = net.inst
    c, q = label.c_min, label.q_min_val
    charges = {}
    departures = {}
    node = label
    while node.parent is not None:
        dec = node.decision
        arc = net.arcs[dec.arc]
        Zp = node.parent.profile
        if dec.mode is Mode.REGULAR:
            c_p = c - net.kappa[arc.index]
            q_p = Zp.value(c_p)
            if arc.kind is ArcKind.SERVICE:
                departures[arc.operation] = arc.period
        elif dec.mode is Mode.REPLACE:
            c_p = dec.value
            q_p = Zp.value(c_p)
            if q - q_p > 1e-9:
                charges[arc.period] = (arc.charger, q - q_p)
        else:
            phi = inst.chargers[arc.charger].phi
            q_p = min(max(phi.charge_before(q, dec.value), Zp.q_min_val), Zp.q_max_val)
            c_p = Zp.inverse(q_p)
            if q - q_p > 1e-9:
                charges[arc.period] = (arc.charger, q - q_p)
        c, q = c_p, q_p
        node = node.parent
    return VehicleSchedule.build(inst, net.vehicle, charges, departures)


class LabelingSolver:
    """Best-first label-setting search over one vehicle's pricing network."""

    def __init__(self, net: PricingNetwork, options: Optional[PricingOptions] = None):
        self.net = net
        self.options = options or PricingOptions()
        self.ctx = _Context(net)
        self.stats = PricingStats()
        self._seq = count()
        n = net.n_vertices
        self.buckets: List[List[Label]] = [[] for _ in range(n)]
        self.settled: List[List[Label]] = [[] for _ in range(n)]
        self.seen: List[Dict[tuple, Label]] = [{} for _ in range(n)]
        self.heap: list = []

    def solve(self) -> PricingResult:
        net, opts = self.net, self.options
        if math.isinf(net.distance_to_sink()[net.source]):
            return PricingResult(None, math.inf, None, self.stats)
        bat = net.inst.battery
        self._offer(Label(CostProfile.single(0.0, bat.initial), 0, net.source))
        best = None
        while self.heap:
            key, _, _, label = heapq.heappop(self.heap)
            if label.dead:
                continue
            if opts.stop_at_nonnegative and key > -RC_TOL:
                break
            if label.vertex == net.sink:
                best = label
                break
            if self._dominated_by_settled(label):
                label.dead = True
                self.stats.pruned += 1
                continue
            self._settle(label)
            self.stats.extracted += 1
            if opts.deadline is not None and self.stats.extracted % 256 == 0 and time.monotonic() > opts.deadline:
                raise TimeLimitReached("time limit reached during pricing")
            if opts.trace is not None:
                opts.trace.write(json.dumps({'vehicle': net.vehicle, 'vertex': net.label(label.vertex),
                                             'served': label.served, 'key': key,
                                             'profile': label.profile.to_json()}) + '\n')
            self._expand(label)
        logger.debug("vehicle %d pricing: %s", net.vehicle, self.stats.to_dict())
        if best is None:
            return PricingResult(None, math.inf, None, self.stats)
        return PricingResult(best, best.c_min, reconstruct(best, net), self.stats)

    def _dominated_by_settled(self, label: Label) -> bool:
        if self.options.dominance == 'off':
            return False
        floor = label.q_max_val - DOMINANCE_TOL
        for s in self.settled[label.vertex]:
            if s.q_max_val < floor:
                break
            if dominates_pairwise(s, label):
                return True
        return False

    def _settle(self, label: Label) -> None:
        label.settled = True
        bisect.insort(self.settled[label.vertex], label, key=lambda l: -l.q_max_val)

    def _windows_open(self, label: Label) -> bool:
        net = self.net
        v = label.vertex
        if v == net.sink:
            return label.served == self.ctx.full_mask
        p = net.period(v)
        station = net.is_station(v)
        for i, op in enumerate(self.ctx.ops):
            if label.served >> i & 1:
                continue
            if p > op.latest or (station and p >= op.latest):
                return False
        return True

    def _expand(self, label: Label) -> None:
        net = self.net
        bat = net.inst.battery
        remaining = self.ctx.remaining(label.served)
        may_charge = label.q_min_val < bat.q_min + remaining - DOMINANCE_TOL
        for i in net.out_arcs[label.vertex]:
            arc = net.arcs[i]
            if not net.arc_active(arc):
                continue
            if arc.kind is ArcKind.SERVICE and label.served >> arc.operation & 1:
                continue
            if arc.kind is ArcKind.CHARGING and may_charge:
                for child in expand_charging(label, arc, self.buckets[arc.head], net, self.options, remaining):
                    self._offer(child, checked=True)
                continue
            child = propagate_regular(label, arc, net)
            if child is not None:
                self._offer(child)

    def _offer(self, child: Label, checked: bool = False) -> None:
        v = child.vertex
        if not self._windows_open(child) or not soc_reachable_check(child, self.net, self.ctx):
            return
        sig = (child.served, child.profile.signature())
        seen = self.seen[v].get(sig)
        if seen is not None:
            self.stats.pruned += 1
            return
        mode = self.options.dominance
        bucket = self.buckets[v]
        if not checked and _is_dominated(child, bucket, mode):
            self.stats.pruned += 1
            return
        if self.options.use_potential:
            key = potential(child, self.net, self.ctx)
        else:
            key = child.c_min + self.net.distance_to_sink()[v]
        if math.isinf(key):
            return
        if mode != 'off':
            for other in bucket:
                if not other.settled and not other.dead and dominates_pairwise(child, other):
                    other.dead = True
                    self.stats.pruned += 1
            if len(bucket) > 64:
                bucket[:] = [l for l in bucket if not l.dead]
        child.key = key
        child.seq = next(self._seq)
        self.seen[v][sig] = child
        bucket.append(child)
        heapq.heappush(self.heap, (key, -self.net.period(v), child.seq, child))
        self.stats.created += 1
        limit = self.options.label_limit
        if limit is not None and self.stats.created > limit:
            raise PricingLimitError(f"vehicle {self.net.vehicle}: more than {limit} labels")


def price_vehicle(net: PricingNetwork, options: Optional[PricingOptions] = None) -> PricingResult:
    return LabelingSolver(net, options).solve()


def solve_pricing(net: PricingNetwork, inst: Instance, vehicle: int, duals: Optional[DualPrices] = None,
                  forbidden: Optional[Iterable] = None,
                  options: Optional[PricingOptions] = None) -> Optional[Column]:
    """Column of negative reduced cost for ``vehicle``, or None if none exists."""
    if net.vehicle != vehicle or net.inst is not inst:
        raise ValueError(f"network does not belong to vehicle {vehicle} of this instance")
    if forbidden is not None:
        net.set_forbidden(forbidden)
    duals = duals if duals is not None else DualPrices.zeros(inst)
    net.set_duals(duals)
    result = price_vehicle(net, options)
    if result.schedule is None:
        return None
    col = Column.from_schedule(inst, vehicle, result.schedule)
    rc = reduced_cost(col, duals)
    if rc < -RC_TOL:
        return col
    return None
