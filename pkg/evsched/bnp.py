"""Branch-and-price: conflict branching, diving heuristic and node selection."""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from evsched.config import SolverConfig
from evsched.errors import BranchingError, ScheduleError, TimeLimitReached
from evsched.master import INTEGRALITY_TOL, ColumnGenerator, LpSolution, RestrictedMaster, solve_lp
from evsched.models.instance import Instance
from evsched.models.schedule import Column, VehicleSchedule, fleet_cost_breakdown, validate_fleet

logger = logging.getLogger(__name__)

PRUNE_TOL = 1e-9

STATUS_OPTIMAL = 'optimal'
STATUS_INFEASIBLE = 'infeasible'
STATUS_TIME_LIMIT = 'time_limit'
STATUS_ERROR = 'error'


@dataclass
class BnpNode:
    forbidden: FrozenSet[Tuple[int, int, int]] = frozenset()
    columns: List[Column] = field(default_factory=list)
    bound: float = -math.inf
    depth: int = 0
    index: int = 0
    branch_vehicle: Optional[int] = None
    lp: Optional[LpSolution] = None

    def forbidden_for(self, vehicle: int) -> FrozenSet[Tuple[int, int]]:
        return frozenset((p, f) for k, p, f in self.forbidden if k == vehicle)


@dataclass
class Incumbent:
    schedules: List[VehicleSchedule]
    objective: float

    @classmethod
    def from_columns(cls, inst: Instance, columns: Sequence[Column]) -> 'Incumbent':
        """Incumbent from one column per vehicle; raises ScheduleError if it is not a valid fleet plan."""
        by_vehicle = sorted(columns, key=lambda c: c.vehicle)
        schedules = [c.schedule for c in by_vehicle]
        report = validate_fleet(schedules, inst)
        if not report.ok:
            raise ScheduleError(f"incumbent violates {sorted(set(report.kinds()))}")
        return cls(schedules, sum(c.cost for c in by_vehicle))


@dataclass
class SolveStats:
    status: str
    objective: Optional[float] = None
    bound: Optional[float] = None
    gap: Optional[float] = None
    nodes: int = 0
    cg_iterations: int = 0
    columns_generated: int = 0
    time_ms: int = 0

    def to_dict(self) -> dict:
        return {'objective': self.objective, 'bound': self.bound, 'gap': self.gap, 'nodes': self.nodes,
                'cg_iterations': self.cg_iterations, 'columns_generated': self.columns_generated,
                'time_ms': self.time_ms, 'status': self.status}


@dataclass
class SolveResult:
    status: str
    incumbent: Optional[Incumbent]
    bound: Optional[float]
    gap: Optional[float]
    stats: SolveStats

    @property
    def objective(self) -> Optional[float]:
        return self.incumbent.objective if self.incumbent else None

    def to_solution(self, inst: Instance) -> dict:
        out = {'instance': inst.name, 'status': self.status, 'objective': self.objective, 'bound': self.bound,
               'energy_cost': None, 'degradation_cost': None, 'schedules': []}
        if self.incumbent is not None:
            energy, wear = fleet_cost_breakdown(self.incumbent.schedules, inst)
            out['energy_cost'] = energy
            out['degradation_cost'] = wear
            out['schedules'] = [s.to_dict(inst) for s in self.incumbent.schedules]
        return out


def relative_gap(objective: Optional[float], bound: Optional[float]) -> Optional[float]:
    if objective is None or bound is None:
        return None
    diff = max(0.0, objective - bound)
    if abs(objective) < 1e-12:
        return 0.0 if diff <= PRUNE_TOL else None
    return diff / abs(objective)


def _vehicle_usage(lp: LpSolution, columns: Sequence[Column]) -> Dict[Tuple[int, int], Dict[int, float]]:
    usage: Dict[Tuple[int, int], Dict[int, float]] = {}
    for col, v in zip(columns, lp.values):
        if v <= INTEGRALITY_TOL:
            continue
        for pf in col.usage:
            per = usage.setdefault(pf, {})
            per[col.vehicle] = per.get(col.vehicle, 0.0) + float(v)
    return usage


def find_conflict(lp: LpSolution, columns: Sequence[Column], inst: Instance) -> Optional[Tuple[int, int]]:
    """Binding (period, charger) pair shared by fractionally scheduled vehicles.

    Returns None for an integral solution. Among the conflicts the one with the
    most fractional participating column wins, then the one with more
    fractional columns, more energy recharged, the faster charger and the
    lowest vehicle index.
    """
    if lp.is_integral():
        return None
    frac = set(lp.fractional())
    candidates = []
    for (p, f), per in _vehicle_usage(lp, columns).items():
        if sum(per.values()) < inst.chargers[f].capacity - INTEGRALITY_TOL:
            continue
        if not any(INTEGRALITY_TOL < y < 1 - INTEGRALITY_TOL for y in per.values()):
            continue
        parts = [i for i in frac if columns[i].uses(p, f)]
        closest = min(abs(float(lp.values[i]) - 0.5) for i in parts)
        energy = sum(float(lp.values[i]) * columns[i].schedule.energy[p] for i in parts)
        speed = inst.chargers[f].phi.average_rate
        key = (closest, -len(parts), -energy, -speed, min(per), p, f)
        candidates.append((key, (p, f)))
    if not candidates:
        raise BranchingError("fractional master solution without a binding capacity conflict")
    return min(candidates)[1]


def branch(node: BnpNode, conflict: Tuple[int, int], lp: LpSolution, columns: Sequence[Column],
           first_index: int = 0) -> List[BnpNode]:
    """One child per vehicle using the conflict pair; each child forbids it for that vehicle."""
    p, f = conflict
    vehicles = sorted({c.vehicle for c, v in zip(columns, lp.values) if v > INTEGRALITY_TOL and c.uses(p, f)})
    children = []
    for i, k in enumerate(vehicles):
        kept = [c for c in columns if not (c.vehicle == k and c.uses(p, f))]
        children.append(BnpNode(node.forbidden | {(k, p, f)}, kept, node.bound, node.depth + 1,
                                first_index + i, branch_vehicle=k))
    return children


def select_node(queue: Sequence[BnpNode], has_incumbent: bool) -> BnpNode:
    if not has_incumbent:
        return min(queue, key=lambda n: (-n.depth, -1 if n.branch_vehicle is None else n.branch_vehicle, n.index))
    return min(queue, key=lambda n: (n.bound, -n.depth, n.index))


def _ranks(scores: Sequence[float]) -> List[float]:
    """Rank in [0, 1]; the largest score gets 1. Ties share the lower rank."""
    m = len(scores)
    if m <= 1:
        return [1.0] * m
    order = sorted(range(m), key=lambda i: scores[i])
    ranks = [0.0] * m
    for pos, i in enumerate(order):
        if pos and scores[order[pos - 1]] == scores[i]:
            ranks[i] = ranks[order[pos - 1]]
        else:
            ranks[i] = pos / (m - 1)
    return ranks


def build_pool(columns: Sequence[Column], inst: Instance, size: int, alpha: float) -> List[int]:
    """Greedy candidate set mixing cheap and mutually distant charger allocations."""
    if not columns:
        return []
    r_q = _ranks([-c.cost for c in columns])
    mats = [c.schedule.charger_allocation(inst).astype(np.int16) for c in columns]
    chosen: List[int] = []
    rest = list(range(len(columns)))
    while rest and len(chosen) < size:
        if chosen:
            dist = [float(np.mean([np.abs(mats[i] - mats[j]).sum() for j in chosen])) for i in rest]
            r_d = _ranks(dist)
        else:
            r_d = [0.0] * len(rest)
        scores = [alpha * r_q[i] + (1 - alpha) * r_d[pos] for pos, i in enumerate(rest)]
        best = max(range(len(rest)), key=lambda pos: (scores[pos], -rest[pos]))
        chosen.append(rest.pop(best))
    return chosen


def diving_heuristic(node: BnpNode, inst: Instance, config: SolverConfig,
                     generator: ColumnGenerator) -> Optional[Incumbent]:
    """Depth-first dive fixing one column to one per level, chosen by strong branching."""
    rmp = RestrictedMaster(inst, node.columns)
    generator.set_forbidden(node.forbidden)
    lp = node.lp if node.lp is not None else solve_lp(rmp)
    while True:
        if not lp.feasible:
            return None
        if lp.is_integral():
            chosen = [rmp.columns[i] for i, v in enumerate(lp.values) if v >= 1 - INTEGRALITY_TOL]
            return Incumbent.from_columns(inst, chosen)
        open_vehicles = sorted({rmp.columns[i].vehicle for i in lp.fractional()} - set(rmp.fixed))
        candidates: List[int] = []
        for k in open_vehicles:
            idx = rmp.columns_of(k)
            pool = build_pool([rmp.columns[i] for i in idx], inst, config.dive_pool, config.dive_alpha)
            candidates.extend(idx[j] for j in pool)
        best, best_bound = None, math.inf
        for j in candidates:
            trial = solve_lp(rmp, {rmp.columns[j].vehicle: j})
            if trial.feasible and trial.objective < best_bound - PRUNE_TOL:
                best, best_bound = j, trial.objective
        if best is None:
            return None
        rmp.fix(best)
        logger.debug("dive: fixed column %d of vehicle %d, bound %.6f", best, rmp.columns[best].vehicle, best_bound)
        lp = generator.run(rmp, skip=frozenset(rmp.fixed)).lp


def _prunable(bound: float, incumbent: Optional[Incumbent], gap: float) -> bool:
    return incumbent is not None and bound >= incumbent.objective * (1 - gap) - PRUNE_TOL


def solve(inst: Instance, config: Optional[SolverConfig] = None, trace=None) -> SolveResult:
    """Branch-and-price over the fleet; stops at the relative gap, the time limit or an exhausted tree."""
    config = config or SolverConfig()
    if trace is None and config.trace_path:
        with open(config.trace_path, 'w', encoding='utf-8') as fh:
            return solve(inst, config.with_options(trace_path=None), fh)
    start = time.monotonic()
    generator = ColumnGenerator(inst, config, start + config.time_limit, trace)
    queue: List[BnpNode] = [BnpNode()]
    created = 1
    incumbent: Optional[Incumbent] = None
    floor = math.inf
    nodes = 0
    status = STATUS_OPTIMAL
    current: Optional[BnpNode] = None
    try:
        while queue:
            current = select_node(queue, incumbent is not None)
            queue.remove(current)
            node = current
            if _prunable(node.bound, incumbent, config.gap):
                floor = min(floor, node.bound)
                continue
            nodes += 1
            generator.set_forbidden(node.forbidden)
            rmp = RestrictedMaster(inst, node.columns)
            cg = generator.run(rmp)
            node.columns = cg.columns
            node.lp = cg.lp
            if cg.infeasible:
                logger.info("node %d (depth %d) infeasible", node.index, node.depth)
                continue
            node.bound = max(node.bound, cg.bound)
            logger.info("node %d depth %d bound %.6f incumbent %s", node.index, node.depth, node.bound,
                        f"{incumbent.objective:.6f}" if incumbent else '-')
            if _prunable(node.bound, incumbent, config.gap):
                floor = min(floor, node.bound)
                continue
            if cg.lp.is_integral():
                chosen = [c for c, v in zip(cg.columns, cg.lp.values) if v >= 1 - INTEGRALITY_TOL]
                found = Incumbent.from_columns(inst, chosen)
                if incumbent is None or found.objective < incumbent.objective:
                    incumbent = found
                    logger.info("new incumbent %.6f at node %d", found.objective, node.index)
                continue
            if config.heuristic and (incumbent is None or nodes % max(1, inst.fleet_size) == 0):
                found = diving_heuristic(node, inst, config, generator)
                if found is not None and (incumbent is None or found.objective < incumbent.objective - PRUNE_TOL):
                    incumbent = found
                    logger.info("dive found incumbent %.6f at node %d", found.objective, node.index)
                if _prunable(node.bound, incumbent, config.gap):
                    floor = min(floor, node.bound)
                    continue
            conflict = find_conflict(cg.lp, cg.columns, inst)
            children = branch(node, conflict, cg.lp, cg.columns, created)
            created += len(children)
            logger.debug("branching on period %d, charger %d: %d children", conflict[0], conflict[1], len(children))
            queue.extend(children)
            current = None
        current = None
    except TimeLimitReached:
        status = STATUS_TIME_LIMIT
        logger.warning("time limit of %.1f s reached after %d nodes", config.time_limit, nodes)

    open_bounds = [n.bound for n in queue] + ([current.bound] if current is not None else [])
    if status == STATUS_OPTIMAL and incumbent is None:
        status = STATUS_INFEASIBLE
    objective = incumbent.objective if incumbent else None
    candidates = open_bounds + [floor]
    if objective is not None:
        candidates.append(objective)
    bound = min(candidates) if candidates else None
    if bound is not None and math.isinf(bound):
        bound = None
    gap = relative_gap(objective, bound)
    stats = SolveStats(status, objective, bound, gap, nodes, generator.iterations, generator.generated,
                       int((time.monotonic() - start) * 1000))
    logger.info("solve finished: %s", stats.to_dict())
    return SolveResult(status, incumbent, bound, gap, stats)
