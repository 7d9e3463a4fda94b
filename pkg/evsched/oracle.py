"""Brute-force dynamic program over a discretised SoC grid, for tiny instances.

Charge amounts end on grid points, or reach the full-period charge exactly
when starting from a grid point. The result is the exact optimum of that
restricted problem and therefore an upper bound on the true optimum.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Iterator, List, Optional, Tuple

from evsched.errors import OracleLimitError
from evsched.models.instance import Instance
from evsched.models.schedule import VehicleSchedule, validate_fleet

logger = logging.getLogger(__name__)

DEFAULT_GRID = 64
DEFAULT_STATE_LIMIT = 2_000_000
KEY_DIGITS = 9

# (soc, served bitset, return period or -1)
Local = Tuple[float, int, int]
# None, ('charge', charger, amount) or ('serve', operation)
Action = Optional[tuple]


@dataclass
class OracleResult:
    objective: Optional[float]
    schedules: List[VehicleSchedule] = field(default_factory=list)
    states: int = 0
    delta_q: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.objective is not None

    def to_dict(self, inst: Instance) -> dict:
        return {'instance': inst.name, 'status': 'optimal' if self.feasible else 'infeasible',
                'objective': self.objective, 'delta_q': self.delta_q, 'states': self.states,
                'schedules': [s.to_dict(inst) for s in self.schedules]}


def lipschitz_tolerance(inst: Instance, delta_q: float) -> float:
    """Largest cost gap the SoC grid can introduce."""
    return (max(inst.prices) + inst.wdf.max_density) * inst.fleet_size * delta_q


class _Moves:
    """Single-vehicle transitions of one period."""

    def __init__(self, inst: Instance, vehicle: int, delta_q: float):
        self.inst = inst
        self.vehicle = vehicle
        self.ops = inst.vehicles[vehicle].operations
        self.full = (1 << len(self.ops)) - 1
        self.delta_q = delta_q
        bat = inst.battery
        steps = int(round((bat.q_max - bat.q_min) / delta_q))
        self.grid = [bat.q_min + j * delta_q for j in range(steps + 1)]

    def on_grid(self, s: float) -> bool:
        j = (s - self.inst.battery.q_min) / self.delta_q
        return abs(j - round(j)) < 1e-7

    def targets(self, s: float, f: int) -> List[float]:
        inst = self.inst
        hi = min(inst.chargers[f].phi.charge(s, inst.delta_p), inst.battery.q_max)
        out = [g for g in self.grid if s + 1e-9 < g <= hi + 1e-9]
        if hi > s + 1e-9 and self.on_grid(s) and not self.on_grid(hi):
            out.append(hi)
        return out

    def dead(self, i: int, served: int) -> bool:
        return any(not served >> o & 1 and op.latest < i for o, op in enumerate(self.ops))

    def moves(self, i: int, state: Local, allowed: Callable[[int], bool]) -> Iterator[Tuple[Action, float, Local]]:
        inst = self.inst
        s, served, ret = state
        if ret > i:
            yield None, 0.0, state
            return
        yield None, 0.0, state
        bat = inst.battery
        for o, op in enumerate(self.ops):
            if served >> o & 1 or not op.earliest <= i <= op.latest or i + op.duration > inst.n_periods:
                continue
            if s - op.consumption >= bat.q_min - 1e-9:
                after = round(max(s - op.consumption, bat.q_min), KEY_DIGITS)
                yield ('serve', o), 0.0, (after, served | 1 << o, i + op.duration)
        if ret == i:
            return
        price = inst.prices[i]
        for f in range(len(inst.chargers)):
            if not allowed(f):
                continue
            for t in self.targets(s, f):
                cost = price * (t - s) + inst.wdf.cost(s, t)
                yield ('charge', f, t - s), cost, (round(t, KEY_DIGITS), served, ret)


def _advance(state: Local, i: int) -> Local:
    s, served, ret = state
    return (s, served, ret if ret >= i + 1 else -1)


class _VehicleDP:
    """Exact single-vehicle optimum from any state, with an optional charger mask."""

    def __init__(self, moves: _Moves, blocked: Optional[Dict[int, set]] = None):
        self.m = moves
        self.n = moves.inst.n_periods
        self.blocked = blocked or {}
        self.value = lru_cache(maxsize=None)(self._value)

    def _allowed(self, i: int) -> Callable[[int], bool]:
        taken = self.blocked.get(i, ())
        return lambda f: f not in taken

    def _value(self, i: int, state: Local) -> float:
        m = self.m
        if i == self.n:
            return 0.0 if state[1] == m.full else math.inf
        if m.dead(i, state[1]):
            return math.inf
        best = math.inf
        for _, cost, nxt in m.moves(i, state, self._allowed(i)):
            v = cost + self.value(i + 1, _advance(nxt, i))
            if v < best:
                best = v
        return best

    def path(self, state: Local) -> Optional[List[Action]]:
        if math.isinf(self.value(0, state)):
            return None
        actions = []
        for i in range(self.n):
            target = self.value(i, state)
            for action, cost, nxt in self.m.moves(i, state, self._allowed(i)):
                nxt = _advance(nxt, i)
                if abs(cost + self.value(i + 1, nxt) - target) <= 1e-9 * max(1.0, abs(target)):
                    actions.append(action)
                    state = nxt
                    break
        return actions


def _schedule(inst: Instance, vehicle: int, actions: List[Action]) -> VehicleSchedule:
    charges, departures = {}, {}
    for i, action in enumerate(actions):
        if action is None:
            continue
        if action[0] == 'charge':
            charges[i] = (action[1], action[2])
        else:
            departures[action[1]] = i
    return VehicleSchedule.build(inst, vehicle, charges, departures).with_cost(inst)


def greedy_upper_bound(inst: Instance, moves: List[_Moves]) -> Tuple[float, Optional[List[List[Action]]]]:
    """Plan the vehicles one after another on the charger capacity left by the previous ones."""
    used: Dict[Tuple[int, int], int] = {}
    plans = []
    total = 0.0
    start = (round(inst.battery.initial, KEY_DIGITS), 0, -1)
    for k, m in enumerate(moves):
        blocked: Dict[int, set] = {}
        for (i, f), u in used.items():
            if u >= inst.chargers[f].capacity:
                blocked.setdefault(i, set()).add(f)
        dp = _VehicleDP(m, blocked)
        actions = dp.path(start)
        if actions is None:
            return math.inf, None
        total += dp.value(0, start)
        for i, a in enumerate(actions):
            if a is not None and a[0] == 'charge':
                used[(i, a[1])] = used.get((i, a[1]), 0) + 1
        plans.append(actions)
    return total, plans


def dp_solve(inst: Instance, grid: int = DEFAULT_GRID, delta_q: Optional[float] = None,
             state_limit: int = DEFAULT_STATE_LIMIT) -> OracleResult:
    """Joint optimum over the SoC grid ``(q_max - q_min) / grid``.

    Vehicles act one after another inside each period so that charger
    capacity can be tracked; partial states are pruned with per-vehicle
    bounds that ignore capacity against a greedy upper bound.
    """
    bat = inst.battery
    if delta_q is None:
        delta_q = (bat.q_max - bat.q_min) / grid
    steps = (bat.q_max - bat.q_min) / delta_q
    if abs(steps - round(steps)) > 1e-7:
        raise ValueError(f"grid step {delta_q} does not divide the battery window")
    n, K = inst.n_periods, inst.fleet_size
    moves = [_Moves(inst, k, delta_q) for k in range(K)]
    relaxed = [_VehicleDP(m) for m in moves]
    start_local = (round(bat.initial, KEY_DIGITS), 0, -1)
    ub, plans = greedy_upper_bound(inst, moves)
    logger.debug("oracle: greedy upper bound %s", ub)
    lb = sum(dp.value(0, start_local) for dp in relaxed)
    if math.isinf(lb):
        return OracleResult(None, [], 0, delta_q)

    start = tuple([start_local] * K)
    layer: Dict[tuple, float] = {start: 0.0}
    back: List[Dict[tuple, Tuple[tuple, Action]]] = []
    states = 1
    for i in range(n):
        partial: Dict[tuple, float] = {(s, (0,) * len(inst.chargers)): c for s, c in layer.items()}
        for k in range(K):
            step: Dict[tuple, float] = {}
            links: Dict[tuple, Tuple[tuple, Action]] = {}
            m = moves[k]
            for (joint, usage), cost in partial.items():
                allowed = (lambda u: lambda f: u[f] < inst.chargers[f].capacity)(usage)
                for action, c, nxt in m.moves(i, joint[k], allowed):
                    nxt = _advance(nxt, i)
                    if m.dead(i + 1, nxt[1]) and i + 1 < n:
                        continue
                    new_joint = joint[:k] + (nxt,) + joint[k + 1:]
                    total = cost + c
                    bound = total
                    for j in range(K):
                        bound += relaxed[j].value(i + 1, new_joint[j]) if j <= k else relaxed[j].value(i, new_joint[j])
                    if bound > ub + 1e-9:
                        continue
                    new_usage = usage
                    if action is not None and action[0] == 'charge':
                        new_usage = usage[:action[1]] + (usage[action[1]] + 1,) + usage[action[1] + 1:]
                    key = (new_joint, new_usage)
                    if total < step.get(key, math.inf) - 1e-12:
                        step[key] = total
                        links[key] = ((joint, usage), action)
            states += len(step)
            if len(step) > state_limit or states > 10 * state_limit:
                raise OracleLimitError(f"oracle state space exceeds {state_limit} states in period {i}")
            partial = step
            back.append(links)
        # charger usage resets with the period; keep the cheapest usage per joint state
        layer = {}
        collapse: Dict[tuple, Tuple[tuple, Action]] = {}
        for (joint, usage), cost in partial.items():
            if cost < layer.get(joint, math.inf):
                layer[joint] = cost
                collapse[joint] = ((joint, usage), None)
        back.append(collapse)

    finals = [(c, j) for j, c in layer.items() if all(loc[1] == moves[k].full for k, loc in enumerate(j))]
    if not finals:
        return OracleResult(None, [], states, delta_q)
    objective, joint = min(finals, key=lambda t: (t[0], t[1]))
    actions: List[List[Action]] = [[None] * n for _ in range(K)]
    key: tuple = joint
    pos = len(back) - 1
    for i in range(n - 1, -1, -1):
        key = back[pos][key][0]
        pos -= 1
        for k in range(K - 1, -1, -1):
            prev, action = back[pos][key]
            actions[k][i] = action
            key = prev
            pos -= 1
        key = key[0]
    schedules = [_schedule(inst, k, actions[k]) for k in range(K)]
    report = validate_fleet(schedules, inst)
    if not report.ok:
        logger.warning("oracle schedule fails validation: %s", report.kinds())
    logger.info("oracle: objective %.6f over %d states (greedy bound %.6f)", objective, states, ub)
    return OracleResult(objective, schedules, states, delta_q)
