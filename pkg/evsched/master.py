"""Restricted master LP and the column-generation loop."""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix

from evsched.config import SolverConfig
from evsched.errors import LpError, TimeLimitReached
from evsched.models.instance import Instance
from evsched.models.schedule import Column, DualPrices
from evsched.network import PricingNetwork, build_network
from evsched.pricing import PricingOptions, solve_pricing
from evsched.profile import StationCosts

logger = logging.getLogger(__name__)

INTEGRALITY_TOL = 1e-6
ARTIFICIAL_TOL = 1e-6


def big_m(inst: Instance) -> float:
    """Cost of an artificial column; exceeds the cost of any real schedule."""
    bat = inst.battery
    energy = sum(v.total_consumption + bat.q_max - bat.q_min for v in inst.vehicles)
    p_max = max(abs(p) for p in inst.prices)
    return 10.0 * energy * (p_max + inst.wdf.max_density) + 1.0


class RestrictedMaster:
    """Columns per vehicle plus one artificial column per convexity row."""

    def __init__(self, inst: Instance, columns: Iterable[Column] = (), penalty: Optional[float] = None):
        self.inst = inst
        self.penalty = big_m(inst) if penalty is None else penalty
        self.columns: List[Column] = []
        self._keys: Set[tuple] = set()
        # vehicle -> column index fixed to one
        self.fixed: Dict[int, int] = {}
        for col in columns:
            self.add_column(col)

    def __len__(self):
        return len(self.columns)

    def add_column(self, col: Column) -> bool:
        key = col.key
        if key in self._keys:
            return False
        self._keys.add(key)
        self.columns.append(col)
        return True

    def columns_of(self, vehicle: int) -> List[int]:
        return [i for i, c in enumerate(self.columns) if c.vehicle == vehicle]

    def remove_where(self, pred: Callable[[Column], bool]) -> int:
        keep = [c for c in self.columns if not pred(c)]
        removed = len(self.columns) - len(keep)
        if removed:
            fixed = {k: self.columns[i] for k, i in self.fixed.items()}
            self.columns = keep
            self._keys = {c.key for c in keep}
            index = {id(c): i for i, c in enumerate(keep)}
            self.fixed = {k: index[id(c)] for k, c in fixed.items() if id(c) in index}
        return removed

    def fix(self, index: int) -> None:
        self.fixed[self.columns[index].vehicle] = index

    def copy(self) -> 'RestrictedMaster':
        other = RestrictedMaster(self.inst, penalty=self.penalty)
        other.columns = list(self.columns)
        other._keys = set(self._keys)
        other.fixed = dict(self.fixed)
        return other


@dataclass
class LpSolution:
    values: np.ndarray
    artificials: np.ndarray
    duals: DualPrices
    objective: float

    @property
    def feasible(self) -> bool:
        return not len(self.artificials) or float(self.artificials.max()) <= ARTIFICIAL_TOL

    def is_integral(self, tol: float = INTEGRALITY_TOL) -> bool:
        v = self.values
        return self.feasible and bool(np.all((v <= tol) | (v >= 1 - tol)))

    def fractional(self, tol: float = INTEGRALITY_TOL) -> List[int]:
        return [i for i, v in enumerate(self.values) if tol < v < 1 - tol]


def solve_lp(rmp: RestrictedMaster, extra_fixed: Optional[Mapping[int, int]] = None) -> LpSolution:
    """Solve the LP relaxation of ``rmp`` with HiGHS dual simplex.

    ``extra_fixed`` adds temporary fixings on top of ``rmp.fixed``.
    """
    inst = rmp.inst
    n_f = len(inst.chargers)
    n_cols = len(rmp.columns)
    n_veh = inst.fleet_size

    rows: Dict[Tuple[int, int], int] = {}
    data, ri, ci = [], [], []
    for j, col in enumerate(rmp.columns):
        for pf in col.usage:
            r = rows.setdefault(pf, len(rows))
            data.append(1.0)
            ri.append(r)
            ci.append(j)
    n_total = n_cols + n_veh
    cost = np.array([c.cost for c in rmp.columns] + [rmp.penalty] * n_veh, dtype=float)

    eq = np.zeros((n_veh, n_total))
    for j, col in enumerate(rmp.columns):
        eq[col.vehicle, j] = 1.0
    eq[np.arange(n_veh), n_cols + np.arange(n_veh)] = 1.0

    bounds = [(0.0, None)] * n_total
    fixed = dict(rmp.fixed)
    fixed.update(extra_fixed or {})
    for j in fixed.values():
        bounds[j] = (1.0, 1.0)

    kwargs = {}
    if rows:
        kwargs['A_ub'] = csr_matrix((data, (ri, ci)), shape=(len(rows), n_total))
        kwargs['b_ub'] = np.array([inst.chargers[f].capacity for (_, f) in rows], dtype=float)
    res = linprog(cost, A_eq=eq, b_eq=np.ones(n_veh), bounds=bounds, method='highs-ds', **kwargs)
    if res.status == 2:
        # only reachable through contradictory fixings
        return LpSolution(np.zeros(n_cols), np.ones(n_veh), DualPrices.zeros(inst), float('inf'))
    if res.status != 0:
        raise LpError(f"master LP failed: {res.message}")

    capacity = np.zeros((inst.n_periods, n_f))
    if rows:
        marg = np.minimum(np.asarray(res.ineqlin.marginals, dtype=float), 0.0)
        for (p, f), r in rows.items():
            capacity[p, f] = marg[r]
    convexity = np.asarray(res.eqlin.marginals, dtype=float)
    x = np.asarray(res.x, dtype=float)
    return LpSolution(x[:n_cols], x[n_cols:], DualPrices(capacity, convexity), float(res.fun))


@dataclass
class CGResult:
    lp: LpSolution
    bound: float
    columns: List[Column]
    iterations: int
    generated: int
    infeasible: bool = False
    full_passes: int = field(default=0)


class ColumnGenerator:
    """Column generation with round-robin partial pricing over the vehicles.

    Pricing networks are built once and reused by every node; each node only
    changes their forbidden stations and duals.
    """

    def __init__(self, inst: Instance, config: Optional[SolverConfig] = None, deadline: Optional[float] = None,
                 trace=None):
        self.inst = inst
        self.config = config or SolverConfig()
        self.deadline = deadline
        costs = StationCosts(inst)
        self.networks: List[PricingNetwork] = [build_network(inst, k, costs) for k in range(inst.fleet_size)]
        self.nu = self.config.nu or inst.min_capacity
        self.options = PricingOptions.from_config(self.config, deadline=deadline, trace=trace)
        self.cursor = 0
        self.iterations = 0
        self.generated = 0

    def _check_time(self) -> None:
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise TimeLimitReached("time limit reached during column generation")

    def set_forbidden(self, forbidden: Iterable[Tuple[int, int, int]]) -> None:
        per_vehicle: Dict[int, List[Tuple[int, int]]] = {}
        for k, p, f in forbidden:
            per_vehicle.setdefault(k, []).append((p, f))
        for net in self.networks:
            net.set_forbidden(per_vehicle.get(net.vehicle, ()))

    def _price_one(self, k: int, duals: DualPrices) -> Optional[Column]:
        return solve_pricing(self.networks[k], self.inst, k, duals, options=self.options)

    def _price_many(self, vehicles: Sequence[int], duals: DualPrices) -> List[Tuple[int, Optional[Column]]]:
        threads = self.config.threads
        if threads > 1 and len(vehicles) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                found = list(pool.map(lambda k: self._price_one(k, duals), vehicles))
            return list(zip(vehicles, found))
        return [(k, self._price_one(k, duals)) for k in vehicles]

    def price(self, rmp: RestrictedMaster, duals: DualPrices, full: bool,
              skip: FrozenSet[int] = frozenset()) -> List[Column]:
        """Price vehicles from the cursor on until ``nu`` columns are found (all vehicles if ``full``)."""
        n = self.inst.fleet_size
        order = [(self.cursor + i) % n for i in range(n)]
        order = [k for k in order if k not in skip]
        added: List[Column] = []
        step = len(order) if full else max(1, self.config.threads)
        for start in range(0, len(order), step):
            self._check_time()
            for k, col in self._price_many(order[start:start + step], duals):
                if col is not None and rmp.add_column(col):
                    added.append(col)
                if not full and len(added) >= self.nu:
                    self.cursor = (k + 1) % n
                    return added
        return added

    def run(self, rmp: RestrictedMaster, skip: FrozenSet[int] = frozenset()) -> CGResult:
        """Solve the master LP to optimality over all columns the pricing can produce."""
        it = 0
        generated = 0
        full_passes = 0
        every = self.config.full_pricing_every
        while True:
            self._check_time()
            lp = solve_lp(rmp)
            it += 1
            full = it % every == 0
            # a partial pass that finds nothing has priced every vehicle
            new = self.price(rmp, lp.duals, full, skip)
            full_passes += full
            generated += len(new)
            logger.debug("cg iteration %d: objective %.6f, %d new columns%s", it, lp.objective, len(new),
                         " (full pass)" if full else "")
            if not new:
                break
        self.iterations += it
        self.generated += generated
        infeasible = not lp.feasible
        logger.info("column generation: bound %.6f after %d iterations, %d columns%s", lp.objective, it,
                    len(rmp.columns), ", infeasible" if infeasible else "")
        return CGResult(lp, lp.objective, list(rmp.columns), it, generated, infeasible, full_passes)


def column_generation(node, inst: Instance, config: Optional[SolverConfig] = None,
                      generator: Optional[ColumnGenerator] = None) -> CGResult:
    """Run column generation at a branch-and-price node.

    ``node`` provides ``forbidden`` triples ``(vehicle, period, charger)`` and
    the inherited ``columns``.
    """
    generator = generator or ColumnGenerator(inst, config)
    generator.set_forbidden(node.forbidden)
    rmp = RestrictedMaster(inst, node.columns)
    return generator.run(rmp)
