import math

import numpy as np
import pytest

from conftest import instance_dict
from evsched.bnp import (STATUS_INFEASIBLE, STATUS_OPTIMAL, STATUS_TIME_LIMIT, BnpNode, Incumbent, branch,
                         build_pool, find_conflict, relative_gap, select_node, solve)
from evsched.config import DOMINANCE_MODES, SolverConfig
from evsched.errors import BranchingError, ScheduleError
from evsched.instgen import generate_family
from evsched.master import ColumnGenerator, LpSolution, column_generation
from evsched.models.instance import Instance
from evsched.models.schedule import Column, DualPrices, VehicleSchedule, validate_fleet


def _column(inst, vehicle, charges, departures):
    return Column.from_schedule(inst, vehicle, VehicleSchedule.build(inst, vehicle, charges, departures))


def _lp(inst, values):
    values = np.asarray(values, dtype=float)
    return LpSolution(values, np.zeros(inst.fleet_size), DualPrices.zeros(inst), 0.0)


@pytest.fixture()
def split_columns(contention):
    inst = contention
    return [_column(inst, 0, {0: (0, 5.0)}, {0: 2}), _column(inst, 1, {0: (0, 5.0)}, {0: 2}),
            _column(inst, 0, {1: (0, 5.0)}, {0: 2}), _column(inst, 1, {1: (0, 5.0)}, {0: 2})]


@pytest.mark.parametrize('intermediate, objective', [(True, 35.0), (False, 53.0)])
def test_solve_counterexample(counterexample, intermediate, objective):
    result = solve(counterexample, SolverConfig(intermediate_charging=intermediate))
    assert result.status == STATUS_OPTIMAL
    assert result.objective == pytest.approx(objective)
    assert validate_fleet(result.incumbent.schedules, counterexample).ok


@pytest.mark.parametrize('heuristic', [True, False])
def test_solve_contention(contention, heuristic):
    result = solve(contention, SolverConfig(gap=0.0, heuristic=heuristic))
    assert result.status == STATUS_OPTIMAL
    assert result.objective == pytest.approx(16.0)
    assert result.bound == pytest.approx(16.0)
    assert result.gap == pytest.approx(0.0, abs=1e-9)
    assert validate_fleet(result.incumbent.schedules, contention).ok
    assert {s.charging for s in result.incumbent.schedules} == {(0, None, None, None), (None, 0, None, None)}
    assert result.stats.nodes >= 1


def test_solution_dict(contention):
    result = solve(contention, SolverConfig(gap=0.0))
    out = result.to_solution(contention)
    assert out['status'] == 'optimal'
    assert out['energy_cost'] + out['degradation_cost'] == pytest.approx(out['objective'])
    assert [s['vehicle'] for s in out['schedules']] == ['a', 'b']


def test_infeasible_instance():
    inst = Instance.from_dict(instance_dict(
        prices=[10.0, 1.0, 1.0], vehicles={'v': [('o', 8.0, 1, 1, 1)]}, chargers=[('c', 1, [(0, 0), (8, 8)])],
        q_max=8.0, wdf=[(0, 0), (8, 0)], delta_p=5.0))
    result = solve(inst)
    assert result.status == STATUS_INFEASIBLE
    assert result.objective is None
    assert result.to_solution(inst)['schedules'] == []


def test_time_limit(contention):
    result = solve(contention, SolverConfig(time_limit=1e-9))
    assert result.status == STATUS_TIME_LIMIT
    assert result.incumbent is None
    assert result.gap is None


def test_trace_file(counterexample, tmp_path):
    path = tmp_path / 'labels.jsonl'
    solve(counterexample, SolverConfig(trace_path=str(path)))
    assert path.read_text().count('\n') >= 1


def test_find_conflict_picks_earliest_tie(contention, split_columns):
    lp = _lp(contention, [0.5, 0.5, 0.5, 0.5])
    assert find_conflict(lp, split_columns, contention) == (0, 0)


def test_find_conflict_none_when_integral(contention, split_columns):
    lp = _lp(contention, [1.0, 0.0, 0.0, 1.0])
    assert find_conflict(lp, split_columns, contention) is None


def test_find_conflict_requires_binding_pair(contention):
    inst = contention
    cols = [_column(inst, 0, {0: (0, 5.0)}, {0: 2}), _column(inst, 0, {1: (0, 5.0)}, {0: 2}),
            _column(inst, 1, {2: (0, 5.0)}, {0: 3})]
    with pytest.raises(BranchingError):
        find_conflict(_lp(inst, [0.5, 0.5, 1.0]), cols, inst)


def test_branch_forbids_pair_per_vehicle(contention, split_columns):
    lp = _lp(contention, [0.5, 0.5, 0.5, 0.5])
    children = branch(BnpNode(bound=12.0), (0, 0), lp, split_columns, first_index=7)
    assert [c.branch_vehicle for c in children] == [0, 1]
    assert children[0].forbidden == frozenset({(0, 0, 0)})
    assert children[1].forbidden == frozenset({(1, 0, 0)})
    assert children[0].columns == [split_columns[1], split_columns[2], split_columns[3]]
    assert [c.index for c in children] == [7, 8]
    assert all(c.depth == 1 and c.bound == 12.0 for c in children)
    assert children[0].forbidden_for(0) == frozenset({(0, 0)})


def test_select_node():
    root = BnpNode(bound=5.0, index=0)
    deep_a = BnpNode(bound=9.0, depth=2, index=1, branch_vehicle=1)
    deep_b = BnpNode(bound=7.0, depth=2, index=2, branch_vehicle=0)
    queue = [root, deep_a, deep_b]
    assert select_node(queue, has_incumbent=False) is deep_b
    assert select_node(queue, has_incumbent=True) is root


def test_relative_gap():
    assert relative_gap(10.0, 9.0) == pytest.approx(0.1)
    assert relative_gap(10.0, 11.0) == 0.0
    assert relative_gap(None, 1.0) is None
    assert relative_gap(0.0, 0.0) == 0.0


def test_build_pool(contention, split_columns):
    cols = [split_columns[0], split_columns[2], _column(contention, 0, {0: (0, 2.5), 1: (0, 2.5)}, {0: 2})]
    assert build_pool(cols, contention, 2, alpha=1.0) == [0, 2]
    # pure diversity keeps the first column and adds the one furthest from it
    assert build_pool(cols, contention, 2, alpha=0.0) == [0, 1]
    assert build_pool([], contention, 3, 0.5) == []
    assert sorted(build_pool(cols, contention, 5, 0.5)) == [0, 1, 2]


def test_incumbent_rejects_capacity_violation(contention, split_columns):
    with pytest.raises(ScheduleError):
        Incumbent.from_columns(contention, [split_columns[0], split_columns[1]])
    inc = Incumbent.from_columns(contention, [split_columns[3], split_columns[0]])
    assert inc.objective == pytest.approx(16.0)
    assert [s.vehicle_id for s in inc.schedules] == ['a', 'b']


@pytest.mark.parametrize('seed', range(20))
def test_pruning_never_changes_objective(tiny_instance, seed):
    inst = tiny_instance(seed)
    outcomes = {}
    for dominance in DOMINANCE_MODES:
        for use_potential in (True, False):
            result = solve(inst, SolverConfig(gap=0.0, dominance=dominance, use_potential=use_potential))
            outcomes[dominance, use_potential] = (result.status, result.objective)
    statuses = {status for status, _ in outcomes.values()}
    assert len(statuses) == 1, outcomes
    objectives = [obj for _, obj in outcomes.values() if obj is not None]
    if objectives:
        assert max(objectives) - min(objectives) <= 1e-6, outcomes


def test_bound_never_drops_along_a_branch(tiny_instance, contention):
    for inst in [contention] + [tiny_instance(seed) for seed in range(20)]:
        generator = ColumnGenerator(inst, SolverConfig())
        stack = [(BnpNode(), -math.inf)]
        while stack:
            node, parent_bound = stack.pop()
            cg = column_generation(node, inst, generator=generator)
            if cg.infeasible:
                continue
            assert cg.bound >= parent_bound - 1e-6
            if node.depth >= 3 or cg.lp.is_integral():
                continue
            conflict = find_conflict(cg.lp, cg.columns, inst)
            stack.extend((child, cg.bound) for child in branch(node, conflict, cg.lp, cg.columns, 1))


@pytest.mark.parametrize('seed', range(4))
def test_small_family_solves_within_ten_seconds(seed):
    inst = generate_family('small', seed)
    result = solve(inst, SolverConfig(time_limit=10.0))
    assert result.status == STATUS_OPTIMAL
    assert result.stats.time_ms < 10_000
    assert validate_fleet(result.incumbent.schedules, inst).ok


def test_repeated_solves_give_same_stats():
    inst = generate_family('small', 1)
    first = solve(inst, SolverConfig(time_limit=60.0)).stats.to_dict()
    second = solve(inst, SolverConfig(time_limit=60.0)).stats.to_dict()
    first.pop('time_ms')
    second.pop('time_ms')
    assert first == second
