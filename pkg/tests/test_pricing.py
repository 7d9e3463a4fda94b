import math

import numpy as np
import pytest

from conftest import WORKED_FORBIDDEN
from evsched.errors import PricingLimitError
from evsched.models.schedule import DualPrices, schedule_cost
from evsched.network import ArcKind, build_network
from evsched.pricing import (Label, PricingOptions, dominates_pairwise, dominates_set, expand_charging, potential,
                             price_vehicle, propagate_intermediate, propagate_regular, propagate_replace,
                             solve_pricing)
from evsched.profile import CostProfile


def _arc(net, tail, head, kind=None):
    for i in net.out_arcs[tail]:
        a = net.arcs[i]
        if a.head == head and (kind is None or a.kind is kind):
            return a
    raise AssertionError(f"no arc {tail} -> {head}")


def _points(label):
    return [(pytest.approx(c), pytest.approx(q)) for c, q in label.profile.breakpoints]


def _key(label):
    return tuple(round(v, 6) for bp in label.profile.breakpoints for v in bp)


@pytest.fixture()
def worked_net(worked_example, worked_duals):
    net = build_network(worked_example(), 0)
    net.set_forbidden(WORKED_FORBIDDEN)
    net.set_duals(worked_duals)
    return net


@pytest.fixture()
def chain(worked_net):
    """Labels along source -> (0,f) -> g1 -> g2 -> (3,g) of the worked example."""
    net = worked_net
    source = Label(CostProfile.single(0.0, 0.0), 0, net.source)
    at_f0 = propagate_regular(source, _arc(net, net.source, net.station(0, 0)), net)
    at_g1 = propagate_replace(at_f0, _arc(net, net.station(0, 0), net.garage(1)), 2.0, net)
    at_g2 = propagate_regular(at_g1, _arc(net, net.garage(1), net.garage(2), ArcKind.SERVICE), net)
    at_g3 = propagate_regular(at_g2, _arc(net, net.garage(2), net.station(3, 1)), net)
    return {'f0': at_f0, 'g1': at_g1, 'g2': at_g2, 'g3': at_g3,
            'arc': _arc(net, net.station(3, 1), net.garage(4))}


L1 = [(6.5, 0.0), (9.0, 2.0), (12.9, 4.0)]
L2 = [(12.9, 4.0), (14.75, 4.5), (19.15, 5.5)]
L3 = [(8.0, 0.5), (9.875, 2.0), (14.75, 4.5)]
L4 = [(11.7, 1.5), (12.325, 2.0), (19.15, 5.5)]


def test_source_arc_adds_fixed_cost(chain):
    assert _points(chain['f0']) == [(2.0, 0.0)]


def test_replacement_from_single_point(chain):
    assert _points(chain['g1']) == [(2.0, 0.0), (8.0, 2.0), (11.7, 3.0)]
    assert chain['g1'].served == 0


def test_service_arc_cuts_below_minimum(chain):
    assert _points(chain['g2']) == [(6.5, 0.0), (8.0, 0.5), (11.7, 1.5)]
    assert chain['g2'].served == 1
    assert _points(chain['g3']) == _points(chain['g2'])


@pytest.mark.parametrize('c_prime, expected', [(6.5, L1), (8.0, L3), (11.7, L4)])
def test_replacement_at_each_breakpoint(worked_net, chain, c_prime, expected):
    label = propagate_replace(chain['g3'], chain['arc'], c_prime, worked_net)
    assert _points(label) == [(pytest.approx(c), pytest.approx(q)) for c, q in expected]
    assert label.vertex == worked_net.garage(4)


def test_replacement_left_of_profile_rejected(worked_net, chain):
    with pytest.raises(ValueError):
        propagate_replace(chain['g3'], chain['arc'], 5.0, worked_net)


def test_intermediate_charging(worked_net, chain):
    label = propagate_intermediate(chain['g3'], chain['arc'], 4.0, worked_net)
    assert _points(label) == [(pytest.approx(c), pytest.approx(q)) for c, q in L2]


def test_expand_charging_keeps_two_labels(worked_net, chain):
    out = expand_charging(chain['g3'], chain['arc'], [], worked_net, remaining=None)
    assert {_key(l) for l in out} == {
        tuple(round(v, 6) for bp in L1 for v in bp),
        tuple(round(v, 6) for bp in L2 for v in bp),
    }


def test_expand_charging_pairwise_keeps_set_dominated_label(worked_net, chain):
    out = expand_charging(chain['g3'], chain['arc'], [], worked_net, PricingOptions(dominance='pairwise'))
    assert len(out) == 4
    off = expand_charging(chain['g3'], chain['arc'], [], worked_net, PricingOptions(dominance='off'))
    assert len(off) == 5


def test_capped_intermediate_is_dominated(worked_net, chain):
    capped = propagate_intermediate(chain['g3'], chain['arc'], 4.0, worked_net, remaining=3.5)
    assert _points(capped) == [(pytest.approx(12.9), pytest.approx(3.5))]
    l1 = propagate_replace(chain['g3'], chain['arc'], 6.5, worked_net)
    assert dominates_pairwise(l1, capped)
    out = expand_charging(chain['g3'], chain['arc'], [], worked_net, remaining=3.5)
    assert all(_key(l) != _key(capped) for l in out)


def test_dominance_needs_served_superset(chain):
    richer = Label(CostProfile.from_breakpoints([(0.0, 7.0)]), 0, chain['g3'].vertex)
    assert not dominates_pairwise(richer, chain['g3'])
    assert not dominates_set([richer], chain['g3'])
    richer.served = 1
    assert dominates_pairwise(richer, chain['g3'])


def test_set_dominance_checks_crossings():
    # the envelope of the two crossing lines dips below the straight profile
    a = Label(CostProfile.from_breakpoints([(0.0, 0.0), (10.0, 10.0)]), 0, 1)
    b = Label(CostProfile.from_breakpoints([(0.0, 5.0), (10.0, 5.5)]), 0, 1)
    flat = Label(CostProfile.from_breakpoints([(0.0, 4.0), (10.0, 9.0)]), 0, 1)
    assert not dominates_set([a, b], flat)
    low = Label(CostProfile.from_breakpoints([(0.0, 4.0), (10.0, 5.0)]), 0, 1)
    assert dominates_set([a, b], low)


def test_set_dominance_ignores_members_starting_at_interval_end():
    slow = Label(CostProfile.from_breakpoints([(0.0, 0.0), (50.0, 5.0)]), 0, 1)
    late = Label(CostProfile.from_breakpoints([(5.0, 5.0), (35.0, 8.0)]), 0, 1)
    fast = Label(CostProfile.from_breakpoints([(0.0, 0.0), (5.0, 5.0)]), 0, 1)
    # at c=2.5 only slow is active and reaches 0.25 against 2.5
    assert not dominates_set([slow, late], fast)
    assert not dominates_set([late, slow], fast)
    steady = Label(CostProfile.from_breakpoints([(0.0, 0.0), (35.0, 7.0)]), 0, 1)
    assert not dominates_pairwise(fast, steady)
    assert not dominates_pairwise(late, steady)
    assert dominates_set([fast, late], steady)


def _sampled_decisions(label, arc, net, draws, seed):
    """Random replacement, partial intermediate and regular decisions stay covered by the enumerated batch."""
    rng = np.random.default_rng(seed)
    bat = net.inst.battery
    batch = expand_charging(label, arc, [], net, PricingOptions(dominance='off'), remaining=None)
    regular = propagate_regular(label, arc, net)
    sampled = [] if regular is None else [('regular', 0.0, regular)]
    Z = label.profile
    for c in rng.uniform(Z.c_min, Z.c_max, draws):
        sampled.append(('replace', float(c), propagate_replace(label, arc, float(c), net)))
    # tau in (0, delta_p]
    for tau in net.inst.delta_p - rng.uniform(0.0, net.inst.delta_p, draws):
        sampled.append(('intermediate', float(tau), propagate_intermediate(label, arc, float(tau), net)))
    for mode, value, s in sampled:
        assert s.profile.is_valid(bat.q_min, bat.q_max), f"{mode} at {value} gives {s.profile}"
        assert dominates_set(batch, s), f"{mode} at {value} escapes the batch"


def test_enumerated_decisions_cover_any_decision(worked_net, chain):
    _sampled_decisions(chain['g3'], chain['arc'], worked_net, 500, seed=11)


def test_enumerated_decisions_cover_any_decision_on_counterexample(counterexample):
    net = build_network(counterexample, 0)
    net.set_duals(DualPrices.zeros(counterexample))
    label = Label(CostProfile.from_breakpoints([(0.0, 0.0), (50.0, 5.0)]), 0, net.station(1, 0))
    arc = _arc(net, net.station(1, 0), net.garage(2))
    _sampled_decisions(label, arc, net, 500, seed=12)


@pytest.mark.parametrize('sink_consumption, cost, first, second', [
    (3.5, 11.925, 1.5, 3.5),
    (4.25, 13.825, 1.75, 4.0),
])
def test_worked_example_pricing(worked_example, worked_duals, sink_consumption, cost, first, second):
    inst = worked_example(sink_consumption)
    net = build_network(inst, 0)
    net.set_forbidden(WORKED_FORBIDDEN)
    net.set_duals(worked_duals)
    result = price_vehicle(net, PricingOptions(stop_at_nonnegative=False))
    assert result.cost == pytest.approx(cost)
    s = result.schedule
    assert s.charging == (0, None, None, 1, None)
    assert s.energy[0] == pytest.approx(first)
    assert s.energy[3] == pytest.approx(second)
    assert s.departures == ((0, 1), (1, 4))
    assert schedule_cost(s, inst) == pytest.approx(cost - 2.0)


def test_solve_pricing_returns_negative_column(worked_example):
    inst = worked_example()
    net = build_network(inst, 0)
    duals = DualPrices(np.zeros((5, 2)), np.array([20.0]))
    col = solve_pricing(net, inst, 0, duals, WORKED_FORBIDDEN)
    assert col is not None
    assert col.cost == pytest.approx(9.925)
    assert col.usage == frozenset({(0, 0), (3, 1)})
    assert solve_pricing(net, inst, 0, DualPrices.zeros(inst), WORKED_FORBIDDEN) is None


def test_solve_pricing_rejects_foreign_network(worked_example):
    inst = worked_example()
    net = build_network(inst, 0)
    with pytest.raises(ValueError):
        solve_pricing(net, worked_example(), 0)


@pytest.mark.parametrize('intermediate, cost', [(True, 35.0), (False, 53.0)])
def test_counterexample_needs_intermediate_charging(counterexample, intermediate, cost):
    net = build_network(counterexample, 0)
    net.set_duals(DualPrices.zeros(counterexample))
    result = price_vehicle(net, PricingOptions(intermediate_charging=intermediate, stop_at_nonnegative=False))
    assert result.cost == pytest.approx(cost)
    if intermediate:
        assert result.schedule.energy[:2] == (pytest.approx(3.0), pytest.approx(5.0))


@pytest.mark.parametrize('dominance', ['set', 'pairwise', 'off'])
@pytest.mark.parametrize('use_potential', [True, False])
def test_pricing_result_independent_of_pruning(worked_example, worked_duals, dominance, use_potential):
    net = build_network(worked_example(4.25), 0)
    net.set_forbidden(WORKED_FORBIDDEN)
    net.set_duals(worked_duals)
    opts = PricingOptions(dominance=dominance, use_potential=use_potential, stop_at_nonnegative=False)
    assert price_vehicle(net, opts).cost == pytest.approx(13.825)


def test_potential_bounds_completion(worked_net, chain):
    for key in ('f0', 'g1', 'g2', 'g3'):
        assert potential(chain[key], worked_net) <= 11.925 + 1e-9
    source = Label(CostProfile.single(0.0, 0.0), 0, worked_net.source)
    assert potential(source, worked_net) <= 11.925 + 1e-9


def test_potential_infinite_without_path(worked_net):
    masked = Label(CostProfile.single(0.0, 0.0), 0, worked_net.station(0, 1))
    assert math.isinf(potential(masked, worked_net))


def test_stop_at_nonnegative(worked_example):
    inst = worked_example()
    net = build_network(inst, 0)
    net.set_duals(DualPrices.zeros(inst))
    result = price_vehicle(net)
    assert result.schedule is None
    assert math.isinf(result.cost)


def test_label_limit(worked_net):
    with pytest.raises(PricingLimitError):
        price_vehicle(worked_net, PricingOptions(label_limit=1, stop_at_nonnegative=False))


def test_trace_lines(worked_net, tmp_path):
    path = tmp_path / 'trace.jsonl'
    with open(path, 'w') as fh:
        price_vehicle(worked_net, PricingOptions(stop_at_nonnegative=False, trace=fh))
    lines = path.read_text().splitlines()
    assert lines
    assert '"vertex": "source"' in lines[0]


def test_profile_shift_and_cut():
    Z = CostProfile.from_breakpoints([(2.0, 0.0), (8.0, 2.0), (11.7, 3.0)])
    cut = Z.shift_and_cut(0.0, 1.5, 0.0, 7.0)
    assert cut.breakpoints == [(6.5, 0.0), (8.0, pytest.approx(0.5)), (11.7, pytest.approx(1.5))]
    assert Z.shift_and_cut(1.0, 3.5, 0.0, 7.0) is None
    # a negative drop lifts the profile into the battery limit
    assert Z.shift_and_cut(1.0, -5.0, 0.0, 7.0).breakpoints == [(3.0, 5.0), (9.0, 7.0)]


def test_profile_truncated_and_from_points():
    Z = CostProfile.from_breakpoints([(12.9, 4.0), (14.75, 4.5), (19.15, 5.5)])
    assert Z.truncated(3.5).breakpoints == [(12.9, 3.5)]
    assert Z.truncated(5.0).breakpoints == [(12.9, 4.0), (14.75, 4.5), (pytest.approx(16.95), 5.0)]
    assert Z.truncated(6.0) is Z
    hull = CostProfile.from_points([(0.0, 0.0), (1.0, 0.2), (2.0, 2.0), (3.0, 2.0)])
    assert hull.breakpoints == [(0.0, 0.0), (2.0, 2.0)]
    assert Z.value(12.9 - 1e-9) == 4.0
    assert Z(12.0) == -math.inf
