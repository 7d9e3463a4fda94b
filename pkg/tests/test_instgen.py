import numpy as np
import pandas as pd
import pytest

from evsched.errors import InvalidInstanceError
from evsched.instgen import (CASESTUDY_FAST, CASESTUDY_PRICE_MEAN, FAMILIES, family_params, generate_benchmark,
                             generate_casestudy, generate_family, random_pwl, read_price_series)


def _ops(inst, vehicle):
    return [op.to_dict() for op in inst.vehicles[vehicle].operations]


def test_same_seed_same_instance():
    a = generate_family('small', seed=3)
    b = generate_family('small', seed=3)
    assert a.to_dict() == b.to_dict()
    assert a.to_dict() != generate_family('small', seed=4).to_dict()
    assert a.name == 'small-s3'
    assert a.metadata['seed'] == 3


def test_small_family_shape():
    inst = generate_family('small', seed=1)
    assert inst.n_periods == 48
    assert inst.fleet_size == 3
    assert [c.id for c in inst.chargers] == ['c0']
    assert inst.chargers[0].phi.q_max == pytest.approx(80.0)
    assert inst.battery.initial == 80.0
    for veh in inst.vehicles:
        assert len(veh.operations) == 3
        for op in veh.operations:
            assert op.consumption == pytest.approx(40.0)
            assert 4 <= op.duration <= 8
            assert 0 <= op.earliest <= op.latest
            assert op.latest - op.earliest <= 6
            assert op.latest + op.duration <= 48
    assert inst.vehicles[0].operations[0].id == 'v0-d0-o0'


def test_extra_day_keeps_first_day():
    one = generate_benchmark(family_params('base', {'fleet_size': 2, 'days': 1}), seed=7)
    two = generate_benchmark(family_params('base', {'fleet_size': 2, 'days': 2}), seed=7)
    assert two.n_periods == 2 * one.n_periods
    assert two.prices[:one.n_periods] == one.prices
    for k in range(2):
        day0 = [op for op in _ops(two, k) if '-d0-' in op['id']]
        assert day0 == _ops(one, k)


def test_extra_charger_keeps_operations():
    one = generate_benchmark(family_params('base', {'fleet_size': 2, 'chargers': 1}), seed=2)
    three = generate_benchmark(family_params('base', {'fleet_size': 2, 'chargers': 3}), seed=2)
    assert [c.capacity for c in three.chargers] == [2, 2, 2]
    assert three.chargers[0].phi.pwl.xs == one.chargers[0].phi.pwl.xs
    assert [_ops(three, k) for k in range(2)] == [_ops(one, k) for k in range(2)]
    assert three.wdf.cumulative.breakpoints == one.wdf.cumulative.breakpoints


@pytest.mark.parametrize('orientation', ['convex', 'concave'])
def test_random_pwl(orientation):
    f = random_pwl(4, 0.2, 1.0, 120.0, orientation, seed=5)
    assert len(f) == 5
    assert f.xs[0] == 0.0 and f.ys[0] == 0.0
    assert f.xs[-1] == pytest.approx(120.0)
    slopes = np.diff(f.ys) / np.diff(f.xs)
    assert np.all(slopes >= 0.2 - 1e-12) and np.all(slopes <= 1.0 + 1e-12)
    steps = np.diff(slopes)
    assert np.all(steps >= -1e-12) if orientation == 'convex' else np.all(steps <= 1e-12)


def test_random_pwl_rejects_bad_arguments():
    with pytest.raises(ValueError):
        random_pwl(0, 0.1, 1.0, 10.0, 'convex')
    with pytest.raises(ValueError):
        random_pwl(2, 1.0, 0.5, 10.0, 'convex')
    with pytest.raises(ValueError):
        random_pwl(2, 0.1, 1.0, 10.0, 'wavy')


def test_family_overrides_are_checked():
    assert family_params('small', {'tw': 2}).tw == 2
    assert FAMILIES['small'].tw == 6
    with pytest.raises(InvalidInstanceError):
        family_params('huge')
    with pytest.raises(InvalidInstanceError):
        family_params('small', {'colour': 1})
    with pytest.raises(InvalidInstanceError):
        family_params('small', {'fleet_size': 2.5})
    with pytest.raises(InvalidInstanceError):
        family_params('small', {'capacity': 0})


def test_casestudy_structure():
    inst = generate_casestudy(seed=0, fleet_size=4, capacity=2)
    fast, slow = inst.chargers
    assert fast.id == 'fast' and fast.capacity == 2
    assert slow.capacity == 4
    assert fast.phi.pwl.breakpoints == [tuple(map(float, p)) for p in CASESTUDY_FAST]
    assert slow.phi.pwl.breakpoints == [(0.0, 0.0), (435.0, 45.0)]
    assert inst.n_periods == 96
    assert inst.battery.q_max == 45.0 and inst.battery.initial == 0.0
    assert float(np.mean(inst.prices)) == pytest.approx(CASESTUDY_PRICE_MEAN)
    assert inst.wdf(45.0) == pytest.approx(7.79)
    for veh in inst.vehicles:
        assert len(veh.operations) == 6
        assert all(op.earliest == op.latest and op.duration == 12 and op.consumption == 15.0
                   for op in veh.operations)


def test_casestudy_flexibility_widens_windows():
    inst = generate_casestudy(seed=0, fleet_size=2, flexibility=2.0)
    widths = [op.latest - op.earliest for veh in inst.vehicles for op in veh.operations]
    assert max(widths) == 4
    assert inst.metadata['flexibility'] == 2.0


def _write_hourly(path, hours, start='2024-03-01 22:00'):
    stamps = pd.date_range(start, periods=hours, freq='h')
    prices = np.linspace(0.1, 0.1 + 0.01 * (hours - 1), hours)
    pd.DataFrame({'timestamp': stamps.strftime('%Y-%m-%d %H:%M'), 'price': prices}).to_csv(path, index=False)
    return prices


def test_price_series_interpolates_to_half_hours(tmp_path):
    path = tmp_path / 'prices.csv'
    prices = _write_hourly(path, 6)
    series = read_price_series(path, 30)
    assert len(series) == 11
    assert series.iloc[0] == pytest.approx(prices[0])
    assert series.iloc[1] == pytest.approx((prices[0] + prices[1]) / 2)
    assert series.iloc[2] == pytest.approx(prices[1])


def test_casestudy_from_csv(tmp_path):
    path = tmp_path / 'prices.csv'
    _write_hourly(path, 50)
    inst = generate_casestudy(path, fleet_size=2, price_mean=0.3)
    assert float(np.mean(inst.prices)) == pytest.approx(0.3)
    # scaling keeps the interpolated midpoints
    assert inst.prices[1] == pytest.approx((inst.prices[0] + inst.prices[2]) / 2)
    with pytest.raises(InvalidInstanceError):
        generate_casestudy(path, fleet_size=2, days=3)


def test_malformed_price_csv(tmp_path):
    path = tmp_path / 'bad.csv'
    path.write_text('when,price\n2024-01-01 00:00,1\n')
    with pytest.raises(InvalidInstanceError):
        read_price_series(path)
    path.write_text('timestamp,price\n2024-01-01 00:00,cheap\n')
    with pytest.raises(InvalidInstanceError):
        read_price_series(path)


def test_generate_family_dispatch(tmp_path):
    inst = generate_family('casestudy', seed=1, overrides={'fleet_size': 2, 'flexibility': 1.0})
    assert inst.fleet_size == 2
    assert inst.name == 'casestudy-s1'
    with pytest.raises(InvalidInstanceError):
        generate_family('casestudy', overrides={'tw': 2})
    with pytest.raises(InvalidInstanceError):
        generate_family('small', prices_csv=tmp_path / 'x.csv')
