import numpy as np
import pytest

from evsched import create_app, db
from evsched.models.instance import Instance
from evsched.models.schedule import DualPrices


def instance_dict(prices, vehicles, chargers, q_max, wdf, delta_p, initial=0.0, name=None):
    """Instance JSON from compact tuples.

    ``vehicles`` maps a vehicle id to ``(op id, consumption, duration, earliest, latest)`` tuples,
    ``chargers`` holds ``(id, capacity, phi points)``.
    """
    data = {
        'delta_p': delta_p,
        'prices': list(prices),
        'chargers': [{'id': cid, 'capacity': cap, 'phi': [list(p) for p in phi]} for cid, cap, phi in chargers],
        'vehicles': [{'id': vid, 'operations': [
            {'id': o, 'consumption': q, 'duration': d, 'earliest': e, 'latest': l} for o, q, d, e, l in ops]}
            for vid, ops in vehicles.items()],
        'battery': {'q_min': 0.0, 'q_max': q_max, 'initial': initial},
        'wdf': [list(p) for p in wdf],
    }
    if name:
        data['name'] = name
    return data


def worked_example_dict(sink_consumption=3.5):
    """Five periods of four minutes, a slow charger f and a fast charger g."""
    return instance_dict(
        prices=[2.5, 1.0, 1.0, 0.75, 1.0],
        vehicles={'v': [('o1', 1.5, 1, 1, 1), ('o2', sink_consumption, 1, 4, 4)]},
        chargers=[('f', 1, [(0, 0), (28 / 3, 7)]), ('g', 1, [(0, 0), (7, 7)])],
        q_max=7.0, wdf=[(0, 0), (2, 1), (7, 7)], delta_p=4.0, name='worked-example')


@pytest.fixture()
def worked_example():
    def build(sink_consumption=3.5):
        return Instance.from_dict(worked_example_dict(sink_consumption))
    return build


@pytest.fixture()
def worked_duals():
    """Convexity dual of -2 turns into a fixed cost of 2 on the source arcs."""
    return DualPrices(np.zeros((5, 2)), np.array([-2.0]))


# (period, charger) pairs masked in the worked example: g in period 0, f in period 3
WORKED_FORBIDDEN = [(0, 1), (3, 0)]


@pytest.fixture()
def counterexample():
    """Two cheap-vs-expensive periods where the optimum charges off a profile breakpoint."""
    return Instance.from_dict(instance_dict(
        prices=[10.0, 1.0, 1.0],
        vehicles={'v': [('o', 8.0, 1, 2, 2)]},
        chargers=[('c', 1, [(0, 0), (8, 8)])],
        q_max=8.0, wdf=[(0, 0), (8, 0)], delta_p=5.0, name='counterexample'))


@pytest.fixture()
def contention():
    """Two vehicles competing for the only charger slot in the cheapest period."""
    return Instance.from_dict(instance_dict(
        prices=[1.0, 2.0, 3.0, 1.0],
        vehicles={'a': [('a1', 5.0, 1, 2, 3)], 'b': [('b1', 5.0, 1, 2, 3)]},
        chargers=[('c', 1, [(0, 0), (10, 10)])],
        q_max=10.0, wdf=[(0, 0), (10, 1)], delta_p=10.0, name='contention'))


def tiny_instance_dict(seed):
    """Random instance with at most two vehicles, eight periods and one charger."""
    rng = np.random.default_rng(seed)
    n = 8
    vehicles = {}
    for k in range(int(rng.integers(1, 3))):
        ops = []
        start = 1
        for j in range(int(rng.integers(1, 3))):
            d = int(rng.integers(1, 3))
            e = start + int(rng.integers(0, 2))
            l = min(e + int(rng.integers(0, 2)), n - d)
            if e > l:
                break
            ops.append((f"v{k}o{j}", float(rng.choice([2.0, 4.0, 6.0])), d, e, l))
            start = l + d + 1
        vehicles[f"v{k}"] = ops
    prices = [round(float(p), 2) for p in rng.uniform(0.5, 1.0, n)]
    return instance_dict(prices=prices, vehicles=vehicles,
                         chargers=[('c', int(rng.integers(1, 3)), [(0, 0), (20, 6), (40, 8)])],
                         q_max=8.0, wdf=[(0, 0), (4, 0.4), (8, 1.6)], delta_p=20.0, initial=4.0,
                         name=f"tiny-{seed}")


@pytest.fixture()
def tiny_instance():
    def build(seed):
        return Instance.from_dict(tiny_instance_dict(seed))
    return build


@pytest.fixture()
def app():
    app = create_app({
        'TESTING': True,
        'SQLALCHEMY_DATABASE_URI': 'sqlite:///:memory:',
    })
    app.config['SOLVER_DEFAULTS'] = dict(app.config['SOLVER_DEFAULTS'], time_limit=60.0)
    with app.app_context():
        db.create_all()
    yield app
    with app.app_context():
        db.session.remove()
        db.drop_all()


@pytest.fixture()
def client(app):
    return app.test_client()
