"""Seeded instance generation: random benchmark families and the depot case study.

Every random parameter draws from its own PCG64 stream, derived from the
master seed with a fixed spawn key. Adding a day or a charger therefore
leaves the operations generated for the other days and vehicles untouched.
"""
import logging
from dataclasses import asdict, dataclass, fields, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from evsched.battery import ChargingFunction, PiecewiseLinear, WearDensityFunction, charging_function_for, \
    wdf_from_unit_costs
from evsched.errors import InvalidInstanceError
from evsched.models.instance import Battery, Charger, Instance, Operation, Vehicle

logger = logging.getLogger(__name__)

MINUTES_PER_DAY = 24 * 60

# spawn keys of the independent streams
PRICE_STREAM = 1
WDF_STREAM = 2
CHARGER_STREAM = 3
OPERATION_STREAM = 4

CHARGER_MINUTES = (150, 60, 90, 120, 75, 135)

CASESTUDY_FAST = ((0.0, 0.0), (72.32, 34.90), (92.6, 42.49), (120.0, 45.0))
CASESTUDY_SLOW = ((0.0, 0.0), (435.0, 45.0))
CASESTUDY_WDF_LEVELS = (0.25, 0.5, 0.75, 1.0)
CASESTUDY_WDF_COSTS = (1.59, 3.30, 5.20, 7.79)
CASESTUDY_PRICE_MEAN = 0.2127
CASESTUDY_BATTERY_PRICE = 5.406


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def random_pwl(n: int, chi_min: float, chi_max: float, nu: float, orientation: str,
               seed: Optional[int] = None, rng: Optional[np.random.Generator] = None) -> PiecewiseLinear:
    """Random monotone PWL on ``[0, nu]`` with ``n`` segments starting at the origin.

    Each segment gets a random weight, which sets its share of ``nu`` on the
    x axis, and a slope from ``[chi_min, chi_max]``. Slopes are sorted
    ascending for a convex and descending for a concave function.
    """
    if n < 1:
        raise ValueError("random_pwl needs at least one segment")
    if not 0 < chi_min <= chi_max:
        raise ValueError("random_pwl needs 0 < chi_min <= chi_max")
    if nu <= 0:
        raise ValueError("random_pwl needs a positive bound")
    if orientation not in ('convex', 'concave'):
        raise ValueError(f"unknown orientation {orientation!r}")
    if rng is None:
        rng = _rng(0 if seed is None else seed)
    weights = rng.uniform(0.2, 1.0, size=n)
    slopes = np.sort(rng.uniform(chi_min, chi_max, size=n))
    if orientation == 'concave':
        slopes = slopes[::-1]
    spans = nu * weights / weights.sum()
    xs = np.concatenate(([0.0], np.cumsum(spans)))
    xs[-1] = nu
    ys = np.concatenate(([0.0], np.cumsum(spans * slopes)))
    return PiecewiseLinear(zip(xs.tolist(), ys.tolist()))


@dataclass(frozen=True)
class BenchmarkParams:
    fleet_size: int
    days: int
    tw: int
    chargers: int
    capacity: int
    wdf_segments: int
    phi_segments: int
    period_minutes: int = 30
    battery: float = 80.0
    initial_soc: float = 80.0
    ops_per_day: int = 3
    consumption_share: float = 0.5
    price_low: float = 0.5
    price_high: float = 1.0
    min_duration: int = 4
    max_duration: int = 8
    slack: int = 2
    first_slack: int = 4
    wdf_chi_min: float = 0.1
    wdf_chi_max: float = 0.8
    phi_chi_min: float = 0.2
    phi_chi_max: float = 1.0

    def __post_init__(self):
        for name in ('fleet_size', 'days', 'chargers', 'capacity', 'wdf_segments', 'phi_segments',
                     'period_minutes', 'ops_per_day', 'min_duration'):
            if getattr(self, name) < 1:
                raise InvalidInstanceError(f"{name} must be at least 1")
        if self.tw < 0 or self.slack < 0 or self.first_slack < 0:
            raise InvalidInstanceError("window length and slack must be non-negative")
        if self.capacity < self.chargers:
            raise InvalidInstanceError("total capacity must be at least the number of chargers")
        if self.max_duration < self.min_duration:
            raise InvalidInstanceError("max_duration must be at least min_duration")
        if MINUTES_PER_DAY % self.period_minutes:
            raise InvalidInstanceError("period length must divide a day")
        if not 0 < self.consumption_share <= 1:
            raise InvalidInstanceError("consumption_share must lie in (0, 1]")

    @property
    def periods_per_day(self) -> int:
        return MINUTES_PER_DAY // self.period_minutes

    def with_overrides(self, overrides: Optional[Mapping[str, object]] = None) -> 'BenchmarkParams':
        """Copy with ``overrides`` cast to the field types; unknown keys are rejected."""
        if not overrides:
            return self
        types = {f.name: f.type for f in fields(self)}
        unknown = sorted(set(overrides) - set(types))
        if unknown:
            raise InvalidInstanceError(f"unknown generator parameter(s): {', '.join(unknown)}")
        cast = {}
        for key, value in overrides.items():
            kind = int if types[key] in (int, 'int') else float
            if kind is int and float(value) != int(float(value)):
                raise InvalidInstanceError(f"{key} must be an integer, got {value}")
            cast[key] = kind(float(value)) if kind is int else float(value)
        return replace(self, **cast)


FAMILIES: Dict[str, BenchmarkParams] = {
    'small': BenchmarkParams(fleet_size=3, days=1, tw=6, chargers=1, capacity=1, wdf_segments=3, phi_segments=3),
    'base': BenchmarkParams(fleet_size=12, days=2, tw=4, chargers=2, capacity=6, wdf_segments=4, phi_segments=3),
}
FAMILIES['benchmark'] = FAMILIES['base']


def family_params(family: str, overrides: Optional[Mapping[str, object]] = None) -> BenchmarkParams:
    try:
        params = FAMILIES[family]
    except KeyError:
        raise InvalidInstanceError(f"unknown instance family {family!r}; choose from {sorted(FAMILIES)}") from None
    return params.with_overrides(overrides)


def _window(static: int, tw: int, lo: int, hi: int) -> Tuple[int, int]:
    return max(lo, static - tw // 2), min(hi, static + tw - tw // 2)


def _day_operations(rng: np.random.Generator, prefix: str, start: int, length: int, durations: Sequence[int],
                    slacks: Sequence[int], consumption: float, tw: int) -> List[Operation]:
    """Operations of one vehicle-day placed inside ``[start, start + length)``.

    Static departures keep at least the given slack after the previous
    return; the remaining free periods are spread uniformly at random.
    """
    extra = length - sum(durations) - sum(slacks)
    if extra < 0:
        raise InvalidInstanceError(f"{prefix}: operations and slack do not fit into one day")
    cuts = np.sort(rng.integers(0, extra + 1, size=len(durations)))
    gaps = np.diff(np.concatenate(([0], cuts)))
    ops = []
    t = start
    for j, (d, s, g) in enumerate(zip(durations, slacks, gaps)):
        static = t + s + int(g)
        e, l = _window(static, tw, start, start + length - d)
        ops.append(Operation(f"{prefix}-o{j}", consumption, int(d), e, l))
        t = static + d
    return ops


def _split_capacity(total: int, count: int) -> List[int]:
    base, rem = divmod(total, count)
    return [base + (1 if i < rem else 0) for i in range(count)]


def generate_benchmark(params: BenchmarkParams, seed: int = 0, name: Optional[str] = None) -> Instance:
    """Random benchmark instance; pure function of ``(params, seed)``."""
    per_day = params.periods_per_day
    n = per_day * params.days
    delta_p = float(params.period_minutes)
    q_max = params.battery

    prices = np.concatenate([_rng(seed, PRICE_STREAM, day).uniform(params.price_low, params.price_high, per_day)
                             for day in range(params.days)])

    wdf = WearDensityFunction(random_pwl(params.wdf_segments, params.wdf_chi_min, params.wdf_chi_max, q_max,
                                         'convex', rng=_rng(seed, WDF_STREAM)))

    chargers = []
    for i, cap in enumerate(_split_capacity(params.capacity, params.chargers)):
        minutes = CHARGER_MINUTES[i % len(CHARGER_MINUTES)]
        raw = random_pwl(params.phi_segments, params.phi_chi_min, params.phi_chi_max, minutes, 'concave',
                         rng=_rng(seed, CHARGER_STREAM, i))
        scale = q_max / raw.ys[-1]
        phi = ChargingFunction(PiecewiseLinear((x, y * scale) for x, y in zip(raw.xs, raw.ys)))
        chargers.append(Charger(f"c{i}", cap, phi))

    consumption = params.consumption_share * q_max
    slacks = [params.first_slack] + [params.slack] * (params.ops_per_day - 1)
    vehicles = []
    for k in range(params.fleet_size):
        ops: List[Operation] = []
        for day in range(params.days):
            rng = _rng(seed, OPERATION_STREAM, k, day)
            durations = rng.integers(params.min_duration, params.max_duration + 1, size=params.ops_per_day)
            ops.extend(_day_operations(rng, f"v{k}-d{day}", day * per_day, per_day, durations.tolist(), slacks,
                                       consumption, params.tw))
        vehicles.append(Vehicle(f"v{k}", tuple(ops)))

    meta = {'generator': 'benchmark', 'seed': seed, 'params': asdict(params)}
    logger.info("generated benchmark instance: %d vehicles, %d periods, %d chargers (seed %d)",
                params.fleet_size, n, params.chargers, seed)
    return Instance(delta_p=delta_p, prices=tuple(float(p) for p in prices), chargers=tuple(chargers),
                    vehicles=tuple(vehicles), battery=Battery(q_max=q_max, q_min=0.0, initial=params.initial_soc),
                    wdf=wdf, name=name or f"benchmark-s{seed}", metadata=meta)


def read_price_series(path, period_minutes: int = 30) -> pd.Series:
    """Price CSV with ``timestamp,price`` rows, interpolated linearly to the period length."""
    try:
        frame = pd.read_csv(path)
    except (OSError, ValueError) as e:
        raise InvalidInstanceError(f"cannot read price CSV {path}: {e}") from e
    missing = {'timestamp', 'price'} - set(frame.columns)
    if missing:
        raise InvalidInstanceError(f"price CSV lacks column(s) {sorted(missing)}")
    try:
        index = pd.to_datetime(frame['timestamp'])
        values = pd.to_numeric(frame['price'])
    except (ValueError, TypeError) as e:
        raise InvalidInstanceError(f"malformed price CSV: {e}") from e
    series = pd.Series(values.to_numpy(dtype=float), index=index).sort_index()
    series = series[~series.index.duplicated(keep='first')]
    return series.resample(f"{period_minutes}min").mean().interpolate(method='linear')


def _horizon_prices(series: pd.Series, n: int, start_hour: int) -> np.ndarray:
    starts = np.flatnonzero((series.index.hour == start_hour) & (series.index.minute == 0))
    first = int(starts[0]) if len(starts) else 0
    window = series.iloc[first:first + n]
    if len(window) < n:
        raise InvalidInstanceError(f"price series covers {len(window)} periods, the horizon needs {n}")
    return window.to_numpy(dtype=float)


def generate_casestudy(prices_csv=None, flexibility: float = 0.0, capacity: int = 6, seed: int = 0,
                       price_mean: float = CASESTUDY_PRICE_MEAN, fleet_size: int = 16, days: int = 2,
                       name: Optional[str] = None) -> Instance:
    """Depot case study: three six-hour shifts per vehicle and day, fast and slow chargers.

    ``flexibility`` is the departure window length in hours, split evenly
    around the static departure. Without ``prices_csv`` the period prices are
    drawn uniformly and then scaled like a real series.
    """
    period_minutes = 30
    per_day = MINUTES_PER_DAY // period_minutes
    n = per_day * days
    start_hour = 22
    q_max = 45.0
    if flexibility < 0:
        raise InvalidInstanceError("flexibility must be non-negative")
    if price_mean <= 0:
        raise InvalidInstanceError("price mean must be positive")

    if prices_csv is not None:
        raw = _horizon_prices(read_price_series(prices_csv, period_minutes), n, start_hour)
    else:
        raw = _rng(seed, PRICE_STREAM).uniform(0.5, 1.0, n)
    mean = float(raw.mean())
    if mean <= 0:
        raise InvalidInstanceError("price series must have a positive mean")
    prices = raw * (price_mean / mean)

    fast = charging_function_for(CASESTUDY_FAST, q_max)
    slow = charging_function_for(CASESTUDY_SLOW, q_max)
    chargers = (Charger('fast', capacity, fast), Charger('slow', fleet_size, slow))
    wdf = wdf_from_unit_costs(q_max, CASESTUDY_WDF_LEVELS, CASESTUDY_WDF_COSTS)

    tw = int(round(flexibility * 60 / period_minutes))
    shift = 6 * 60 // period_minutes
    vehicles = []
    for k in range(fleet_size):
        ops: List[Operation] = []
        for day in range(days):
            first = 2 * 60 // period_minutes if day == 0 else 60 // period_minutes
            slacks = [first] + [60 // period_minutes] * 2
            rng = _rng(seed, OPERATION_STREAM, k, day)
            ops.extend(_day_operations(rng, f"v{k}-d{day}", day * per_day, per_day, [shift] * 3, slacks, 15.0, tw))
        vehicles.append(Vehicle(f"v{k}", tuple(ops)))

    meta = {'generator': 'casestudy', 'seed': seed, 'start': f"{start_hour:02d}:00", 'flexibility': flexibility,
            'battery_price': CASESTUDY_BATTERY_PRICE, 'price_mean': price_mean}
    logger.info("generated case study: %d vehicles, %d periods, fast capacity %d, flexibility %.1f h",
                fleet_size, n, capacity, flexibility)
    return Instance(delta_p=float(period_minutes), prices=tuple(float(p) for p in prices), chargers=chargers,
                    vehicles=tuple(vehicles), battery=Battery(q_max=q_max, q_min=0.0, initial=0.0), wdf=wdf,
                    name=name or f"casestudy-s{seed}", metadata=meta)


CASESTUDY_OPTIONS = {'flexibility': float, 'capacity': int, 'price_mean': float, 'fleet_size': int, 'days': int}


def generate_family(family: str, seed: int = 0, overrides: Optional[Mapping[str, object]] = None,
                    prices_csv=None) -> Instance:
    """Instance of a named family: ``casestudy`` or one of :data:`FAMILIES`."""
    overrides = dict(overrides or {})
    if family != 'casestudy':
        if prices_csv is not None:
            raise InvalidInstanceError("a price CSV only applies to the casestudy family")
        return generate_benchmark(family_params(family, overrides), seed, name=f"{family}-s{seed}")
    unknown = sorted(set(overrides) - set(CASESTUDY_OPTIONS))
    if unknown:
        raise InvalidInstanceError(f"unknown casestudy parameter(s): {', '.join(unknown)}")
    try:
        kwargs = {k: CASESTUDY_OPTIONS[k](v) for k, v in overrides.items()}
    except (TypeError, ValueError) as e:
        raise InvalidInstanceError(f"invalid casestudy parameter: {e}") from e
    return generate_casestudy(prices_csv, seed=seed, **kwargs)
