"""Piecewise-linear kernel and battery models.

Charging functions map charging time (minutes) to state of charge, wear-density
functions map state of charge to the cumulative degradation cost of charging
from empty. Both are built on :class:`PiecewiseLinear`.
"""
import enum
import logging
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from evsched.errors import IntegrationError, InvalidCurveError, InvalidFunctionError

logger = logging.getLogger(__name__)

MERGE_TOL = 1e-9
PROFILE_TOL = 1e-7

Point = Tuple[float, float]


class Extension(str, enum.Enum):
    CLAMP = 'clamp'
    MINUS_INF = 'minus_inf'


class PiecewiseLinear:
    """Continuous piecewise-linear function given by sorted breakpoints.

    Breakpoints whose x differ by less than ``MERGE_TOL`` are merged, the later
    y wins. Outside ``[xs[0], xs[-1]]`` the function follows its extension
    modes: ``clamp`` repeats the boundary value, ``minus_inf`` returns -inf.
    """

    __slots__ = ('xs', 'ys', 'left', 'right')

    def __init__(self, points: Iterable[Sequence[float]],
                 left: Extension = Extension.CLAMP, right: Extension = Extension.CLAMP):
        xs: List[float] = []
        ys: List[float] = []
        for raw in points:
            x, y = float(raw[0]), float(raw[1])
            if not (math.isfinite(x) and math.isfinite(y)):
                raise InvalidFunctionError(f"non-finite breakpoint ({x}, {y})")
            if xs and x < xs[-1] - MERGE_TOL:
                raise InvalidFunctionError(f"breakpoints not sorted: {x} after {xs[-1]}")
            if xs and x - xs[-1] < MERGE_TOL:
                ys[-1] = y
                continue
            xs.append(x)
            ys.append(y)
        if not xs:
            raise InvalidFunctionError("a piecewise-linear function needs at least one breakpoint")
        self.xs: Tuple[float, ...] = tuple(xs)
        self.ys: Tuple[float, ...] = tuple(ys)
        self.left = Extension(left)
        self.right = Extension(right)

    def __len__(self):
        return len(self.xs)

    def __repr__(self):
        pts = ', '.join(f"({x:g}, {y:g})" for x, y in zip(self.xs, self.ys))
        return f"PiecewiseLinear([{pts}])"

    @property
    def breakpoints(self) -> List[Point]:
        return list(zip(self.xs, self.ys))

    def __call__(self, x: float) -> float:
        xs, ys = self.xs, self.ys
        if x < xs[0]:
            return ys[0] if self.left is Extension.CLAMP else -math.inf
        if x >= xs[-1]:
            if x == xs[-1] or self.right is Extension.CLAMP:
                return ys[-1]
            return -math.inf
        i = bisect_right(xs, x) - 1
        x0, x1 = xs[i], xs[i + 1]
        return ys[i] + (ys[i + 1] - ys[i]) * (x - x0) / (x1 - x0)

    def evaluate(self, x) -> np.ndarray:
        """Vectorised evaluation inside the domain (clamped outside)."""
        return np.interp(np.asarray(x, dtype=float), self.xs, self.ys)

    def slopes(self) -> List[float]:
        return [(self.ys[i + 1] - self.ys[i]) / (self.xs[i + 1] - self.xs[i]) for i in range(len(self.xs) - 1)]

    def slope_at(self, x: float) -> float:
        """Right derivative: slope of the segment starting at or after x."""
        xs = self.xs
        if x >= xs[-1] or len(xs) == 1:
            return 0.0
        i = max(0, bisect_right(xs, x) - 1)
        return (self.ys[i + 1] - self.ys[i]) / (xs[i + 1] - xs[i])

    def is_nondecreasing(self, tol: float = MERGE_TOL) -> bool:
        return all(b >= a - tol for a, b in zip(self.ys, self.ys[1:]))

    def is_concave(self, tol: float = MERGE_TOL) -> bool:
        s = self.slopes()
        return all(b <= a + tol for a, b in zip(s, s[1:]))

    def is_convex(self, tol: float = MERGE_TOL) -> bool:
        s = self.slopes()
        return all(b >= a - tol for a, b in zip(s, s[1:]))

    def inverse(self, y: float) -> float:
        """Least x with f(x) = y, clamped to the domain outside the range."""
        if not self.is_nondecreasing():
            raise InvalidFunctionError("inverse of a non-monotone function")
        xs, ys = self.xs, self.ys
        if y <= ys[0]:
            return xs[0]
        if y >= ys[-1]:
            i = bisect_left(ys, ys[-1] - MERGE_TOL)
            return xs[i]
        i = bisect_left(ys, y)
        if ys[i] - y <= MERGE_TOL:
            return xs[i]
        return xs[i - 1] + (xs[i] - xs[i - 1]) * (y - ys[i - 1]) / (ys[i] - ys[i - 1])

    def shifted(self, dx: float = 0.0, dy: float = 0.0) -> 'PiecewiseLinear':
        return PiecewiseLinear([(x + dx, y + dy) for x, y in zip(self.xs, self.ys)], self.left, self.right)

    def scaled(self, fx: float = 1.0, fy: float = 1.0) -> 'PiecewiseLinear':
        return PiecewiseLinear([(x * fx, y * fy) for x, y in zip(self.xs, self.ys)], self.left, self.right)

    def approx_equal(self, other: 'PiecewiseLinear', tol: float = PROFILE_TOL) -> bool:
        if len(self.xs) != len(other.xs):
            return False
        return all(abs(a - b) <= tol for a, b in zip(self.xs + self.ys, other.xs + other.ys))

    def to_json(self) -> List[List[float]]:
        return [[x, y] for x, y in zip(self.xs, self.ys)]

    @classmethod
    def from_json(cls, data: Sequence[Sequence[float]], **kwargs) -> 'PiecewiseLinear':
        return cls(data, **kwargs)


def eval_pwl(f: PiecewiseLinear, x: float) -> float:
    return f(x)


def inverse_eval(f: PiecewiseLinear, y: float) -> float:
    return f.inverse(y)


def _cross(o: Point, a: Point, b: Point) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def upper_concave_envelope(f: PiecewiseLinear) -> PiecewiseLinear:
    """Smallest concave majorant over the breakpoints of ``f``.

    Collinear breakpoints are kept, so concave input comes back unchanged.
    """
    hull: List[Point] = []
    for p in zip(f.xs, f.ys):
        while len(hull) >= 2 and _cross(hull[-2], hull[-1], p) > MERGE_TOL * max(1.0, abs(p[0] - hull[-2][0])):
            hull.pop()
        hull.append(p)
    return PiecewiseLinear(hull, f.left, f.right)


@dataclass(frozen=True)
class ChargingFunction:
    """Concave map from charging time (min) to SoC, starting empty at time 0."""
    pwl: PiecewiseLinear

    def __post_init__(self):
        f = self.pwl
        if abs(f.xs[0]) > MERGE_TOL or abs(f.ys[0]) > MERGE_TOL:
            raise InvalidFunctionError("charging function must start at (0, 0)")
        if len(f) < 2:
            raise InvalidFunctionError("charging function needs at least one segment")
        if not f.is_nondecreasing() or not f.is_concave(1e-9 * max(1.0, f.ys[-1])):
            raise InvalidFunctionError("charging function must be concave and non-decreasing")
        if f.ys[-1] <= 0:
            raise InvalidFunctionError("charging function must reach a positive SoC")

    @classmethod
    def from_points(cls, points: Iterable[Sequence[float]]) -> 'ChargingFunction':
        return cls(PiecewiseLinear(points))

    @property
    def tau_max(self) -> float:
        return self.pwl.xs[-1]

    @property
    def q_max(self) -> float:
        return self.pwl.ys[-1]

    @property
    def max_rate(self) -> float:
        return self.pwl.slopes()[0]

    @property
    def average_rate(self) -> float:
        return self.q_max / self.tau_max

    def __call__(self, tau: float) -> float:
        return self.pwl(tau)

    def inverse(self, q: float) -> float:
        return self.pwl.inverse(q)

    def charge(self, beta: float, tau: float) -> float:
        """SoC after charging ``tau`` minutes starting from SoC ``beta``."""
        return self.pwl(self.pwl.inverse(beta) + tau)

    def charge_before(self, q: float, tau: float) -> float:
        """Starting SoC from which ``tau`` minutes of charging end at ``q``."""
        return self.pwl(max(0.0, self.pwl.inverse(q) - tau))

    def to_json(self):
        return self.pwl.to_json()


@dataclass(frozen=True)
class WearDensityFunction:
    """Cumulative degradation cost of charging from empty up to a SoC."""
    cumulative: PiecewiseLinear

    def __post_init__(self):
        f = self.cumulative
        if abs(f.ys[0]) > MERGE_TOL:
            raise InvalidCurveError("wear-density function must be anchored at 0")
        if not f.is_nondecreasing():
            raise InvalidCurveError("wear-density function must be non-decreasing")
        if not f.is_convex(1e-9 * max(1.0, f.ys[-1])):
            raise InvalidCurveError("wear-density function must be convex")

    @classmethod
    def from_points(cls, points: Iterable[Sequence[float]]) -> 'WearDensityFunction':
        return cls(PiecewiseLinear(points))

    def __call__(self, q: float) -> float:
        return self.cumulative(q)

    def cost(self, q: float, q_target: float) -> float:
        return self.cumulative(q_target) - self.cumulative(q)

    def densities(self) -> List[float]:
        return self.cumulative.slopes() or [0.0]

    @property
    def min_density(self) -> float:
        return min(self.densities())

    @property
    def max_density(self) -> float:
        return max(self.densities())

    @property
    def socs(self) -> Tuple[float, ...]:
        return self.cumulative.xs

    def to_json(self):
        return self.cumulative.to_json()


@dataclass(frozen=True)
class CcCvParams:
    """Shepherd-type cell model and CC-CV charger limits.

    ``Q`` is the cell capacity in Ah, currents in A, voltages in V. ``capacity``
    is the energy (instance units) represented by a full battery.
    """
    E0: float
    K: float
    A: float
    B: float
    R: float
    Q: float
    I_max: float
    V_term_max: float
    I_min: float
    capacity: float = 1.0

    def __post_init__(self):
        for name in ('E0', 'K', 'A', 'B', 'R', 'Q', 'I_max', 'V_term_max', 'I_min', 'capacity'):
            if not getattr(self, name) > 0:
                raise InvalidFunctionError(f"CC-CV parameter {name} must be strictly positive")

    def ocv(self, s: float) -> float:
        return self.E0 - self.K / s + self.A * math.exp(-self.B * self.Q * (1.0 - s))

    def cv_current(self, s: float) -> float:
        return (self.V_term_max - self.ocv(s)) / self.R


def _fit_knots(t: np.ndarray, q: np.ndarray, segments: int, fixed: Sequence[int]) -> List[int]:
    """Greedy max-error knot insertion over dense samples."""
    knots = sorted(set([0, len(t) - 1]) | set(fixed))
    while len(knots) - 1 < segments:
        approx = np.interp(t, t[knots], q[knots])
        err = np.abs(approx - q)
        err[knots] = -1.0
        worst = int(np.argmax(err))
        if err[worst] <= 1e-12:
            break
        knots = sorted(knots + [worst])
    return knots


def build_charging_function(params: CcCvParams, segments: int,
                            max_minutes: float = 24 * 60.0) -> ChargingFunction:
    """CC-CV charging curve fitted by a concave PWL with ``segments`` pieces.

    The CC phase is linear with rate I_max/Q per hour. The CV phase is
    integrated with RK45 at steps of at most one second until the current drops
    to ``I_min``. SoC is normalised so the cut-off point is a full battery.
    """
    if segments < 1:
        raise InvalidFunctionError("segments must be at least 1")
    p = params
    s_eps = 1e-6

    def overshoot(s):
        return p.ocv(s) + p.R * p.I_max - p.V_term_max

    if overshoot(1.0) <= 0:
        s_cv = 1.0
    elif overshoot(s_eps) > 0:
        s_cv = s_eps
    else:
        s_cv = brentq(overshoot, s_eps, 1.0, xtol=1e-12)
    t_cv = 60.0 * s_cv * p.Q / p.I_max

    times = [0.0, t_cv]
    socs = [0.0, s_cv]
    if s_cv < 1.0:
        def rhs(_t, y):
            return [p.cv_current(y[0]) / (60.0 * p.Q)]

        def cutoff(_t, y):
            return p.cv_current(y[0]) - p.I_min
        cutoff.terminal = True
        cutoff.direction = -1

        def full(_t, y):
            return y[0] - 1.0
        full.terminal = True

        sol = solve_ivp(rhs, (0.0, max_minutes), [s_cv], method='RK45', max_step=1.0 / 60.0,
                        events=[cutoff, full], rtol=1e-9, atol=1e-12)
        if sol.status != 1:
            raise IntegrationError(f"CV phase did not reach the cut-off current within {max_minutes} min")
        times.extend((t_cv + sol.t[1:]).tolist())
        socs.extend(np.minimum(sol.y[0][1:], 1.0).tolist())
    t = np.asarray(times)
    s = np.asarray(socs)
    if t[0] == t[1]:
        t, s = t[1:], s[1:]
        t[0] = 0.0
    q = p.capacity * s / s[-1]
    fixed = [1] if 0 < t_cv < t[-1] and segments >= 2 and len(t) > 2 else []
    knots = _fit_knots(t, q, segments, fixed)
    logger.debug("charging curve: CC until %.2f min, CV until %.2f min, %d knots", t_cv, t[-1], len(knots))
    return ChargingFunction(PiecewiseLinear(zip(t[knots], q[knots])))


@dataclass(frozen=True)
class DodAccCurve:
    """Achievable cycle counts per depth of discharge."""
    points: Tuple[Tuple[float, int], ...]
    battery_price: float
    capacity: float

    def __post_init__(self):
        pts = self.points
        if not pts:
            raise InvalidCurveError("DoD-ACC curve needs at least one point")
        if self.battery_price <= 0 or self.capacity <= 0:
            raise InvalidCurveError("battery price and capacity must be positive")
        for (d0, n0), (d1, n1) in zip(pts, pts[1:]):
            if not d1 > d0:
                raise InvalidCurveError("depths of discharge must be strictly increasing")
            if not n1 < n0:
                raise InvalidCurveError("cycle counts must be strictly decreasing")
        if not (0 < pts[0][0] and pts[-1][0] <= 1):
            raise InvalidCurveError("depths of discharge must lie in (0, 1]")
        if any(n <= 0 for _, n in pts):
            raise InvalidCurveError("cycle counts must be positive")


def wear_densities(curve: DodAccCurve) -> List[Tuple[float, float]]:
    """Per-SoC-level densities (lower SoC fraction, density) in ascending SoC."""
    levels = sorted(((1.0 - d, n) for d, n in curve.points))
    dens = [0.0] * len(levels)
    tail = 0.0
    for i in reversed(range(len(levels))):
        s, acc = levels[i]
        throughput = acc * 2.0 * (1.0 - s) * curve.capacity
        dens[i] = curve.battery_price / throughput - tail
        tail += dens[i]
    if any(d < -MERGE_TOL for d in dens):
        raise InvalidCurveError(f"DoD-ACC curve yields a negative wear density: {dens}")
    if any(b < a - MERGE_TOL for a, b in zip(dens, dens[1:])):
        raise InvalidCurveError(f"DoD-ACC curve yields a non-convex wear density: {dens}")
    return [(s, d) for (s, _), d in zip(levels, dens)]


def build_wdf(curve: DodAccCurve) -> WearDensityFunction:
    levels = wear_densities(curve)
    cap = curve.capacity
    points = [(0.0, 0.0)]
    bounds = [s for s, _ in levels[1:]] + [1.0]
    total = 0.0
    if levels[0][0] > 0:
        total += levels[0][1] * levels[0][0] * cap
        points.append((levels[0][0] * cap, total))
    for (lo, d), hi in zip(levels, bounds):
        total += d * (hi - lo) * cap
        points.append((hi * cap, total))
    return WearDensityFunction(PiecewiseLinear(points))


def linear_wdf(q_max: float, density: float) -> WearDensityFunction:
    return WearDensityFunction(PiecewiseLinear([(0.0, 0.0), (q_max, density * q_max)]))


def wdf_from_unit_costs(capacity: float, levels: Sequence[float], costs: Sequence[float]) -> WearDensityFunction:
    """Cumulative WDF through (level * capacity, cost) points, e.g. 25/50/75/100 %."""
    points = [(0.0, 0.0)] + [(lv * capacity, c) for lv, c in zip(levels, costs)]
    return WearDensityFunction(PiecewiseLinear(points))


def charging_function_for(points: Iterable[Sequence[float]], q_max: Optional[float] = None) -> ChargingFunction:
    """Charging function through ``points`` with (0, 0) prepended if missing."""
    pts = [tuple(map(float, p)) for p in points]
    if not pts or pts[0] != (0.0, 0.0):
        pts.insert(0, (0.0, 0.0))
    phi = ChargingFunction(PiecewiseLinear(pts))
    if q_max is not None and abs(phi.q_max - q_max) > 1e-6:
        raise InvalidFunctionError(f"charging function tops out at {phi.q_max}, battery holds {q_max}")
    return phi
