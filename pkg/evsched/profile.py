"""Cost profiles: concave maps from total path cost to attainable SoC."""
import math
from typing import Iterable, List, Optional, Sequence, Tuple

from evsched.battery import PROFILE_TOL, Extension, PiecewiseLinear, upper_concave_envelope
from evsched.models.instance import Instance

Point = Tuple[float, float]


class CostProfile:
    """Non-decreasing concave profile, -inf left of ``c_min`` and flat right of ``c_max``."""

    __slots__ = ('pwl', 'c_min', 'q_min_val', 'c_max', 'q_max_val')

    def __init__(self, pwl: PiecewiseLinear):
        if pwl.left is not Extension.MINUS_INF or pwl.right is not Extension.CLAMP:
            pwl = PiecewiseLinear(pwl.breakpoints, Extension.MINUS_INF, Extension.CLAMP)
        self.pwl = pwl
        self.c_min = pwl.xs[0]
        self.q_min_val = pwl.ys[0]
        self.c_max = pwl.xs[-1]
        self.q_max_val = pwl.ys[-1]

    @classmethod
    def from_breakpoints(cls, points: Iterable[Sequence[float]]) -> 'CostProfile':
        return cls(PiecewiseLinear(points, Extension.MINUS_INF, Extension.CLAMP))

    @classmethod
    def single(cls, c: float, q: float) -> 'CostProfile':
        return cls.from_breakpoints([(c, q)])

    @classmethod
    def from_points(cls, points: Iterable[Point], cap: Optional[float] = None) -> 'CostProfile':
        """Profile through arbitrary (cost, SoC) points.

        Points are sorted by cost, replaced by their upper concave envelope and
        truncated after the first point of maximal SoC. ``cap`` bounds the SoC.
        """
        pts = sorted(points)
        if not pts:
            raise ValueError("a cost profile needs at least one point")
        hull = upper_concave_envelope(PiecewiseLinear(pts, Extension.MINUS_INF, Extension.CLAMP))
        ys = hull.ys
        top = max(ys)
        last = next(i for i, y in enumerate(ys) if y >= top - 1e-12)
        profile = cls.from_breakpoints(hull.breakpoints[:last + 1])
        if cap is not None:
            profile = profile.truncated(cap)
        return profile

    @property
    def xs(self) -> Tuple[float, ...]:
        return self.pwl.xs

    @property
    def ys(self) -> Tuple[float, ...]:
        return self.pwl.ys

    @property
    def breakpoints(self) -> List[Point]:
        return self.pwl.breakpoints

    def __len__(self):
        return len(self.pwl)

    def __repr__(self):
        return f"CostProfile({self.breakpoints})"

    def __call__(self, c: float) -> float:
        return self.pwl(c)

    def value(self, c: float, tol: float = PROFILE_TOL) -> float:
        """Evaluation that treats costs within ``tol`` left of ``c_min`` as ``c_min``."""
        if c < self.c_min:
            return self.q_min_val if c >= self.c_min - tol else -math.inf
        return self.pwl(c)

    def inverse(self, q: float) -> float:
        """Least cost reaching SoC ``q``; clamped to ``[c_min, c_max]``."""
        return self.pwl.inverse(q)

    def truncated(self, cap: float) -> 'CostProfile':
        """Profile with SoC values capped at ``cap``."""
        xs, ys = self.pwl.xs, self.pwl.ys
        if ys[-1] <= cap:
            return self
        if ys[0] >= cap:
            return CostProfile.single(xs[0], cap)
        pts = []
        for i, (x, y) in enumerate(zip(xs, ys)):
            if y < cap:
                pts.append((x, y))
                continue
            x0, y0 = xs[i - 1], ys[i - 1]
            pts.append((x0 + (x - x0) * (cap - y0) / (y - y0), cap))
            break
        return CostProfile.from_breakpoints(pts)

    def shift_and_cut(self, dc: float, dq: float, q_min: float, q_max: float) -> Optional['CostProfile']:
        """Shift by ``dc`` on the cost axis, lower SoC by ``dq`` and cut below ``q_min``.

        Returns None when no part of the profile stays at or above ``q_min``.
        """
        xs = [x + dc for x in self.pwl.xs]
        ys = [y - dq for y in self.pwl.ys]
        if ys[-1] < q_min - 1e-9:
            return None
        if ys[0] < q_min:
            j = next(i for i, y in enumerate(ys) if y >= q_min - 1e-12)
            if ys[j] <= q_min:
                pts = [(xs[j], q_min)] + list(zip(xs[j + 1:], ys[j + 1:]))
            else:
                x0, y0 = xs[j - 1], ys[j - 1]
                cut = x0 + (xs[j] - x0) * (q_min - y0) / (ys[j] - y0)
                pts = [(cut, q_min)] + list(zip(xs[j:], ys[j:]))
        else:
            pts = list(zip(xs, ys))
        return CostProfile.from_breakpoints(pts).truncated(q_max)

    def is_valid(self, q_min: float, q_max: float, tol: float = PROFILE_TOL) -> bool:
        return (self.pwl.is_nondecreasing(tol) and self.pwl.is_concave(tol)
                and self.q_min_val >= q_min - tol and self.q_max_val <= q_max + tol)

    def signature(self, digits: int = 9) -> Tuple[float, ...]:
        return tuple(round(v, digits) for v in self.pwl.xs + self.pwl.ys)

    def to_json(self):
        return self.pwl.to_json()


class StationCosts:
    """Per-period cumulative charging cost ``C_p(q) = p_e[p] * q + wdf(q)``.

    Charging from ``a`` to ``b`` in period ``p`` costs ``C_p(b) - C_p(a)``.
    """

    def __init__(self, inst: Instance):
        self.inst = inst
        bat = inst.battery
        socs = sorted({bat.q_min, bat.q_max} | {q for q in inst.wdf.socs if bat.q_min < q < bat.q_max})
        self.socs = tuple(socs)
        self.energy: List[PiecewiseLinear] = [
            PiecewiseLinear([(q, price * q + inst.wdf(q)) for q in socs]) for price in inst.prices
        ]
        n = inst.n_periods
        suffix = [math.inf] * (n + 1)
        for p in range(n - 1, -1, -1):
            suffix[p] = min(inst.prices[p], suffix[p + 1])
        self.suffix_min_price = suffix
        self.min_density = inst.wdf.min_density
        self.max_rate = max((c.phi.max_rate for c in inst.chargers), default=0.0)

    def cost(self, period: int, q_from: float, q_to: float) -> float:
        C = self.energy[period]
        return C(q_to) - C(q_from)

    def future_rate(self, period: int) -> float:
        """Least marginal cost of one unit of energy charged at or after ``period``."""
        return self.suffix_min_price[max(period, 0)] + self.min_density


def charging_cost(q_arrival: float, delta_q: float, period: int, inst: Instance) -> float:
    return inst.prices[period] * delta_q + inst.wdf.cost(q_arrival, q_arrival + delta_q)


def station_cost_profile(costs: StationCosts, period: int, kappa: float = 0.0) -> CostProfile:
    """SoC reachable when spending a budget on charging from ``q_min`` in ``period``."""
    C = costs.energy[period]
    base = C.xs[0]
    c0 = C(base)
    return CostProfile.from_breakpoints([(kappa + C(q) - c0, q) for q in C.xs if q >= base])
