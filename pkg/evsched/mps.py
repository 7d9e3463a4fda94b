"""Compact mixed-integer formulation written as fixed-format MPS with SOS2 sets.

Every vehicle gets its own time-expanded network: binary arc variables, the
SoC at each vertex and the energy charged at each station. Charging time and
degradation cost are linked to SoC through SOS2 multipliers over the
breakpoints of the charging function and the wear-density function.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Set, TextIO, Tuple, Union

from evsched.models.instance import Instance
from evsched.network import ArcKind, PricingNetwork, build_network

logger = logging.getLogger(__name__)

ROWS_PER_STATION = 10


@dataclass
class _Col:
    name: str
    label: str
    cost: float = 0.0
    integer: bool = False
    lower: float = 0.0
    upper: Optional[float] = None
    entries: Dict[str, float] = field(default_factory=dict)


@dataclass
class _Row:
    name: str
    label: str
    sense: str
    rhs: float = 0.0


class _Builder:
    def __init__(self):
        self.cols: List[_Col] = []
        self.rows: List[_Row] = []
        self.sos: List[Tuple[str, List[Tuple[str, float]]]] = []

    def col(self, label: str, cost: float = 0.0, integer: bool = False, lower: float = 0.0,
            upper: Optional[float] = None) -> _Col:
        c = _Col(f"X{len(self.cols) + 1:07d}", label, cost, integer, lower, upper)
        self.cols.append(c)
        return c

    def row(self, label: str, sense: str, rhs: float, terms: List[Tuple[_Col, float]]) -> _Row:
        r = _Row(f"R{len(self.rows) + 1:07d}", label, sense, rhs)
        self.rows.append(r)
        for c, a in terms:
            if a:
                c.entries[r.name] = c.entries.get(r.name, 0.0) + a
        return r

    def sos2(self, label: str, cols: List[_Col]) -> None:
        self.sos.append((label, [(c.name, float(i + 1)) for i, c in enumerate(cols)]))


def _vehicle_block(b: _Builder, inst: Instance, net: PricingNetwork,
                   station_x: Dict[Tuple[int, int], List[_Col]]) -> None:
    k = net.vehicle
    bat = inst.battery
    span = bat.q_max - bat.q_min
    big = 2.0 * span
    x = [b.col(f"x[{k},{a.index}]", integer=True, upper=1.0) for a in net.arcs]
    soc = []
    for v in range(net.n_vertices):
        if v == net.source:
            soc.append(b.col(f"s[{k},source]", lower=bat.initial, upper=bat.initial))
        else:
            soc.append(b.col(f"s[{k},{net.label(v)}]", lower=bat.q_min, upper=bat.q_max))
    charge: Dict[int, _Col] = {}
    for v in range(net.n_vertices):
        if net.is_station(v):
            charge[v] = b.col(f"g[{k},{net.label(v)}]", cost=inst.prices[net.period(v)], upper=span)

    for v in range(net.n_vertices):
        out = [(x[i], 1.0) for i in net.out_arcs[v]]
        inc = [(x[i], 1.0) for i in net.in_arcs[v]]
        if v == net.source:
            b.row(f"flow[{k},source]", 'E', 1.0, out)
        elif v == net.sink:
            b.row(f"flow[{k},sink]", 'E', 1.0, inc)
        else:
            b.row(f"flow[{k},{net.label(v)}]", 'E', 0.0, inc + [(c, -a) for c, a in out])

    for a in net.arcs:
        tail, head = a.tail, a.head
        terms = [(soc[head], 1.0), (soc[tail], -1.0)]
        if tail in charge:
            terms.append((charge[tail], -1.0))
        b.row(f"socub[{k},{a.index}]", 'L', big - a.consumption, terms + [(x[a.index], big)])
        b.row(f"soclb[{k},{a.index}]", 'G', -big - a.consumption, terms + [(x[a.index], -big)])

    for v, g in charge.items():
        name = net.label(v)
        f = net.charger(v)
        out = [(x[i], -span) for i in net.out_arcs[v]]
        b.row(f"gmax[{k},{name}]", 'L', 0.0, [(g, 1.0)] + out)
        station_x.setdefault((net.period(v), f), []).extend(x[i] for i in net.out_arcs[v])

        phi = inst.chargers[f].phi.pwl
        lam_in = [b.col(f"li[{k},{name},{j}]") for j in range(len(phi))]
        lam_out = [b.col(f"lo[{k},{name},{j}]") for j in range(len(phi))]
        b.row(f"lisum[{k},{name}]", 'E', 1.0, [(c, 1.0) for c in lam_in])
        b.row(f"losum[{k},{name}]", 'E', 1.0, [(c, 1.0) for c in lam_out])
        b.row(f"lisoc[{k},{name}]", 'E', 0.0, [(soc[v], 1.0)] + [(c, -y) for c, y in zip(lam_in, phi.ys)])
        b.row(f"losoc[{k},{name}]", 'E', 0.0,
              [(soc[v], 1.0), (g, 1.0)] + [(c, -y) for c, y in zip(lam_out, phi.ys)])
        b.row(f"time[{k},{name}]", 'L', inst.delta_p,
              [(c, t) for c, t in zip(lam_out, phi.xs)] + [(c, -t) for c, t in zip(lam_in, phi.xs)])
        b.sos2(f"phi_in[{k},{name}]", lam_in)
        b.sos2(f"phi_out[{k},{name}]", lam_out)

        wdf = inst.wdf.cumulative
        mu_in = [b.col(f"mi[{k},{name},{j}]", cost=-y) for j, y in enumerate(wdf.ys)]
        mu_out = [b.col(f"mo[{k},{name},{j}]", cost=y) for j, y in enumerate(wdf.ys)]
        b.row(f"misum[{k},{name}]", 'E', 1.0, [(c, 1.0) for c in mu_in])
        b.row(f"mosum[{k},{name}]", 'E', 1.0, [(c, 1.0) for c in mu_out])
        b.row(f"misoc[{k},{name}]", 'E', 0.0, [(soc[v], 1.0)] + [(c, -q) for c, q in zip(mu_in, wdf.xs)])
        b.row(f"mosoc[{k},{name}]", 'E', 0.0,
              [(soc[v], 1.0), (g, 1.0)] + [(c, -q) for c, q in zip(mu_out, wdf.xs)])
        b.sos2(f"wdf_in[{k},{name}]", mu_in)
        b.sos2(f"wdf_out[{k},{name}]", mu_out)

    for o, op in enumerate(inst.vehicles[k].operations):
        arcs = [(x[a.index], 1.0) for a in net.arcs if a.kind is ArcKind.SERVICE and a.operation == o]
        b.row(f"cover[{k},{op.id}]", 'E', 1.0, arcs)


def build_compact_mip(inst: Instance) -> _Builder:
    b = _Builder()
    station_x: Dict[Tuple[int, int], List[_Col]] = {}
    for k in range(inst.fleet_size):
        _vehicle_block(b, inst, build_network(inst, k), station_x)
    for (p, f) in sorted(station_x):
        b.row(f"cap[{p},{inst.chargers[f].id}]", 'L', float(inst.chargers[f].capacity),
              [(c, 1.0) for c in station_x[(p, f)]])
    return b


def _num(v: float) -> str:
    s = f"{v:.12g}"
    return s if len(s) <= 12 else f"{v:.6e}"


def _write(b: _Builder, out: TextIO, name: str, with_names: bool) -> None:
    w = out.write
    if with_names:
        for c in b.cols:
            w(f"* {c.name} {c.label}\n")
        for r in b.rows:
            w(f"* {r.name} {r.label}\n")
    w(f"NAME          {name[:8]}\n")
    w("ROWS\n")
    w(" N  COST\n")
    for r in b.rows:
        w(f" {r.sense}  {r.name}\n")
    w("COLUMNS\n")
    in_int = False
    marker = 0
    for c in b.cols:
        if c.integer != in_int:
            tag = "'INTORG'" if c.integer else "'INTEND'"
            w(f"    M{marker:07d}  'MARKER'                 {tag}\n")
            marker += 1
            in_int = c.integer
        entries = ([('COST', c.cost)] if c.cost else []) + list(c.entries.items())
        if not entries:
            entries = [('COST', 0.0)]
        for row, val in entries:
            w(f"    {c.name:<8}  {row:<8}  {_num(val):>12}\n")
    if in_int:
        w(f"    M{marker:07d}  'MARKER'                 'INTEND'\n")
    w("RHS\n")
    for r in b.rows:
        if r.rhs:
            w(f"    RHS       {r.name:<8}  {_num(r.rhs):>12}\n")
    w("BOUNDS\n")
    for c in b.cols:
        if c.integer and c.lower == 0.0 and c.upper == 1.0:
            w(f" BV BND       {c.name:<8}\n")
        elif c.upper is not None and c.lower == c.upper:
            w(f" FX BND       {c.name:<8}  {_num(c.lower):>12}\n")
        else:
            if c.lower:
                w(f" LO BND       {c.name:<8}  {_num(c.lower):>12}\n")
            if c.upper is not None:
                w(f" UP BND       {c.name:<8}  {_num(c.upper):>12}\n")
    if b.sos:
        w("SOS\n")
        for i, (_, members) in enumerate(b.sos):
            w(f" S2 SOS       S{i + 1:07d}\n")
            for col, weight in members:
                w(f"    {col:<8}  {_num(weight):>12}\n")
    w("ENDATA\n")


def export_compact_mip(inst: Instance, path: Union[str, Path, TextIO], name: Optional[str] = None,
                       with_names: bool = True) -> dict:
    """Write the compact formulation of ``inst``; returns its row, column and SOS counts."""
    b = build_compact_mip(inst)
    name = name or inst.name or 'EVSCHED'
    if hasattr(path, 'write'):
        _write(b, path, name, with_names)
    else:
        with open(path, 'w') as fh:
            _write(b, fh, name, with_names)
    counts = {'rows': len(b.rows), 'columns': len(b.cols), 'integers': sum(c.integer for c in b.cols),
              'sos': len(b.sos)}
    logger.info("exported compact MIP: %s", counts)
    return counts


def expected_counts(inst: Instance) -> dict:
    """Closed-form size of the compact formulation."""
    rows = cols = ints = sos = 0
    n, nf = inst.n_periods, len(inst.chargers)
    n_phi = sum(len(c.phi.pwl) for c in inst.chargers)
    n_wdf = len(inst.wdf.cumulative)
    caps = set()
    for k, veh in enumerate(inst.vehicles):
        n_vert = 2 + n * (1 + nf)
        service = sum(op.latest - op.earliest + 1 for op in veh.operations)
        # periods before the last have (1 + nf) successors, the last only the sink
        arcs = (1 + nf) + (n - 1) * (1 + nf) * (1 + nf) + (1 + nf) + service
        ints += arcs
        cols += arcs + n_vert + n * nf + n * (2 * n_phi + 2 * nf * n_wdf)
        rows += n_vert + 2 * arcs + n * nf * ROWS_PER_STATION + len(veh.operations)
        sos += 4 * n * nf
        caps.update((p, f) for p in range(n) for f in range(nf))
    rows += len(caps)
    return {'rows': rows, 'columns': cols, 'integers': ints, 'sos': sos}


@dataclass
class MpsModel:
    name: str = ''
    rows: Dict[str, str] = field(default_factory=dict)
    columns: Dict[str, Dict[str, float]] = field(default_factory=dict)
    integers: Set[str] = field(default_factory=set)
    rhs: Dict[str, float] = field(default_factory=dict)
    bounds: Dict[str, Dict[str, float]] = field(default_factory=dict)
    sos: List[Tuple[str, List[Tuple[str, float]]]] = field(default_factory=list)

    @property
    def constraint_rows(self) -> Dict[str, str]:
        return {r: s for r, s in self.rows.items() if s != 'N'}


def read_mps(source: Union[str, Path, TextIO]) -> MpsModel:
    """Structural parse of a fixed-format MPS file as written by :func:`export_compact_mip`."""
    if hasattr(source, 'read'):
        lines = source.read().splitlines()
    else:
        lines = Path(source).read_text().splitlines()
    m = MpsModel()
    section = None
    integer = False
    for line in lines:
        if not line.strip() or line.startswith('*'):
            continue
        if not line.startswith(' '):
            head = line.split()
            section = head[0]
            if section == 'NAME' and len(head) > 1:
                m.name = head[1]
            continue
        parts = line.split()
        if section == 'ROWS':
            m.rows[parts[1]] = parts[0]
        elif section == 'COLUMNS':
            if len(parts) >= 3 and parts[1] == "'MARKER'":
                integer = parts[2] == "'INTORG'"
                continue
            col = m.columns.setdefault(parts[0], {})
            if integer:
                m.integers.add(parts[0])
            for row, val in zip(parts[1::2], parts[2::2]):
                col[row] = float(val)
        elif section == 'RHS':
            for row, val in zip(parts[1::2], parts[2::2]):
                m.rhs[row] = float(val)
        elif section == 'BOUNDS':
            kind, col = parts[0], parts[2]
            b = m.bounds.setdefault(col, {})
            if kind == 'BV':
                m.integers.add(col)
                b.update(LO=0.0, UP=1.0)
            else:
                b[kind] = float(parts[3])
        elif section == 'SOS':
            if parts[0] in ('S1', 'S2'):
                m.sos.append((parts[2], []))
            else:
                m.sos[-1][1].append((parts[0], float(parts[1])))
    return m
