# Seeded synthetic LP families
#
# Every family emits an LP relaxation directly.  Randomness comes from a PCG64
# stream spawned per (seed, index), so instance k of a batch does not depend
# on how many instances were generated before it.

import json
import logging
import os
from dataclasses import dataclass, field

import numpy
import scipy.sparse

from .Errors import GeneratorError
from .LPProblem import INF, LPProblem
from .MPSFile import write_mps

__all__ = [
    'FAMILIES',
    'DEFAULT_PARAMS',
    'GenSpec',
    'instance_rng',
    'generate',
    'generate_many',
    'write_instances',
]

logger = logging.getLogger(__name__)

FAMILIES = ('SetCovering', 'FacilityLocation', 'MulticommodityFlow', 'GeneralizedNetworkFlow',
            'Random', 'RedundancyHeavy')

DEFAULT_PARAMS = {
    'SetCovering': {'nrow': 300, 'ncol': 600, 'dens': 0.01, 'max_coef': 100},
    'FacilityLocation': {'number_of_customers': 30, 'number_of_facilities': 30, 'ratio': 5.0},
    'MulticommodityFlow': {'min_n': 12, 'max_n': 12},
    'GeneralizedNetworkFlow': {'nodes': 500, 'nsorc': 25, 'nsink': 50, 'dens': 600},
    'Random': {'nrow': 40, 'ncol': 60, 'dens': 0.1, 'max_coef': 10, 'fixed_cols': 0.0,
               'dup_rows': 0.0, 'dup_cols': 0.0, 'singleton_rows': 0.0,
               'short_equalities': 0.0, 'free_rows': 0.0},
    'RedundancyHeavy': {'nrow': 40, 'ncol': 60, 'dens': 0.1, 'max_coef': 10, 'fixed_cols': 0.25,
                        'dup_rows': 0.5, 'dup_cols': 0.0, 'singleton_rows': 0.0,
                        'short_equalities': 0.0, 'free_rows': 0.0},
}

# fraction-valued parameters, all in [0, 1]
_FRACTIONS = ('dens', 'fixed_cols', 'dup_rows', 'dup_cols', 'singleton_rows',
              'short_equalities', 'free_rows')


def instance_rng(seed, index=0):
    """Independent PCG64 stream for instance `index` of a seeded batch."""
    return numpy.random.Generator(numpy.random.PCG64(numpy.random.SeedSequence(seed, spawn_key=(index,))))


@dataclass(frozen=True)
class GenSpec:
    family: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    index: int = 0

    def resolved(self):
        """Family defaults overlaid with the given params, validated."""
        if self.family not in DEFAULT_PARAMS:
            raise GeneratorError("unknown family {0!r}, expected one of {1}".format(self.family, FAMILIES))
        params = dict(DEFAULT_PARAMS[self.family])
        unknown = set(self.params) - set(params)
        if unknown:
            raise GeneratorError("unknown parameters for {0}: {1}".format(self.family, sorted(unknown)))
        params.update(self.params)
        for key, value in params.items():
            if key in _FRACTIONS and not (self.family == 'GeneralizedNetworkFlow' and key == 'dens'):
                lo_ok = value > 0 if key == 'dens' else value >= 0
                if not (lo_ok and value <= 1):
                    raise GeneratorError("{0} must lie in {1}, 1], got {2}".format(
                        key, '(0' if key == 'dens' else '[0', value))
            elif not value > 0:
                raise GeneratorError("{0} must be > 0, got {1}".format(key, value))
        return params


def _lp_from_coo(rows, cols, vals, shape, obj, col_lower, col_upper, row_lower, row_upper, name,
                 row_names=None, col_names=None):
    matrix = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=shape)
    return LPProblem(obj, col_lower, col_upper, row_lower, row_upper, matrix=matrix, name=name,
                     row_names=row_names, col_names=col_names)


class _Rows(object):
    """Row-by-row triplet accumulator."""

    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []
        self.lower, self.upper = [], []

    def add(self, entries, lower, upper):
        r = len(self.lower)
        for c, v in entries.items():
            self.rows.append(r)
            self.cols.append(c)
            self.vals.append(v)
        self.lower.append(lower)
        self.upper.append(upper)

    def problem(self, obj, col_lower, col_upper, name, col_names=None):
        return _lp_from_coo(self.rows, self.cols, self.vals, (len(self.lower), len(obj)), obj,
                            col_lower, col_upper, self.lower, self.upper, name, col_names=col_names)


def _set_covering(rng, p, name):
    nrow, ncol = int(p['nrow']), int(p['ncol'])
    nnzrs = int(nrow * ncol * p['dens'])
    if nnzrs < nrow or nnzrs < 2 * ncol:
        raise GeneratorError("SetCovering needs nrow*ncol*dens >= max(nrow, 2*ncol), got {0}".format(nnzrs))

    # rows per column, at least two each
    indices = rng.choice(ncol, size=nnzrs)
    indices[:2 * ncol] = numpy.repeat(numpy.arange(ncol), 2)
    _, col_nrows = numpy.unique(indices, return_counts=True)
    # a column covers a row at most once
    col_nrows = numpy.minimum(col_nrows, nrow)
    nnzrs = int(col_nrows.sum())
    indices = indices[:nnzrs]

    # every row gets at least one column
    indices[:nrow] = rng.permutation(nrow)
    i = 0
    indptr = [0]
    for n in col_nrows:
        if i >= nrow:
            indices[i:i + n] = rng.choice(nrow, size=n, replace=False)
        elif i + n > nrow:
            remaining = numpy.setdiff1d(numpy.arange(nrow), indices[i:nrow], assume_unique=True)
            indices[nrow:i + n] = rng.choice(remaining, size=i + n - nrow, replace=False)
        i += n
        indptr.append(i)

    obj = rng.integers(int(p['max_coef']), size=ncol) + 1
    A = scipy.sparse.csc_matrix((numpy.ones(len(indices)), indices, indptr), shape=(nrow, ncol))
    lp = LPProblem(obj, numpy.zeros(ncol), numpy.ones(ncol), numpy.ones(nrow), numpy.full(nrow, INF),
                   matrix=A, name=name)
    lp.info['placements'] = int(nnzrs)
    return lp


def _facility_location(rng, p, name):
    n_cust, n_fac = int(p['number_of_customers']), int(p['number_of_facilities'])
    ratio = float(p['ratio'])
    if ratio < 1.0:
        raise GeneratorError("FacilityLocation needs ratio >= 1 for a feasible relaxation")
    demands = rng.integers(5, 35, size=n_cust)
    capacities = rng.integers(10, 60, size=n_fac)
    fixed_costs = (rng.integers(100, 110, size=n_fac) * numpy.sqrt(capacities)
                   + rng.integers(90, size=n_fac)).astype(int)
    total_demand = demands.sum()
    capacities = capacities * ratio * total_demand / capacities.sum()

    c_x = rng.random(n_cust).reshape((-1, 1))
    c_y = rng.random(n_cust).reshape((-1, 1))
    f_x = rng.random(n_fac)
    f_y = rng.random(n_fac)
    trans_costs = (numpy.sqrt((c_x - f_x) ** 2 + (c_y - f_y) ** 2) * 10 * demands.reshape((-1, 1))).astype(int)

    # columns: y_j (facility open) then x_ij (customer i served by j)
    def x(i, j):
        return n_fac + i * n_fac + j

    ncol = n_fac + n_cust * n_fac
    obj = numpy.concatenate([fixed_costs, trans_costs.reshape(-1)]).astype(float)
    rows = _Rows()
    for i in range(n_cust):
        rows.add({x(i, j): 1.0 for j in range(n_fac)}, 1.0, INF)
    for j in range(n_fac):
        entries = {x(i, j): float(demands[i]) for i in range(n_cust)}
        entries[j] = -capacities[j]
        rows.add(entries, -INF, 0.0)
    rows.add({j: -capacities[j] for j in range(n_fac)}, -INF, -float(total_demand))
    for i in range(n_cust):
        for j in range(n_fac):
            rows.add({x(i, j): 1.0, j: -1.0}, -INF, 0.0)
    col_names = ['y_{0}'.format(j) for j in range(n_fac)] + \
        ['x_{0}_{1}'.format(i, j) for i in range(n_cust) for j in range(n_fac)]
    return rows.problem(obj, numpy.zeros(ncol), numpy.ones(ncol), name, col_names=col_names)


def _multicommodity_flow(rng, p, name):
    lo_n, hi_n = int(p['min_n']), int(p['max_n'])
    if lo_n > hi_n or lo_n < 3:
        raise GeneratorError("MulticommodityFlow needs 3 <= min_n <= max_n")
    n = int(rng.integers(lo_n, hi_n + 1))
    n_com = n
    # a ring keeps every origin/destination pair connected
    arcs = [(i, (i + 1) % n) for i in range(n)]
    extra = set()
    for _ in range(2 * n):
        i, j = (int(v) for v in rng.integers(0, n, size=2))
        if i != j and (i, j) not in extra and j != (i + 1) % n:
            extra.add((i, j))
    arcs += sorted(extra)
    n_arc = len(arcs)

    demands = rng.integers(10, 100, size=n_com)
    commodities = []
    for _ in range(n_com):
        o, d = (int(v) for v in rng.choice(n, size=2, replace=False))
        commodities.append((o, d))
    var_cost = rng.integers(12, 50, size=n_arc)
    fix_cost = rng.integers(100, 250, size=n_arc)
    capacity = numpy.array([rng.uniform(1, n_com + 1) * rng.uniform(10, 100) for _ in range(n_arc)])
    capacity[:n] = demands.sum()

    # columns: x_{a,k} for every arc/commodity, then y_a
    def xcol(a, k):
        return a * n_com + k

    ncol = n_arc * n_com + n_arc
    obj = numpy.zeros(ncol)
    for a in range(n_arc):
        for k in range(n_com):
            obj[xcol(a, k)] = demands[k] * var_cost[a]
        obj[n_arc * n_com + a] = fix_cost[a]
    rows = _Rows()
    for node in range(n):
        for k, (o, d) in enumerate(commodities):
            entries = {}
            for a, (i, j) in enumerate(arcs):
                if i == node:
                    entries[xcol(a, k)] = 1.0
                elif j == node:
                    entries[xcol(a, k)] = -1.0
            b = float(int(o == node) - int(d == node))
            rows.add(entries, b, b)
    for a in range(n_arc):
        entries = {xcol(a, k): float(demands[k]) for k in range(n_com)}
        entries[n_arc * n_com + a] = -capacity[a]
        rows.add(entries, -INF, 0.0)
    return rows.problem(obj, numpy.zeros(ncol), numpy.ones(ncol), name)


def _jitter(rng, value):
    return max(1, int(round(value * rng.uniform(0.9, 1.1))))


def _generalized_network_flow(rng, p, name):
    nodes = _jitter(rng, p['nodes'])
    nsorc = _jitter(rng, p['nsorc'])
    nsink = _jitter(rng, p['nsink'])
    n_arcs = _jitter(rng, p['dens'])
    if nsorc + nsink >= nodes:
        raise GeneratorError("GeneralizedNetworkFlow needs nsorc + nsink < nodes")
    n_arcs = min(n_arcs, nodes * (nodes - 1))
    order = rng.permutation(nodes)
    sources, sinks = order[:nsorc], order[nsorc:nsorc + nsink]
    transit = order[nsorc + nsink:]

    # planted path flows certify feasibility
    arcs = {}
    net_out = numpy.zeros(nodes)
    for s in sources:
        t = int(rng.choice(sinks))
        hops = rng.choice(transit, size=min(len(transit), int(rng.integers(1, 4))), replace=False)
        path = [int(s)] + [int(h) for h in hops] + [t]
        flow = float(rng.integers(10, 50))
        for u, v in zip(path[:-1], path[1:]):
            if (u, v) not in arcs:
                arcs[(u, v)] = {'gain': float(rng.uniform(0.8, 1.2)), 'planted': 0.0}
            arc = arcs[(u, v)]
            arc['planted'] += flow
            net_out[u] += flow
            net_out[v] -= arc['gain'] * flow
            flow *= arc['gain']
    while len(arcs) < n_arcs:
        u, v = (int(x) for x in rng.integers(0, nodes, size=2))
        if u != v and (u, v) not in arcs:
            arcs[(u, v)] = {'gain': float(rng.uniform(0.8, 1.2)), 'planted': 0.0}

    keys = sorted(arcs)
    ncol = len(keys)
    obj = rng.integers(1, 20, size=ncol).astype(float)
    upper = numpy.array([arcs[k]['planted'] * 1.5 + rng.integers(5, 30) for k in keys])
    rows, cols, vals = [], [], []
    for c, (u, v) in enumerate(keys):
        rows += [u, v]
        cols += [c, c]
        vals += [1.0, -arcs[(u, v)]['gain']]
    # row = outflow - gain * inflow
    row_lower = numpy.zeros(nodes)
    row_upper = numpy.zeros(nodes)
    source_set, sink_set = set(int(s) for s in sources), set(int(t) for t in sinks)
    for node in range(nodes):
        if node in source_set:
            row_lower[node], row_upper[node] = -INF, net_out[node] * 1.2
        elif node in sink_set:
            row_lower[node], row_upper[node] = -INF, net_out[node]
        # transit nodes conserve flow
    lp = _lp_from_coo(rows, cols, vals, (nodes, ncol), obj, numpy.zeros(ncol), upper,
                      row_lower, row_upper, name)
    lp.info.update({'nodes': nodes, 'nsorc': nsorc, 'nsink': nsink, 'arcs': ncol})
    return lp


def _random(rng, p, name):
    """Feasible, bounded random LP around a planted point, with redundancy knobs."""
    nrow, ncol = int(p['nrow']), int(p['ncol'])
    max_coef = int(p['max_coef'])
    n_dupc = int(round(p['dup_cols'] * ncol))
    n_base_cols = ncol - n_dupc
    n_dupr = int(round(p['dup_rows'] * nrow))
    n_base_rows = nrow - n_dupr
    if n_base_cols < 1 or n_base_rows < 1:
        raise GeneratorError("Random needs at least one non-duplicate row and column")

    lower = rng.integers(-5, 1, size=ncol).astype(float)
    upper = lower + rng.integers(1, 8, size=ncol)
    x0 = lower + rng.random(ncol) * (upper - lower)
    fixed = rng.random(ncol) < p['fixed_cols']
    lower[fixed] = upper[fixed] = x0[fixed]
    obj = rng.integers(-max_coef, max_coef + 1, size=ncol).astype(float)

    def coefs(size):
        v = rng.integers(1, max_coef + 1, size=size).astype(float)
        return v * rng.choice((-1.0, 1.0), size=size)

    row_dicts, kinds = [], []
    for _ in range(n_base_rows):
        u = rng.random()
        if u < p['singleton_rows']:
            support, kind = rng.choice(n_base_cols, size=1, replace=False), 'range'
        elif u < p['singleton_rows'] + p['short_equalities']:
            size = min(n_base_cols, int(rng.integers(2, 4)))
            support, kind = rng.choice(n_base_cols, size=size, replace=False), 'equality'
        else:
            size = min(n_base_cols, max(1, int(rng.binomial(n_base_cols, p['dens']))))
            support, kind = rng.choice(n_base_cols, size=size, replace=False), None
        row_dicts.append(dict(zip((int(s) for s in support), coefs(len(support)))))
        if kind is None:
            kind = 'free' if rng.random() < p['free_rows'] else \
                str(rng.choice(('upper', 'lower', 'range', 'equality'), p=(0.35, 0.35, 0.15, 0.15)))
        kinds.append(kind)

    # duplicate columns: scaled copies of base columns, cost scaled alike
    for j in range(n_base_cols, ncol):
        src = int(rng.integers(0, n_base_cols))
        alpha = float(rng.choice((-2.0, -1.0, 0.5, 1.0, 2.0, 3.0)))
        for row in row_dicts:
            if src in row:
                row[j] = alpha * row[src]
        obj[j] = alpha * obj[src]

    row_lower, row_upper = [], []
    for row, kind in zip(row_dicts, kinds):
        v = sum(a * x0[j] for j, a in row.items())
        s1, s2 = rng.random(2) * 3
        bounds = {'upper': (-INF, v + s1), 'lower': (v - s1, INF), 'range': (v - s1, v + s2),
                  'equality': (v, v), 'free': (-INF, INF)}[kind]
        row_lower.append(bounds[0])
        row_upper.append(bounds[1])

    # duplicate rows: scaled copies with bounds no tighter than needed by x0
    for _ in range(n_dupr):
        src = int(rng.integers(0, n_base_rows))
        alpha = float(rng.choice((-2.0, -1.0, 0.5, 2.0)))
        row_dicts.append({j: alpha * a for j, a in row_dicts[src].items()})
        lo, hi = row_lower[src], row_upper[src]
        lo = lo - rng.random() if numpy.isfinite(lo) else lo
        hi = hi + rng.random() if numpy.isfinite(hi) else hi
        lo, hi = alpha * lo, alpha * hi
        if alpha < 0:
            lo, hi = hi, lo
        row_lower.append(lo)
        row_upper.append(hi)

    rows = _Rows()
    for row, lo, hi in zip(row_dicts, row_lower, row_upper):
        rows.add(row, lo, hi)
    lp = rows.problem(obj, lower, upper, name)
    lp.info['planted'] = x0.tolist()
    return lp


_BUILDERS = {
    'SetCovering': _set_covering,
    'FacilityLocation': _facility_location,
    'MulticommodityFlow': _multicommodity_flow,
    'GeneralizedNetworkFlow': _generalized_network_flow,
    'Random': _random,
    'RedundancyHeavy': _random,
}


def generate(spec):
    """Build the LP of one GenSpec; deterministic in (family, params, seed, index)."""
    params = spec.resolved()
    rng = instance_rng(spec.seed, spec.index)
    name = '{0}_{1}_{2}'.format(spec.family, spec.seed, spec.index)
    lp = _BUILDERS[spec.family](rng, params, name)
    if lp.num_rows == 0 or lp.num_cols == 0 or lp.nnz() == 0:
        raise GeneratorError("{0} with {1} produced an empty problem".format(spec.family, params))
    lp.info.update({'family': spec.family, 'seed': spec.seed, 'index': spec.index})
    logger.debug("generated %r", lp)
    return lp


def generate_many(family, params=None, seed=0, count=1):
    return [generate(GenSpec(family, dict(params or {}), seed, k)) for k in range(count)]


def write_instances(family, params, seed, count, out_dir):
    """Write `count` MPS files plus manifest.json; returns the manifest dict."""
    os.makedirs(out_dir, exist_ok=True)
    resolved = GenSpec(family, dict(params or {}), seed).resolved()
    entries = []
    for k in range(count):
        lp = generate(GenSpec(family, dict(params or {}), seed, k))
        fname = '{0}.mps'.format(lp.name)
        write_mps(lp, os.path.join(out_dir, fname))
        entries.append({'file': fname, 'index': k, 'rows': lp.num_rows, 'cols': lp.num_cols,
                        'nnz': lp.nnz(), 'density': lp.density()})
    manifest = {
        'family': family,
        'params': resolved,
        'seed': seed,
        'rng': 'PCG64(SeedSequence(seed, spawn_key=(index,)))',
        'distributions': _DISTRIBUTIONS[family],
        'instances': entries,
    }
    with open(os.path.join(out_dir, 'manifest.json'), 'w') as writer:
        json.dump(manifest, writer, indent=2)
    logger.info("wrote %d %s instances to %s", count, family, out_dir)
    return manifest


_DISTRIBUTIONS = {
    'SetCovering': 'two or more rows per column, every row covered; costs uniform integers 1..max_coef',
    'FacilityLocation': 'demands U{5..34}, capacities U{10..59} rescaled to ratio*total demand, '
                        'transport costs from unit-square distances',
    'MulticommodityFlow': 'n nodes in [min_n, max_n], ring plus 2n random arcs, n commodities, '
                          'demands U{10..99}, ring capacity equal to total demand',
    'GeneralizedNetworkFlow': 'parameters jittered +-10%, gains U(0.8, 1.2), planted source-sink paths',
    'Random': 'planted point inside integer bounds, integer coefficients in +-1..max_coef',
    'RedundancyHeavy': 'Random with 50% duplicate rows and 25% fixed columns',
}
