# Presolvers, reduction stack and postsolve
#
# Each presolver is one greedy pass over rows/columns in ascending position
# order.  Every reduction that matters for recovering a primal point is pushed
# on a PresolveStack, keyed by the row/column labels the stack was created
# with, so compaction between rounds never invalidates it.

import enum
import logging
import time
from dataclasses import dataclass, field

import numpy

from .Errors import (DimensionError, InfeasibleDetected, LPError,
                     UnsupportedPresolverError)
from .LPProblem import INF, Activity, Solution, Status, ext_sub

__all__ = [
    'PRESOLVER_NAMES',
    'NUM_PRESOLVER_SLOTS',
    'SUPPORTED_PRESOLVERS',
    'DEFAULT_ORDER',
    'TOL',
    'PIVOT_TOL',
    'parse_presolver',
    'presolver_name',
    'ActionSequence',
    'ReductionKind',
    'Reduction',
    'PresolveStack',
    'StepStats',
    'apply',
    'apply_sequence',
    'end_round',
    'presolve_off',
    'postsolve',
    'implied_free_columns',
    'tighten_candidates',
]

logger = logging.getLogger(__name__)

# Index -> name for every presolver slot; 3, 5 and 14 have no implementation.
PRESOLVER_NAMES = {
    0: 'make_fixed',
    1: 'test_redundant',
    2: 'dupcol',
    3: 'twoxtwo',
    4: 'duprow',
    5: 'gubrow',
    6: 'implied_free',
    7: 'slack_doubleton',
    8: 'tighten_action',
    9: 'remove_dual',
    10: 'doubleton',
    11: 'tripleton',
    12: 'forcing',
    13: 'slack_singleton',
    14: 'duprow3',
}
NUM_PRESOLVER_SLOTS = len(PRESOLVER_NAMES)
SUPPORTED_PRESOLVERS = (0, 1, 2, 4, 6, 7, 8, 9, 10, 11, 12, 13)
DEFAULT_ORDER = SUPPORTED_PRESOLVERS

TOL = 1e-9
PIVOT_TOL = 1e-7
# bound tightenings smaller than this (relative) are not worth recording
BOUND_EPS = 1e-7
# derived bounds beyond this magnitude are numerically useless
BOUND_HUGE = 1e9


def _tol(v):
    return TOL * max(1.0, abs(v)) if numpy.isfinite(v) else TOL


def parse_presolver(token):
    """Presolver id from an int or a name; rejects unsupported slots."""
    if isinstance(token, str):
        key = token.strip().lower().replace('-', '_').replace(' ', '_')
        if key.isdigit():
            pid = int(key)
        else:
            matches = [k for k, v in PRESOLVER_NAMES.items() if v == key]
            if not matches:
                raise UnsupportedPresolverError(token)
            pid = matches[0]
    else:
        pid = int(token)
    if pid not in SUPPORTED_PRESOLVERS:
        raise UnsupportedPresolverError(token)
    return pid


def presolver_name(pid):
    return PRESOLVER_NAMES[pid]


@dataclass(frozen=True)
class ActionSequence:
    """Ordered presolver ids; the end token is implicit.  Empty = stop presolving."""

    ids: tuple = ()
    truncated: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'ids', tuple(parse_presolver(p) for p in self.ids))

    @classmethod
    def parse(cls, text):
        """Comma separated ids or names, e.g. ``"make_fixed,4"``."""
        parts = [p for p in text.split(',') if p.strip()] if text else []
        return cls(tuple(parts))

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)

    @property
    def empty(self):
        return not self.ids

    def names(self):
        return [PRESOLVER_NAMES[p] for p in self.ids]


class ReductionKind(enum.Enum):
    FixedVar = 'FixedVar'
    RemovedRow = 'RemovedRow'
    SubstitutedVar = 'SubstitutedVar'
    MergedDupCol = 'MergedDupCol'
    BoundTightened = 'BoundTightened'
    SlackColumn = 'SlackColumn'


@dataclass
class Reduction:
    kind: ReductionKind
    presolver: int
    payload: dict


class PresolveStack(object):
    """Append-only record of reductions applied to one problem."""

    def __init__(self, lp):
        cols, rows = lp.cols(), lp.rows()
        self.original_dims = (len(rows), len(cols))
        self.original_obj = lp.obj[cols].copy()
        self.original_offset = lp.obj_offset
        self.reductions = []
        self._col_key = {int(lp.col_origin[j]): k for k, j in enumerate(cols)}
        self._row_key = {int(lp.row_origin[i]): k for k, i in enumerate(rows)}
        self.reduced_cols = list(range(len(cols)))

    def __len__(self):
        return len(self.reductions)

    def cid(self, lp, j):
        return self._col_key[int(lp.col_origin[j])]

    def rid(self, lp, i):
        return self._row_key[int(lp.row_origin[i])]

    def push(self, kind, presolver, **payload):
        self.reductions.append(Reduction(kind, presolver, payload))

    def sync(self, lp):
        """Remember which original columns the live columns of lp are."""
        self.reduced_cols = [self.cid(lp, j) for j in lp.cols()]

    def counts(self):
        out = {}
        for r in self.reductions:
            out[r.kind.value] = out.get(r.kind.value, 0) + 1
        return out


@dataclass
class StepStats:
    presolver: int
    nnz_before: int
    nnz_after: int
    rows_removed: int = 0
    cols_removed: int = 0
    scanned: int = 0
    reductions: int = 0
    elapsed: float = 0.0
    elapsed_cost: float = 0.0

    @property
    def name(self):
        return PRESOLVER_NAMES[self.presolver]

    @property
    def changed(self):
        return bool(self.nnz_before != self.nnz_after or self.rows_removed or self.cols_removed)


class _Pass(object):
    """Bookkeeping shared by the presolvers during one pass."""

    def __init__(self, lp, stack, pid):
        self.lp = lp
        self.stack = stack
        self.pid = pid
        self.scanned = 0
        self.reductions = 0

    def infeasible(self, row=None, col=None, detail=''):
        return InfeasibleDetected(self.pid, row=row, col=col, detail=detail)

    def fix(self, j, value):
        lp = self.lp
        self.scanned += len(lp.col(j))
        self.stack.push(ReductionKind.FixedVar, self.pid, col=self.stack.cid(lp, j), value=float(value))
        lp.remove_column(j, value)
        self.reductions += 1

    def drop_row(self, i, **extra):
        self.stack.push(ReductionKind.RemovedRow, self.pid, row=self.stack.rid(self.lp, i), **extra)
        self.lp.remove_row(i)
        self.reductions += 1

    def set_bounds(self, j, lower, upper):
        """Tighten column bounds; crossing beyond tolerance is infeasible."""
        lp = self.lp
        old_l, old_u = lp.col_lower[j], lp.col_upper[j]
        lower = max(lower, old_l)
        upper = min(upper, old_u)
        if lower > upper:
            if lower - upper > _tol(max(abs(lower), abs(upper))) * 10:
                raise self.infeasible(col=j, detail='bounds [{0}, {1}]'.format(lower, upper))
            lower = upper = 0.5 * (lower + upper) if numpy.isfinite(lower + upper) else min(lower, upper)
        if lower == old_l and upper == old_u:
            return False
        lp.col_lower[j], lp.col_upper[j] = lower, upper
        self.stack.push(ReductionKind.BoundTightened, self.pid, col=self.stack.cid(lp, j),
                        old=(float(old_l), float(old_u)), new=(float(lower), float(upper)))
        self.reductions += 1
        return True

    def fold_singleton_row(self, i):
        """Turn a one-entry row into column bounds and drop it."""
        lp = self.lp
        (j, a), = lp.row(i).items()
        lo, hi = lp.row_lower[i] / a, lp.row_upper[i] / a
        if a < 0:
            lo, hi = hi, lo
        self.set_bounds(j, lo, hi)
        self.drop_row(i, folded_into=self.stack.cid(lp, j))

    def substitute(self, i, k, keep_row):
        """Eliminate x_k through equality row i.

        x_k = (b - sum a_j x_j) / a_k is substituted into the objective and the
        other rows of column k.  With keep_row the row survives as a range
        over the remaining entries encoding x_k's bounds, otherwise it is
        dropped (x_k must then be implied free).  Returns False when the
        substitution would add nonzeros.
        """
        lp, stack = self.lp, self.stack
        row = lp.row(i)
        a_k = row[k]
        b = lp.row_lower[i]
        others = {j: a for j, a in row.items() if j != k}
        col_k = lp.col(k)
        delta = -len(row) if not keep_row else -1
        for r in col_k:
            if r == i:
                continue
            target = lp.row(r)
            delta += sum(1 for j in others if j not in target) - 1
        self.scanned += len(row) + len(col_k)
        if delta > 0:
            return False

        stack.push(ReductionKind.SubstitutedVar, self.pid, col=stack.cid(lp, k),
                   coefs={stack.cid(lp, j): a for j, a in sorted(others.items())},
                   pivot=float(a_k), rhs=float(b))
        for r in sorted(col_k):
            if r == i:
                continue
            f = col_k[r] / a_k
            for j, a in others.items():
                lp.set_coef(r, j, lp.coef(r, j) - f * a)
            shift = f * b
            if numpy.isfinite(lp.row_lower[r]):
                lp.row_lower[r] -= shift
            if numpy.isfinite(lp.row_upper[r]):
                lp.row_upper[r] -= shift
            lp.set_coef(r, k, 0.0)
        c_k = lp.obj[k]
        if c_k != 0.0:
            for j, a in others.items():
                lp.obj[j] -= c_k * a / a_k
            lp.obj_offset += c_k * b / a_k
            lp.obj[k] = 0.0

        if keep_row:
            lo_term, hi_term = Activity.terms(a_k, lp.col_lower[k], lp.col_upper[k])
            new_lo = ext_sub(b, hi_term)
            new_hi = ext_sub(b, lo_term)
            lp.remove_column(k, 0.0)
            lp.row_lower[i], lp.row_upper[i] = new_lo, new_hi
            if numpy.isinf(new_lo) and numpy.isinf(new_hi):
                self.drop_row(i)
        else:
            lp.remove_row(i)
            lp.remove_column(k, 0.0)
            stack.push(ReductionKind.RemovedRow, self.pid, row=stack.rid(lp, i))
        self.reductions += 1
        return True


# -- activity based helpers shared with feature extraction ----------------------

def _row_implied_range(lp, i, act, k, a_k):
    """Range of x_k implied by equality row i and the other columns' bounds."""
    lo_term, hi_term = Activity.terms(a_k, lp.col_lower[k], lp.col_upper[k])
    rest_lo = act.lower_without(lo_term)
    rest_hi = act.upper_without(hi_term)
    b = lp.row_lower[i]
    lo_ax = b - rest_hi if numpy.isfinite(rest_hi) else -INF
    hi_ax = b - rest_lo if numpy.isfinite(rest_lo) else INF
    if a_k > 0:
        return lo_ax / a_k, hi_ax / a_k
    return hi_ax / a_k, lo_ax / a_k


def implied_free_columns(lp, i, act=None):
    """Columns of equality row i whose explicit bounds are implied by the row."""
    if not lp.is_equality(i):
        return []
    row = lp.row(i)
    if len(row) < 2:
        return []
    act = act if act is not None else lp.activity(i)
    out = []
    for k, a_k in row.items():
        if abs(a_k) < PIVOT_TOL:
            continue
        lo, hi = _row_implied_range(lp, i, act, k, a_k)
        l_k, u_k = lp.col_lower[k], lp.col_upper[k]
        lower_ok = numpy.isinf(l_k) or lo >= l_k - _tol(l_k)
        upper_ok = numpy.isinf(u_k) or hi <= u_k + _tol(u_k)
        if lower_ok and upper_ok:
            out.append(k)
    return out


def tighten_candidates(lp):
    """Zero-cost columns whose entries all share one sign."""
    out = []
    for j in lp.cols():
        col = lp.col(j)
        if abs(lp.obj[j]) > 1e-12 or not col:
            continue
        vals = list(col.values())
        if all(v > 0 for v in vals) or all(v < 0 for v in vals):
            out.append(j)
    return out


def _loosens_rows(lp, j, upward):
    """True if moving x_j in the given direction can never violate a row."""
    for i, a in lp.col(j).items():
        increases = (a > 0) == upward
        if increases and numpy.isfinite(lp.row_upper[i]):
            return False
        if not increases and numpy.isfinite(lp.row_lower[i]):
            return False
    return True


# -- presolvers ----------------------------------------------------------------

def _make_fixed(ctx):
    lp = ctx.lp
    for j in lp.cols():
        ctx.scanned += 1
        l, u = lp.col_lower[j], lp.col_upper[j]
        if l == u:
            ctx.fix(j, l)
        elif numpy.isfinite(l) and numpy.isfinite(u) and u - l <= _tol(l):
            ctx.fix(j, 0.5 * (l + u))


def _test_redundant(ctx):
    lp = ctx.lp
    for i in lp.rows():
        if not lp.row_alive(i):
            continue
        row = lp.row(i)
        ctx.scanned += len(row)
        act = lp.activity(i)
        lo, hi = lp.row_lower[i], lp.row_upper[i]
        if act.lower > hi + _tol(hi) or act.upper < lo - _tol(lo):
            raise ctx.infeasible(row=i, detail='activity [{0}, {1}] vs [{2}, {3}]'.format(
                act.lower, act.upper, lo, hi))
        if act.lower >= lo - _tol(lo) and act.upper <= hi + _tol(hi):
            ctx.drop_row(i)
            continue
        for j in sorted(row):
            a = row[j]
            if abs(a) < PIVOT_TOL:
                continue
            l_j, u_j = lp.col_lower[j], lp.col_upper[j]
            lo_term, hi_term = Activity.terms(a, l_j, u_j)
            rest_lo = act.lower_without(lo_term)
            rest_hi = act.upper_without(hi_term)
            max_ax = hi - rest_lo if numpy.isfinite(hi) and numpy.isfinite(rest_lo) else INF
            min_ax = lo - rest_hi if numpy.isfinite(lo) and numpy.isfinite(rest_hi) else -INF
            if a > 0:
                new_l, new_u = min_ax / a, max_ax / a
            else:
                new_l, new_u = max_ax / a, min_ax / a
            if not (numpy.isfinite(new_l) and abs(new_l) < BOUND_HUGE
                    and (numpy.isinf(l_j) or new_l > l_j + BOUND_EPS * max(1.0, abs(new_l)))):
                new_l = l_j
            if not (numpy.isfinite(new_u) and abs(new_u) < BOUND_HUGE
                    and (numpy.isinf(u_j) or new_u < u_j - BOUND_EPS * max(1.0, abs(new_u)))):
                new_u = u_j
            if (new_l, new_u) != (l_j, u_j) and ctx.set_bounds(j, new_l, new_u):
                act = lp.activity(i)
                ctx.scanned += len(row)


def _duplicate_groups(vectors):
    """Group {index: {key: value}} vectors equal up to a scalar multiple."""
    groups = {}
    for idx, vec in vectors:
        if not vec:
            continue
        support = tuple(sorted(vec))
        lead = vec[support[0]]
        ratios = tuple(round(vec[s] / lead, 9) for s in support)
        groups.setdefault((support, ratios), []).append(idx)
    return sorted((g for g in groups.values() if len(g) > 1), key=lambda g: g[0])


def _proportional(u, v):
    """alpha with u = alpha * v (same support assumed), or None."""
    first = next(iter(v))
    alpha = u[first] / v[first]
    for key, val in v.items():
        if abs(u[key] - alpha * val) > _tol(u[key]):
            return None
    return alpha


def _pick(lo, hi):
    """A finite point of [lo, hi], the one closest to zero."""
    if lo > hi:
        if numpy.isfinite(lo) and numpy.isfinite(hi):
            return 0.5 * (lo + hi)
        return lo if numpy.isfinite(lo) else hi
    return float(min(max(0.0, lo), hi))


def _dupcol(ctx):
    lp, stack = ctx.lp, ctx.stack
    cols = [(j, lp.col(j)) for j in lp.cols()]
    ctx.scanned += sum(len(c) for _, c in cols)
    for group in _duplicate_groups(cols):
        keep = group[0]
        for j1 in group[1:]:
            if not (lp.col_alive(j1) and lp.col_alive(keep)):
                continue
            ctx.scanned += len(lp.col(j1))
            alpha = _proportional(lp.col(j1), lp.col(keep))
            if alpha is None or alpha == 0.0:
                continue
            c1, c2 = lp.obj[j1], lp.obj[keep]
            d = c1 - alpha * c2
            l1, u1 = lp.col_lower[j1], lp.col_upper[j1]
            l2, u2 = lp.col_lower[keep], lp.col_upper[keep]
            if abs(d) <= TOL * max(1.0, abs(c1), abs(alpha * c2)):
                new_l = l2 + min(alpha * l1, alpha * u1)
                new_u = u2 + max(alpha * l1, alpha * u1)
                stack.push(ReductionKind.MergedDupCol, ctx.pid, removed=stack.cid(lp, j1),
                           kept=stack.cid(lp, keep), alpha=float(alpha),
                           removed_bounds=(float(l1), float(u1)), kept_bounds=(float(l2), float(u2)))
                lp.remove_column(j1, 0.0)
                lp.col_lower[keep], lp.col_upper[keep] = new_l, new_u
                ctx.reductions += 1
                continue
            # dominated: moving x_j1 toward one bound is absorbed by x_keep
            if d > 0:
                free_side = numpy.isinf(u2) if alpha > 0 else numpy.isinf(l2)
                if free_side and numpy.isfinite(l1):
                    ctx.fix(j1, l1)
            else:
                free_side = numpy.isinf(l2) if alpha > 0 else numpy.isinf(u2)
                if free_side and numpy.isfinite(u1):
                    ctx.fix(j1, u1)


def _duprow(ctx):
    lp = ctx.lp
    rows = [(i, lp.row(i)) for i in lp.rows()]
    ctx.scanned += sum(len(r) for _, r in rows)
    for group in _duplicate_groups(rows):
        keep = group[0]
        for i1 in group[1:]:
            if not (lp.row_alive(i1) and lp.row_alive(keep)):
                continue
            ctx.scanned += len(lp.row(i1))
            alpha = _proportional(lp.row(i1), lp.row(keep))
            if alpha is None or alpha == 0.0:
                continue
            lo1, hi1 = lp.row_lower[i1] / alpha, lp.row_upper[i1] / alpha
            if alpha < 0:
                lo1, hi1 = hi1, lo1
            lo = max(lp.row_lower[keep], lo1)
            hi = min(lp.row_upper[keep], hi1)
            if lo > hi:
                if lo - hi > _tol(max(abs(lo), abs(hi))) * 10:
                    raise ctx.infeasible(row=i1, detail='duplicate of row {0} with disjoint bounds'.format(keep))
                lo = hi = 0.5 * (lo + hi)
            lp.row_lower[keep], lp.row_upper[keep] = lo, hi
            ctx.drop_row(i1, duplicate_of=ctx.stack.rid(lp, keep))


def _implied_free(ctx):
    lp = ctx.lp
    for i in lp.rows():
        if not lp.row_alive(i) or not lp.is_equality(i):
            continue
        row = lp.row(i)
        ctx.scanned += len(row)
        candidates = implied_free_columns(lp, i)
        for k in sorted(candidates, key=lambda c: (len(lp.col(c)), c)):
            if ctx.substitute(i, k, keep_row=False):
                break


def _slack_doubleton(ctx):
    lp = ctx.lp
    for i in lp.rows():
        if not lp.row_alive(i):
            continue
        ctx.scanned += 1
        if len(lp.row(i)) == 1:
            ctx.fold_singleton_row(i)


def _tighten_action(ctx):
    lp = ctx.lp
    for j in lp.cols():
        if not lp.col_alive(j):
            continue
        col = lp.col(j)
        ctx.scanned += len(col) + 1
        if abs(lp.obj[j]) > 1e-12:
            continue
        l, u = lp.col_lower[j], lp.col_upper[j]
        if not col:
            ctx.fix(j, _pick(l, u))
            continue
        vals = list(col.values())
        if not (all(v > 0 for v in vals) or all(v < 0 for v in vals)):
            continue
        if numpy.isfinite(u) and _loosens_rows(lp, j, upward=True):
            ctx.fix(j, u)
        elif numpy.isfinite(l) and _loosens_rows(lp, j, upward=False):
            ctx.fix(j, l)


def _remove_dual(ctx):
    lp = ctx.lp
    for j in lp.cols():
        c = lp.obj[j]
        ctx.scanned += len(lp.col(j)) + 1
        if abs(c) <= TOL:
            continue
        if c > 0 and numpy.isfinite(lp.col_lower[j]) and _loosens_rows(lp, j, upward=False):
            ctx.fix(j, lp.col_lower[j])
        elif c < 0 and numpy.isfinite(lp.col_upper[j]) and _loosens_rows(lp, j, upward=True):
            ctx.fix(j, lp.col_upper[j])


def _pivot_order(lp, row, prefer_short):
    cands = [k for k, a in row.items() if abs(a) >= PIVOT_TOL]
    if prefer_short:
        return sorted(cands, key=lambda k: (len(lp.col(k)), -abs(row[k]), k))
    return sorted(cands, key=lambda k: (-abs(row[k]), len(lp.col(k)), k))


def _doubleton(ctx):
    lp = ctx.lp
    for i in lp.rows():
        if not lp.row_alive(i):
            continue
        ctx.scanned += 1
        row = lp.row(i)
        if len(row) != 2 or not lp.is_equality(i):
            continue
        for k in _pivot_order(lp, row, prefer_short=False):
            if ctx.substitute(i, k, keep_row=True):
                if lp.row_alive(i):
                    ctx.fold_singleton_row(i)
                break


def _tripleton(ctx):
    lp = ctx.lp
    for i in lp.rows():
        if not lp.row_alive(i):
            continue
        ctx.scanned += 1
        row = lp.row(i)
        if len(row) != 3 or not lp.is_equality(i):
            continue
        for k in _pivot_order(lp, row, prefer_short=True):
            if ctx.substitute(i, k, keep_row=True):
                break


def _forcing(ctx):
    lp = ctx.lp
    for i in lp.rows():
        if not lp.row_alive(i):
            continue
        row = lp.row(i)
        ctx.scanned += len(row)
        act = lp.activity(i)
        lo, hi = lp.row_lower[i], lp.row_upper[i]
        L, U = act.lower, act.upper
        if L > hi + _tol(hi) or U < lo - _tol(lo):
            raise ctx.infeasible(row=i, detail='activity [{0}, {1}] vs [{2}, {3}]'.format(L, U, lo, hi))
        if numpy.isfinite(L) and numpy.isfinite(hi) and abs(L - hi) <= _tol(hi):
            at_lower = True
        elif numpy.isfinite(U) and numpy.isfinite(lo) and abs(U - lo) <= _tol(lo):
            at_lower = False
        else:
            continue
        for j, a in sorted(row.items()):
            use_lower = (a > 0) == at_lower
            ctx.fix(j, lp.col_lower[j] if use_lower else lp.col_upper[j])
        ctx.drop_row(i, forcing=True)


def _slack_singleton(ctx):
    lp, stack = ctx.lp, ctx.stack
    for j in lp.cols():
        if not lp.col_alive(j):
            continue
        col = lp.col(j)
        ctx.scanned += 1
        if len(col) != 1 or abs(lp.obj[j]) > 1e-12:
            continue
        (i, a), = col.items()
        row = lp.row(i)
        ctx.scanned += len(row)
        l, u = lp.col_lower[j], lp.col_upper[j]
        s_lo, s_hi = Activity.terms(a, l, u)
        old_lo, old_hi = lp.row_lower[i], lp.row_upper[i]
        new_lo = ext_sub(old_lo, s_hi)
        new_hi = ext_sub(old_hi, s_lo)
        stack.push(ReductionKind.SlackColumn, ctx.pid, col=stack.cid(lp, j), row=stack.rid(lp, i),
                   coef=float(a), coefs={stack.cid(lp, k): v for k, v in sorted(row.items()) if k != j},
                   row_bounds=(float(old_lo), float(old_hi)), col_bounds=(float(l), float(u)))
        lp.remove_column(j, 0.0)
        lp.obj[j] = 0.0
        lp.row_lower[i], lp.row_upper[i] = new_lo, new_hi
        ctx.reductions += 1
        if not lp.row(i):
            if new_lo > _tol(new_lo) or new_hi < -_tol(new_hi):
                raise ctx.infeasible(row=i, detail='empty row with bounds [{0}, {1}]'.format(new_lo, new_hi))
            ctx.drop_row(i)
        elif numpy.isinf(new_lo) and numpy.isinf(new_hi):
            ctx.drop_row(i)


_HANDLERS = {
    0: _make_fixed,
    1: _test_redundant,
    2: _dupcol,
    4: _duprow,
    6: _implied_free,
    7: _slack_doubleton,
    8: _tighten_action,
    9: _remove_dual,
    10: _doubleton,
    11: _tripleton,
    12: _forcing,
    13: _slack_singleton,
}


def apply(presolver, lp, stack, cost_model=None):
    """Run one pass of a presolver on lp, recording reductions on stack.

    Raises InfeasibleDetected (with the partial StepStats in ``.stats``) when
    the pass proves infeasibility.
    """
    pid = parse_presolver(presolver)
    nnz_before = lp.nnz()
    rows_before, cols_before = lp.shape
    ctx = _Pass(lp, stack, pid)
    start = time.perf_counter()
    error = None
    try:
        _HANDLERS[pid](ctx)
    except InfeasibleDetected as exc:
        error = exc
    stats = StepStats(pid, nnz_before, lp.nnz(),
                      rows_removed=rows_before - lp.num_rows,
                      cols_removed=cols_before - lp.num_cols,
                      scanned=ctx.scanned, reductions=ctx.reductions,
                      elapsed=time.perf_counter() - start)
    stats.elapsed_cost = cost_model.presolver_cost(stats) if cost_model is not None else stats.elapsed
    stack.sync(lp)
    if error is not None:
        logger.info("%s", error)
        error.stats = stats
        raise error
    if stats.nnz_after > stats.nnz_before:
        raise LPError("{0} increased nnz from {1} to {2}".format(stats.name, nnz_before, stats.nnz_after))
    logger.debug("%s: nnz %d -> %d, rows -%d, cols -%d, %d reductions",
                 stats.name, nnz_before, stats.nnz_after, stats.rows_removed,
                 stats.cols_removed, stats.reductions)
    return stats


def apply_sequence(seq, lp, stack, cost_model=None):
    """Apply presolvers in order; on infeasibility the exception carries
    the completed stats in ``.completed``."""
    done = []
    for pid in seq:
        try:
            done.append(apply(pid, lp, stack, cost_model))
        except InfeasibleDetected as exc:
            exc.completed = done + [exc.stats]
            raise
    return done


def end_round(lp, stack):
    """Round boundary: compact tombstoned rows/columns."""
    lp.compact()
    stack.sync(lp)


def presolve_off(lp):
    """Stack for lp with presolve turned off: no reductions, identity postsolve."""
    return PresolveStack(lp)


def postsolve(stack, reduced_solution):
    """Map an optimal solution of the reduced problem back to the original columns."""
    if reduced_solution.status is not Status.Optimal:
        raise LPError("postsolve needs an optimal solution, got {0}".format(reduced_solution.status))
    primal = numpy.asarray(reduced_solution.primal, dtype=float)
    if primal.size != len(stack.reduced_cols):
        raise DimensionError("solution has {0} entries, reduced problem has {1} columns".format(
            primal.size, len(stack.reduced_cols)))
    n = stack.original_dims[1]
    x = numpy.full(n, numpy.nan)
    x[stack.reduced_cols] = primal
    for red in reversed(stack.reductions):
        p = red.payload
        kind = red.kind
        if kind is ReductionKind.FixedVar:
            x[p['col']] = p['value']
        elif kind is ReductionKind.SubstitutedVar:
            rest = sum(a * x[k] for k, a in p['coefs'].items())
            x[p['col']] = (p['rhs'] - rest) / p['pivot']
        elif kind is ReductionKind.MergedDupCol:
            alpha = p['alpha']
            y = x[p['kept']]
            l1, u1 = p['removed_bounds']
            l2, u2 = p['kept_bounds']
            lo, hi = (y - u2) / alpha, (y - l2) / alpha
            if alpha < 0:
                lo, hi = hi, lo
            x1 = _pick(max(l1, lo), min(u1, hi))
            x[p['removed']] = x1
            x[p['kept']] = y - alpha * x1
        elif kind is ReductionKind.SlackColumn:
            a = p['coef']
            r = sum(v * x[k] for k, v in p['coefs'].items())
            row_lo, row_hi = p['row_bounds']
            lo, hi = (row_lo - r) / a, (row_hi - r) / a
            if a < 0:
                lo, hi = hi, lo
            l, u = p['col_bounds']
            x[p['col']] = _pick(max(l, lo), min(u, hi))
    missing = numpy.flatnonzero(numpy.isnan(x))
    if missing.size:
        raise LPError("postsolve left columns {0} without a value".format(missing[:5].tolist()))
    objective = float(numpy.dot(stack.original_obj, x)) + stack.original_offset
    return Solution(x, objective, Status.Optimal, info=dict(reduced_solution.info))
