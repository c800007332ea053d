# Sparse LP model in general form
#
#   min  c'x + offset
#   s.t. row_lower <= A x <= row_upper
#        col_lower <=   x <= col_upper
#
# A is held twice (row-major and column-major dicts) so presolvers can walk
# either direction.  Removed rows/columns are tombstoned in place and only
# renumbered by compact(), which keeps positions stable while a presolve round
# is running.

import copy
import enum
import logging
from dataclasses import dataclass, field

import numpy
import scipy.sparse

from .Errors import BoundArithmeticError, DimensionError, LPError

__all__ = [
    'INF',
    'ZERO_TOL',
    'ext_add',
    'ext_sub',
    'ext_mul',
    'Activity',
    'Status',
    'Solution',
    'LPProblem',
    'nnz',
    'remove_column',
    'remove_row',
]

logger = logging.getLogger(__name__)

INF = numpy.inf

# coefficients at or below this magnitude are not stored
ZERO_TOL = 1e-12


def ext_add(a, b):
    """Extended-real addition; inf + (-inf) has no value and raises."""
    if numpy.isinf(a) and numpy.isinf(b) and (a > 0) != (b > 0):
        raise BoundArithmeticError("undefined extended-real sum {0} + {1}".format(a, b))
    return float(a) + float(b)


def ext_sub(a, b):
    return ext_add(a, -b)


def ext_mul(a, s):
    """Scale an extended real by a finite factor; 0 * inf is taken as 0."""
    if not numpy.isfinite(s):
        raise BoundArithmeticError("scale factor must be finite, got {0}".format(s))
    if s == 0.0:
        return 0.0
    return float(a) * float(s)


class Activity(object):
    """Activity bounds L <= a_i.x <= U of one row under the current column bounds.

    Infinite contributions are counted separately so that the bound with one
    term left out stays well defined.
    """

    __slots__ = ('lo_finite', 'lo_inf', 'hi_finite', 'hi_inf')

    def __init__(self, lo_finite=0.0, lo_inf=0, hi_finite=0.0, hi_inf=0):
        self.lo_finite = lo_finite
        self.lo_inf = lo_inf
        self.hi_finite = hi_finite
        self.hi_inf = hi_inf

    @staticmethod
    def terms(a, lower, upper):
        if a > 0:
            return a * lower, a * upper
        return a * upper, a * lower

    @classmethod
    def of_row(cls, lp, i):
        act = cls()
        for j, a in lp.row(i).items():
            lo, hi = cls.terms(a, lp.col_lower[j], lp.col_upper[j])
            if numpy.isinf(lo):
                act.lo_inf += 1
            else:
                act.lo_finite += lo
            if numpy.isinf(hi):
                act.hi_inf += 1
            else:
                act.hi_finite += hi
        return act

    @property
    def lower(self):
        return -INF if self.lo_inf else self.lo_finite

    @property
    def upper(self):
        return INF if self.hi_inf else self.hi_finite

    def lower_without(self, term):
        """Lower activity with one term (its own lower contribution) removed."""
        if numpy.isinf(term):
            return self.lo_finite if self.lo_inf == 1 else -INF
        return self.lo_finite - term if self.lo_inf == 0 else -INF

    def upper_without(self, term):
        if numpy.isinf(term):
            return self.hi_finite if self.hi_inf == 1 else INF
        return self.hi_finite - term if self.hi_inf == 0 else INF


class Status(enum.Enum):
    Optimal = 'Optimal'
    Infeasible = 'Infeasible'
    Unbounded = 'Unbounded'
    IterationLimit = 'IterationLimit'

    def __str__(self):
        return self.value


@dataclass
class Solution:
    primal: numpy.ndarray
    objective: float
    status: Status = Status.Optimal
    info: dict = field(default_factory=dict)

    @property
    def optimal(self):
        return self.status is Status.Optimal


class LPProblem(object):
    """General-form LP with consistent row and column views of A.

    Vectors (obj, bounds, names, origin maps) are indexed by *position*.  A
    position stays valid until the row/column is removed; removed positions
    are tombstoned until :meth:`compact` renumbers the survivors.
    ``row_origin``/``col_origin`` give, for each position, the index the
    row/column had in the problem this one was derived from.
    """

    def __init__(self, obj, col_lower, col_upper, row_lower, row_upper,
                 matrix=None, obj_offset=0.0, name='', row_names=None, col_names=None):
        self.obj = numpy.array(obj, dtype=float).reshape(-1)
        n = self.obj.size
        self.col_lower = numpy.array(col_lower, dtype=float).reshape(-1)
        self.col_upper = numpy.array(col_upper, dtype=float).reshape(-1)
        self.row_lower = numpy.array(row_lower, dtype=float).reshape(-1)
        self.row_upper = numpy.array(row_upper, dtype=float).reshape(-1)
        m = self.row_lower.size
        if self.col_lower.size != n or self.col_upper.size != n:
            raise DimensionError("column bound vectors must have length {0}".format(n))
        if self.row_upper.size != m:
            raise DimensionError("row bound vectors must have equal length")
        self.obj_offset = float(obj_offset)
        self.name = name
        self.row_names = list(row_names) if row_names is not None else ['R{0}'.format(i) for i in range(m)]
        self.col_names = list(col_names) if col_names is not None else ['C{0}'.format(j) for j in range(n)]
        self.row_origin = numpy.arange(m)
        self.col_origin = numpy.arange(n)
        self._row_alive = numpy.ones(m, dtype=bool)
        self._col_alive = numpy.ones(n, dtype=bool)
        self._rows = [dict() for _ in range(m)]
        self._cols = [dict() for _ in range(n)]
        self.info = {}
        if matrix is not None:
            coo = scipy.sparse.coo_matrix(matrix)
            if coo.shape != (m, n):
                raise DimensionError("matrix shape {0} does not match ({1}, {2})".format(coo.shape, m, n))
            for i, j, v in zip(coo.row, coo.col, coo.data):
                self.set_coef(int(i), int(j), self.coef(int(i), int(j)) + float(v))

    @classmethod
    def empty(cls):
        return cls([], [], [], [], [])

    # -- sizes ---------------------------------------------------------------

    @property
    def num_rows(self):
        return int(self._row_alive.sum())

    @property
    def num_cols(self):
        return int(self._col_alive.sum())

    @property
    def row_slots(self):
        return self._row_alive.size

    @property
    def col_slots(self):
        return self._col_alive.size

    @property
    def shape(self):
        return self.num_rows, self.num_cols

    def nnz(self):
        return sum(len(self._rows[i]) for i in self.rows())

    def density(self):
        m, n = self.shape
        return self.nnz() / float(m * n) if m and n else 0.0

    # -- access --------------------------------------------------------------

    def rows(self):
        """Live row positions in ascending order."""
        return numpy.flatnonzero(self._row_alive).tolist()

    def cols(self):
        return numpy.flatnonzero(self._col_alive).tolist()

    def row_alive(self, i):
        return 0 <= i < self.row_slots and bool(self._row_alive[i])

    def col_alive(self, j):
        return 0 <= j < self.col_slots and bool(self._col_alive[j])

    def _check_row(self, i):
        if not self.row_alive(i):
            raise DimensionError("row index {0} out of range".format(i))

    def _check_col(self, j):
        if not self.col_alive(j):
            raise DimensionError("column index {0} out of range".format(j))

    def row(self, i):
        """{col: value} of row i.  Treat as read-only; use set_coef to edit."""
        self._check_row(i)
        return self._rows[i]

    def col(self, j):
        self._check_col(j)
        return self._cols[j]

    def coef(self, i, j):
        return self._rows[i].get(j, 0.0)

    def set_coef(self, i, j, value):
        self._check_row(i)
        self._check_col(j)
        if abs(value) <= ZERO_TOL:
            self._rows[i].pop(j, None)
            self._cols[j].pop(i, None)
        else:
            self._rows[i][j] = float(value)
            self._cols[j][i] = float(value)

    def is_equality(self, i):
        return self.row_lower[i] == self.row_upper[i]

    def activity(self, i):
        return Activity.of_row(self, i)

    def triples_by_row(self):
        return {(i, j, v) for i in self.rows() for j, v in self._rows[i].items()}

    def triples_by_col(self):
        return {(i, j, v) for j in self.cols() for i, v in self._cols[j].items()}

    # -- structural edits ----------------------------------------------------

    def remove_column(self, j, fixed_value):
        """Delete column j with x_j fixed at fixed_value; returns touched rows."""
        self._check_col(j)
        if not numpy.isfinite(fixed_value):
            raise BoundArithmeticError("cannot fix column {0} at {1}".format(j, fixed_value))
        touched = sorted(self._cols[j])
        for i in touched:
            shift = self._rows[i].pop(j) * fixed_value
            if numpy.isfinite(self.row_lower[i]):
                self.row_lower[i] -= shift
            if numpy.isfinite(self.row_upper[i]):
                self.row_upper[i] -= shift
        self.obj_offset += self.obj[j] * fixed_value
        self._cols[j] = {}
        self._col_alive[j] = False
        return touched

    def remove_row(self, i):
        self._check_row(i)
        for j in self._rows[i]:
            del self._cols[j][i]
        self._rows[i] = {}
        self._row_alive[i] = False

    def compact(self):
        """Renumber live rows/columns densely.

        Returns the old positions that were kept, ``(rows, cols)``.
        """
        keep_r = numpy.flatnonzero(self._row_alive)
        keep_c = numpy.flatnonzero(self._col_alive)
        rmap = {int(old): new for new, old in enumerate(keep_r)}
        cmap = {int(old): new for new, old in enumerate(keep_c)}
        self._rows = [{cmap[j]: v for j, v in self._rows[i].items()} for i in keep_r]
        self._cols = [{rmap[i]: v for i, v in self._cols[j].items()} for j in keep_c]
        self.obj = self.obj[keep_c]
        self.col_lower = self.col_lower[keep_c]
        self.col_upper = self.col_upper[keep_c]
        self.row_lower = self.row_lower[keep_r]
        self.row_upper = self.row_upper[keep_r]
        self.row_names = [self.row_names[i] for i in keep_r]
        self.col_names = [self.col_names[j] for j in keep_c]
        self.row_origin = self.row_origin[keep_r]
        self.col_origin = self.col_origin[keep_c]
        self._row_alive = numpy.ones(keep_r.size, dtype=bool)
        self._col_alive = numpy.ones(keep_c.size, dtype=bool)
        return keep_r, keep_c

    def copy(self):
        return copy.deepcopy(self)

    # -- export --------------------------------------------------------------

    def to_csr(self):
        """A over live rows/columns, in ascending position order."""
        rows, cols = self.rows(), self.cols()
        cmap = {j: k for k, j in enumerate(cols)}
        r, c, v = [], [], []
        for k, i in enumerate(rows):
            for j, a in self._rows[i].items():
                r.append(k)
                c.append(cmap[j])
                v.append(a)
        return scipy.sparse.csr_matrix((v, (r, c)), shape=(len(rows), len(cols)))

    def to_arrays(self):
        """(c, A, col_lower, col_upper, row_lower, row_upper, offset) over live entries."""
        rows, cols = self.rows(), self.cols()
        return (self.obj[cols].copy(), self.to_csr(),
                self.col_lower[cols].copy(), self.col_upper[cols].copy(),
                self.row_lower[rows].copy(), self.row_upper[rows].copy(),
                self.obj_offset)

    def objective_value(self, x):
        """c'x + offset for x indexed over live columns in ascending order."""
        return float(numpy.dot(self.obj[self.cols()], x)) + self.obj_offset

    # -- invariants ----------------------------------------------------------

    def check(self, tol=0.0):
        """Raise LPError if a structural invariant is violated."""
        rows, cols = self.rows(), self.cols()
        bad_c = [j for j in cols if self.col_lower[j] > self.col_upper[j] + tol]
        if bad_c:
            raise LPError("column bounds crossed at {0}".format(bad_c[:5]))
        bad_r = [i for i in rows if self.row_lower[i] > self.row_upper[i] + tol]
        if bad_r:
            raise LPError("row bounds crossed at {0}".format(bad_r[:5]))
        if self.triples_by_row() != self.triples_by_col():
            raise LPError("row and column views disagree")
        for i in rows:
            if any(abs(v) <= ZERO_TOL for v in self._rows[i].values()):
                raise LPError("stored zero in row {0}".format(i))
            if any(not self._col_alive[j] for j in self._rows[i]):
                raise LPError("row {0} references a removed column".format(i))

    def __repr__(self):
        return "<LPProblem {0!r} {1}x{2} nnz={3}>".format(self.name, self.num_rows, self.num_cols, self.nnz())


def nnz(lp):
    return lp.nnz()


def remove_column(lp, j, fixed_value):
    return lp.remove_column(j, fixed_value)


def remove_row(lp, i):
    lp.remove_row(i)
