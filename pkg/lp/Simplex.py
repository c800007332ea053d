# Bounded-variable primal simplex on a dense tableau
#
# Rows are turned into equalities with one slack per row,
#     A x - s = 0,   row_lower <= s <= row_upper,
# and phase 1 starts from an all-artificial basis.  Entering and leaving
# choices follow Bland's rule (smallest index), which makes the pivot
# sequence, and so the iteration count, a deterministic function of the input.

import logging
import time
from dataclasses import dataclass

import numpy

from .LPProblem import INF, Solution, Status

__all__ = ['SolverOptions', 'SolveReport', 'solve', 'solve_report']

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 50000
    pivot_tolerance: float = 1e-9
    feasibility_tolerance: float = 1e-7
    optimality_tolerance: float = 1e-9

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        for name in ('pivot_tolerance', 'feasibility_tolerance', 'optimality_tolerance'):
            if not getattr(self, name) > 0:
                raise ValueError("{0} must be > 0".format(name))


@dataclass
class SolveReport:
    solution: Solution
    iterations: int
    elapsed_cost: float
    phase1_iterations: int = 0
    elapsed: float = 0.0

    def __iter__(self):
        # unpacks as (solution, iterations, elapsed_cost)
        return iter((self.solution, self.iterations, self.elapsed_cost))


class _Tableau(object):
    """Dense B^-1 [A | -I | diag(sign)] with the bookkeeping of nonbasic states."""

    AT_LOWER, FREE, AT_UPPER = -1, 0, 1

    def __init__(self, A, col_lower, col_upper, row_lower, row_upper, opts):
        m, n = A.shape
        self.m, self.n = m, n
        self.opts = opts
        self.lower = numpy.concatenate([col_lower, row_lower, numpy.zeros(m)])
        self.upper = numpy.concatenate([col_upper, row_upper, numpy.full(m, INF)])
        total = n + 2 * m
        self.value = numpy.zeros(total)
        self.state = numpy.zeros(total, dtype=int)
        for k in range(n + m):
            if numpy.isfinite(self.lower[k]):
                self.value[k], self.state[k] = self.lower[k], self.AT_LOWER
            elif numpy.isfinite(self.upper[k]):
                self.value[k], self.state[k] = self.upper[k], self.AT_UPPER
        structural = numpy.hstack([A, -numpy.eye(m)])
        residual = structural @ self.value[:n + m]
        sign = numpy.where(residual > 0, -1.0, 1.0)
        self.full = numpy.hstack([structural, numpy.diag(sign)])
        # B = diag(sign) is its own inverse
        self.T = sign[:, None] * self.full
        self.basis = numpy.arange(n + m, total)
        self.is_basic = numpy.zeros(total, dtype=bool)
        self.is_basic[self.basis] = True
        self.value[self.basis] = numpy.abs(residual)
        self.initial_infeasibility = float(numpy.abs(residual).sum())
        self.iterations = 0

    def run(self, cost, budget):
        """Iterate until optimal ('optimal'), unbounded or out of budget ('limit')."""
        opts = self.opts
        lower, upper, value = self.lower, self.upper, self.value
        while True:
            d = cost - cost[self.basis] @ self.T if self.m else cost.copy()
            movable = ~self.is_basic & (upper > lower)
            up = movable & (d < -opts.optimality_tolerance) & (self.state <= 0)
            down = movable & (d > opts.optimality_tolerance) & (self.state >= 0)
            candidates = numpy.flatnonzero(up | down)
            if candidates.size == 0:
                return 'optimal'
            if self.iterations >= budget:
                return 'limit'
            q = int(candidates[0])
            delta = 1.0 if up[q] else -1.0

            rate = -delta * self.T[:, q] if self.m else numpy.zeros(0)
            basic_lo = lower[self.basis]
            basic_hi = upper[self.basis]
            basic_val = value[self.basis]
            limits = numpy.full(self.m, INF)
            usable = numpy.abs(rate) > opts.pivot_tolerance
            dec = usable & (rate < 0) & numpy.isfinite(basic_lo)
            inc = usable & (rate > 0) & numpy.isfinite(basic_hi)
            limits[dec] = (basic_val[dec] - basic_lo[dec]) / -rate[dec]
            limits[inc] = (basic_hi[inc] - basic_val[inc]) / rate[inc]
            limits = numpy.maximum(limits, 0.0)
            t_pivot = limits.min() if self.m else INF
            t_flip = upper[q] - lower[q]

            if not numpy.isfinite(min(t_pivot, t_flip)):
                return 'unbounded'
            self.iterations += 1
            if t_flip <= t_pivot:
                value[q] += delta * t_flip
                value[self.basis] += rate * t_flip
                self.state[q] = self.AT_UPPER if delta > 0 else self.AT_LOWER
                continue

            ties = numpy.flatnonzero(limits <= t_pivot + 1e-12 * max(1.0, t_pivot))
            r = int(ties[numpy.argmin(self.basis[ties])])
            value[self.basis] += rate * t_pivot
            value[q] += delta * t_pivot
            leaving = self.basis[r]
            if rate[r] < 0:
                value[leaving], self.state[leaving] = lower[leaving], self.AT_LOWER
            else:
                value[leaving], self.state[leaving] = upper[leaving], self.AT_UPPER
            self._pivot(r, q)

    def _pivot(self, r, q):
        T = self.T
        T[r] /= T[r, q]
        col = T[:, q].copy()
        col[r] = 0.0
        T -= numpy.outer(col, T[r])
        self.is_basic[self.basis[r]] = False
        self.basis[r] = q
        self.is_basic[q] = True
        self.state[q] = self.FREE

    def artificial_sum(self):
        return float(self.value[self.n + self.m:].sum())

    def close_artificials(self):
        start = self.n + self.m
        self.upper[start:] = 0.0
        self.value[start:] = numpy.where(self.is_basic[start:], self.value[start:], 0.0)

    def refresh_basic(self):
        """Recompute basic values from the nonbasic ones with a fresh solve."""
        if not self.m:
            return
        nonbasic = numpy.flatnonzero(~self.is_basic)
        rhs = -self.full[:, nonbasic] @ self.value[nonbasic]
        try:
            self.value[self.basis] = numpy.linalg.solve(self.full[:, self.basis], rhs)
        except numpy.linalg.LinAlgError:
            logger.warning("basis matrix is singular, keeping tableau values")

    def primal(self):
        return self.value[:self.n].copy()


def _run(lp, opts):
    c, A, cl, cu, rl, ru, offset = lp.to_arrays()
    tab = _Tableau(A.toarray(), cl, cu, rl, ru, opts)
    m, n = tab.m, tab.n
    cost1 = numpy.zeros(n + 2 * m)
    cost1[n + m:] = 1.0
    outcome = tab.run(cost1, opts.max_iterations)
    phase1 = tab.iterations

    def finish(status):
        x = tab.primal()
        objective = float(c @ x) + offset
        return Solution(x, objective, status, info={'iterations': tab.iterations}), phase1

    if outcome == 'limit':
        return finish(Status.IterationLimit)
    tab.refresh_basic()
    if tab.artificial_sum() > opts.feasibility_tolerance * (1.0 + tab.initial_infeasibility):
        return finish(Status.Infeasible)

    tab.close_artificials()
    cost2 = numpy.zeros(n + 2 * m)
    cost2[:n] = c
    outcome = tab.run(cost2, opts.max_iterations)
    if outcome == 'limit':
        return finish(Status.IterationLimit)
    if outcome == 'unbounded':
        return finish(Status.Unbounded)
    tab.refresh_basic()
    return finish(Status.Optimal)


def solve(lp, opts=None):
    """Solve lp; the primal vector is indexed by live columns in ascending order."""
    return solve_report(lp, opts).solution


def solve_report(lp, opts=None, cost_model=None):
    """Solve and report (solution, iterations, elapsed_cost).

    elapsed_cost is wall-clock seconds unless a cost model with a
    ``solve_cost(iterations, elapsed)`` method is given.
    """
    opts = opts if opts is not None else SolverOptions()
    start = time.perf_counter()
    solution, phase1 = _run(lp, opts)
    elapsed = time.perf_counter() - start
    iterations = solution.info['iterations']
    cost = cost_model.solve_cost(iterations, elapsed) if cost_model is not None else elapsed
    logger.debug("simplex on %r: %s after %d iterations (%d in phase 1)",
                 lp, solution.status, iterations, phase1)
    return SolveReport(solution, iterations, cost, phase1_iterations=phase1, elapsed=elapsed)
