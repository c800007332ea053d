# Presolve decision process
#
# One episode presolves one LP.  Each step the agent hands over a sequence of
# presolvers (one round); the empty sequence ends presolve, the reduced LP is
# solved and the solution is mapped back.  Rewards are negated costs, so the
# undiscounted return of an episode is minus its total accounted cost.

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy

from lp import (InfeasibleDetected, NUM_PRESOLVER_SLOTS, PRESOLVER_NAMES, TOL, ActionSequence,
                PresolveStack, SolverOptions, Status, apply_sequence, end_round,
                implied_free_columns, postsolve, solve_report, tighten_candidates)

from .Errors import RLError, ShapeError

__all__ = [
    'NUM_FEATURES',
    'NUM_BASE_FEATURES',
    'HISTORY_OFFSET',
    'ACTION_OFFSET',
    'MAX_SEQUENCE',
    'MAX_STEPS',
    'FEATURE_NAMES',
    'COST_MODES',
    'CostModel',
    'StepRecord',
    'EpisodeResult',
    'base_features',
    'extract_features',
    'PresolveEnv',
    'TwoArmedEnv',
    'write_trace',
    'read_trace',
]

logger = logging.getLogger(__name__)

NUM_BASE_FEATURES = 18
HISTORY_OFFSET = 18
ACTION_OFFSET = 36
NUM_FEATURES = ACTION_OFFSET + NUM_PRESOLVER_SLOTS
MAX_SEQUENCE = 64
MAX_STEPS = 100

_BASE_NAMES = [
    'equations_deg1', 'equations_deg2', 'equations_deg3', 'equations_deg4',
    'implied_free_equations',
    'inequalities_deg1', 'inequalities_deg2', 'inequalities_deg3', 'inequalities_deg4',
    'tightenable_variables',
    'num_equations', 'num_inequalities', 'num_variables',
    'forcing_lower_rows', 'forcing_upper_rows', 'redundant_rows', 'near_redundant_rows',
    'nnz',
]
FEATURE_NAMES = (_BASE_NAMES
                 + ['delta_' + n for n in _BASE_NAMES]
                 + ['executed_' + PRESOLVER_NAMES[k] for k in range(NUM_PRESOLVER_SLOTS)])

# a row whose activity overhangs its bounds by at most this share of their width
NEAR_REDUNDANT = 0.1


def _close(a, b):
    return numpy.isfinite(a) and numpy.isfinite(b) and abs(a - b) <= TOL * max(1.0, abs(b))


def _overhang(lo, hi, L, U):
    below = 0.0 if numpy.isinf(lo) else (numpy.inf if numpy.isinf(L) else max(0.0, lo - L))
    above = 0.0 if numpy.isinf(hi) else (numpy.inf if numpy.isinf(U) else max(0.0, U - hi))
    return below + above


def base_features(lp):
    """Normalized features 0-17 of the current problem."""
    raw = numpy.zeros(NUM_BASE_FEATURES)
    n_eq = n_ineq = 0
    for i in lp.rows():
        deg = len(lp.row(i))
        act = lp.activity(i)
        lo, hi = lp.row_lower[i], lp.row_upper[i]
        if lp.is_equality(i):
            n_eq += 1
            if 1 <= deg <= 4:
                raw[deg - 1] += 1
            if implied_free_columns(lp, i, act):
                raw[4] += 1
        else:
            n_ineq += 1
            if 1 <= deg <= 4:
                raw[4 + deg] += 1
        L, U = act.lower, act.upper
        if _close(L, hi):
            raw[13] += 1
        if _close(U, lo):
            raw[14] += 1
        if L >= lo - TOL * max(1.0, abs(lo)) and U <= hi + TOL * max(1.0, abs(hi)):
            raw[15] += 1
        else:
            width = hi - lo if numpy.isfinite(hi - lo) else max(1.0, abs(lo if numpy.isfinite(lo) else hi))
            if _overhang(lo, hi, L, U) <= NEAR_REDUNDANT * width:
                raw[16] += 1
    m, n = lp.shape
    raw[9] = len(tighten_candidates(lp))
    raw[10], raw[11], raw[12] = n_eq, n_ineq, n
    raw[17] = lp.nnz()

    def denom(v):
        return float(v) if v else 1.0

    scale = numpy.empty(NUM_BASE_FEATURES)
    scale[0:5] = denom(n_eq)
    scale[5:9] = denom(n_ineq)
    scale[9] = denom(n)
    scale[10:17] = denom(m)
    scale[17] = denom(m * n)
    return raw / scale


def extract_features(lp, initial=None, counts=None):
    """The 51-entry state: current features, change since reset, executed counts."""
    current = base_features(lp)
    out = numpy.zeros(NUM_FEATURES)
    out[:NUM_BASE_FEATURES] = current
    if initial is not None:
        out[HISTORY_OFFSET:ACTION_OFFSET] = current - initial
    if counts is not None:
        counts = numpy.asarray(counts, dtype=float)
        if counts.shape != (NUM_PRESOLVER_SLOTS,):
            raise ShapeError("expected {0} presolver counts, got {1}".format(NUM_PRESOLVER_SLOTS, counts.shape))
        out[ACTION_OFFSET:] = counts
    return out


COST_MODES = ('WorkUnits', 'WallClock')


@dataclass(frozen=True)
class CostModel:
    """How presolve, solve and decision time turn into reward.

    WorkUnits is deterministic: a presolver costs scanned*w_scan +
    reductions*w_apply, a solve costs pivots*w_pivot and every decision a
    constant.  WallClock charges measured seconds.
    """

    mode: str = 'WorkUnits'
    w_scan: float = 0.01
    w_apply: float = 0.1
    w_pivot: float = 1.0
    decision: float = 0.0

    def __post_init__(self):
        if self.mode not in COST_MODES:
            raise ValueError("cost mode must be one of {0}, got {1!r}".format(COST_MODES, self.mode))
        if min(self.w_scan, self.w_apply, self.w_pivot) <= 0:
            raise ValueError("work-unit weights must be > 0")
        if self.decision < 0:
            raise ValueError("decision cost must be >= 0")

    @classmethod
    def parse(cls, text):
        key = text.strip().lower().replace('-', '').replace('_', '')
        for mode in COST_MODES:
            if mode.lower() == key:
                return cls(mode)
        raise ValueError("unknown cost model {0!r}".format(text))

    @property
    def deterministic(self):
        return self.mode == 'WorkUnits'

    def presolver_cost(self, stats):
        if self.deterministic:
            return stats.scanned * self.w_scan + stats.reductions * self.w_apply
        return stats.elapsed

    def solve_cost(self, iterations, elapsed):
        if self.deterministic:
            return iterations * self.w_pivot
        return elapsed

    def decision_cost(self, elapsed=0.0):
        return self.decision if self.deterministic else elapsed


@dataclass
class StepRecord:
    state: numpy.ndarray
    action: ActionSequence
    behavior_logprob: float
    reward: float
    done: bool
    ret: float = 0.0
    features: numpy.ndarray = None


@dataclass
class EpisodeResult:
    status: str = 'Running'
    objective: float = None
    presolve_cost: float = 0.0
    solve_cost: float = 0.0
    decision_cost: float = 0.0
    nnz_before: int = 0
    nnz_after: int = 0
    presolver_count: int = 0
    decisions: int = 0
    iterations: int = 0
    sequence: list = field(default_factory=list)

    @property
    def total_cost(self):
        return self.presolve_cost + self.solve_cost + self.decision_cost

    @property
    def nnz_reduction_pct(self):
        if not self.nnz_before:
            return 0.0
        return 100.0 * (self.nnz_before - self.nnz_after) / self.nnz_before

    def to_dict(self):
        d = asdict(self)
        d['total_cost'] = self.total_cost
        d['nnz_reduction_pct'] = self.nnz_reduction_pct
        return d


class _Episode(object):
    """Step bookkeeping shared by the real and the toy environment."""

    def __init__(self, cost_model=None, max_sequence=MAX_SEQUENCE, max_steps=MAX_STEPS, record_trace=False):
        self.cost_model = cost_model if cost_model is not None else CostModel()
        self.max_sequence = max_sequence
        self.max_steps = max_steps
        self.record_trace = record_trace
        self.trace = []
        self.counts = numpy.zeros(NUM_PRESOLVER_SLOTS)
        self.steps = 0
        self.done = True
        self.result = EpisodeResult()

    def _begin(self, nnz):
        self.counts = numpy.zeros(NUM_PRESOLVER_SLOTS)
        self.steps = 0
        self.done = False
        self.trace = []
        self.result = EpisodeResult(nnz_before=nnz, nnz_after=nnz)

    def step(self, action, decision_elapsed=0.0):
        """Apply one action; returns (features or None, reward, done)."""
        if self.done:
            raise RLError("episode is not active, call reset() first")
        seq = action if isinstance(action, ActionSequence) else ActionSequence(tuple(action))
        if len(seq) > self.max_sequence:
            logger.warning("sequence of %d presolvers truncated to %d", len(seq), self.max_sequence)
            seq = ActionSequence(seq.ids[:self.max_sequence], truncated=True)
        state = self.features() if self.record_trace else None
        self.steps += 1
        decision = self.cost_model.decision_cost(decision_elapsed)
        self.result.decisions += 1
        self.result.decision_cost += decision
        if seq.empty:
            reward = -(self._solve() + decision)
            self.done = True
        else:
            cost, infeasible = self._presolve(seq)
            self.result.presolve_cost += cost
            reward = -(cost + decision)
            if infeasible:
                self.result.status = str(Status.Infeasible)
                self.done = True
            elif self.steps >= self.max_steps:
                logger.info("step cap %d reached, forcing the solve", self.max_steps)
                reward -= self._solve()
                self.done = True
        if self.record_trace:
            self.trace.append({'step': self.steps, 'state': state.tolist(), 'action': list(seq.ids),
                               'reward': reward, 'done': self.done})
        return (None if self.done else self.features()), reward, self.done


class PresolveEnv(_Episode):
    """Presolve episode over a copy of one LP."""

    def __init__(self, cost_model=None, solver_options=None, max_sequence=MAX_SEQUENCE,
                 max_steps=MAX_STEPS, record_trace=False):
        super().__init__(cost_model, max_sequence, max_steps, record_trace)
        self.solver_options = solver_options if solver_options is not None else SolverOptions()
        self.original = None
        self.lp = None
        self.stack = None
        self.solution = None
        self._initial = None

    def reset(self, lp):
        self.original = lp
        self.lp = lp.copy()
        self.stack = PresolveStack(self.lp)
        self.solution = None
        self._initial = base_features(self.lp)
        self._begin(self.lp.nnz())
        return self.features()

    def features(self):
        return extract_features(self.lp, self._initial, self.counts)

    def _presolve(self, seq):
        infeasible = False
        try:
            stats = apply_sequence(seq, self.lp, self.stack, self.cost_model)
        except InfeasibleDetected as exc:
            stats = exc.completed
            infeasible = True
        for s in stats:
            self.counts[s.presolver] += 1
        self.result.presolver_count += len(stats)
        self.result.sequence.extend(s.presolver for s in stats)
        end_round(self.lp, self.stack)
        self.result.nnz_after = self.lp.nnz()
        return sum(s.elapsed_cost for s in stats), infeasible

    def _solve(self):
        report = solve_report(self.lp, self.solver_options, self.cost_model)
        self.result.iterations = report.iterations
        self.result.solve_cost = report.elapsed_cost
        self.result.status = str(report.solution.status)
        self.result.nnz_after = self.lp.nnz()
        if report.solution.optimal:
            self.solution = postsolve(self.stack, report.solution)
            self.result.objective = self.solution.objective
        return report.elapsed_cost


class TwoArmedEnv(_Episode):
    """Toy episode: every presolver costs 1, the solve costs 1 once the
    beneficial presolver has run and 5 otherwise."""

    def __init__(self, beneficial=0, presolver_cost=1.0, cheap_solve=1.0, expensive_solve=5.0,
                 max_sequence=MAX_SEQUENCE, max_steps=MAX_STEPS, record_trace=False):
        super().__init__(None, max_sequence, max_steps, record_trace)
        self.beneficial = beneficial
        self.presolver_cost = presolver_cost
        self.cheap_solve = cheap_solve
        self.expensive_solve = expensive_solve

    def reset(self, lp=None):
        self._begin(0)
        return self.features()

    def features(self):
        out = numpy.zeros(NUM_FEATURES)
        out[ACTION_OFFSET:] = self.counts
        return out

    def _presolve(self, seq):
        for pid in seq:
            self.counts[pid] += 1
        self.result.presolver_count += len(seq)
        self.result.sequence.extend(seq.ids)
        return self.presolver_cost * len(seq), False

    def _solve(self):
        cost = self.cheap_solve if self.counts[self.beneficial] > 0 else self.expensive_solve
        self.result.solve_cost = cost
        self.result.status = str(Status.Optimal)
        return cost


def write_trace(path, records):
    """Append trace records as JSON lines."""
    with open(path, 'a') as writer:
        for rec in records:
            writer.write(json.dumps(rec) + '\n')


def read_trace(path):
    with open(path, 'r') as reader:
        return [json.loads(line) for line in reader if line.strip()]
