# Presolve routines, baselines, evaluation and rule extraction
#
# A Routine is the program deciding which presolvers run, in what order and
# when to stop.  The static kinds loop a per-round order until a round finds
# nothing or the round limit is hit; Fixed runs a recorded sequence once;
# Learned asks a ChainPolicy every step; Off solves the raw problem.

import csv
import json
import logging
import math
import multiprocessing
import time
from dataclasses import dataclass, field

import numpy

from lp import (DEFAULT_ORDER, PRESOLVER_NAMES, SUPPORTED_PRESOLVERS, ActionSequence, InfeasibleDetected,
                PresolveStack, SolverOptions, Status, apply, apply_sequence, end_round, parse_presolver,
                postsolve, presolve_off, solve_report)

from .ChainPolicy import ChainPolicy
from .Errors import RoutineError
from .PresolveEnv import NUM_PRESOLVER_SLOTS, CostModel, EpisodeResult, PresolveEnv, base_features, extract_features

__all__ = [
    'ROUTINE_KINDS',
    'DEFAULT_MAX_ITERATIONS',
    'WIN_TOL',
    'Routine',
    'RoutineStats',
    'EvalReport',
    'reduce',
    'default_routine',
    'baseline',
    'make_routine',
    'parse_method',
    'profile_presolvers',
    'rank_presolvers',
    'run_routine',
    'evaluate',
    'benchmark_mean_state',
    'extract_rules',
]

logger = logging.getLogger(__name__)

ROUTINE_KINDS = ('Default', 'TopK', 'LastK', 'Reordering', 'IterationScaled', 'Fixed', 'Learned', 'Off')
DEFAULT_MAX_ITERATIONS = 10
WIN_TOL = 1e-9

# method shorthands accepted by parse_method
ENHANCE_V1_PERCENT = 40.0
ENHANCE_V2_PERCENT = -40.0


@dataclass
class Routine:
    """A presolve routine.

    ``sequence`` is the whole program for Fixed routines; ``percent`` is k for
    TopK/LastK (share of presolvers kept) and IterationScaled (signed change
    of the round limit); ``ranking`` lists presolver ids best first.
    """

    kind: str = 'Default'
    name: str = ''
    sequence: tuple = ()
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    percent: float = 100.0
    seed: int = 0
    ranking: tuple = None
    policy: ChainPolicy = field(default=None, repr=False, compare=False)
    checkpoint: str = None

    def __post_init__(self):
        if self.kind not in ROUTINE_KINDS:
            raise RoutineError("routine kind must be one of {0}, got {1!r}".format(ROUTINE_KINDS, self.kind))
        self.sequence = ActionSequence(tuple(self.sequence)).ids
        if self.ranking is not None:
            self.ranking = tuple(parse_presolver(p) for p in self.ranking)
        if self.max_iterations < 1:
            raise RoutineError("max_iterations must be >= 1")
        if self.kind in ('TopK', 'LastK') and not 0.0 < self.percent <= 100.0:
            raise RoutineError("{0} needs a percentage in (0, 100], got {1}".format(self.kind, self.percent))
        if self.kind == 'IterationScaled' and self.percent <= -100.0:
            raise RoutineError("IterationScaled cannot remove every round")
        if not self.name:
            self.name = self.kind.lower()

    @property
    def max_rounds(self):
        if self.kind == 'IterationScaled':
            return max(1, int(round(self.max_iterations * (1.0 + self.percent / 100.0))))
        if self.kind == 'Fixed':
            return 1
        return self.max_iterations

    def _selected(self):
        if self.ranking is None:
            raise RoutineError("{0} routine {1!r} needs a presolver ranking".format(self.kind, self.name))
        count = int(math.ceil(self.percent / 100.0 * len(DEFAULT_ORDER) - 1e-9))
        chosen = self.ranking[:count] if self.kind == 'TopK' else self.ranking[len(self.ranking) - count:]
        keep = set(chosen)
        return tuple(p for p in DEFAULT_ORDER if p in keep)

    def round_order(self):
        """Presolvers executed in one round."""
        if self.kind in ('Default', 'IterationScaled'):
            return tuple(DEFAULT_ORDER)
        if self.kind in ('TopK', 'LastK'):
            return self._selected()
        if self.kind == 'Reordering':
            rng = numpy.random.default_rng(self.seed)
            return tuple(int(p) for p in rng.permutation(DEFAULT_ORDER))
        if self.kind == 'Fixed':
            return self.sequence
        if self.kind == 'Off':
            return ()
        raise RoutineError("a Learned routine has no static order")

    def to_json(self):
        d = {'name': self.name, 'kind': self.kind,
             'sequence': [PRESOLVER_NAMES[p] for p in self.sequence],
             'max_iterations': self.max_iterations}
        if self.kind in ('TopK', 'LastK', 'IterationScaled'):
            d['percent'] = self.percent
        if self.ranking is not None:
            d['ranking'] = [PRESOLVER_NAMES[p] for p in self.ranking]
        if self.kind == 'Reordering':
            d['seed'] = self.seed
        if self.checkpoint:
            d['checkpoint'] = self.checkpoint
        return d

    @classmethod
    def from_json(cls, d):
        known = {'name', 'kind', 'sequence', 'max_iterations', 'percent', 'seed', 'ranking', 'checkpoint'}
        unknown = set(d) - known
        if unknown:
            raise RoutineError("unknown routine fields {0}".format(sorted(unknown)))
        if 'kind' not in d:
            raise RoutineError("routine has no kind")
        routine = cls(**d)
        if routine.kind == 'Learned':
            if not routine.checkpoint:
                raise RoutineError("a Learned routine file must name a checkpoint")
            routine.policy = ChainPolicy.load(routine.checkpoint)
        return routine

    def save(self, path):
        with open(path, 'w') as writer:
            json.dump(self.to_json(), writer, indent=2)

    @classmethod
    def load(cls, path):
        with open(path, 'r') as reader:
            try:
                d = json.load(reader)
            except ValueError as exc:
                raise RoutineError("{0} is not a routine file: {1}".format(path, exc))
        return cls.from_json(d)


def make_routine(kind, **params):
    return Routine(kind=kind, **params)


def parse_method(text, ranking=None, policy=None, seed=0):
    """Routine for a method name: default, enhance-v1, enhance-v2, off,
    reordering, learned, topk:K, lastk:K, iter:K or a routine JSON file."""
    key = text.strip()
    low = key.lower()
    if low.endswith('.json'):
        return Routine.load(key)
    if low == 'default':
        return Routine('Default', name=key)
    if low == 'enhance-v1':
        return Routine('TopK', name=key, percent=ENHANCE_V1_PERCENT, ranking=ranking)
    if low == 'enhance-v2':
        return Routine('IterationScaled', name=key, percent=ENHANCE_V2_PERCENT)
    if low == 'off':
        return Routine('Off', name=key)
    if low == 'reordering':
        return Routine('Reordering', name=key, seed=seed)
    if low == 'learned':
        if policy is None:
            raise RoutineError("method 'learned' needs a checkpoint")
        return Routine('Learned', name=key, policy=policy)
    prefix, _, value = low.partition(':')
    kinds = {'topk': 'TopK', 'lastk': 'LastK', 'iter': 'IterationScaled'}
    if prefix in kinds and value:
        try:
            percent = float(value)
        except ValueError:
            raise RoutineError("bad percentage in method {0!r}".format(text))
        return Routine(kinds[prefix], name=key, percent=percent, ranking=ranking)
    raise RoutineError("unknown method {0!r}".format(text))


@dataclass
class RoutineStats:
    steps: list
    rounds: int
    stack: PresolveStack
    nnz_before: int
    nnz_after: int

    @property
    def presolve_cost(self):
        return sum(s.elapsed_cost for s in self.steps)

    @property
    def presolver_count(self):
        return len(self.steps)

    @property
    def changed(self):
        return any(s.changed for s in self.steps)


def reduce(routine, lp, cost_model=None):
    """Run a static routine on a copy of lp; returns (reduced lp, RoutineStats).

    InfeasibleDetected propagates with the finished steps in ``.completed``.
    """
    work = lp.copy()
    if routine.kind == 'Off':
        return work, RoutineStats([], 0, presolve_off(work), work.nnz(), work.nnz())
    stack = PresolveStack(work)
    order = routine.round_order()
    steps = []
    rounds = 0
    nnz_before = work.nnz()
    while order and rounds < routine.max_rounds:
        rounds += 1
        try:
            done = apply_sequence(order, work, stack, cost_model)
        except InfeasibleDetected as exc:
            exc.completed = steps + exc.completed
            raise
        end_round(work, stack)
        steps.extend(done)
        if not any(s.changed for s in done):
            break
    logger.debug("%s: %d rounds, nnz %d -> %d", routine.name, rounds, nnz_before, work.nnz())
    return work, RoutineStats(steps, rounds, stack, nnz_before, work.nnz())


def default_routine(lp, max_iterations=DEFAULT_MAX_ITERATIONS, cost_model=None):
    return reduce(Routine('Default', max_iterations=max_iterations), lp, cost_model)


def baseline(kind, params, lp, cost_model=None):
    """Reduce lp with a baseline routine built from kind and params."""
    return reduce(make_routine(kind, **(params or {})), lp, cost_model)


def profile_presolvers(instances, cost_model=None):
    """Mean nnz reduction (%) of each supported presolver run once on each
    raw instance."""
    totals = dict.fromkeys(SUPPORTED_PRESOLVERS, 0.0)
    for lp in instances:
        for pid in SUPPORTED_PRESOLVERS:
            work = lp.copy()
            stack = PresolveStack(work)
            try:
                stats = apply(pid, work, stack, cost_model)
            except InfeasibleDetected as exc:
                stats = exc.stats
            if stats.nnz_before:
                totals[pid] += 100.0 * (stats.nnz_before - stats.nnz_after) / stats.nnz_before
    n = max(1, len(instances))
    return {pid: total / n for pid, total in totals.items()}


def rank_presolvers(scores):
    """Presolver ids by descending score; ties keep id order."""
    return tuple(sorted(scores, key=lambda pid: (-scores[pid], pid)))


def run_routine(routine, lp, cost_model=None, solver_options=None, seed=0):
    """reduce -> solve -> postsolve; returns (EpisodeResult, Solution or None)."""
    cost_model = cost_model if cost_model is not None else CostModel()
    if routine.kind == 'Learned':
        return _run_learned(routine.policy, lp, cost_model, solver_options, seed)
    result = EpisodeResult(nnz_before=lp.nnz(), nnz_after=lp.nnz())
    try:
        reduced, stats = reduce(routine, lp, cost_model)
    except InfeasibleDetected as exc:
        result.status = str(Status.Infeasible)
        result.presolve_cost = sum(s.elapsed_cost for s in exc.completed)
        result.presolver_count = len(exc.completed)
        result.sequence = [s.presolver for s in exc.completed]
        return result, None
    result.presolve_cost = stats.presolve_cost
    result.presolver_count = stats.presolver_count
    result.sequence = [s.presolver for s in stats.steps]
    result.decisions = stats.rounds
    result.nnz_after = stats.nnz_after
    report = solve_report(reduced, solver_options if solver_options is not None else SolverOptions(), cost_model)
    result.solve_cost = report.elapsed_cost
    result.iterations = report.iterations
    result.status = str(report.solution.status)
    solution = None
    if report.solution.optimal:
        solution = postsolve(stats.stack, report.solution)
        result.objective = solution.objective
    return result, solution


def _run_learned(policy, lp, cost_model, solver_options, seed):
    if policy is None:
        raise RoutineError("Learned routine has no policy")
    env = PresolveEnv(cost_model, solver_options, max_sequence=policy.cap, max_steps=policy.max_steps)
    rng = numpy.random.default_rng(seed)
    obs = env.reset(lp)
    done = False
    while not done:
        start = time.perf_counter()
        seq, _, _ = policy.act(obs, rng)
        obs, _, done = env.step(seq, time.perf_counter() - start)
    return env.result, env.solution


def _eval_job(args):
    routine, instance, lp, cost_model, solver_options, seed = args
    result, _ = run_routine(routine, lp, cost_model, solver_options, seed)
    return {
        'instance': instance,
        'method': routine.name,
        'cost': result.total_cost,
        'presolve_cost': result.presolve_cost,
        'lp_cost': result.solve_cost,
        'nnz_reduction_pct': result.nnz_reduction_pct,
        'presolver_count': result.presolver_count,
        'seed': seed,
        'status': result.status,
        'objective': result.objective,
    }


REPORT_COLUMNS = ('instance', 'method', 'cost', 'presolve_cost', 'lp_cost', 'nnz_reduction_pct',
                  'presolver_count', 'seed', 'status')


class EvalReport(object):
    """Per-run rows plus the mean / improvement / wins aggregates."""

    def __init__(self, rows, methods, reference=None):
        self.rows = list(rows)
        self.methods = list(methods)
        self.reference = reference if reference is not None else self.methods[0]

    def _instances(self):
        seen = []
        for row in self.rows:
            if row['instance'] not in seen:
                seen.append(row['instance'])
        return seen

    def _seeds(self):
        return sorted({row['seed'] for row in self.rows})

    def instance_costs(self, method):
        """Mean cost over seeds per instance."""
        out = {}
        for inst in self._instances():
            costs = [r['cost'] for r in self.rows if r['method'] == method and r['instance'] == inst]
            out[inst] = float(numpy.mean(costs))
        return out

    def mean_cost(self, method):
        return float(numpy.mean(list(self.instance_costs(method).values())))

    def std_cost(self, method):
        """Standard deviation over seeds of the per-seed mean cost."""
        per_seed = [numpy.mean([r['cost'] for r in self.rows if r['method'] == method and r['seed'] == s])
                    for s in self._seeds()]
        return float(numpy.std(per_seed))

    def improvement(self, method):
        ref = self.mean_cost(self.reference)
        if ref == 0:
            return 0.0
        return 100.0 * (ref - self.mean_cost(method)) / ref

    def wins(self, method):
        """Share of instances where the method is fastest; ties within WIN_TOL win for all."""
        costs = {m: self.instance_costs(m) for m in self.methods}
        instances = self._instances()
        won = 0
        for inst in instances:
            best = min(costs[m][inst] for m in self.methods)
            if costs[method][inst] <= best + WIN_TOL * max(1.0, abs(best)):
                won += 1
        return 100.0 * won / len(instances)

    def summary(self):
        return {m: {'mean': self.mean_cost(m), 'std': self.std_cost(m),
                    'improvement_pct': self.improvement(m), 'wins_pct': self.wins(m)}
                for m in self.methods}

    def write_csv(self, path_or_file):
        own = isinstance(path_or_file, str)
        writer = open(path_or_file, 'w', newline='') if own else path_or_file
        try:
            out = csv.DictWriter(writer, fieldnames=REPORT_COLUMNS, extrasaction='ignore')
            out.writeheader()
            for row in self.rows:
                out.writerow(row)
        finally:
            if own:
                writer.close()

    def table(self):
        lines = ['{0:<20} {1:>12} {2:>10} {3:>14} {4:>8}'.format('method', 'cost', 'std', 'improvement(%)', 'wins(%)')]
        for m, s in self.summary().items():
            lines.append('{0:<20} {1:>12.4f} {2:>10.4f} {3:>14.2f} {4:>8.1f}'.format(
                m, s['mean'], s['std'], s['improvement_pct'], s['wins_pct']))
        return '\n'.join(lines)


def evaluate(methods, instances, cost_model=None, seeds=(0,), solver_options=None, workers=1, reference=None):
    """Run every method on every instance for every seed.

    methods: Routines (named by ``Routine.name``); instances: (name, lp) pairs.
    """
    methods = list(methods)
    instances = list(instances)
    if not methods or not instances:
        raise RoutineError("evaluation needs at least one method and one instance")
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise RoutineError("method names must be unique, got {0}".format(names))
    cost_model = cost_model if cost_model is not None else CostModel()
    jobs = [(routine, name, lp, cost_model, solver_options, seed)
            for name, lp in instances for seed in seeds for routine in methods]
    if workers > 1:
        with multiprocessing.Pool(workers) as pool:
            rows = pool.map(_eval_job, jobs)
    else:
        rows = [_eval_job(job) for job in jobs]
    report = EvalReport(rows, names, reference)
    for m, s in report.summary().items():
        logger.info("%s: mean cost %.4f (improvement %.2f%%, wins %.1f%%)",
                    m, s['mean'], s['improvement_pct'], s['wins_pct'])
    return report


def benchmark_mean_state(instances):
    """Mean reset-state features over a set of problems."""
    return numpy.mean([extract_features(lp, base_features(lp), numpy.zeros(NUM_PRESOLVER_SLOTS))
                       for lp in instances], axis=0)


class _MeanStateRollout(object):
    """Steps every instance of a benchmark with one shared action sequence."""

    def __init__(self, instances):
        self.lps = [lp.copy() for lp in instances]
        self.stacks = [PresolveStack(lp) for lp in self.lps]
        self.initial = [base_features(lp) for lp in self.lps]
        self.active = [True] * len(self.lps)
        self.counts = numpy.zeros(NUM_PRESOLVER_SLOTS)

    def state(self):
        feats = [extract_features(lp, init, self.counts)
                 for lp, init, alive in zip(self.lps, self.initial, self.active) if alive]
        return numpy.mean(feats, axis=0) if feats else None

    def step(self, seq):
        for pid in seq:
            self.counts[pid] += 1
        for k, lp in enumerate(self.lps):
            if not self.active[k]:
                continue
            try:
                apply_sequence(seq, lp, self.stacks[k])
                end_round(lp, self.stacks[k])
            except InfeasibleDetected:
                self.active[k] = False
        return any(self.active)


def _sample_routine(policy, instances, rng):
    rollout = _MeanStateRollout(instances)
    program = []
    for _ in range(policy.max_steps):
        state = rollout.state()
        if state is None:
            break
        seq, _, _ = policy.act(state, rng)
        if seq.empty:
            break
        program.extend(seq.ids)
        if not rollout.step(seq):
            break
    return tuple(program)


def extract_rules(policy, instances, k=20, validation=None, cost_model=None, seed=0, solver_options=None):
    """Best of k routines sampled at benchmark-mean states, as a model-free routine."""
    if isinstance(policy, str):
        policy = ChainPolicy.load(policy)
    instances = list(instances)
    validation = list(validation) if validation else instances
    rng = numpy.random.default_rng(seed)
    candidates = []
    for _ in range(k):
        program = _sample_routine(policy, instances, rng)
        if program not in candidates:
            candidates.append(program)
    best, best_cost = None, None
    for program in candidates:
        routine = Routine('Fixed', name='extracted', sequence=program) if program else Routine('Off', name='extracted')
        cost = float(numpy.mean([run_routine(routine, lp, cost_model, solver_options)[0].total_cost
                                 for lp in validation]))
        logger.info("candidate of %d presolvers: mean cost %.4f", len(program), cost)
        if best_cost is None or cost < best_cost:
            best, best_cost = routine, cost
    return best
