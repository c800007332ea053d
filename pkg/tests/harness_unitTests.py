import contextlib
import csv
import glob
import io
import json
import os
import tempfile
import unittest

import numpy

import lp
import rl
import rl.cli
from lp import INF, LPProblem

import oracles

SMALL = {'nrow': 12, 'ncol': 15, 'dens': 0.3}


def irredundant_lp(with_fixed=False):
    """Two covering rows over incomparable columns; optionally one column fixed at zero."""
    cols = [[1.0, 3.0], [2.0, 2.0], [3.0, 1.0]]
    if with_fixed:
        cols.append([1.0, 1.0])
    A = numpy.array(cols).T
    n = len(cols)
    upper = [10.0] * n
    if with_fixed:
        upper[-1] = 0.0
    return LPProblem([1.0] * n, [0.0] * n, upper, [1.0, 1.0], [INF, INF], matrix=A)


def redundancy_heavy(count, params=None, seed=0):
    return lp.generate_many('RedundancyHeavy', params, seed, count)


def constant_policy(initial_bias, transition_bias=None, weight=None):
    """A chain policy whose logits ignore the state except for the given weight entries."""
    actor = rl.MLP((rl.NUM_FEATURES, rl.NUM_LOGITS))
    actor.weights[0][:] = 0.0
    actor.biases[0][:rl.NUM_ACTIONS + 1] = initial_bias
    for index, value in (transition_bias or {}).items():
        actor.biases[0][index] = value
    for index, value in (weight or {}).items():
        actor.weights[0][index] = value
    return rl.ChainPolicy(actor)


class DefaultRoutineTests(unittest.TestCase):
    def testIrredundantStopsAfterOneRound(self):
        prob = irredundant_lp()
        reduced, stats = rl.default_routine(prob)
        self.assertEqual(1, stats.rounds)
        self.assertFalse(stats.changed)
        self.assertEqual(prob.nnz(), reduced.nnz())
        self.assertEqual(len(lp.DEFAULT_ORDER), stats.presolver_count)

    def testFixedColumnTakesTwoRounds(self):
        prob = irredundant_lp(with_fixed=True)
        reduced, stats = rl.default_routine(prob)
        self.assertEqual(2, stats.rounds)
        self.assertEqual(prob.nnz() - 2, stats.nnz_after)
        self.assertEqual(3, reduced.num_cols)

    def testRoundLimit(self):
        prob = irredundant_lp(with_fixed=True)
        _, stats = rl.default_routine(prob, max_iterations=1)
        self.assertEqual(1, stats.rounds)

    def testRedundancyHeavyHalvesNonzeros(self):
        cuts = []
        for prob in redundancy_heavy(3):
            _, stats = rl.default_routine(prob)
            cuts.append(100.0 * (stats.nnz_before - stats.nnz_after) / stats.nnz_before)
        self.assertGreaterEqual(numpy.mean(cuts), 50.0)

    def testInputUntouched(self):
        prob = redundancy_heavy(1, SMALL)[0]
        before = prob.triples_by_row()
        rl.default_routine(prob)
        self.assertEqual(before, prob.triples_by_row())

    def testInfeasibilityPropagates(self):
        prob = LPProblem([1.0, 1.0], [0.0, 0.0], [1.0, 1.0], [3.0], [INF], matrix=numpy.array([[1.0, 1.0]]))
        with self.assertRaises(lp.InfeasibleDetected) as caught:
            rl.default_routine(prob)
        self.assertEqual(1, caught.exception.completed[-1].presolver)
        result, solution = rl.run_routine(rl.Routine('Default'), prob)
        self.assertEqual('Infeasible', result.status)
        self.assertIsNone(solution)


class RoutineTests(unittest.TestCase):
    ranking = (4, 0, 1, 8, 2, 9, 6, 7, 10, 11, 12, 13)

    def testIterationScaledRounds(self):
        self.assertEqual(6, rl.Routine('IterationScaled', percent=-40).max_rounds)
        self.assertEqual(14, rl.Routine('IterationScaled', percent=40).max_rounds)
        self.assertEqual(1, rl.Routine('Fixed', sequence=(0,)).max_rounds)

    def testTopKSelection(self):
        full = rl.Routine('TopK', percent=100, ranking=self.ranking)
        self.assertEqual(tuple(lp.DEFAULT_ORDER), full.round_order())
        best = rl.Routine('TopK', percent=40, ranking=self.ranking)
        self.assertEqual((0, 1, 2, 4, 8), best.round_order())
        worst = rl.Routine('LastK', percent=40, ranking=self.ranking)
        self.assertEqual((7, 10, 11, 12, 13), worst.round_order())

    def testTopKHundredMatchesDefault(self):
        prob = redundancy_heavy(1, SMALL, seed=2)[0]
        a, sa = rl.reduce(rl.Routine('TopK', percent=100, ranking=self.ranking), prob)
        b, sb = rl.default_routine(prob)
        self.assertEqual(sb.rounds, sa.rounds)
        self.assertEqual(b.triples_by_row(), a.triples_by_row())

    def testReorderingIsSeeded(self):
        one = rl.Routine('Reordering', seed=3)
        two = rl.Routine('Reordering', seed=3)
        self.assertEqual(one.round_order(), two.round_order())
        self.assertEqual(sorted(lp.DEFAULT_ORDER), sorted(one.round_order()))
        prob = redundancy_heavy(1, SMALL, seed=4)[0]
        r1, _ = rl.run_routine(one, prob)
        r2, _ = rl.run_routine(two, prob)
        self.assertEqual(r1.to_dict(), r2.to_dict())

    def testValidation(self):
        with self.assertRaises(rl.RoutineError):
            rl.Routine('TopK', percent=40).round_order()
        with self.assertRaises(rl.RoutineError):
            rl.Routine('Greedy')
        with self.assertRaises(rl.RoutineError):
            rl.Routine('TopK', percent=0, ranking=self.ranking)
        with self.assertRaises(rl.RoutineError):
            rl.Routine('Default', max_iterations=0)
        with self.assertRaises(lp.UnsupportedPresolverError):
            rl.Routine('Fixed', sequence=(0, 3))
        with self.assertRaises(rl.RoutineError):
            rl.baseline('LastK', {'percent': 50}, irredundant_lp())

    def testBaseline(self):
        prob = redundancy_heavy(1, SMALL, seed=5)[0]
        _, stats = rl.baseline('IterationScaled', {'percent': -90}, prob)
        self.assertEqual(1, stats.rounds)

    def testParseMethod(self):
        v2 = rl.parse_method('enhance-v2')
        self.assertEqual(('IterationScaled', 6, 'enhance-v2'), (v2.kind, v2.max_rounds, v2.name))
        v1 = rl.parse_method('enhance-v1', ranking=self.ranking)
        self.assertEqual(5, len(v1.round_order()))
        self.assertEqual(25.0, rl.parse_method('topk:25', ranking=self.ranking).percent)
        self.assertEqual('Off', rl.parse_method('off').kind)
        for bad in ('bogus', 'topk:abc', 'learned'):
            with self.subTest(method=bad):
                with self.assertRaises(rl.RoutineError):
                    rl.parse_method(bad)

    def testRankPresolvers(self):
        self.assertEqual((2, 0, 1), rl.rank_presolvers({0: 1.0, 1: 1.0, 2: 3.0}))

    def testProfileIsDeterministic(self):
        probs = redundancy_heavy(2, SMALL, seed=6)
        first = rl.profile_presolvers(probs)
        self.assertEqual(first, rl.profile_presolvers(probs))
        self.assertEqual(set(lp.SUPPORTED_PRESOLVERS), set(first))
        self.assertGreater(first[4], 0.0)

    def testFileRoundTrip(self):
        routine = rl.Routine('Fixed', name='mine', sequence=(0, 4, 1))
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'routine.json')
            routine.save(path)
            with open(path) as reader:
                self.assertEqual(['make_fixed', 'duprow', 'test_redundant'], json.load(reader)['sequence'])
            self.assertEqual(routine, rl.Routine.load(path))
            self.assertEqual(routine, rl.parse_method(path))
        named = rl.Routine.from_json({'kind': 'Fixed', 'sequence': ['make_fixed', 'duprow']})
        self.assertEqual((0, 4), named.sequence)
        with self.assertRaises(rl.RoutineError):
            rl.Routine.from_json({'kind': 'Fixed', 'order': [0]})
        with self.assertRaises(rl.RoutineError):
            rl.Routine.from_json({'kind': 'Learned'})


class RoutineSafetyTests(unittest.TestCase):
    """Every routine kind keeps the optimum of random feasible LPs of 2..10 rows and columns."""

    count = 500

    def routines(self):
        ranking = tuple(lp.DEFAULT_ORDER)
        return [rl.Routine('Default'), rl.Routine('TopK', percent=40, ranking=ranking),
                rl.Routine('LastK', percent=60, ranking=ranking), rl.Routine('Reordering', seed=1),
                rl.Routine('IterationScaled', percent=-40), rl.Routine('Fixed', sequence=(0, 4, 1, 9, 10)),
                rl.Routine('Off'), rl.Routine('Learned', policy=rl.ChainPolicy(seed=2))]

    def testEveryKind(self):
        rng = oracles.rng_for(21)
        routines = self.routines()
        done = 0
        while done < self.count:
            m, n = (int(k) for k in rng.integers(2, 11, size=2))
            prob = oracles.random_feasible_lp(rng, m, n, density=rng.uniform(0.2, 0.6))
            status, direct = oracles.reference_solve(prob)
            if status != 'Optimal':
                continue
            for routine in routines:
                with self.subTest(routine=routine.name, draw=done):
                    result, solution = rl.run_routine(routine, prob, seed=done)
                    self.assertEqual('Optimal', result.status)
                    self.assertTrue(oracles.rel_close(direct, result.objective))
                    self.assertTrue(oracles.is_feasible(prob, solution.primal))
            done += 1


class RunRoutineTests(unittest.TestCase):
    def setUp(self):
        self.prob = redundancy_heavy(1, SMALL, seed=8)[0]
        _, self.expected = oracles.reference_solve(self.prob)

    def testDefaultMatchesReference(self):
        result, solution = rl.run_routine(rl.Routine('Default'), self.prob)
        self.assertEqual('Optimal', result.status)
        self.assertTrue(oracles.rel_close(self.expected, result.objective))
        self.assertGreater(result.nnz_reduction_pct, 0.0)
        self.assertEqual(len(result.sequence), result.presolver_count)
        self.assertEqual(self.prob.num_cols, len(solution.primal))

    def testLearnedCountsOneDecisionPerStep(self):
        policy = rl.ChainPolicy(seed=4)
        result, _ = rl.run_routine(rl.Routine('Learned', policy=policy), self.prob, seed=3)
        self.assertEqual('Optimal', result.status)
        self.assertTrue(oracles.rel_close(self.expected, result.objective))
        self.assertEqual(result.decisions, policy.forward_calls)
        # every step but the last runs a non-empty sequence
        self.assertGreaterEqual(result.presolver_count, result.decisions - 1)

    def testLearnedWallClockChargesDecisions(self):
        result, _ = rl.run_routine(rl.Routine('Learned', policy=rl.ChainPolicy(seed=4)), self.prob,
                                   rl.CostModel('WallClock'), seed=3)
        self.assertEqual('Optimal', result.status)
        self.assertGreater(result.decision_cost, 0.0)
        self.assertAlmostEqual(result.total_cost,
                               result.presolve_cost + result.solve_cost + result.decision_cost)

    def testLearnedWithoutPolicy(self):
        with self.assertRaises(rl.RoutineError):
            rl.run_routine(rl.Routine('Learned'), self.prob)


class EvalReportTests(unittest.TestCase):
    def testHalfCostIsFiftyPercent(self):
        rows = []
        for inst, slow in (('a', 2.0), ('b', 4.0)):
            rows.append({'instance': inst, 'method': 'slow', 'cost': slow, 'seed': 0})
            rows.append({'instance': inst, 'method': 'fast', 'cost': slow / 2, 'seed': 0})
        report = rl.EvalReport(rows, ['slow', 'fast'])
        self.assertAlmostEqual(50.0, report.improvement('fast'))
        self.assertEqual(0.0, report.improvement('slow'))
        self.assertEqual(100.0, report.wins('fast'))
        self.assertEqual(0.0, report.wins('slow'))
        self.assertEqual(3.0, report.mean_cost('slow'))

    def testStdOverSeedMeans(self):
        rows = [{'instance': 'a', 'method': 'm', 'cost': 1.0, 'seed': 0},
                {'instance': 'a', 'method': 'm', 'cost': 3.0, 'seed': 1}]
        report = rl.EvalReport(rows, ['m'])
        self.assertEqual(2.0, report.mean_cost('m'))
        self.assertEqual(1.0, report.std_cost('m'))

    def testTiesWinForBoth(self):
        probs = [('p{0}'.format(k), p) for k, p in enumerate(redundancy_heavy(2, SMALL, seed=9))]
        report = rl.evaluate([rl.Routine('Default', name='a'), rl.Routine('Default', name='b')], probs)
        self.assertEqual(0.0, report.improvement('b'))
        self.assertEqual((100.0, 100.0), (report.wins('a'), report.wins('b')))

    def testPresolveOffCostsMore(self):
        probs = [('p{0}'.format(k), p) for k, p in enumerate(redundancy_heavy(3))]
        cheap = rl.CostModel(w_scan=1e-3, w_apply=1e-2)
        report = rl.evaluate([rl.parse_method('default'), rl.parse_method('off')], probs, cheap)
        self.assertGreater(report.mean_cost('off'), report.mean_cost('default'))
        self.assertLess(report.improvement('off'), 0.0)
        lp_cost = {m: numpy.mean([r['lp_cost'] for r in report.rows if r['method'] == m]) for m in ('default', 'off')}
        self.assertGreater(lp_cost['off'], lp_cost['default'])

    def testWorkersGiveSameRows(self):
        probs = [('p{0}'.format(k), p) for k, p in enumerate(redundancy_heavy(2, SMALL, seed=10))]
        methods = [rl.parse_method('default'), rl.parse_method('enhance-v2'), rl.parse_method('off')]
        serial = rl.evaluate(methods, probs, seeds=(0, 1))
        pooled = rl.evaluate(methods, probs, seeds=(0, 1), workers=2)
        self.assertEqual(serial.rows, pooled.rows)
        self.assertEqual(12, len(serial.rows))

    def testCsvColumns(self):
        probs = [('only', redundancy_heavy(1, SMALL, seed=11)[0])]
        report = rl.evaluate([rl.parse_method('default')], probs)
        out = io.StringIO()
        report.write_csv(out)
        rows = list(csv.DictReader(io.StringIO(out.getvalue())))
        self.assertEqual(1, len(rows))
        for column in ('instance', 'method', 'cost', 'presolve_cost', 'lp_cost', 'nnz_reduction_pct',
                       'presolver_count'):
            self.assertIn(column, rows[0])
        self.assertIn('default', report.table())

    def testNeedsMethodsAndInstances(self):
        with self.assertRaises(rl.RoutineError):
            rl.evaluate([], [('a', irredundant_lp())])
        with self.assertRaises(rl.RoutineError):
            rl.evaluate([rl.Routine('Default')], [])
        with self.assertRaises(rl.RoutineError):
            rl.evaluate([rl.Routine('Default'), rl.Routine('Default')], [('a', irredundant_lp())])


class ExtractRulesTests(unittest.TestCase):
    def setUp(self):
        self.probs = redundancy_heavy(2, SMALL, seed=12)

    def testDeterministicChain(self):
        end = rl.NUM_ACTIONS
        initial = numpy.full(end + 1, -20.0)
        initial[0] = 20.0
        initial[end] = 0.0
        # after make_fixed has run once the initial end token wins
        policy = constant_policy(initial, {(end + 1) + end: 20.0}, {(rl.ACTION_OFFSET, 0): -40.0})
        routine = rl.extract_rules(policy, self.probs, k=5)
        self.assertEqual('Fixed', routine.kind)
        self.assertEqual((0,), routine.sequence)
        result, _ = rl.run_routine(routine, self.probs[0])
        self.assertEqual('Optimal', result.status)

    def testImmediateEndTurnsPresolveOff(self):
        initial = numpy.full(rl.NUM_ACTIONS + 1, -20.0)
        initial[rl.NUM_ACTIONS] = 20.0
        routine = rl.extract_rules(constant_policy(initial), self.probs, k=3)
        self.assertEqual('Off', routine.kind)
        self.assertEqual('extracted', routine.name)

    def testSupportedIdsOnly(self):
        routine = rl.extract_rules(rl.ChainPolicy(seed=1), self.probs, k=2, validation=self.probs[:1], seed=4)
        for pid in routine.sequence:
            self.assertIn(pid, lp.SUPPORTED_PRESOLVERS)
        self.assertIsNone(routine.policy)

    def testBenchmarkMeanState(self):
        state = rl.benchmark_mean_state(self.probs)
        self.assertEqual((rl.NUM_FEATURES,), state.shape)
        numpy.testing.assert_array_equal(numpy.zeros(rl.NUM_FEATURES - rl.HISTORY_OFFSET),
                                         state[rl.HISTORY_OFFSET:])


class TrainedPolicyTests(unittest.TestCase):
    """Short training runs on the real presolve environment."""

    # scans dominate the bill, so extra default rounds cost more than the pivots they save
    scan_heavy = rl.CostModel(w_scan=0.2)

    @classmethod
    def setUpClass(cls):
        cls.train_probs = redundancy_heavy(4, SMALL, seed=30)
        cls.held_out = [('h{0}'.format(k), p) for k, p in enumerate(redundancy_heavy(3, SMALL, seed=31))]
        cfg = rl.apply_overrides(rl.TrainerConfig(), {'total_iters': 20, 'workers': 1, 'eval_every': 10,
                                                      'lr_actor': 1e-3, 'lr_critic': 1e-3, 'seed': 3})
        cls.result = rl.train(cfg, rl.presolve_env_factory(cls.scan_heavy), cls.train_probs)

    def testNoBenefitFamilyLearnsToSkipPresolve(self):
        prob = irredundant_lp()
        # a small decision cost makes every extra step strictly worse
        cost = rl.CostModel(decision=0.05)
        cfg = rl.apply_overrides(rl.TrainerConfig(), {'total_iters': 60, 'workers': 1, 'eval_every': 20,
                                                      'lr_actor': 1e-3, 'lr_critic': 1e-3, 'seed': 5})
        policy = rl.ChainPolicy(seed=5)
        rl.train(cfg, rl.presolve_env_factory(cost), [prob], policy=policy)
        dist = policy.distribution(rl.PresolveEnv(cost).reset(prob))
        self.assertGreaterEqual(dist.initial[rl.NUM_ACTIONS], 0.8)

    def testLearnedBeatsDefaultOnHeldOut(self):
        methods = [rl.Routine('Default'), rl.Routine('Learned', policy=self.result.policy)]
        report = rl.evaluate(methods, self.held_out, self.scan_heavy, seeds=(0, 1))
        self.assertGreaterEqual(report.improvement('learned'), 10.0)
        for row in report.rows:
            self.assertEqual('Optimal', row['status'])

    def testExtractedFromTrainedPolicyBeatsDefault(self):
        routine = rl.extract_rules(self.result.policy, self.train_probs, k=5, cost_model=self.scan_heavy)
        self.assertIn(routine.kind, ('Fixed', 'Off'))
        report = rl.evaluate([rl.Routine('Default'), routine], self.held_out, self.scan_heavy)
        self.assertGreaterEqual(report.improvement('extracted'), 10.0)

    def testExtractedMakeFixedBeatsDefault(self):
        end = rl.NUM_ACTIONS
        initial = numpy.full(end + 1, -20.0)
        initial[0] = 20.0
        initial[end] = 0.0
        policy = constant_policy(initial, {(end + 1) + end: 20.0}, {(rl.ACTION_OFFSET, 0): -40.0})
        routine = rl.extract_rules(policy, self.train_probs, k=5, validation=self.train_probs[:2],
                                   cost_model=self.scan_heavy)
        self.assertEqual((0,), routine.sequence)
        report = rl.evaluate([rl.Routine('Default'), routine], self.held_out, self.scan_heavy)
        self.assertGreaterEqual(report.improvement('extracted'), 10.0)
        self.assertGreater(report.wins('extracted'), 50.0)


class CommandLineTests(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = os.path.join(self.tmp.name, 'corpus')
        code, _, _ = self.run_cli('--seed', '3', 'gen', '--family', 'RedundancyHeavy',
                                  '--params', 'nrow=10,ncol=12,dens=0.3', '--count', '2', '--out-dir', self.dir)
        self.assertEqual(0, code)
        self.files = sorted(glob.glob(os.path.join(self.dir, '*.mps')))

    def tearDown(self):
        self.tmp.cleanup()

    def run_cli(self, *argv):
        out, err = io.StringIO(), io.StringIO()
        with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
            code = rl.cli.main(list(argv))
        return code, out.getvalue(), err.getvalue()

    def testGenWritesManifest(self):
        self.assertEqual(2, len(self.files))
        with open(os.path.join(self.dir, 'manifest.json')) as reader:
            manifest = json.load(reader)
        self.assertEqual(3, manifest['seed'])
        self.assertEqual(10, manifest['params']['nrow'])

    def testSolve(self):
        code, out, _ = self.run_cli('solve', self.files[0], '--routine', 'default')
        self.assertEqual(0, code)
        self.assertIn('status: Optimal', out)
        self.assertIn('nnz reduction:', out)
        code, out, _ = self.run_cli('solve', self.files[0], '--routine', 'enhance-v1', '--json')
        self.assertEqual(0, code)
        self.assertEqual('Optimal', json.loads(out)['status'])

    def testFeatures(self):
        code, out, _ = self.run_cli('features', self.files[0], '--json')
        self.assertEqual(0, code)
        values = json.loads(out)
        self.assertEqual(list(rl.FEATURE_NAMES), list(values))

    def testPresolveWritesReducedFile(self):
        target = os.path.join(self.tmp.name, 'reduced.mps')
        code, out, _ = self.run_cli('presolve', self.files[0], '--json', '--out', target)
        self.assertEqual(0, code)
        summary = json.loads(out)
        self.assertLessEqual(summary['nnz_after'], summary['nnz_before'])
        self.assertEqual(summary['nnz_after'], lp.read_mps(target).nnz())

    def testEvalCsv(self):
        target = os.path.join(self.tmp.name, 'report.csv')
        code, out, _ = self.run_cli('eval', '--methods', 'default,off', '--instances', self.dir, '--out', target)
        self.assertEqual(0, code)
        with open(target, newline='') as reader:
            rows = list(csv.DictReader(reader))
        self.assertEqual(4, len(rows))
        self.assertEqual({'default', 'off'}, {r['method'] for r in rows})
        self.assertIn('improvement(%)', out)

    def testExtract(self):
        ckpt = os.path.join(self.tmp.name, 'policy.json')
        target = os.path.join(self.tmp.name, 'routine.json')
        rl.ChainPolicy(seed=0).save(ckpt)
        code, out, _ = self.run_cli('extract', '--checkpoint', ckpt, '--instances', self.dir,
                                    '--k', '2', '--out', target)
        self.assertEqual(0, code)
        self.assertEqual(json.loads(out), rl.Routine.load(target).to_json())

    def testUsageError(self):
        code, _, err = self.run_cli('solve')
        self.assertEqual(2, code)
        self.assertIn('usage', err)
        code, _, _ = self.run_cli('--cost-model', 'Cycles', 'features', self.files[0])
        self.assertEqual(2, code)

    def testRuntimeError(self):
        empty = os.path.join(self.tmp.name, 'empty')
        os.makedirs(empty)
        code, _, err = self.run_cli('eval', '--instances', empty)
        self.assertEqual(1, code)
        self.assertIn('error:', err)
        code, _, err = self.run_cli('solve', self.files[0], '--routine', 'bogus')
        self.assertEqual(1, code)


def main():
    unittest.main()


if __name__ == '__main__':
    main()
