import csv
import math
import multiprocessing
import os
import tempfile
import unittest

import numpy

import rl


def toy_config(**overrides):
    base = {'total_iters': 3, 'workers': 1, 'samples_per_iter': 8, 'epochs': 2, 'minibatch': 16,
            'eval_every': 1, 'seed': 11}
    base.update(overrides)
    return rl.apply_overrides(rl.TrainerConfig(), base)


def reference_surrogate(r, adv, eps):
    return min(r * adv, min(max(r, 1 - eps), 1 + eps) * adv)


class ClippedRatioTests(unittest.TestCase):
    def testMatchesReferenceOnGrid(self):
        for r in numpy.linspace(0.5, 1.5, 41):
            for adv in (-2.0, -0.5, 0.0, 0.5, 2.0):
                value, _ = rl.ppo_ratio(math.log(r), 0.0, adv, 0.2)
                self.assertAlmostEqual(reference_surrogate(r, adv, 0.2), value, places=12)

    def testGradientInsideTrustRegion(self):
        for new, adv in ((0.05, 1.0), (-0.1, -2.0), (0.3, -1.0), (-0.4, 1.5)):
            _, grad = rl.ppo_ratio(new, 0.0, adv, 0.2)
            eps = 1e-7
            up, _ = rl.ppo_ratio(new + eps, 0.0, adv, 0.2)
            down, _ = rl.ppo_ratio(new - eps, 0.0, adv, 0.2)
            self.assertAlmostEqual((up - down) / (2 * eps), grad, places=6)

    def testClampedHasZeroGradient(self):
        self.assertEqual((1.2, 0.0), rl.ppo_ratio(math.log(1.5), 0.0, 1.0, 0.2))
        value, grad = rl.ppo_ratio(math.log(0.5), 0.0, -1.0, 0.2)
        self.assertAlmostEqual(-0.8, value)
        self.assertEqual(0.0, grad)

    def testVectorised(self):
        value, grad = rl.ppo_ratio(numpy.zeros(3), numpy.zeros(3), numpy.array([1.0, -1.0, 0.0]), 0.2)
        numpy.testing.assert_array_equal([1.0, -1.0, 0.0], value)
        numpy.testing.assert_array_equal([1.0, -1.0, 0.0], grad)


class ConfigTests(unittest.TestCase):
    def testOverridesFromStrings(self):
        cfg = rl.apply_overrides(rl.TrainerConfig(), ['epochs=3', 'clip=0.1', 'agent=bandit',
                                                      'normalize_returns=false'])
        self.assertEqual(3, cfg.epochs)
        self.assertEqual(0.1, cfg.clip)
        self.assertEqual('bandit', cfg.agent)
        self.assertFalse(cfg.normalize_returns)

    def testRejectsBadValues(self):
        for bad in (['nonsense=1'], ['clip=1.5'], ['epochs=abc'], ['epochs'], ['cost_model=Cycles'],
                    ['samples_per_iter=0']):
            with self.subTest(override=bad):
                with self.assertRaises(rl.ConfigError):
                    rl.apply_overrides(rl.TrainerConfig(), bad)

    def testLoadConfigFile(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'train.cfg')
            with open(path, 'w') as writer:
                writer.write("{'epochs': 2, 'lr_actor': 3e-4}\n")
            cfg = rl.load_config(path, ['seed=5'])
            self.assertEqual((2, 3e-4, 5), (cfg.epochs, cfg.lr_actor, cfg.seed))
            with open(path, 'w') as writer:
                writer.write("epochs = 2\n")
            with self.assertRaises(rl.ConfigError):
                rl.load_config(path)
            with open(path, 'w') as writer:
                writer.write("[1, 2]\n")
            with self.assertRaises(rl.ConfigError):
                rl.load_config(path)


class BufferTests(unittest.TestCase):
    def testSuffixReturns(self):
        numpy.testing.assert_array_equal([-6.0, -5.0, -3.0], rl.suffix_returns([-1.0, -2.0, -3.0]))
        numpy.testing.assert_allclose([-2.75, -3.5, -3.0], rl.suffix_returns([-1.0, -2.0, -3.0], 0.5))

    def testCollectWholeEpisodes(self):
        policy = rl.ChainPolicy(seed=1)
        buf = rl.collect(policy, rl.TwoArmedEnv, [None], 10, seed=3)
        self.assertGreaterEqual(len(buf), 10)
        self.assertTrue(buf.records[-1].done)
        self.assertEqual(len(buf.episodes), sum(r.done for r in buf.records))
        first = buf.records[0]
        self.assertAlmostEqual(-buf.episodes[0].total_cost, first.ret)
        self.assertAlmostEqual(buf.mean_return(), -numpy.mean([e.total_cost for e in buf.episodes]))

    def testCollectWithPoolMatchesSerial(self):
        policy = rl.ChainPolicy(seed=2)
        serial = rl.collect(policy, rl.TwoArmedEnv, [None], 6, seed=4, workers=2)
        with multiprocessing.Pool(2) as pool:
            pooled = rl.collect(policy, rl.TwoArmedEnv, [None], 6, seed=4, workers=2, pool=pool)
        self.assertEqual([r.reward for r in serial.records], [r.reward for r in pooled.records])
        self.assertEqual([r.action.ids for r in serial.records], [r.action.ids for r in pooled.records])

    def testWallClockChargesDecisionTime(self):
        env = rl.TwoArmedEnv()
        env.cost_model = rl.CostModel('WallClock')
        records, result = rl.run_episode(rl.ChainPolicy(seed=6), env, None, numpy.random.default_rng(0))
        self.assertEqual(len(records), result.decisions)
        self.assertGreater(result.decision_cost, 0.0)
        self.assertAlmostEqual(result.total_cost, -sum(r.reward for r in records))

    def testWorkUnitsIgnoresDecisionTime(self):
        _, result = rl.run_episode(rl.ChainPolicy(seed=6), rl.TwoArmedEnv(), None, numpy.random.default_rng(0))
        self.assertEqual(0.0, result.decision_cost)


class UpdateTests(unittest.TestCase):
    def setUp(self):
        self.policy = rl.ChainPolicy(seed=5)
        self.critic = rl.make_critic(5)
        self.buf = rl.collect(self.policy, rl.TwoArmedEnv, [None], 8, seed=5)

    def optimizers(self):
        return rl.Adam(self.policy.actor.params(), 1e-3), rl.Adam(self.critic.params(), 1e-3)

    def testFirstEpochRatioIsOne(self):
        cfg = rl.apply_overrides(rl.TrainerConfig(), {'epochs': 1, 'minibatch': len(self.buf)})
        metrics = rl.update(self.buf, self.policy, self.critic, *self.optimizers(), cfg,
                            numpy.random.default_rng(0))
        self.assertAlmostEqual(1.0, metrics['mean_ratio'], places=9)
        self.assertEqual(0.0, metrics['clip_fraction'])
        self.assertEqual(len(self.buf), metrics['samples'])

    def testUpdateMovesPolicy(self):
        before = self.policy.actor.copy()
        cfg = rl.apply_overrides(rl.TrainerConfig(), {'epochs': 3, 'minibatch': 4})
        metrics = rl.update(self.buf, self.policy, self.critic, *self.optimizers(), cfg,
                            numpy.random.default_rng(0))
        self.assertFalse(numpy.array_equal(before.weights[0], self.policy.actor.weights[0]))
        for key in ('actor_loss', 'critic_loss', 'entropy'):
            self.assertTrue(math.isfinite(metrics[key]))

    def testEmptyBufferRaises(self):
        with self.assertRaises(rl.TrainingError):
            rl.update(rl.TrajectoryBuffer(), self.policy, self.critic, *self.optimizers(),
                      rl.TrainerConfig(), numpy.random.default_rng(0))


class TrainTests(unittest.TestCase):
    def testZeroIterationsReturnsInitialPolicy(self):
        result = rl.train(toy_config(total_iters=0), rl.TwoArmedEnv, [None])
        self.assertEqual(0, result.best_iteration)
        self.assertIsNone(result.best_validation)
        self.assertEqual([], result.log)

    def testZeroIterationsStillWritesCheckpoint(self):
        start = rl.TwoArmedEnv().reset()
        with tempfile.TemporaryDirectory() as tmp:
            ckpt = os.path.join(tmp, 'policy.json')
            result = rl.train(toy_config(total_iters=0), rl.TwoArmedEnv, [None], checkpoint_path=ckpt)
            self.assertEqual(0, rl.load_json(ckpt)['iteration'])
            loaded = rl.ChainPolicy.load(ckpt)
        numpy.testing.assert_array_equal(result.policy.distribution(start).initial,
                                         loaded.distribution(start).initial)

    def testDeterministicOnToy(self):
        first = rl.train(toy_config(), rl.TwoArmedEnv, [None])
        second = rl.train(toy_config(), rl.TwoArmedEnv, [None])
        self.assertEqual(3, len(first.log))
        for a, b in zip(first.log, second.log):
            self.assertEqual(a['mean_return'], b['mean_return'])
            self.assertEqual(a['actor_loss'], b['actor_loss'])
            self.assertEqual(a['validation_cost'], b['validation_cost'])

    def testMetricsAndCheckpoint(self):
        with tempfile.TemporaryDirectory() as tmp:
            metrics = os.path.join(tmp, 'metrics.csv')
            ckpt = os.path.join(tmp, 'policy.json')
            rl.train(toy_config(), rl.TwoArmedEnv, [None], metrics_path=metrics, checkpoint_path=ckpt)
            with open(metrics, newline='') as reader:
                rows = list(csv.DictReader(reader))
            self.assertEqual(list(rl.METRIC_COLUMNS), list(rows[0].keys()))
            self.assertEqual(['1', '2', '3'], [r['iteration'] for r in rows])
            policy = rl.ChainPolicy.load(ckpt)
            self.assertEqual('adaptive', policy.kind)

    def testLearnsTowardsBeneficialPresolver(self):
        cfg = toy_config(total_iters=20, samples_per_iter=32, epochs=4, lr_actor=3e-3, lr_critic=3e-3,
                         entropy_coef=0.0, eval_every=100)
        held_out = [None] * 20
        before = rl.evaluate_policy(rl.ChainPolicy(seed=cfg.seed), rl.TwoArmedEnv, held_out, seed=1)
        result = rl.train(cfg, rl.TwoArmedEnv, [None], valid_instances=held_out)
        after = rl.evaluate_policy(result.policy, rl.TwoArmedEnv, held_out, seed=1)
        self.assertLess(after, 0.8 * before)

    def testDefaultConfigPicksBeneficialPresolver(self):
        start = rl.TwoArmedEnv().reset()
        for seed in (0, 1, 2):
            with self.subTest(seed=seed):
                cfg = rl.apply_overrides(rl.TrainerConfig(), {'total_iters': 300, 'seed': seed})
                policy = rl.ChainPolicy(seed=seed)
                rl.train(cfg, rl.TwoArmedEnv, [None], policy=policy)
                dist = policy.distribution(start)
                # presolver 0, then the end token
                self.assertGreaterEqual(dist.initial[0] * dist.transition[0, rl.NUM_ACTIONS], 0.9)


def main():
    unittest.main()


if __name__ == '__main__':
    main()
