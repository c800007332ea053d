import itertools
import math
import os
import tempfile
import unittest
from collections import Counter

import numpy

import lp
import rl
from lp import ActionSequence


def small_chain(a, seed, scale=1.0):
    rng = numpy.random.default_rng(seed)
    logits = scale * rng.standard_normal(rl.num_logits(a))
    return logits, rl.ChainDistribution.from_logits(logits)


def all_sequences(a, cap):
    """Every sequence the chain can emit under the cap, with its truncation flag."""
    for length in range(cap + 1):
        for tokens in itertools.product(range(a), repeat=length):
            yield ActionSequence(tokens, truncated=length == cap)


def numeric_grad(f, z, eps=1e-6):
    out = numpy.zeros_like(z)
    for k in range(z.size):
        up, down = z.copy(), z.copy()
        up[k] += eps
        down[k] -= eps
        out[k] = (f(up) - f(down)) / (2 * eps)
    return out


class ChainDistributionTests(unittest.TestCase):
    def testShapes(self):
        _, dist = small_chain(3, 0)
        self.assertEqual((4,), dist.initial.shape)
        self.assertEqual((3, 4), dist.transition.shape)
        self.assertAlmostEqual(1.0, dist.initial.sum())
        numpy.testing.assert_allclose(numpy.ones(3), dist.transition.sum(axis=1))
        self.assertEqual(169, rl.NUM_LOGITS)

    def testBadLogitCount(self):
        with self.assertRaises(rl.ShapeError):
            rl.ChainDistribution.from_logits(numpy.zeros(10))

    def testMassSumsToOne(self):
        for a, cap in ((2, 6), (3, 4)):
            _, dist = small_chain(a, a)
            total = sum(math.exp(rl.log_prob(dist, seq, cap)) for seq in all_sequences(a, cap))
            self.assertAlmostEqual(1.0, total, places=10)

    def testMonteCarloFrequencies(self):
        _, dist = small_chain(3, 1)
        rng = numpy.random.default_rng(7)
        draws = 20000
        counts = Counter()
        for _ in range(draws):
            seq, logprob = rl.sample(dist, rng)
            self.assertAlmostEqual(rl.log_prob(dist, seq), logprob, places=10)
            counts[seq.ids] += 1
        for ids, hits in counts.most_common(8):
            p = math.exp(rl.log_prob(dist, ActionSequence(ids)))
            sigma = math.sqrt(p * (1 - p) / draws)
            self.assertLess(abs(hits / draws - p), 5 * sigma + 1e-3, ids)

    def testMeanLengthMatchesAbsorbingChain(self):
        _, dist = small_chain(3, 2)
        P = dist.transition[:, :3]
        expected = dist.initial[:3] @ numpy.linalg.solve(numpy.eye(3) - P, numpy.ones(3))
        rng = numpy.random.default_rng(8)
        lengths = [len(rl.sample(dist, rng)[0]) for _ in range(20000)]
        stderr = numpy.std(lengths) / math.sqrt(len(lengths))
        self.assertAlmostEqual(expected, numpy.mean(lengths), delta=5 * stderr + 1e-3)

    def testCapTruncates(self):
        _, dist = small_chain(3, 3, scale=0.1)
        rng = numpy.random.default_rng(9)
        for _ in range(200):
            seq, logprob = rl.sample(dist, rng, cap=1)
            self.assertLessEqual(len(seq), 1)
            self.assertEqual(len(seq) == 1, seq.truncated)
        seq = ActionSequence((2,), truncated=True)
        self.assertAlmostEqual(math.log(dist.initial[2]), rl.log_prob(dist, seq))
        self.assertAlmostEqual(math.log(dist.initial[2]) + math.log(dist.transition[2, 3]),
                               rl.log_prob(dist, ActionSequence((2,))))

    def testEntropyMatchesEnumeration(self):
        for a, cap in ((2, 6), (3, 4), (2, 1)):
            _, dist = small_chain(a, 10 + a)
            exact = 0.0
            for seq in all_sequences(a, cap):
                logp = rl.log_prob(dist, seq, cap)
                exact -= math.exp(logp) * logp
            self.assertAlmostEqual(exact, rl.entropy_estimate(dist, cap), delta=1e-9)

    def testLogProbGradient(self):
        logits, _ = small_chain(3, 4)
        for seq, cap in ((ActionSequence((1, 0, 2)), 64), (ActionSequence(()), 64),
                         (ActionSequence((2, 2), truncated=True), 2)):
            def f(z):
                return rl.log_prob(rl.ChainDistribution.from_logits(z), seq, cap)

            analytic = rl.log_prob_grad(rl.ChainDistribution.from_logits(logits), seq, cap)
            numpy.testing.assert_allclose(numeric_grad(f, logits), analytic, atol=1e-7)

    def testEntropyGradient(self):
        logits, _ = small_chain(3, 5)
        for cap in (1, 2, 5):
            def f(z):
                return rl.entropy_estimate(rl.ChainDistribution.from_logits(z), cap)

            analytic = rl.entropy_grad(rl.ChainDistribution.from_logits(logits), cap)
            numpy.testing.assert_allclose(numeric_grad(f, logits), analytic, atol=1e-6)

    def testDecisionEntropyAveragesDrawnRows(self):
        _, dist = small_chain(3, 6)

        def h(p):
            return -float(numpy.sum(p * numpy.log(p)))

        self.assertAlmostEqual(h(dist.initial), rl.decision_entropy(dist, ActionSequence(())))
        expected = (h(dist.initial) + h(dist.transition[1]) + h(dist.transition[0])) / 3
        self.assertAlmostEqual(expected, rl.decision_entropy(dist, ActionSequence((1, 0))))
        # no end draw after a truncated sequence
        expected = (h(dist.initial) + h(dist.transition[2])) / 2
        self.assertAlmostEqual(expected, rl.decision_entropy(dist, ActionSequence((2, 2), truncated=True), 2))

    def testDecisionEntropyIgnoresLength(self):
        uniform = rl.ChainDistribution.from_logits(numpy.zeros(rl.num_logits(3)))
        for length in (0, 1, 5, 30):
            seq = ActionSequence(tuple(k % 3 for k in range(length)))
            self.assertAlmostEqual(math.log(4), rl.decision_entropy(uniform, seq))

    def testDecisionEntropyGradient(self):
        logits, _ = small_chain(3, 7)
        for seq, cap in ((ActionSequence((1, 0, 1)), 64), (ActionSequence(()), 64),
                         (ActionSequence((2, 2), truncated=True), 2)):
            def f(z):
                return rl.decision_entropy(rl.ChainDistribution.from_logits(z), seq, cap)

            analytic = rl.decision_entropy_grad(rl.ChainDistribution.from_logits(logits), seq, cap)
            numpy.testing.assert_allclose(numeric_grad(f, logits), analytic, atol=1e-7)

    def testUnsupportedTokenRejected(self):
        _, dist = small_chain(2, 6)
        with self.assertRaises(lp.UnsupportedPresolverError):
            rl.log_prob(dist, ActionSequence((4,)))


class ChainPolicyTests(unittest.TestCase):
    def setUp(self):
        self.policy = rl.ChainPolicy(seed=3)
        self.features = numpy.random.default_rng(0).random(rl.NUM_FEATURES)

    def testInitialPolicyEndsHalfTheTime(self):
        dist = self.policy.distribution(self.features)
        numpy.testing.assert_allclose(numpy.full(12, 0.5 / 12), dist.initial[:12], atol=0.005)
        self.assertAlmostEqual(rl.INITIAL_END_PROBABILITY, dist.initial[12], delta=0.02)
        numpy.testing.assert_allclose(numpy.full(12, 0.5), dist.transition[:, 12], atol=0.02)
        self.assertEqual(list(range(12, rl.NUM_LOGITS, 13)), rl.end_logit_indices(rl.NUM_ACTIONS))

    def testActUsesOneForwardPass(self):
        rng = numpy.random.default_rng(1)
        seq, logprob, state = self.policy.act(self.features, rng)
        self.assertEqual(1, self.policy.forward_calls)
        self.assertEqual((rl.NUM_FEATURES,), state.shape)
        dist = rl.distribution(self.policy.actor, state)
        self.assertAlmostEqual(rl.log_prob(dist, seq, self.policy.cap), logprob)
        for pid in seq:
            self.assertIn(pid, lp.SUPPORTED_PRESOLVERS)

    def testAgentKinds(self):
        vanilla = rl.ChainPolicy(kind='vanilla')
        rng = numpy.random.default_rng(2)
        for _ in range(50):
            self.assertLessEqual(len(vanilla.act(self.features, rng)[0]), 1)
        self.assertEqual(1, rl.ChainPolicy(kind='bandit').max_steps)
        with self.assertRaises(ValueError):
            rl.ChainPolicy(kind='greedy')
        with self.assertRaises(rl.ShapeError):
            rl.ChainPolicy(rl.MLP((rl.NUM_FEATURES, 4)))

    def testSaveLoad(self):
        self.policy.normalizer.update(numpy.random.default_rng(5).random((10, rl.NUM_FEATURES)))
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'policy.json')
            self.policy.save(path, iteration=4)
            other = rl.ChainPolicy.load(path)
        self.assertEqual('adaptive', other.kind)
        numpy.testing.assert_allclose(self.policy.distribution(self.features).transition,
                                      other.distribution(self.features).transition, rtol=1e-12)

    def testExportTables(self):
        tables = self.policy.export_tables(self.features)
        self.assertEqual(13, len(tables['initial']))
        self.assertIn('END', tables['initial'])
        self.assertEqual(12, len(tables['transition']))
        for row in tables['transition'].values():
            self.assertAlmostEqual(1.0, sum(row.values()))

    def testCopyIsIndependent(self):
        other = self.policy.copy()
        other.actor.biases[-1][0] += 5.0
        self.assertNotAlmostEqual(self.policy.distribution(self.features).initial[0],
                                  other.distribution(self.features).initial[0])


def main():
    unittest.main()


if __name__ == '__main__':
    main()
