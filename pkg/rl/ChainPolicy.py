# Presolver sequences as a state-conditioned Markov chain
#
# One actor forward pass yields an initial distribution over the A supported
# presolvers plus the end token E, and an A x (A+1) transition matrix.  A whole
# sequence is then sampled from these fixed tables, so a step costs one
# inference regardless of the sequence length.

import logging
from dataclasses import dataclass

import numpy

from lp import PRESOLVER_NAMES, SUPPORTED_PRESOLVERS, ActionSequence, UnsupportedPresolverError

from .Errors import ShapeError
from .PresolveEnv import MAX_SEQUENCE, MAX_STEPS, NUM_FEATURES
from .TinyNN import HIDDEN_SIZES, MLP, RunningNormalizer, load_json, save_json

__all__ = [
    'NUM_ACTIONS',
    'NUM_LOGITS',
    'AGENT_KINDS',
    'ChainDistribution',
    'num_logits',
    'distribution',
    'sample',
    'log_prob',
    'log_prob_grad',
    'entropy_estimate',
    'entropy_grad',
    'decision_entropy',
    'decision_entropy_grad',
    'end_logit_indices',
    'INITIAL_END_PROBABILITY',
    'ChainPolicy',
]

logger = logging.getLogger(__name__)

NUM_ACTIONS = len(SUPPORTED_PRESOLVERS)

# agent kind -> (sequence cap, steps per episode)
AGENT_KINDS = {
    'adaptive': (MAX_SEQUENCE, MAX_STEPS),
    'vanilla': (1, MAX_STEPS),
    'bandit': (MAX_SEQUENCE, 1),
}


def num_logits(num_actions):
    return (num_actions + 1) + num_actions * (num_actions + 1)


NUM_LOGITS = num_logits(NUM_ACTIONS)

# probability of the end token in every row of a freshly built policy
INITIAL_END_PROBABILITY = 0.5


def end_logit_indices(num_actions):
    """Positions of the end-token logit in the initial row and in every transition row."""
    width = num_actions + 1
    return [num_actions] + [width * (row + 1) + num_actions for row in range(num_actions)]


def _softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = numpy.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _plogp(p):
    return numpy.where(p > 0, p * numpy.log(numpy.where(p > 0, p, 1.0)), 0.0)


def _log(p):
    return numpy.log(p) if p > 0 else -numpy.inf


@dataclass(frozen=True)
class ChainDistribution:
    """initial: (A+1,), transition: (A, A+1); column A is the end token."""

    initial: numpy.ndarray
    transition: numpy.ndarray

    @classmethod
    def from_logits(cls, logits):
        logits = numpy.asarray(logits, dtype=float)
        # (A+1) + A(A+1) = (A+1)^2 - 1
        a = int(round(numpy.sqrt(logits.size + 1))) - 1
        if num_logits(a) != logits.size:
            raise ShapeError("{0} logits do not describe a chain".format(logits.size))
        initial = _softmax(logits[:a + 1])
        transition = _softmax(logits[a + 1:].reshape(a, a + 1))
        return cls(initial, transition)

    @property
    def num_actions(self):
        return self.transition.shape[0]

    @property
    def end(self):
        return self.num_actions


def distribution(actor, state):
    """Chain tables for an already normalized state (one forward pass)."""
    return ChainDistribution.from_logits(actor.forward(state))


def _draw(p, rng):
    k = int(numpy.searchsorted(numpy.cumsum(p), rng.random() * p.sum(), side='right'))
    return min(k, p.size - 1)


def sample(dist, rng, cap=MAX_SEQUENCE):
    """Draw a sequence; returns (ActionSequence, log probability)."""
    end = dist.end
    tokens = []
    token = _draw(dist.initial, rng)
    logprob = _log(dist.initial[token])
    truncated = False
    while token != end:
        tokens.append(token)
        if len(tokens) >= cap:
            truncated = True
            break
        nxt = _draw(dist.transition[token], rng)
        logprob += _log(dist.transition[token, nxt])
        token = nxt
    seq = ActionSequence(tuple(SUPPORTED_PRESOLVERS[t] for t in tokens), truncated=truncated)
    return seq, float(logprob)


def _tokens(seq, num_actions):
    index = {pid: k for k, pid in enumerate(SUPPORTED_PRESOLVERS[:num_actions])}
    try:
        return [index[pid] for pid in seq]
    except KeyError as exc:
        raise UnsupportedPresolverError(exc.args[0])


def _factors(dist, seq, cap):
    """(row, column) of every chain factor of seq; row -1 is the initial table."""
    tokens = _tokens(seq, dist.num_actions)
    if not tokens:
        return [(-1, dist.end)]
    out = [(-1, tokens[0])]
    out += list(zip(tokens[:-1], tokens[1:]))
    if not (seq.truncated or len(tokens) >= cap):
        out.append((tokens[-1], dist.end))
    return out


def log_prob(dist, seq, cap=MAX_SEQUENCE):
    total = 0.0
    for row, col in _factors(dist, seq, cap):
        total += _log(dist.initial[col] if row < 0 else dist.transition[row, col])
    return float(total)


def log_prob_grad(dist, seq, cap=MAX_SEQUENCE):
    """d log_prob / d logits, laid out like the actor output."""
    a = dist.num_actions
    g_init = numpy.zeros(a + 1)
    g_trans = numpy.zeros((a, a + 1))
    for row, col in _factors(dist, seq, cap):
        if row < 0:
            g_init -= dist.initial
            g_init[col] += 1.0
        else:
            g_trans[row] -= dist.transition[row]
            g_trans[row, col] += 1.0
    return numpy.concatenate([g_init, g_trans.reshape(-1)])


def _visits(dist, cap):
    """v_t = P(the t-th token exists and is presolver i), t = 1..cap-1."""
    P = dist.transition[:, :dist.end]
    v = dist.initial[:dist.end].copy()
    out = []
    for _ in range(cap - 1):
        out.append(v)
        v = v @ P
    return out, P


def entropy_estimate(dist, cap=MAX_SEQUENCE):
    """Entropy of the sequence distribution: H(initial) plus the expected
    transition-row entropy at every position the chain can still draw from."""
    h = -_plogp(dist.transition).sum(axis=1)
    total = -_plogp(dist.initial).sum()
    visits, _ = _visits(dist, cap)
    for v in visits:
        total += v @ h
    return float(total)


def entropy_grad(dist, cap=MAX_SEQUENCE):
    """d entropy_estimate / d logits."""
    a = dist.num_actions
    p0, T = dist.initial, dist.transition
    h = -_plogp(T).sum(axis=1)
    visits, P = _visits(dist, cap)

    # adjoints g_t = h + P g_{t+1}, g_K = h
    adj = [None] * len(visits)
    g = numpy.zeros(a)
    for t in reversed(range(len(visits))):
        g = h + (P @ g if t < len(visits) - 1 else 0.0)
        adj[t] = g

    with numpy.errstate(divide='ignore'):
        log_p0 = numpy.where(p0 > 0, numpy.log(numpy.where(p0 > 0, p0, 1.0)), 0.0)
        log_T = numpy.where(T > 0, numpy.log(numpy.where(T > 0, T, 1.0)), 0.0)
    G0 = -(log_p0 + 1.0)
    if visits:
        G0[:a] += adj[0]
    weight = numpy.sum(visits, axis=0) if visits else numpy.zeros(a)
    GT = -(log_T + 1.0) * weight[:, None]
    for t in range(len(visits) - 1):
        GT[:, :a] += numpy.outer(visits[t], adj[t + 1])

    dz0 = p0 * (G0 - p0 @ G0)
    dzT = T * (GT - (T * GT).sum(axis=1, keepdims=True))
    return numpy.concatenate([dz0, dzT.reshape(-1)])


def _rows(dist, seq, cap):
    return [row for row, _ in _factors(dist, seq, cap)]


def decision_entropy(dist, seq, cap=MAX_SEQUENCE):
    """Mean entropy of the rows seq was drawn from (initial row included).

    Bounded by log(A+1) whatever the sequence length.
    """
    total = 0.0
    rows = _rows(dist, seq, cap)
    for row in rows:
        p = dist.initial if row < 0 else dist.transition[row]
        total -= _plogp(p).sum()
    return float(total / len(rows))


def decision_entropy_grad(dist, seq, cap=MAX_SEQUENCE):
    """d decision_entropy / d logits with the drawn rows held fixed."""
    a = dist.num_actions
    g_init = numpy.zeros(a + 1)
    g_trans = numpy.zeros((a, a + 1))
    rows = _rows(dist, seq, cap)
    for row in rows:
        p = dist.initial if row < 0 else dist.transition[row]
        h = -_plogp(p).sum()
        with numpy.errstate(divide='ignore'):
            log_p = numpy.where(p > 0, numpy.log(numpy.where(p > 0, p, 1.0)), 0.0)
        dz = -p * (log_p + h)
        if row < 0:
            g_init += dz
        else:
            g_trans[row] += dz
    return numpy.concatenate([g_init, g_trans.reshape(-1)]) / len(rows)


class ChainPolicy(object):
    """Actor network plus the state normalizer snapshot it was trained with."""

    def __init__(self, actor=None, normalizer=None, kind='adaptive', seed=0):
        if kind not in AGENT_KINDS:
            raise ValueError("agent kind must be one of {0}, got {1!r}".format(sorted(AGENT_KINDS), kind))
        if actor is None:
            rng = numpy.random.default_rng(seed)
            actor = MLP((NUM_FEATURES,) + HIDDEN_SIZES + (NUM_LOGITS,), rng, hidden_gain=1.0, output_gain=0.01)
            # uniform over presolvers, end token at INITIAL_END_PROBABILITY in every row
            odds = INITIAL_END_PROBABILITY / (1.0 - INITIAL_END_PROBABILITY)
            actor.biases[-1][end_logit_indices(NUM_ACTIONS)] = numpy.log(NUM_ACTIONS * odds)
        if actor.num_outputs != NUM_LOGITS or actor.num_inputs != NUM_FEATURES:
            raise ShapeError("actor must map {0} features to {1} logits".format(NUM_FEATURES, NUM_LOGITS))
        self.actor = actor
        self.normalizer = normalizer if normalizer is not None else RunningNormalizer(NUM_FEATURES)
        self.kind = kind
        self.forward_calls = 0

    @property
    def cap(self):
        return AGENT_KINDS[self.kind][0]

    @property
    def max_steps(self):
        return AGENT_KINDS[self.kind][1]

    def distribution(self, features):
        self.forward_calls += 1
        return distribution(self.actor, self.normalizer.normalize(features))

    def act(self, features, rng):
        """(sequence, log probability, normalized state) for raw features."""
        state = self.normalizer.normalize(features)
        self.forward_calls += 1
        dist = distribution(self.actor, state)
        seq, logprob = sample(dist, rng, self.cap)
        return seq, logprob, state

    def export_tables(self, features):
        """Initial and transition probabilities by presolver name for one state."""
        dist = self.distribution(features)
        names = [PRESOLVER_NAMES[p] for p in SUPPORTED_PRESOLVERS] + ['END']
        return {
            'initial': dict(zip(names, dist.initial.tolist())),
            'transition': {names[i]: dict(zip(names, dist.transition[i].tolist()))
                           for i in range(dist.num_actions)},
        }

    def to_dict(self):
        return {'kind': self.kind, 'actor': self.actor.to_dict(), 'normalizer': self.normalizer.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(MLP.from_dict(d['actor']), RunningNormalizer.from_dict(d['normalizer']), d['kind'])

    def copy(self):
        return ChainPolicy(self.actor.copy(), self.normalizer.copy(), self.kind)

    def save(self, path, **extra):
        save_json(path, dict(self.to_dict(), **extra))

    @classmethod
    def load(cls, path):
        return cls.from_dict(load_json(path))
