# Small numpy networks for the actor and the critic
#
# A fixed-architecture MLP with hand-written reverse mode, Adam, a Welford
# running normalizer and JSON checkpoints.  Everything is float64.

import json
import logging

import numpy

from .Errors import RLError, ShapeError

__all__ = [
    'HIDDEN_SIZES',
    'CHECKPOINT_VERSION',
    'MLP',
    'Adam',
    'RunningNormalizer',
    'lr_schedule',
    'orthogonal',
    'save_json',
    'load_json',
]

logger = logging.getLogger(__name__)

HIDDEN_SIZES = (64, 64)
CHECKPOINT_VERSION = 1


def orthogonal(rng, n_in, n_out, gain=1.0):
    """(n_in, n_out) matrix with orthonormal rows or columns, scaled by gain."""
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = numpy.linalg.qr(a)
    q *= numpy.sign(numpy.diag(r))
    if n_in < n_out:
        q = q.T
    return gain * q[:n_in, :n_out]


class MLP(object):
    """Tanh hidden layers and a linear head; weights are (in, out) matrices.

    forward() accepts a single vector or a batch (rows) and caches what
    backward() needs.
    """

    def __init__(self, sizes, rng=None, hidden_gain=1.0, output_gain=1.0, output_tanh=False):
        self.sizes = tuple(int(s) for s in sizes)
        self.output_tanh = output_tanh
        if len(self.sizes) < 2:
            raise ShapeError("an MLP needs at least input and output sizes")
        rng = rng if rng is not None else numpy.random.default_rng(0)
        self.weights = []
        self.biases = []
        last = len(self.sizes) - 2
        for k, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            gain = output_gain if k == last else hidden_gain
            self.weights.append(orthogonal(rng, n_in, n_out, gain))
            self.biases.append(numpy.zeros(n_out))
        self._cache = None

    @property
    def num_inputs(self):
        return self.sizes[0]

    @property
    def num_outputs(self):
        return self.sizes[-1]

    def params(self):
        """Parameters in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def forward(self, x):
        x = numpy.asarray(x, dtype=float)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.ndim != 2 or h.shape[1] != self.num_inputs:
            raise ShapeError("expected input of width {0}, got shape {1}".format(self.num_inputs, x.shape))
        inputs = []
        last = len(self.weights) - 1
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = h @ W + b
            h = z if k == last and not self.output_tanh else numpy.tanh(z)
        self._cache = (inputs, single, h)
        return h[0] if single else h

    def backward(self, grad_out):
        """Gradients of sum(grad_out * output) for the last forward, in params() order."""
        if self._cache is None:
            raise RLError("backward() called without a cached forward pass")
        inputs, single, out = self._cache
        g = numpy.asarray(grad_out, dtype=float)
        g = g[None, :] if single else g
        if g.shape != (inputs[0].shape[0], self.num_outputs):
            raise ShapeError("upstream gradient has shape {0}".format(numpy.shape(grad_out)))
        if self.output_tanh:
            g = g * (1.0 - out * out)
        grads = [None] * (2 * len(self.weights))
        for k in reversed(range(len(self.weights))):
            h = inputs[k]
            grads[2 * k] = h.T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            if k:
                # h = tanh(z) for every hidden layer input
                g = (g @ self.weights[k].T) * (1.0 - h * h)
        return grads

    def copy(self):
        other = MLP.__new__(MLP)
        other.sizes = self.sizes
        other.output_tanh = self.output_tanh
        other.weights = [W.copy() for W in self.weights]
        other.biases = [b.copy() for b in self.biases]
        other._cache = None
        return other

    def to_dict(self):
        return {'sizes': list(self.sizes), 'output_tanh': self.output_tanh,
                'weights': [W.tolist() for W in self.weights],
                'biases': [b.tolist() for b in self.biases]}

    @classmethod
    def from_dict(cls, d):
        net = cls.__new__(cls)
        net.sizes = tuple(d['sizes'])
        net.output_tanh = d.get('output_tanh', False)
        net.weights = [numpy.array(W, dtype=float).reshape(a, b)
                       for W, a, b in zip(d['weights'], net.sizes[:-1], net.sizes[1:])]
        net.biases = [numpy.array(b, dtype=float) for b in d['biases']]
        net._cache = None
        return net


class Adam(object):
    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [numpy.zeros_like(p) for p in params]
        self.v = [numpy.zeros_like(p) for p in params]

    def step(self, params, grads):
        """Descent step on params (updated in place) for the given gradients."""
        if len(params) != len(self.m):
            raise ShapeError("Adam built for {0} tensors, got {1}".format(len(self.m), len(params)))
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if p.shape != g.shape:
                raise ShapeError("gradient shape {0} does not match {1}".format(g.shape, p.shape))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (numpy.sqrt(v / c2) + self.eps)

    def to_dict(self):
        return {'lr': self.lr, 't': self.t, 'beta1': self.beta1, 'beta2': self.beta2, 'eps': self.eps,
                'm': [m.tolist() for m in self.m], 'v': [v.tolist() for v in self.v]}


def lr_schedule(base_lr, iteration, half_every=1000):
    """Learning rate halved every `half_every` iterations."""
    return base_lr * 0.5 ** (iteration // half_every)


class RunningNormalizer(object):
    """Online mean/variance (Welford, merged batch-wise) per dimension."""

    def __init__(self, shape=(), eps=1e-8, clip=10.0):
        self.shape = tuple(shape) if not isinstance(shape, int) else (shape,)
        self.eps = eps
        self.clip = clip
        self.count = 0
        self.mean = numpy.zeros(self.shape)
        self.m2 = numpy.zeros(self.shape)

    @property
    def variance(self):
        if self.count == 0:
            return numpy.ones(self.shape)
        return self.m2 / self.count

    @property
    def std(self):
        return numpy.sqrt(self.variance + self.eps)

    def update(self, x):
        x = numpy.asarray(x, dtype=float)
        batch = x.reshape((-1,) + self.shape)
        n = batch.shape[0]
        if n == 0:
            return
        b_mean = batch.mean(axis=0)
        b_m2 = ((batch - b_mean) ** 2).sum(axis=0)
        total = self.count + n
        delta = b_mean - self.mean
        self.mean = self.mean + delta * n / total
        self.m2 = self.m2 + b_m2 + delta ** 2 * self.count * n / total
        self.count = total

    def normalize(self, x):
        z = (numpy.asarray(x, dtype=float) - self.mean) / self.std
        return numpy.clip(z, -self.clip, self.clip) if self.clip else z

    def scale(self, x):
        """Divide by the running std without centering."""
        return numpy.asarray(x, dtype=float) / self.std

    def copy(self):
        return RunningNormalizer.from_dict(self.to_dict())

    def to_dict(self):
        return {'shape': list(self.shape), 'eps': self.eps, 'clip': self.clip, 'count': self.count,
                'mean': numpy.asarray(self.mean).tolist(), 'm2': numpy.asarray(self.m2).tolist()}

    @classmethod
    def from_dict(cls, d):
        norm = cls(tuple(d['shape']), d['eps'], d['clip'])
        norm.count = d['count']
        norm.mean = numpy.array(d['mean'], dtype=float).reshape(norm.shape)
        norm.m2 = numpy.array(d['m2'], dtype=float).reshape(norm.shape)
        return norm


def save_json(path, payload):
    payload = dict(payload, version=CHECKPOINT_VERSION)
    with open(path, 'w') as writer:
        json.dump(payload, writer)
    logger.debug("checkpoint written to %s", path)


def load_json(path):
    with open(path, 'r') as reader:
        payload = json.load(reader)
    if payload.get('version') != CHECKPOINT_VERSION:
        raise RLError("unsupported checkpoint version {0!r} in {1}".format(payload.get('version'), path))
    return payload
