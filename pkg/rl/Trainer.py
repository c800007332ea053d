# PPO for the presolve chain policy
#
# Each iteration collects whole episodes with a frozen policy snapshot until
# at least `samples_per_iter` step records exist, then runs `epochs` passes of
# minibatch Adam on the clipped surrogate (actor) and the squared advantage
# (critic).  Advantages are undiscounted returns-to-go minus the critic value,
# centered per minibatch.  The entropy bonus is the mean entropy of the chain
# rows each sampled sequence was drawn from.

import ast
import csv
import functools
import logging
import multiprocessing
import time
from dataclasses import asdict, dataclass, field, fields

import numpy

from .ChainPolicy import (ChainDistribution, ChainPolicy, decision_entropy, decision_entropy_grad,
                          log_prob, log_prob_grad)
from .Errors import ConfigError, TrainingError
from .PresolveEnv import NUM_FEATURES, CostModel, PresolveEnv, StepRecord
from .TinyNN import HIDDEN_SIZES, MLP, Adam, RunningNormalizer, lr_schedule

__all__ = [
    'TrainerConfig',
    'TrajectoryBuffer',
    'TrainResult',
    'load_config',
    'apply_overrides',
    'suffix_returns',
    'ppo_ratio',
    'run_episode',
    'collect',
    'update',
    'evaluate_policy',
    'make_critic',
    'presolve_env_factory',
    'train',
    'write_metrics',
    'METRIC_COLUMNS',
]

logger = logging.getLogger(__name__)


@dataclass
class TrainerConfig:
    lr_actor: float = 1e-4
    lr_critic: float = 1e-4
    gamma: float = 1.0
    epochs: int = 12
    samples_per_iter: int = 16
    minibatch: int = 16
    entropy_coef: float = 1e-2
    clip: float = 0.2
    workers: int = 4
    total_iters: int = 1000
    lr_half_every: int = 1000
    eval_every: int = 10
    seed: int = 0
    agent: str = 'adaptive'
    cost_model: str = 'WorkUnits'
    normalize_returns: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ('epochs', 'samples_per_iter', 'minibatch', 'workers', 'lr_half_every', 'eval_every'):
            if int(getattr(self, name)) < 1:
                raise ConfigError("{0} must be a positive count".format(name))
        if self.total_iters < 0:
            raise ConfigError("total_iters must be >= 0")
        if not 0.0 < self.clip < 1.0:
            raise ConfigError("clip must lie in (0, 1), got {0}".format(self.clip))
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must lie in [0, 1]")
        if self.lr_actor <= 0 or self.lr_critic <= 0:
            raise ConfigError("learning rates must be > 0")
        if self.entropy_coef < 0:
            raise ConfigError("entropy_coef must be >= 0")
        try:
            CostModel.parse(self.cost_model)
        except ValueError as exc:
            raise ConfigError(str(exc))


def _coerce(cfg_field, value):
    kind = type(getattr(TrainerConfig(), cfg_field))
    if kind is bool and isinstance(value, str):
        return value.lower() in ('1', 'true', 'yes')
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError("{0} expects {1}, got {2!r}".format(cfg_field, kind.__name__, value))


def apply_overrides(cfg, overrides):
    """New config with `key=value` strings or a dict applied; unknown keys raise."""
    names = {f.name for f in fields(TrainerConfig)}
    if isinstance(overrides, dict):
        items = overrides.items()
    else:
        items = []
        for text in overrides or ():
            if '=' not in text:
                raise ConfigError("override {0!r} is not key=value".format(text))
            key, raw = text.split('=', 1)
            try:
                value = ast.literal_eval(raw)
            except (ValueError, SyntaxError):
                value = raw
            items.append((key.strip(), value))
    values = asdict(cfg)
    for key, value in items:
        if key not in names:
            raise ConfigError("unknown config key {0!r}".format(key))
        values[key] = _coerce(key, value)
    return TrainerConfig(**values)


def load_config(path, overrides=None):
    """TrainerConfig from a file holding a Python dict literal."""
    with open(path, 'r') as reader:
        try:
            data = ast.literal_eval(reader.read())
        except (ValueError, SyntaxError) as exc:
            raise ConfigError("{0} is not a Python literal: {1}".format(path, exc))
    if not isinstance(data, dict):
        raise ConfigError("{0} must hold a dict".format(path))
    cfg = apply_overrides(TrainerConfig(), data)
    return apply_overrides(cfg, overrides) if overrides else cfg


def suffix_returns(rewards, gamma=1.0):
    out = numpy.zeros(len(rewards))
    acc = 0.0
    for t in reversed(range(len(rewards))):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


@dataclass
class TrajectoryBuffer:
    records: list = field(default_factory=list)
    episodes: list = field(default_factory=list)

    def add_episode(self, records, result, gamma=1.0):
        for rec, ret in zip(records, suffix_returns([r.reward for r in records], gamma)):
            rec.ret = float(ret)
        self.records.extend(records)
        self.episodes.append(result)

    def __len__(self):
        return len(self.records)

    def clear(self):
        self.records = []
        self.episodes = []

    def mean_return(self):
        if not self.episodes:
            return 0.0
        return -float(numpy.mean([e.total_cost for e in self.episodes]))


def ppo_ratio(new_logprob, old_logprob, advantage, eps):
    """Clipped surrogate r^clip * A and its derivative w.r.t. new_logprob.

    Clamps to 1+eps when A > 0 and r >= 1+eps, to 1-eps when A < 0 and
    r <= 1-eps; the derivative is zero in both clamped cases.
    """
    new = numpy.asarray(new_logprob, dtype=float)
    adv = numpy.asarray(advantage, dtype=float)
    r = numpy.exp(new - numpy.asarray(old_logprob, dtype=float))
    upper = (adv > 0) & (r >= 1.0 + eps)
    lower = (adv < 0) & (r <= 1.0 - eps)
    value = numpy.where(upper, (1.0 + eps) * adv, numpy.where(lower, (1.0 - eps) * adv, r * adv))
    grad = numpy.where(upper | lower, 0.0, r * adv)
    if value.ndim == 0:
        return float(value), float(grad)
    return value, grad


def presolve_env_factory(cost_model=None, solver_options=None):
    return functools.partial(PresolveEnv, cost_model, solver_options)


def run_episode(policy, env, instance, rng):
    """Roll one episode; returns (records, EpisodeResult)."""
    obs = env.reset(instance)
    records = []
    while True:
        start = time.perf_counter()
        seq, logprob, state = policy.act(obs, rng)
        nxt, reward, done = env.step(seq, time.perf_counter() - start)
        records.append(StepRecord(state, seq, logprob, reward, done, features=obs))
        if done:
            return records, env.result
        obs = nxt


def _episode_rng(seed, iteration, k):
    return numpy.random.Generator(numpy.random.PCG64(numpy.random.SeedSequence(seed, spawn_key=(iteration, k))))


def _episode_worker(args):
    policy, env_factory, instances, seed, iteration, k = args
    rng = _episode_rng(seed, iteration, k)
    instance = instances[int(rng.integers(len(instances)))]
    env = env_factory(max_steps=policy.max_steps)
    return run_episode(policy, env, instance, rng)


def collect(policy, env_factory, instances, samples, seed=0, iteration=0, workers=1, pool=None, gamma=1.0):
    """Whole episodes from a frozen snapshot until >= samples records exist."""
    buf = TrajectoryBuffer()
    k = 0
    while len(buf) < samples:
        jobs = [(policy, env_factory, instances, seed, iteration, k + w) for w in range(workers)]
        k += workers
        results = pool.map(_episode_worker, jobs) if pool is not None else [_episode_worker(j) for j in jobs]
        for records, result in results:
            buf.add_episode(records, result, gamma)
    return buf


def make_critic(seed=0):
    return MLP((NUM_FEATURES,) + HIDDEN_SIZES + (1,), numpy.random.default_rng(seed + 1))


def _check_finite(name, values, iteration):
    for v in values:
        if not numpy.all(numpy.isfinite(v)):
            raise TrainingError("non-finite {0}".format(name), iteration,
                                {'name': name, 'max_abs': float(numpy.nanmax(numpy.abs(v)))})


def update(buf, policy, critic, actor_opt, critic_opt, cfg, rng, iteration=0, return_scale=1.0):
    """PPO epochs on one buffer; returns a metrics dict."""
    if not len(buf):
        raise TrainingError("empty buffer", iteration)
    actor = policy.actor
    cap = policy.cap
    states = numpy.array([r.state for r in buf.records])
    old = numpy.array([r.behavior_logprob for r in buf.records])
    returns = numpy.array([r.ret for r in buf.records]) / return_scale
    actions = [r.action for r in buf.records]
    advantages = returns - critic.forward(states)[:, 0]
    n = len(buf)

    ratios, clipped, actor_losses, critic_losses, entropies = [], [], [], [], []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = order[start:start + cfg.minibatch]
            adv = advantages[idx]
            if adv.size >= 2:
                adv = adv - adv.mean()
            logits = actor.forward(states[idx])
            grad_logits = numpy.zeros_like(logits)
            objective = 0.0
            for b, i in enumerate(idx):
                dist = ChainDistribution.from_logits(logits[b])
                new = log_prob(dist, actions[i], cap)
                value, dvalue = ppo_ratio(new, old[i], adv[b], cfg.clip)
                entropy = decision_entropy(dist, actions[i], cap)
                objective += value + cfg.entropy_coef * entropy
                g = cfg.entropy_coef * decision_entropy_grad(dist, actions[i], cap)
                if dvalue:
                    g = g + dvalue * log_prob_grad(dist, actions[i], cap)
                grad_logits[b] = -g / idx.size
                r = numpy.exp(new - old[i])
                ratios.append(r)
                clipped.append(bool(abs(r - 1.0) > cfg.clip))
                entropies.append(entropy)
            actor_loss = -objective / idx.size
            grads = actor.backward(grad_logits)
            _check_finite('actor gradient', grads + [actor_loss], iteration)
            actor_opt.step(actor.params(), grads)

            v = critic.forward(states[idx])[:, 0]
            err = returns[idx] - v
            critic_loss = 0.5 * float(numpy.mean(err ** 2))
            cgrads = critic.backward((-err / idx.size)[:, None])
            _check_finite('critic gradient', cgrads + [critic_loss], iteration)
            critic_opt.step(critic.params(), cgrads)
            actor_losses.append(actor_loss)
            critic_losses.append(critic_loss)

    return {
        'mean_ratio': float(numpy.mean(ratios)),
        'clip_fraction': float(numpy.mean(clipped)),
        'actor_loss': float(numpy.mean(actor_losses)),
        'critic_loss': float(numpy.mean(critic_losses)),
        'entropy': float(numpy.mean(entropies)),
        'samples': n,
    }


def evaluate_policy(policy, env_factory, instances, seed=0):
    """Mean total episode cost of the stochastic policy over instances."""
    costs = []
    for k, instance in enumerate(instances):
        rng = _episode_rng(seed, 10 ** 6, k)
        env = env_factory(max_steps=policy.max_steps)
        _, result = run_episode(policy, env, instance, rng)
        costs.append(result.total_cost)
    return float(numpy.mean(costs))


@dataclass
class TrainResult:
    policy: ChainPolicy
    critic: MLP
    log: list
    best_iteration: int = 0
    best_validation: float = None

    def save(self, path):
        self.policy.save(path, critic=self.critic.to_dict(), iteration=self.best_iteration,
                         validation_cost=self.best_validation)


def train(cfg, env_factory, train_instances, valid_instances=None, metrics_path=None,
          checkpoint_path=None, policy=None):
    """Run cfg.total_iters PPO iterations; keeps the best-on-validation policy."""
    cfg.validate()
    policy = policy if policy is not None else ChainPolicy(kind=cfg.agent, seed=cfg.seed)
    critic = make_critic(cfg.seed)
    valid = valid_instances if valid_instances else train_instances
    rng = numpy.random.default_rng(numpy.random.SeedSequence(cfg.seed, spawn_key=(2 ** 31,)))
    actor_opt = Adam(policy.actor.params(), cfg.lr_actor)
    critic_opt = Adam(critic.params(), cfg.lr_critic)
    return_norm = RunningNormalizer(())
    log = []

    best = TrainResult(policy.copy(), critic.copy(), log, 0, None)
    if cfg.total_iters == 0:
        if checkpoint_path:
            best.save(checkpoint_path)
        return best
    best.best_validation = evaluate_policy(policy, env_factory, valid, cfg.seed)
    logger.info("initial validation cost %.4f", best.best_validation)

    pool = multiprocessing.Pool(cfg.workers) if cfg.workers > 1 else None
    try:
        for it in range(1, cfg.total_iters + 1):
            actor_opt.lr = lr_schedule(cfg.lr_actor, it - 1, cfg.lr_half_every)
            critic_opt.lr = lr_schedule(cfg.lr_critic, it - 1, cfg.lr_half_every)
            snapshot = policy.copy()
            buf = collect(snapshot, env_factory, train_instances, cfg.samples_per_iter, cfg.seed, it,
                          cfg.workers, pool, cfg.gamma)
            policy.normalizer.update(numpy.array([r.features for r in buf.records]))
            scale = 1.0
            if cfg.normalize_returns:
                return_norm.update(numpy.array([r.ret for r in buf.records]))
                scale = float(return_norm.std)
            metrics = update(buf, policy, critic, actor_opt, critic_opt, cfg, rng, it, scale)
            row = {'iteration': it, 'mean_return': buf.mean_return(), 'lr_actor': actor_opt.lr}
            row.update(metrics)
            row['validation_cost'] = ''
            if it % cfg.eval_every == 0 or it == cfg.total_iters:
                cost = evaluate_policy(policy, env_factory, valid, cfg.seed)
                row['validation_cost'] = cost
                if cost < best.best_validation:
                    best.policy, best.critic = policy.copy(), critic.copy()
                    best.best_iteration, best.best_validation = it, cost
                    if checkpoint_path:
                        best.save(checkpoint_path)
                logger.info("iteration %d: return %.4f, validation %.4f (best %.4f @ %d)",
                            it, row['mean_return'], cost, best.best_validation, best.best_iteration)
            log.append(row)
            if metrics_path:
                write_metrics(metrics_path, log)
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    if checkpoint_path and best.best_iteration == 0:
        best.save(checkpoint_path)
    return best


METRIC_COLUMNS = ('iteration', 'mean_return', 'clip_fraction', 'mean_ratio', 'actor_loss',
                  'critic_loss', 'entropy', 'samples', 'lr_actor', 'validation_cost')


def write_metrics(path, log):
    with open(path, 'w', newline='') as writer:
        out = csv.DictWriter(writer, fieldnames=METRIC_COLUMNS, extrasaction='ignore')
        out.writeheader()
        for row in log:
            out.writerow(row)
