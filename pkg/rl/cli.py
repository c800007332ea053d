# Command line front end: rlpresolve <command> ...

import argparse
import ast
import glob
import json
import logging
import os
import sys

import numpy

from lp import FAMILIES, NUM_PRESOLVER_SLOTS, LPError, generate_many, read_mps, write_instances, write_mps

from .ChainPolicy import ChainPolicy
from .Errors import RLError
from .Harness import (benchmark_mean_state, evaluate, extract_rules, parse_method, profile_presolvers,
                      rank_presolvers, reduce, run_routine)
from .PresolveEnv import FEATURE_NAMES, CostModel, TwoArmedEnv, base_features, extract_features
from .Trainer import TrainerConfig, apply_overrides, load_config, presolve_env_factory, train

__all__ = ['main', 'build_parser']

logger = logging.getLogger(__name__)

RANKED_METHODS = ('enhance-v1', 'topk', 'lastk')


def _params(text):
    """Generator parameters as a dict literal or comma separated key=value pairs."""
    if not text:
        return {}
    text = text.strip()
    if text.startswith('{'):
        return ast.literal_eval(text)
    out = {}
    for item in text.split(','):
        key, _, value = item.partition('=')
        try:
            out[key.strip()] = ast.literal_eval(value.strip())
        except (ValueError, SyntaxError):
            out[key.strip()] = value.strip()
    return out


def _load_instances(path):
    """(name, lp) pairs for an MPS file or every *.mps file of a directory."""
    if os.path.isdir(path):
        files = sorted(glob.glob(os.path.join(path, '*.mps')))
        if not files:
            raise LPError("no .mps files in {0}".format(path))
    else:
        files = [path]
    return [(os.path.splitext(os.path.basename(f))[0], read_mps(f)) for f in files]


def _needs_ranking(methods):
    return any(m.lower().split(':')[0] in RANKED_METHODS for m in methods)


def _print_json(payload):
    json.dump(payload, sys.stdout, indent=2, default=float)
    sys.stdout.write('\n')


def cmd_gen(args):
    manifest = write_instances(args.family, _params(args.params), args.seed, args.count, args.out_dir)
    print("wrote {0} {1} instances to {2}".format(len(manifest['instances']), args.family, args.out_dir))
    return 0


def _routine(args, instances=None):
    ranking = None
    if _needs_ranking([args.routine]):
        pool = [lp for _, lp in instances] if instances else []
        ranking = rank_presolvers(profile_presolvers(pool, args.cost_model))
    policy = ChainPolicy.load(args.checkpoint) if getattr(args, 'checkpoint', None) else None
    return parse_method(args.routine, ranking=ranking, policy=policy, seed=args.seed)


def cmd_presolve(args):
    instances = _load_instances(args.file)
    name, lp = instances[0]
    routine = _routine(args, instances)
    reduced, stats = reduce(routine, lp, args.cost_model)
    if args.out:
        write_mps(reduced, args.out)
    summary = {'instance': name, 'routine': routine.name, 'rounds': stats.rounds,
               'nnz_before': stats.nnz_before, 'nnz_after': stats.nnz_after,
               'rows': reduced.num_rows, 'cols': reduced.num_cols,
               'presolve_cost': stats.presolve_cost,
               'steps': [{'presolver': s.name, 'nnz_before': s.nnz_before, 'nnz_after': s.nnz_after,
                          'rows_removed': s.rows_removed, 'cols_removed': s.cols_removed}
                         for s in stats.steps]}
    if args.json:
        _print_json(summary)
    else:
        print("{0}: {1} rounds, nnz {2} -> {3}, {4} rows x {5} cols".format(
            name, stats.rounds, stats.nnz_before, stats.nnz_after, reduced.num_rows, reduced.num_cols))
    return 0


def cmd_solve(args):
    instances = _load_instances(args.file)
    name, lp = instances[0]
    routine = _routine(args, instances)
    result, _ = run_routine(routine, lp, args.cost_model, seed=args.seed)
    if args.json:
        _print_json(dict(result.to_dict(), instance=name, routine=routine.name))
    else:
        print("status: {0}".format(result.status))
        print("objective: {0}".format('-' if result.objective is None else '{0:.10g}'.format(result.objective)))
        print("nnz reduction: {0:.2f}%".format(result.nnz_reduction_pct))
        print("cost: {0:.4f} (presolve {1:.4f}, lp {2:.4f})".format(
            result.total_cost, result.presolve_cost, result.solve_cost))
    return 0


def _trainer_config(args):
    cfg = load_config(args.config) if args.config else TrainerConfig()
    cfg = apply_overrides(cfg, {'seed': args.seed, 'cost_model': args.cost_model.mode})
    if args.agent:
        cfg = apply_overrides(cfg, {'agent': args.agent})
    return apply_overrides(cfg, args.set)


def cmd_train(args):
    cfg = _trainer_config(args)
    if args.toy:
        env_factory, train_set, valid_set = TwoArmedEnv, [None], [None]
    else:
        if args.instances:
            train_set = [lp for _, lp in _load_instances(args.instances)]
        else:
            train_set = generate_many(args.family, _params(args.params), cfg.seed, args.count)
        valid_set = [lp for _, lp in _load_instances(args.valid)] if args.valid else None
        env_factory = presolve_env_factory(args.cost_model)
    result = train(cfg, env_factory, train_set, valid_set, metrics_path=args.metrics, checkpoint_path=args.out)
    print("best validation cost {0} at iteration {1}; checkpoint {2}".format(
        result.best_validation, result.best_iteration, args.out))
    return 0


def cmd_eval(args):
    instances = _load_instances(args.instances)
    names = [m for m in args.methods.split(',') if m.strip()]
    ranking = None
    if _needs_ranking(names):
        ranking = rank_presolvers(profile_presolvers([lp for _, lp in instances], args.cost_model))
    policy = ChainPolicy.load(args.checkpoint) if args.checkpoint else None
    methods = [parse_method(m, ranking=ranking, policy=policy, seed=args.seed) for m in names]
    seeds = [int(s) for s in args.seeds.split(',')] if args.seeds else [args.seed]
    report = evaluate(methods, instances, args.cost_model, seeds, workers=args.workers)
    if args.out:
        report.write_csv(args.out)
    else:
        report.write_csv(sys.stdout)
    print(report.table(), file=sys.stderr if not args.out else sys.stdout)
    return 0


def cmd_extract(args):
    instances = [lp for _, lp in _load_instances(args.instances)]
    valid = [lp for _, lp in _load_instances(args.valid)] if args.valid else None
    policy = ChainPolicy.load(args.checkpoint)
    routine = extract_rules(policy, instances, args.k, valid, args.cost_model, args.seed)
    if args.out:
        routine.save(args.out)
    if args.tables:
        with open(args.tables, 'w') as writer:
            json.dump(policy.export_tables(benchmark_mean_state(instances)), writer, indent=2)
    _print_json(routine.to_json())
    return 0


def cmd_features(args):
    _, lp = _load_instances(args.file)[0]
    values = extract_features(lp, base_features(lp), numpy.zeros(NUM_PRESOLVER_SLOTS))
    if args.json:
        _print_json(dict(zip(FEATURE_NAMES, values.tolist())))
    else:
        for k, (name, value) in enumerate(zip(FEATURE_NAMES, values)):
            print("{0:>2} {1:<32} {2:.6g}".format(k, name, value))
    return 0


def _cost_model(text):
    try:
        return CostModel.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def build_parser():
    parser = argparse.ArgumentParser(prog='rlpresolve', description='LP presolve engine with learned routines')
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--cost-model', type=_cost_model, default=CostModel(), help='WorkUnits or WallClock')
    parser.add_argument('--config', help='training config file (Python dict literal)')
    parser.add_argument('--log-level', default='WARNING', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    sub = parser.add_subparsers(dest='command')
    sub.required = True

    p = sub.add_parser('gen', help='generate a corpus of MPS instances')
    p.add_argument('--family', required=True, choices=FAMILIES)
    p.add_argument('--params', default='', help="dict literal or key=value,... overrides")
    p.add_argument('--count', type=int, default=1)
    p.add_argument('--out-dir', required=True)
    p.set_defaults(func=cmd_gen)

    for name, func, help_text in (('presolve', cmd_presolve, 'reduce one MPS file'),
                                  ('solve', cmd_solve, 'presolve, solve and postsolve one MPS file')):
        p = sub.add_parser(name, help=help_text)
        p.add_argument('file')
        p.add_argument('--routine', default='default')
        p.add_argument('--checkpoint', help='policy checkpoint for --routine learned')
        p.add_argument('--json', action='store_true')
        if name == 'presolve':
            p.add_argument('--out', help='write the reduced problem as MPS')
        p.set_defaults(func=func)

    p = sub.add_parser('train', help='train a presolve policy with PPO')
    p.add_argument('--instances', help='directory of training MPS files')
    p.add_argument('--family', default='RedundancyHeavy', choices=FAMILIES)
    p.add_argument('--params', default='')
    p.add_argument('--count', type=int, default=20)
    p.add_argument('--valid', help='directory of validation MPS files')
    p.add_argument('--toy', action='store_true', help='train on the two-armed toy environment')
    p.add_argument('--agent', choices=['adaptive', 'vanilla', 'bandit'])
    p.add_argument('--set', action='append', default=[], metavar='KEY=VALUE')
    p.add_argument('--metrics', help='metrics CSV path')
    p.add_argument('--out', default='policy.json', help='checkpoint path')
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('eval', help='compare routines on a set of instances')
    p.add_argument('--methods', default='default')
    p.add_argument('--instances', required=True)
    p.add_argument('--checkpoint')
    p.add_argument('--seeds', default='')
    p.add_argument('--workers', type=int, default=1)
    p.add_argument('--out', help='EvalReport CSV path (stdout when absent)')
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('extract', help='extract a model-free routine from a policy')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--instances', required=True)
    p.add_argument('--valid')
    p.add_argument('--k', type=int, default=20)
    p.add_argument('--out', help='routine JSON path')
    p.add_argument('--tables', help='write the chain tables at the benchmark mean state')
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser('features', help='print the state features of one MPS file')
    p.add_argument('file')
    p.add_argument('--json', action='store_true')
    p.set_defaults(func=cmd_features)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format='%(asctime)s %(name)s %(levelname)s %(message)s')
    try:
        return args.func(args)
    except (LPError, RLError, OSError, ValueError) as exc:
        logger.debug("command failed", exc_info=True)
        print("error: {0}".format(exc), file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
