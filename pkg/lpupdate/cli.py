''' Command line entry point. '''
from __future__ import annotations
import argparse
import logging
import sys
from typing import Optional, Sequence

from . import __version__
from .analysis import K_MAX
from .api import ExperimentSpec, analyze, default_tau, experiment_metadata, oracle_table, run_experiment, trace
from .instances import builtin, catalog_ids, generate_random, random_references, resolve_reference, save
from .model import RmabError
from .policies import PolicyKind
from .reporting import CsvReport, SWEEP_COLUMNS, trace_columns, trace_rows, write_json
from .simulator import HORIZON, WARMUP, InitialState

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED_CELLS = 1
EXIT_INVALID = 2


def _add_run_options(parser: argparse.ArgumentParser, many: bool) -> None:
    plural = '+' if many else None
    parser.add_argument('--instance', nargs='+', required=not many, default=[],
                        help=f'bundled id ({", ".join(catalog_ids())}), random:<S>:<seed> or JSON path')
    if many:
        parser.add_argument('--states', nargs='+', type=int, default=[], dest='state_counts',
                            help='add random:<S>:<seed> instances for each S')
        parser.add_argument('--seeds', nargs='+', type=int, default=[0],
                            help='generator seeds of the --states instances')
    parser.add_argument('--policy', nargs='+', default=[PolicyKind.lp_update.value],
                        choices=[kind.value for kind in PolicyKind])
    parser.add_argument('--N', nargs='+', type=int, default=[100], dest='n_arms')
    parser.add_argument('--tau', nargs=plural, type=int, default=None)
    parser.add_argument('--alpha', nargs=plural, type=float, default=None)
    parser.add_argument('--T', type=int, default=HORIZON, dest='horizon')
    parser.add_argument('--warmup', type=int, default=WARMUP)
    parser.add_argument('--reps', type=int, default=20)
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--initial', default=InitialState.zero.value, choices=[item.value for item in InitialState])
    parser.add_argument('--workers', type=int, default=1)
    parser.add_argument('--k-max', type=int, default=K_MAX, dest='k_max')
    parser.add_argument('--out', default=None, help='output file, stdout when omitted')


def build_parser() -> argparse.ArgumentParser:
    ''' Parser with all subcommands. '''
    parser = argparse.ArgumentParser(prog='lpupdate', description='Receding horizon LP policies for restless bandits')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('-v', '--verbose', action='count', default=0)
    commands = parser.add_subparsers(dest='command', required=True)

    command = commands.add_parser('analyze', help='diagnostic JSON report of one instance')
    command.add_argument('--instance', required=True)
    command.add_argument('--k-max', type=int, default=K_MAX, dest='k_max')
    command.add_argument('--N', nargs='*', type=int, default=[10, 100, 1000], dest='n_arms')
    command.add_argument('--alpha', type=float, default=None)
    command.add_argument('--epsilon', type=float, default=None)
    command.add_argument('--out', default=None)

    _add_run_options(commands.add_parser('simulate', help='gain estimates per policy and N'), many=False)
    _add_run_options(commands.add_parser('sweep', help='gain estimates over a parameter grid'), many=True)

    command = commands.add_parser('trace', help='per-step log of one trajectory')
    command.add_argument('--instance', required=True)
    command.add_argument('--policy', default=PolicyKind.lp_update.value, choices=[kind.value for kind in PolicyKind])
    command.add_argument('--N', type=int, default=100, dest='n_arms')
    command.add_argument('--T', type=int, default=HORIZON, dest='horizon')
    command.add_argument('--warmup', type=int, default=0)
    command.add_argument('--seed', type=int, default=0)
    command.add_argument('--tau', type=int, default=None)
    command.add_argument('--alpha', type=float, default=None)
    command.add_argument('--initial', default=InitialState.zero.value, choices=[item.value for item in InitialState])
    command.add_argument('--out', default=None)

    command = commands.add_parser('oracle', help='exact optimum for small N')
    command.add_argument('--instance', required=True)
    command.add_argument('--N', nargs='+', type=int, default=[1, 2, 3, 4], dest='n_arms')
    command.add_argument('--alpha', type=float, default=None)
    command.add_argument('--out', default=None)

    command = commands.add_parser('instances', help='bundled instances')
    command.add_argument('action', choices=['list'])

    command = commands.add_parser('generate', help='random instance as JSON')
    command.add_argument('--states', type=int, required=True)
    command.add_argument('--seed', type=int, default=0)
    command.add_argument('--alpha', type=float, default=0.5)
    command.add_argument('--out', required=True)
    return parser


def _as_tuple(value) -> tuple:
    if value is None:
        return (None,)
    if isinstance(value, list):
        return tuple(value)
    return (value,)


def _experiment(args: argparse.Namespace) -> ExperimentSpec:
    instances = list(args.instance) + random_references(getattr(args, 'state_counts', []), getattr(args, 'seeds', []))
    return ExperimentSpec(
        instances=tuple(instances),
        policies=tuple(PolicyKind.from_text(text) for text in args.policy),
        n_arms=tuple(args.n_arms),
        taus=_as_tuple(args.tau),
        alphas=_as_tuple(args.alpha),
        horizon=args.horizon,
        warmup=args.warmup,
        replications=args.reps,
        seed=args.seed,
        output=args.out,
        k_max=args.k_max,
        workers=args.workers,
        initial=InitialState.from_text(args.initial)
    )


def _run_experiment(args: argparse.Namespace) -> int:
    try:
        spec = _experiment(args)
    except (RmabError, ValueError, KeyError, OSError) as error:
        print(f'lpupdate: invalid experiment: {error}', file=sys.stderr)
        return EXIT_INVALID
    with CsvReport(SWEEP_COLUMNS, experiment_metadata(spec), spec.output) as report:
        (_, failures) = run_experiment(spec, report)
    return EXIT_FAILED_CELLS if failures > 0 else EXIT_OK


def _run_analyze(args: argparse.Namespace) -> int:
    entry = resolve_reference(args.instance)
    write_json(analyze(entry, args.k_max, tuple(args.n_arms), args.alpha, args.epsilon), args.out)
    return EXIT_OK


def _run_trace(args: argparse.Namespace) -> int:
    entry = resolve_reference(args.instance)
    policy = PolicyKind.from_text(args.policy)
    (log, summary) = trace(entry, policy, args.n_arms, args.horizon, args.seed, args.tau, args.alpha,
                           InitialState.from_text(args.initial), args.warmup)
    metadata = {
        'lpupdate': __version__,
        'instance': entry.id,
        'policy': policy.value,
        'N': args.n_arms,
        'tau': default_tau(entry, args.tau),
        'seed': args.seed,
        'T': args.horizon,
        'mean_rotated_cost': summary.mean_rotated_cost,
        'mean_distance': summary.mean_distance,
        'mean_reward': summary.mean_reward
    }
    for (level, value) in summary.rotated_cost_quantiles.items():
        metadata[f'rotated_cost_q{level:g}'] = value
    with CsvReport(trace_columns(entry.instance.n_states), metadata, args.out) as report:
        report.write_rows(trace_rows(log))
    return EXIT_OK


def _run_oracle(args: argparse.Namespace) -> int:
    entry = resolve_reference(args.instance)
    rows = oracle_table(entry, tuple(args.n_arms), args.alpha)
    with CsvReport(['instance', 'N', 'oracle', 'g_star', 'gap'], {'lpupdate': __version__}, args.out) as report:
        report.write_rows(rows)
    return EXIT_OK


def _run_instances(args: argparse.Namespace) -> int:
    del args
    for identifier in catalog_ids():
        entry = builtin(identifier)
        golden = entry.expected
        value = f'{golden.lp_value:g}' if golden is not None else '-'
        print(f'{identifier}\tS={entry.instance.n_states}\talpha={entry.alpha:g}\ttau={entry.tau}\tg*={value}')
    return EXIT_OK


def _run_generate(args: argparse.Namespace) -> int:
    save(args.out, generate_random(args.states, args.seed, args.alpha))
    return EXIT_OK


_COMMANDS = {
    'analyze': _run_analyze,
    'simulate': _run_experiment,
    'sweep': _run_experiment,
    'trace': _run_trace,
    'oracle': _run_oracle,
    'instances': _run_instances,
    'generate': _run_generate
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    ''' Parse arguments, configure logging and dispatch. '''
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format='%(levelname)s %(name)s: %(message)s')
    logger.debug('lpupdate %s: %s', __version__, args.command)
    try:
        return _COMMANDS[args.command](args)
    except (RmabError, ValueError, KeyError, OSError) as error:
        print(f'lpupdate: {error}', file=sys.stderr)
        return EXIT_INVALID


if __name__ == '__main__':
    sys.exit(main())
