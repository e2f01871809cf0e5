'''
Experiment procedures behind the command line: analysis reports, simulation cells, traces and oracle values.

::guarantee:: every instance reference is resolved before any simulation starts
'''
from __future__ import annotations
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from . import __version__
from .analysis import (
    HorizonBias, build_p_star_and_spectrum, check_nondegenerate, find_k, first_control_is_unique,
    fixed_point_residual, index_of_pivot, lambda_bound, lambda_bound_check, relaxation_is_unique,
    sample_feasible, theorem1_bound, K_MAX
)
from .instances import InstanceCatalogEntry, resolve_reference
from .lp import LpSolution, lp_priority_index, solve_relaxation
from .model import BudgetMode, RmabError, RmabInstance, normalize
from .oracle import exact_small_oracle
from .policies import PolicyKind
from .reporting import CsvReport, SWEEP_COLUMNS
from .simulator import (
    HORIZON, TAU, WARMUP,
    InitialState, SimConfig, TraceSummary, TrajectoryLog,
    estimate_gain, run_replications, run_trajectory, summarize_trace
)

logger = logging.getLogger(__name__)

# Points used for the bias Cauchy gap reported as epsilon.
EPSILON_SAMPLES = 8


@dataclass(frozen=True)
class ExperimentSpec:
    ''' Cartesian grid of simulation cells: instances x alphas x taus x N x policies. '''
    instances: tuple[str, ...]
    policies: tuple[PolicyKind, ...] = (PolicyKind.lp_update,)
    n_arms: tuple[int, ...] = (100,)
    taus: tuple[Optional[int], ...] = (None,)
    alphas: tuple[Optional[float], ...] = (None,)
    horizon: int = HORIZON
    warmup: int = WARMUP
    replications: int = 20
    seed: int = 0
    output: Optional[str] = None
    k_max: int = K_MAX
    workers: int = 1
    initial: InitialState = InitialState.zero
    entries: dict[str, InstanceCatalogEntry] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if len(self.instances) == 0:
            raise ValueError('instances: at least one reference required')
        if len(self.policies) == 0:
            raise ValueError('policies: at least one policy required')
        if len(self.n_arms) == 0 or any(value < 1 for value in self.n_arms):
            raise ValueError(f'n_arms: positive values required, got {self.n_arms}')
        if any(value is not None and value < 1 for value in self.taus):
            raise ValueError(f'taus: positive values required, got {self.taus}')
        if any(value is not None and not 0.0 < value <= 1.0 for value in self.alphas):
            raise ValueError(f'alphas: values in (0, 1] required, got {self.alphas}')
        if not 0 <= self.warmup < self.horizon:
            raise ValueError(f'warmup: must lie in [0, {self.horizon}), got {self.warmup}')
        if self.replications < 1:
            raise ValueError(f'replications: must be positive, got {self.replications}')
        if self.seed < 0:
            raise ValueError(f'seed: must be nonnegative, got {self.seed}')
        if not 1 <= self.k_max <= K_MAX:
            raise ValueError(f'k_max: must lie in [1, {K_MAX}], got {self.k_max}')
        if self.workers < 1:
            raise ValueError(f'workers: must be positive, got {self.workers}')
        for reference in self.instances:
            if reference not in self.entries:
                self.entries[reference] = resolve_reference(reference)

    def cells(self) -> list[tuple[str, Optional[float], Optional[int], int, PolicyKind]]:
        ''' All (instance, alpha, tau, N, policy) combinations in output order. '''
        return list(itertools.product(self.instances, self.alphas, self.taus, self.n_arms, self.policies))


def instance_of(entry: InstanceCatalogEntry, alpha: Optional[float] = None) -> RmabInstance:
    ''' Instance of the entry with an optional budget override. '''
    if alpha is None:
        return entry.instance
    return entry.instance.with_alpha(alpha)


def default_tau(entry: InstanceCatalogEntry, tau: Optional[int] = None) -> int:
    ''' Explicit tau, else the published one, else TAU. '''
    if tau is not None:
        return tau
    return entry.tau if entry.tau is not None else TAU


def rounding_term(alpha: float, n_arms: int) -> float:
    ''' (alpha N - floor(alpha N)) / N. '''
    return float(alpha * n_arms - np.floor(alpha * n_arms + 1e-9)) / n_arms


def _solution_section(instance: RmabInstance, solution: LpSolution) -> dict[str, Any]:
    section = solution.to_dict()
    section['index'] = lp_priority_index(solution, instance)
    return section


def analyze(entry: InstanceCatalogEntry, k_max: int = K_MAX, n_list: tuple[int, ...] = (),
            alpha: Optional[float] = None, epsilon: Optional[float] = None) -> dict[str, Any]:
    ''' Full diagnostic report of one instance. '''
    instance = instance_of(entry, alpha)
    solution = solve_relaxation(instance)
    ergodicity = find_k(instance, k_max)
    if not ergodicity.satisfied:
        logger.warning('%s: no positive coupling coefficient up to k = %d', entry.id, k_max)
    stability = check_nondegenerate(solution)
    if stability.nondegenerate:
        stability = build_p_star_and_spectrum(instance, stability)
    index = lp_priority_index(solution, instance)
    tau = default_tau(entry)
    if epsilon is None:
        (points, _) = sample_feasible(instance, np.random.default_rng(0), EPSILON_SAMPLES)
        epsilon = HorizonBias(instance, solution).cauchy_gap(points, tau, 2 * tau)
    (_, scale, _) = normalize(instance)
    bounds: Optional[list[dict[str, Any]]] = None
    if ergodicity.satisfied:
        bounds = []
        for n_arms in n_list:
            bound = theorem1_bound(ergodicity, instance.alpha, instance.n_states, n_arms, epsilon / scale, tau)
            bounds.append({
                'N': n_arms,
                'bound': bound.bound,
                'bound_in_reward_units': scale * bound.bound,
                'rounding_term': bound.rounding_term,
                'concentration_term': bound.concentration_term
            })
            if bound.bound > 1.0:
                logger.warning('%s: bound %.3g at N = %d is vacuous', entry.id, bound.bound, n_arms)
    else:
        logger.warning('%s: gap bound unavailable without a positive coupling coefficient', entry.id)
    report: dict[str, Any] = {
        'instance': entry.id,
        'version': __version__,
        'alpha': instance.alpha,
        'n_states': instance.n_states,
        'assumption1': ergodicity.satisfied,
        'k': ergodicity.k,
        'rho_k': ergodicity.rho_k,
        'fixed_point_residual': fixed_point_residual(instance, solution),
        'i_star': stability.i_star,
        'index_at_i_star': index_of_pivot(index, stability),
        'classes': [role.value for role in stability.classes],
        'nondegenerate': stability.nondegenerate,
        'relaxation_unique': relaxation_is_unique(instance, solution),
        'first_control_unique_at_fixed_point': first_control_is_unique(instance, solution.x_star, tau),
        'eigen_moduli': stability.eigen_moduli,
        'stable': stability.stable,
        'lambda_bound': lambda_bound(ergodicity, instance),
        'lambda_bound_ok': lambda_bound_check(solution, ergodicity, instance),
        'epsilon': epsilon,
        'tau': tau,
        'theorem1_bound': bounds
    }
    report.update(_solution_section(instance, solution))
    report['equality'] = _solution_section(instance, solve_relaxation(instance, BudgetMode.equality))
    if entry.expected is not None:
        report['published'] = {
            'lp_value': entry.expected.lp_value,
            'lp_index': entry.expected.lp_index,
            'budget_mode': entry.expected.budget_mode.value
        }
    return report


def simulate_cell(entry: InstanceCatalogEntry, policy: PolicyKind, n_arms: int, spec: ExperimentSpec,
                  cell: int, tau: Optional[int] = None, alpha: Optional[float] = None) -> dict[str, Any]:
    ''' Replications of one cell summarized as an output row. '''
    instance = instance_of(entry, alpha)
    used_tau = default_tau(entry, tau)
    row: dict[str, Any] = {
        'instance': entry.id,
        'policy': policy.value,
        'N': n_arms,
        'tau': used_tau,
        'alpha': instance.alpha
    }
    config = SimConfig(
        n_arms=n_arms,
        horizon=spec.horizon,
        warmup=spec.warmup,
        replications=spec.replications,
        seed=spec.seed,
        tau=used_tau,
        policy=policy,
        initial=spec.initial,
        cell=cell
    )
    solution = solve_relaxation(instance)
    logger.info('cell %d: %s %s N=%d tau=%d alpha=%g', cell, entry.id, policy.value, n_arms, used_tau, instance.alpha)
    estimate = estimate_gain(run_replications(instance, config, solution), spec.warmup)
    row.update({
        'mean': estimate.mean,
        'half_width': estimate.half_width,
        'g_star': solution.gain,
        'normalized_mean': estimate.mean / solution.gain if solution.gain != 0 else None
    })
    logger.info('cell %d done: mean %.6f', cell, estimate.mean)
    return row


def _guarded_cell(spec: ExperimentSpec, cell: int,
                  combination: tuple[str, Optional[float], Optional[int], int, PolicyKind]) -> dict[str, Any]:
    (reference, alpha, tau, n_arms, policy) = combination
    try:
        return simulate_cell(spec.entries[reference], policy, n_arms, spec, cell, tau, alpha)
    except (RmabError, ValueError, RuntimeError) as error:
        logger.error('cell %d (%s %s N=%d) failed: %s', cell, reference, policy.value, n_arms, error)
        return {'instance': reference, 'policy': policy.value, 'N': n_arms, 'tau': tau, 'alpha': alpha,
                'error': str(error)}


def experiment_metadata(spec: ExperimentSpec) -> dict[str, Any]:
    ''' Comment block of a result CSV. '''
    result: dict[str, Any] = {
        'lpupdate': __version__,
        'instances': ' '.join(spec.instances),
        'seed': spec.seed,
        'T': spec.horizon,
        'warmup': spec.warmup,
        'replications': spec.replications,
        'initial': spec.initial.value
    }
    for reference in spec.instances:
        for alpha in spec.alphas:
            used = alpha if alpha is not None else spec.entries[reference].alpha
            for n_arms in spec.n_arms:
                result[f'rounding_term[{reference},alpha={used},N={n_arms}]'] = rounding_term(used, n_arms)
    return result


def run_experiment(spec: ExperimentSpec, report: Optional[CsvReport] = None) -> tuple[list[dict[str, Any]], int]:
    ''' Run every cell; rows are written in grid order as they complete.
        ::returns:: (rows, number of failed cells) '''
    owned = report is None
    if report is None:
        report = CsvReport(SWEEP_COLUMNS, experiment_metadata(spec), spec.output)
    rows: list[dict[str, Any]] = []
    combinations = spec.cells()
    try:
        if spec.workers == 1:
            outcomes = (_guarded_cell(spec, cell, combination) for (cell, combination) in enumerate(combinations))
            for row in outcomes:
                report.write_row(row)
                rows.append(row)
        else:
            with ThreadPoolExecutor(max_workers=spec.workers) as pool:
                futures = [pool.submit(_guarded_cell, spec, cell, combination)
                           for (cell, combination) in enumerate(combinations)]
                for future in futures:
                    row = future.result()
                    report.write_row(row)
                    rows.append(row)
    finally:
        if owned:
            report.close()
    failures = sum(1 for row in rows if row.get('error'))
    return (rows, failures)


def trace(entry: InstanceCatalogEntry, policy: PolicyKind, n_arms: int, horizon: int = HORIZON,
          seed: int = 0, tau: Optional[int] = None, alpha: Optional[float] = None,
          initial: InitialState = InitialState.zero, warmup: int = 0) -> tuple[TrajectoryLog, TraceSummary]:
    ''' Single trajectory with its summary. '''
    instance = instance_of(entry, alpha)
    config = SimConfig(n_arms=n_arms, horizon=horizon, warmup=min(warmup, horizon - 1), seed=seed,
                       tau=default_tau(entry, tau), policy=policy, initial=initial)
    log = run_trajectory(instance, config, rng=config.generator(0))
    return (log, summarize_trace(log, config.warmup))


def oracle_table(entry: InstanceCatalogEntry, n_list: tuple[int, ...],
                 alpha: Optional[float] = None) -> list[dict[str, Any]]:
    ''' Exact small-N optimum next to the relaxed gain. '''
    instance = instance_of(entry, alpha)
    g_star = solve_relaxation(instance).gain
    result = []
    for n_arms in n_list:
        value = exact_small_oracle(instance, n_arms)
        result.append({'instance': entry.id, 'N': n_arms, 'oracle': value, 'g_star': g_star, 'gap': g_star - value})
    return result
