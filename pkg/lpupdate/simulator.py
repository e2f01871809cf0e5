''' Stochastic simulation of N arms and gain estimation over replications. '''
from __future__ import annotations
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum, unique
from typing import Optional

import numpy as np

from .analysis import rotated_cost
from .lp import LpSolution, solve_relaxation
from .model import RmabInstance, SystemState, Vector
from .policies import ActionAllocation, CouplingPlan, FtvaPolicy, FtvaState, PolicyKind, make_policy

logger = logging.getLogger(__name__)

HORIZON = 1000
WARMUP = 200
TAU = 10
TRACE_QUANTILES = (0.1, 0.25, 0.5, 0.75, 0.9)


@unique
class InitialState(Enum):
    ''' Where the arms start. '''
    zero = 'zero'
    fixed_point = 'fixed-point'

    @staticmethod
    def from_text(text: str) -> InitialState:
        ''' Fabric method for CLI values. '''
        try:
            return InitialState(text.strip().lower())
        except ValueError as error:
            raise ValueError(f'Unknown initial state: {text}') from error


@dataclass(frozen=True)
class SimConfig:
    ''' Parameters of one simulation cell. '''
    n_arms: int
    horizon: int = HORIZON
    warmup: int = WARMUP
    replications: int = 1
    seed: int = 0
    tau: int = TAU
    policy: PolicyKind = PolicyKind.lp_update
    initial: InitialState = InitialState.zero
    workers: int = 1
    # Identifies the cell inside a sweep; part of every replication seed.
    cell: int = 0

    def __post_init__(self):
        if self.n_arms < 1:
            raise ValueError(f'n_arms must be positive: {self.n_arms}')
        if self.horizon < 1:
            raise ValueError(f'horizon must be positive: {self.horizon}')
        if not 0 <= self.warmup < self.horizon:
            raise ValueError(f'warmup must lie in [0, horizon): {self.warmup}')
        if self.replications < 1:
            raise ValueError(f'replications must be positive: {self.replications}')
        if self.tau < 1:
            raise ValueError(f'tau must be positive: {self.tau}')
        if self.workers < 1:
            raise ValueError(f'workers must be positive: {self.workers}')
        if self.seed < 0:
            raise ValueError(f'seed must be nonnegative: {self.seed}')

    def generator(self, replication: int) -> np.random.Generator:
        ''' Independent stream of one replication. '''
        sequence = np.random.SeedSequence(self.seed, spawn_key=(self.cell, replication))
        return np.random.default_rng(sequence)


@dataclass
class TrajectoryLog:
    ''' Per-step record of one trajectory. '''
    rewards: Vector
    occupancy: np.ndarray
    pulled: np.ndarray
    rotated_cost: Vector
    distance: Vector
    policy: PolicyKind = PolicyKind.lp_update
    n_arms: int = 0

    @staticmethod
    def empty(horizon: int, n_states: int, policy: PolicyKind, n_arms: int) -> TrajectoryLog:
        ''' Preallocated log. '''
        return TrajectoryLog(
            rewards=np.zeros(horizon),
            occupancy=np.zeros((horizon, n_states)),
            pulled=np.zeros((horizon, n_states)),
            rotated_cost=np.zeros(horizon),
            distance=np.zeros(horizon),
            policy=policy,
            n_arms=n_arms
        )

    @property
    def horizon(self) -> int:
        ''' Number of logged steps. '''
        return int(self.rewards.shape[0])

    def window_mean(self, warmup: int) -> float:
        ''' Average reward over steps warmup..T-1. '''
        return float(self.rewards[warmup:].mean())


@dataclass(frozen=True)
class GainEstimate:
    ''' Mean of per-replication window averages with a 2 sigma half width. '''
    mean: float
    half_width: Optional[float]
    replications: int
    window_means: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class TraceSummary:
    ''' Time averages of one trajectory. '''
    mean_rotated_cost: float
    mean_distance: float
    mean_reward: float
    rotated_cost_quantiles: dict[float, float]


def step(instance: RmabInstance, state: SystemState, allocation: ActionAllocation,
         rng: np.random.Generator) -> tuple[SystemState, float]:
    ''' Move every arm independently through its action's kernel.
        ::returns:: (next state, average reward of this step) '''
    passive = state.counts - allocation.pulls
    active = allocation.pulls
    reward = float(instance.r0 @ passive + instance.r1 @ active) / state.n_arms
    moved = rng.multinomial(passive, instance.P0).sum(axis=0) + rng.multinomial(active, instance.P1).sum(axis=0)
    return (SystemState(moved), reward)


def _next_labels(instance: RmabInstance, labels: np.ndarray, actions: np.ndarray, draws: np.ndarray) -> np.ndarray:
    cdf = np.where(actions[:, None] == 1,
                   np.cumsum(instance.P1, axis=1)[labels],
                   np.cumsum(instance.P0, axis=1)[labels])
    return np.minimum((cdf <= draws[:, None]).sum(axis=1), instance.n_states - 1)


def step_coupled(instance: RmabInstance, ftva: FtvaState, plan: CouplingPlan,
                 rng: np.random.Generator) -> tuple[SystemState, float]:
    ''' FTVA transition: coupled arm pairs reuse the real arm's uniform, others draw their own.
        ::returns:: (next real state, average reward of the real arms) '''
    real = ftva.real_states
    rewards = np.where(plan.real_actions == 1, instance.r1[real], instance.r0[real])
    real_draws = rng.random(ftva.n_arms)
    virtual_draws = np.where(plan.coupled, real_draws, rng.random(ftva.n_arms))
    ftva.real_states = _next_labels(instance, real, plan.real_actions, real_draws)
    ftva.virtual_states = _next_labels(instance, ftva.virtual_states, plan.virtual_actions, virtual_draws)
    return (SystemState(ftva.real_counts(instance.n_states)), float(rewards.mean()))


def initial_state(instance: RmabInstance, config: SimConfig, solution: LpSolution) -> SystemState:
    ''' Starting counts of a trajectory. '''
    if config.initial == InitialState.fixed_point:
        return SystemState.nearest(solution.x_star, config.n_arms)
    return SystemState.all_in(0, instance.n_states, config.n_arms)


def run_trajectory(instance: RmabInstance, config: SimConfig, x0: Optional[SystemState] = None,
                   rng: Optional[np.random.Generator] = None,
                   solution: Optional[LpSolution] = None) -> TrajectoryLog:
    ''' Policy, rounding and transition loop for config.horizon steps. '''
    if solution is None:
        solution = solve_relaxation(instance)
    if rng is None:
        rng = config.generator(0)
    state = x0 if x0 is not None else initial_state(instance, config, solution)
    if state.n_arms != config.n_arms:
        raise ValueError(f'Initial state has {state.n_arms} arms instead of {config.n_arms}')
    policy = make_policy(config.policy, instance, solution, config.tau)
    policy.reset(state, rng)
    budget = instance.budget(config.n_arms)
    log = TrajectoryLog.empty(config.horizon, instance.n_states, config.policy, config.n_arms)
    for moment in range(config.horizon):
        x = state.occupancy()
        allocation = policy.act(state, rng)
        allocation.check(state, budget)
        u = allocation.fraction(config.n_arms)
        log.occupancy[moment] = x
        log.pulled[moment] = u
        log.distance[moment] = float(np.abs(x - solution.x_star).sum())
        log.rotated_cost[moment] = rotated_cost(instance, solution, x, u)
        if isinstance(policy, FtvaPolicy):
            assert policy.ftva is not None and policy.plan is not None
            (state, log.rewards[moment]) = step_coupled(instance, policy.ftva, policy.plan, rng)
        else:
            (state, log.rewards[moment]) = step(instance, state, allocation, rng)
    return log


def run_replications(instance: RmabInstance, config: SimConfig,
                     solution: Optional[LpSolution] = None) -> list[TrajectoryLog]:
    ''' Independent trajectories, in replication order whatever the scheduling. '''
    if solution is None:
        solution = solve_relaxation(instance)

    def _replicate(replication: int) -> TrajectoryLog:
        log = run_trajectory(instance, config, rng=config.generator(replication), solution=solution)
        logger.info('%s N=%d replication %d: window mean %.6f',
                     config.policy.value, config.n_arms, replication, log.window_mean(config.warmup))
        return log

    if config.workers == 1:
        return [_replicate(replication) for replication in range(config.replications)]
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(_replicate, range(config.replications)))


def estimate_gain(logs: list[TrajectoryLog], warmup: int) -> GainEstimate:
    ''' Mean over replications of the window average; half width 2 sigma / sqrt(K - 1).
        ::returns:: estimate with half_width None for a single replication '''
    if len(logs) == 0:
        raise ValueError('No trajectories to estimate from')
    window_means = [log.window_mean(warmup) for log in logs]
    mean = float(np.mean(window_means))
    if len(logs) == 1:
        return GainEstimate(mean, None, 1, window_means)
    half_width = 2.0 * float(np.std(window_means)) / np.sqrt(len(logs) - 1)
    return GainEstimate(mean, half_width, len(logs), window_means)


def summarize_trace(log: TrajectoryLog, warmup: int = 0) -> TraceSummary:
    ''' Time averages and rotated cost quantiles after warmup. '''
    costs = log.rotated_cost[warmup:]
    quantiles = np.quantile(costs, TRACE_QUANTILES)
    return TraceSummary(
        mean_rotated_cost=float(costs.mean()),
        mean_distance=float(log.distance[warmup:].mean()),
        mean_reward=log.window_mean(warmup),
        rotated_cost_quantiles={level: float(value) for (level, value) in zip(TRACE_QUANTILES, quantiles)}
    )
