''' Policies mapping the empirical state of N arms to an integer number of pulls per state. '''
from __future__ import annotations
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum, unique
from typing import Optional

import numpy as np

from .lp import FiniteHorizonSolver, LpSolution, lp_priority_index, solve_relaxation
from .model import (
    ControlVector, Counts, InfeasibleControlError, Matrix, RmabInstance, SystemState, Vector,
    check_control, FEASIBILITY_TOL
)

# Indices equal after rounding to this many decimals are ties.
INDEX_DECIMALS = 9
THRESHOLD_TOL = 1e-9


@unique
class PolicyKind(Enum):
    ''' Policies available for simulation. '''
    lp_update = 'lp-update'
    lp_priority = 'lp-priority'
    lp_priority_threshold = 'lp-priority-threshold'
    ftva = 'ftva'

    @staticmethod
    def from_text(text: str) -> PolicyKind:
        ''' Fabric method for CLI values. '''
        try:
            return PolicyKind(text.strip().lower())
        except ValueError as error:
            known = ', '.join(kind.value for kind in PolicyKind)
            raise ValueError(f'Unknown policy: {text}; expected one of {known}') from error


@dataclass(frozen=True, eq=False)
class ActionAllocation:
    ''' Number of arms pulled in each state. '''
    pulls: Counts

    def __post_init__(self):
        pulls = np.array(self.pulls, dtype=np.int64)
        pulls.setflags(write=False)
        object.__setattr__(self, 'pulls', pulls)

    @property
    def total(self) -> int:
        ''' Number of pulled arms. '''
        return int(self.pulls.sum())

    def fraction(self, n_arms: int) -> ControlVector:
        ''' U = pulls / N. '''
        return self.pulls / n_arms

    def check(self, state: SystemState, budget: int) -> None:
        ''' Raise if pulls exceed counts or the budget. '''
        if np.any(self.pulls < 0) or np.any(self.pulls > state.counts):
            raise InfeasibleControlError(f'Pulls {self.pulls.tolist()} do not fit counts {state.counts.tolist()}')
        if self.total > budget:
            raise InfeasibleControlError(f'{self.total} pulls exceed budget {budget}')


def _priority_order(index: Vector) -> np.ndarray:
    ''' States by descending index, ties by ascending id. '''
    ids = np.arange(index.shape[0])
    return np.lexsort((ids, -np.round(index, INDEX_DECIMALS)))


def _snap(values: np.ndarray) -> np.ndarray:
    nearest = np.round(values)
    return np.where(np.abs(values - nearest) < FEASIBILITY_TOL, nearest, values)


def round_control(instance: RmabInstance, u: ControlVector, state: SystemState,
                  rng: np.random.Generator, index: Optional[Vector] = None) -> ActionAllocation:
    ''' Randomized rounding of a fractional control into integer pulls.
        Excess over floor(alpha N) is removed from the least valuable states first (ascending index,
        r1 - r0 when no index is given); fractional parts are sampled systematically with one uniform.
        ::returns:: allocation with expectation N v and at most floor(alpha N) pulls '''
    n_arms = state.n_arms
    u = check_control(instance, state.occupancy(), u)
    budget = instance.budget(n_arms)
    scaled = _snap(np.clip(u * n_arms, 0.0, state.counts.astype(np.float64)))
    excess = scaled.sum() - budget
    if excess > 0.0:
        if index is None:
            index = instance.r1 - instance.r0
        for target in _priority_order(np.asarray(index, dtype=np.float64))[::-1]:
            taken = min(scaled[target], excess)
            scaled[target] -= taken
            excess -= taken
            if excess <= 0.0:
                break
        scaled = _snap(np.clip(scaled, 0.0, None))
    floors = np.floor(scaled)
    cumulative = _snap(np.cumsum(scaled - floors))
    offset = rng.random()
    marks = np.floor(np.concatenate([[0.0], cumulative]) + offset)
    extra = np.diff(marks)
    return ActionAllocation((floors + extra).astype(np.int64))


def priority_allocation(instance: RmabInstance, state: SystemState, index: Vector,
                        threshold: bool = False) -> ActionAllocation:
    ''' Pull down the index order until the budget is exhausted.
        With threshold set, states with negative index are never pulled. '''
    remaining = instance.budget(state.n_arms)
    pulls = np.zeros(state.n_states, dtype=np.int64)
    for target in _priority_order(index):
        if remaining == 0:
            break
        if threshold and index[target] < -THRESHOLD_TOL:
            break
        pulls[target] = min(int(state.counts[target]), remaining)
        remaining -= int(pulls[target])
    return ActionAllocation(pulls)


def lp_priority_action(instance: RmabInstance, state: SystemState, index: Vector,
                       rng: Optional[np.random.Generator] = None, threshold: bool = False) -> ActionAllocation:
    ''' LP-priority allocation; rng is unused since the rule is deterministic. '''
    del rng
    return priority_allocation(instance, state, np.asarray(index, dtype=np.float64), threshold)


def lp_update_action(instance: RmabInstance, state: SystemState, tau: int,
                     rng: np.random.Generator, index: Optional[Vector] = None) -> ActionAllocation:
    ''' One receding horizon decision: solve the tau-step LP from counts / N and round u(0). '''
    if index is None:
        index = lp_priority_index(solve_relaxation(instance), instance)
    plan = FiniteHorizonSolver(instance, tau).solve(state.occupancy())
    return round_control(instance, plan.first_control, state, rng, index)


class Policy(ABC):
    ''' Decision rule of one trajectory. '''
    kind: PolicyKind

    def reset(self, state: SystemState, rng: np.random.Generator) -> None:
        ''' Prepare for a new trajectory starting at state. '''

    @abstractmethod
    def act(self, state: SystemState, rng: np.random.Generator) -> ActionAllocation:
        ''' Allocation for the current state. '''


class LpUpdatePolicy(Policy):
    ''' Model predictive control with tau-step lookahead; controls are memoized per count vector. '''
    kind = PolicyKind.lp_update

    def __init__(self, instance: RmabInstance, tau: int, index: Vector,
                 terminal_weight: Optional[Vector] = None):
        self.instance = instance
        self.index = index
        self.terminal_weight = terminal_weight
        self._solver = FiniteHorizonSolver(instance, tau)
        self._controls: dict[tuple[int, ...], ControlVector] = {}

    @property
    def tau(self) -> int:
        ''' Lookahead horizon. '''
        return self._solver.tau

    @property
    def cache_size(self) -> int:
        ''' Number of distinct states solved so far. '''
        return len(self._controls)

    def control(self, state: SystemState) -> ControlVector:
        ''' mu_tau(counts / N). '''
        key = state.key()
        if key not in self._controls:
            plan = self._solver.solve(state.occupancy(), self.terminal_weight)
            self._controls[key] = plan.first_control
        return self._controls[key]

    def act(self, state: SystemState, rng: np.random.Generator) -> ActionAllocation:
        return round_control(self.instance, self.control(state), state, rng, self.index)


class LpPriorityPolicy(Policy):
    ''' Static priority on LP indices. '''
    def __init__(self, instance: RmabInstance, index: Vector, threshold: bool = False):
        self.instance = instance
        self.index = np.asarray(index, dtype=np.float64)
        self.threshold = threshold
        self.kind = PolicyKind.lp_priority_threshold if threshold else PolicyKind.lp_priority

    def act(self, state: SystemState, rng: np.random.Generator) -> ActionAllocation:
        return lp_priority_action(self.instance, state, self.index, rng, self.threshold)


def single_arm_policy(solution: LpSolution) -> Matrix:
    ''' pi(a|s) of the relaxed stationary regime; states with x*_s = 0 stay passive. '''
    active = np.zeros(solution.n_states)
    support = solution.x_star > FEASIBILITY_TOL
    active[support] = np.clip(solution.u_star[support] / solution.x_star[support], 0.0, 1.0)
    return np.column_stack([1.0 - active, active])


def arm_labels(state: SystemState) -> np.ndarray:
    ''' Per-arm state labels in ascending state order. '''
    return np.repeat(np.arange(state.n_states), state.counts)


@dataclass
class FtvaState:
    ''' Virtual arms following the relaxed single-arm policy, paired with real arms. '''
    single_arm_policy: Matrix
    virtual_states: np.ndarray
    real_states: np.ndarray

    @staticmethod
    def start(solution: LpSolution, state: SystemState) -> FtvaState:
        ''' Virtual arms start where the real arms are. '''
        labels = arm_labels(state)
        return FtvaState(single_arm_policy(solution), labels.copy(), labels.copy())

    @property
    def n_arms(self) -> int:
        ''' Number of arm pairs. '''
        return int(self.real_states.shape[0])

    def real_counts(self, n_states: int) -> Counts:
        ''' Counts of the real system. '''
        return np.bincount(self.real_states, minlength=n_states).astype(np.int64)

    def virtual_counts(self, n_states: int) -> Counts:
        ''' Counts of the virtual system. '''
        return np.bincount(self.virtual_states, minlength=n_states).astype(np.int64)


@dataclass(frozen=True)
class CouplingPlan:
    ''' Actions of one FTVA step; coupled arms share their transition randomness. '''
    virtual_actions: np.ndarray
    real_actions: np.ndarray

    @property
    def coupled(self) -> np.ndarray:
        ''' Arms whose real and virtual actions agree. '''
        return self.real_actions == self.virtual_actions


def ftva_action(instance: RmabInstance, state: SystemState, ftva: FtvaState,
                rng: np.random.Generator) -> tuple[ActionAllocation, CouplingPlan]:
    ''' Virtual arms sample their actions; real arms copy pulls in ascending arm order while budget remains. '''
    if ftva.n_arms != state.n_arms:
        raise ValueError(f'FTVA tracks {ftva.n_arms} arms, state has {state.n_arms}')
    pull_chance = ftva.single_arm_policy[ftva.virtual_states, 1]
    virtual_actions = (rng.random(ftva.n_arms) < pull_chance).astype(np.int64)
    admitted = np.cumsum(virtual_actions) <= instance.budget(state.n_arms)
    real_actions = virtual_actions * admitted
    pulls = np.bincount(ftva.real_states[real_actions == 1], minlength=state.n_states)
    return (ActionAllocation(pulls), CouplingPlan(virtual_actions, real_actions))


class FtvaPolicy(Policy):
    ''' Follow-the-virtual-advice. Transitions go through simulator.step_coupled. '''
    kind = PolicyKind.ftva

    def __init__(self, instance: RmabInstance, solution: LpSolution):
        self.instance = instance
        self.solution = solution
        self.ftva: Optional[FtvaState] = None
        self.plan: Optional[CouplingPlan] = None

    def reset(self, state: SystemState, rng: np.random.Generator) -> None:
        self.ftva = FtvaState.start(self.solution, state)
        self.plan = None

    def act(self, state: SystemState, rng: np.random.Generator) -> ActionAllocation:
        if self.ftva is None:
            self.reset(state, rng)
        assert self.ftva is not None
        (allocation, self.plan) = ftva_action(self.instance, state, self.ftva, rng)
        return allocation


def make_policy(kind: PolicyKind, instance: RmabInstance, solution: LpSolution, tau: int) -> Policy:
    ''' Policy of the given kind built on a solved relaxation. '''
    index = lp_priority_index(solution, instance)
    if kind == PolicyKind.lp_update:
        return LpUpdatePolicy(instance, tau, index)
    if kind == PolicyKind.lp_priority:
        return LpPriorityPolicy(instance, index)
    if kind == PolicyKind.lp_priority_threshold:
        return LpPriorityPolicy(instance, index, threshold=True)
    return FtvaPolicy(instance, solution)
