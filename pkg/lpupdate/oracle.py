''' Exact optimal gain of small N-arm systems by relative value iteration on count vectors. '''
from __future__ import annotations
import itertools
import logging
from functools import lru_cache
from math import comb
from typing import Iterator

import numpy as np
from scipy import sparse
from scipy.stats import multinomial

from .model import InstanceTooLargeError, RmabInstance, SolverError

logger = logging.getLogger(__name__)

MAX_JOINT_STATES = 10_000
MAX_ACTIONS = 1_000
SPAN_TOL = 1e-9
MAX_SWEEPS = 1_000_000

Composition = tuple[int, ...]


def compositions(total: int, parts: int) -> Iterator[Composition]:
    ''' All nonnegative integer vectors of length parts summing to total, lexicographically descending. '''
    if parts == 1:
        yield (total,)
        return
    for head in range(total, -1, -1):
        for tail in compositions(total - head, parts - 1):
            yield (head,) + tail


def joint_state_count(n_arms: int, n_states: int) -> int:
    ''' Number of count vectors C(N + S - 1, S - 1). '''
    return comb(n_arms + n_states - 1, n_states - 1)


def pull_vectors(counts: Composition, budget: int) -> list[Composition]:
    ''' Feasible pulls per state: 0 <= p <= counts, sum p <= budget. '''
    ranges = [range(count + 1) for count in counts]
    return [pulls for pulls in itertools.product(*ranges) if sum(pulls) <= budget]


class CountMdp:
    ''' Average reward MDP of N exchangeable arms on count vectors. '''
    def __init__(self, instance: RmabInstance, n_arms: int):
        size = joint_state_count(n_arms, instance.n_states)
        if size > MAX_JOINT_STATES:
            raise InstanceTooLargeError(f'{size} joint states exceed the limit {MAX_JOINT_STATES}')
        self.instance = instance
        self.n_arms = n_arms
        self.budget = instance.budget(n_arms)
        self.states: list[Composition] = list(compositions(n_arms, instance.n_states))
        self.positions = {state: position for (position, state) in enumerate(self.states)}
        self._spread = lru_cache(maxsize=None)(self._spread_uncached)
        self._build()

    def _spread_uncached(self, origin: int, action: int, count: int) -> tuple[tuple[Composition, float], ...]:
        ''' Distribution of where count arms from origin land under action. '''
        row = self.instance.kernel(action)[origin]
        result = []
        for landing in compositions(count, self.instance.n_states):
            chance = float(multinomial.pmf(landing, count, row)) if count > 0 else 1.0
            if chance > 0.0:
                result.append((landing, chance))
        return tuple(result)

    def transition(self, counts: Composition, pulls: Composition) -> dict[Composition, float]:
        ''' Next count distribution; arms move independently. '''
        outcome: dict[Composition, float] = {tuple([0] * len(counts)): 1.0}
        for (origin, (count, pulled)) in enumerate(zip(counts, pulls)):
            for (action, group) in ((0, count - pulled), (1, pulled)):
                if group == 0:
                    continue
                merged: dict[Composition, float] = {}
                for (partial, chance) in outcome.items():
                    for (landing, spread) in self._spread(origin, action, group):
                        target = tuple(a + b for (a, b) in zip(partial, landing))
                        merged[target] = merged.get(target, 0.0) + chance * spread
                outcome = merged
        return outcome

    def _build(self):
        rows: list[int] = []
        cols: list[int] = []
        data: list[float] = []
        rewards: list[float] = []
        owners: list[int] = []
        r0 = self.instance.r0
        r1 = self.instance.r1
        for (position, counts) in enumerate(self.states):
            options = pull_vectors(counts, self.budget)
            if len(options) > MAX_ACTIONS:
                raise InstanceTooLargeError(f'{len(options)} actions in state {counts} exceed the limit {MAX_ACTIONS}')
            for pulls in options:
                pair = len(owners)
                owners.append(position)
                passive = np.subtract(counts, pulls)
                rewards.append(float(r0 @ passive + r1 @ np.asarray(pulls)) / self.n_arms)
                for (target, chance) in self.transition(counts, pulls).items():
                    rows.append(pair)
                    cols.append(self.positions[target])
                    data.append(chance)
        self.kernel = sparse.csr_array((data, (rows, cols)), shape=(len(owners), len(self.states)))
        self.rewards = np.array(rewards)
        self.owners = np.array(owners)
        self._starts = np.flatnonzero(np.r_[True, self.owners[1:] != self.owners[:-1]])

    @property
    def n_pairs(self) -> int:
        ''' Number of (joint state, action) pairs. '''
        return int(self.owners.shape[0])

    def bellman(self, values: np.ndarray) -> np.ndarray:
        ''' Lazy operator h -> h/2 + max_a (r + P h / 2); same gain, aperiodic. '''
        quality = self.rewards + 0.5 * (self.kernel @ values)
        return 0.5 * values + np.maximum.reduceat(quality, self._starts)

    def solve(self) -> float:
        ''' Optimal gain, anchored at joint state 0. '''
        values = np.zeros(len(self.states))
        for sweep in range(MAX_SWEEPS):
            updated = self.bellman(values)
            change = updated - values
            if change.max() - change.min() < SPAN_TOL:
                logger.debug('oracle N=%d converged after %d sweeps', self.n_arms, sweep + 1)
                return float(0.5 * (change.max() + change.min()))
            values = updated - updated[0]
        raise SolverError(f'Relative value iteration did not converge in {MAX_SWEEPS} sweeps')


def exact_small_oracle(instance: RmabInstance, n_arms: int) -> float:
    ''' Optimal average reward of N arms with at most floor(alpha N) pulls per step. '''
    if n_arms < 1:
        raise ValueError(f'n_arms must be positive: {n_arms}')
    model = CountMdp(instance, n_arms)
    logger.debug('oracle N=%d: %d joint states, %d pairs', n_arms, len(model.states), model.n_pairs)
    return model.solve()
