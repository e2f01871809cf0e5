''' Restless bandit model: instances, occupancy states, controls and the mean field drift. '''
from __future__ import annotations
from dataclasses import dataclass, replace
from enum import Enum, unique
from typing import Iterable

import numpy as np
import numpy.typing as npt

Vector = npt.NDArray[np.float64]
Matrix = npt.NDArray[np.float64]
Counts = npt.NDArray[np.int64]

# Occupancy x on the simplex.
OccupancyVector = Vector
# Pulled fractions u, paired with an occupancy x.
ControlVector = Vector

FEASIBILITY_TOL = 1e-9
CLAMP_TOL = 1e-12
STOCHASTIC_TOL = 1e-9


class RmabError(Exception):
    ''' Base error of the package. '''


class InfeasibleControlError(RmabError, ValueError):
    ''' Control outside U(x) or occupancy outside the simplex. '''


class InstanceFormatError(RmabError, ValueError):
    ''' Instance file cannot be parsed or describes an invalid instance. '''


class SolverError(RmabError, RuntimeError):
    ''' Linear program did not reach optimality. '''


class DegenerateError(RmabError, ValueError):
    ''' Operation requires a non-degenerate fixed point. '''


class InstanceTooLargeError(RmabError, ValueError):
    ''' Exhaustive computation exceeds its size limits. '''


@unique
class BudgetMode(Enum):
    ''' Budget constraint of the relaxed problem. '''
    inequality = 'inequality'
    equality = 'equality'

    @staticmethod
    def from_text(text: str) -> BudgetMode:
        ''' Fabric method for CLI and catalog values. '''
        try:
            return BudgetMode(text.strip().lower())
        except ValueError as error:
            raise ValueError(f'Unknown budget mode: {text}') from error


def _readonly(values: Iterable, dtype=np.float64) -> npt.NDArray:
    result = np.array(values, dtype=dtype)
    result.setflags(write=False)
    return result


@dataclass(frozen=True, eq=False)
class RmabInstance:
    ''' One bandit family <S, P0, P1, r0, r1, alpha>.
        Row-vector convention: x(t+1) = x(t) P. '''
    P0: Matrix
    P1: Matrix
    r0: Vector
    r1: Vector
    alpha: float
    name: str = ''

    def __post_init__(self):
        object.__setattr__(self, 'P0', _readonly(self.P0))
        object.__setattr__(self, 'P1', _readonly(self.P1))
        object.__setattr__(self, 'r0', _readonly(self.r0))
        object.__setattr__(self, 'r1', _readonly(self.r1))
        object.__setattr__(self, 'alpha', float(self.alpha))

    @property
    def n_states(self) -> int:
        ''' Size of the single-arm state space |S|. '''
        return int(self.r0.shape[0])

    def kernel(self, action: int) -> Matrix:
        ''' Transition matrix of action 0 or 1. '''
        return self.P1 if action else self.P0

    def rewards(self, action: int) -> Vector:
        ''' Reward vector of action 0 or 1. '''
        return self.r1 if action else self.r0

    def budget(self, n_arms: int) -> int:
        ''' Number of arms that may be pulled per step: floor(alpha N). '''
        return int(np.floor(self.alpha * n_arms + FEASIBILITY_TOL))

    def reward_range(self) -> tuple[float, float]:
        ''' Smallest and largest reward over all state-action pairs. '''
        both = np.concatenate([self.r0, self.r1])
        return (float(both.min()), float(both.max()))

    def with_alpha(self, alpha: float) -> RmabInstance:
        ''' Same kernels and rewards with another budget fraction. '''
        return replace(self, alpha=alpha)

    def to_dict(self) -> dict:
        ''' JSON-ready representation. '''
        return {
            'name': self.name,
            'n_states': self.n_states,
            'P0': self.P0.tolist(),
            'P1': self.P1.tolist(),
            'r0': self.r0.tolist(),
            'r1': self.r1.tolist(),
            'alpha': self.alpha
        }


def _matrix_violations(label: str, matrix: Matrix, n_states: int) -> list[str]:
    if matrix.shape != (n_states, n_states):
        return [f'{label}: shape {matrix.shape} instead of {(n_states, n_states)}']
    result = []
    for (row_id, row) in enumerate(matrix):
        for (col_id, entry) in enumerate(row):
            if not 0.0 <= entry <= 1.0:
                result.append(f'{label}[{row_id}][{col_id}] = {entry} outside [0, 1]')
        total = float(row.sum())
        if abs(total - 1.0) > STOCHASTIC_TOL:
            result.append(f'{label} row {row_id} sums to {total}')
    return result


def validate(instance: RmabInstance) -> list[str]:
    ''' List invariant violations of an instance.
        ::returns:: empty list for a valid instance '''
    size = instance.n_states
    result: list[str] = []
    if size < 1:
        result.append('n_states must be positive')
    for (label, vector) in (('r0', instance.r0), ('r1', instance.r1)):
        if vector.shape != (size,):
            result.append(f'{label}: length {vector.shape[0]} instead of {size}')
        elif not np.all(np.isfinite(vector)):
            result.append(f'{label}: non-finite reward')
    result += _matrix_violations('P0', instance.P0, size)
    result += _matrix_violations('P1', instance.P1, size)
    if not 0.0 < instance.alpha <= 1.0:
        result.append(f'alpha = {instance.alpha} outside (0, 1]')
    return result


def normalize(instance: RmabInstance) -> tuple[RmabInstance, float, float]:
    ''' Map rewards affinely into [0, 1]: r -> (r - shift) / scale.
        ::returns:: (normalized instance, scale, shift); original gain = scale * V + shift '''
    (low, high) = instance.reward_range()
    scale = high - low if high > low else 1.0
    shift = low
    result = replace(instance,
                     r0=(instance.r0 - shift) / scale,
                     r1=(instance.r1 - shift) / scale)
    return (result, scale, shift)


def as_occupancy(x: Iterable[float]) -> OccupancyVector:
    ''' Clamp tiny negative entries and renormalize onto the simplex. '''
    result = np.array(x, dtype=np.float64)
    if np.any(result < -CLAMP_TOL):
        raise InfeasibleControlError(f'Occupancy has negative entry {result.min()}')
    result = np.clip(result, 0.0, None)
    total = result.sum()
    if abs(total - 1.0) > FEASIBILITY_TOL:
        raise InfeasibleControlError(f'Occupancy sums to {total}')
    return result / total


def check_control(instance: RmabInstance, x: OccupancyVector, u: ControlVector,
                  mode: BudgetMode = BudgetMode.inequality) -> ControlVector:
    ''' Verify u in U(x) and clamp it within tolerance.
        ::returns:: clamped control '''
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if u.shape != x.shape:
        raise InfeasibleControlError(f'Control shape {u.shape} does not match occupancy {x.shape}')
    if np.any(u < -FEASIBILITY_TOL):
        raise InfeasibleControlError(f'Negative control entry {u.min()}')
    excess = u - x
    if np.any(excess > FEASIBILITY_TOL):
        state = int(np.argmax(excess))
        raise InfeasibleControlError(f'Control exceeds occupancy in state {state}: {u[state]} > {x[state]}')
    total = u.sum()
    if total > instance.alpha + FEASIBILITY_TOL:
        raise InfeasibleControlError(f'Control uses {total} of budget {instance.alpha}')
    if mode == BudgetMode.equality and total < instance.alpha - FEASIBILITY_TOL:
        raise InfeasibleControlError(f'Control uses {total} instead of the full budget {instance.alpha}')
    result = np.clip(u, 0.0, np.clip(x, 0.0, None))
    total = result.sum()
    if total > instance.alpha:
        result *= instance.alpha / total
    return result


def drift(instance: RmabInstance, x: OccupancyVector, u: ControlVector) -> OccupancyVector:
    ''' Deterministic transition Phi(x, u) = x P0 + u (P1 - P0). '''
    u = check_control(instance, x, u)
    passive = np.clip(np.asarray(x, dtype=np.float64) - u, 0.0, None)
    return as_occupancy(passive @ instance.P0 + u @ instance.P1)


def reward(instance: RmabInstance, x: OccupancyVector, u: ControlVector) -> float:
    ''' Instantaneous mean field reward R(x, u) = r0.x + (r1 - r0).u. '''
    u = check_control(instance, x, u)
    return float(instance.r0 @ np.asarray(x, dtype=np.float64) + (instance.r1 - instance.r0) @ u)


@dataclass(frozen=True, eq=False)
class SystemState:
    ''' Integer occupancy counts of N real arms. '''
    counts: Counts

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if counts.ndim != 1 or np.any(counts < 0):
            raise ValueError(f'Counts must be a nonnegative vector: {counts}')
        if counts.sum() == 0:
            raise ValueError('System must contain at least one arm')
        counts.setflags(write=False)
        object.__setattr__(self, 'counts', counts)

    @property
    def n_arms(self) -> int:
        ''' Number of arms N. '''
        return int(self.counts.sum())

    @property
    def n_states(self) -> int:
        ''' Number of single-arm states. '''
        return int(self.counts.shape[0])

    def occupancy(self) -> OccupancyVector:
        ''' Empirical distribution counts / N. '''
        return self.counts / self.n_arms

    def key(self) -> tuple[int, ...]:
        ''' Hashable form of the counts. '''
        return tuple(int(value) for value in self.counts)

    @staticmethod
    def all_in(state: int, n_states: int, n_arms: int) -> SystemState:
        ''' All arms start in one state. '''
        counts = np.zeros(n_states, dtype=np.int64)
        counts[state] = n_arms
        return SystemState(counts)

    @staticmethod
    def nearest(x: OccupancyVector, n_arms: int) -> SystemState:
        ''' Counts closest to N x by largest-remainder rounding. '''
        scaled = np.asarray(x, dtype=np.float64) * n_arms
        counts = np.floor(scaled).astype(np.int64)
        missing = n_arms - int(counts.sum())
        if missing > 0:
            order = np.argsort(-(scaled - counts), kind='stable')
            counts[order[:missing]] += 1
        return SystemState(counts)
