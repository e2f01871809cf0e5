''' Bundled instances, random generation and JSON files. '''
from __future__ import annotations
import json
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import BudgetMode, InstanceFormatError, RmabInstance, validate

RANDOM_PREFIX = 'random'
INSTANCE_KEYS = ('n_states', 'P0', 'P1', 'r0', 'r1', 'alpha')


@dataclass(frozen=True)
class GoldenValues:
    ''' Published reference numbers of a bundled instance.
        lp_index entries are None where the published table leaves a blank. '''
    lp_value: float
    lp_index: Optional[tuple[Optional[float], ...]]
    alpha: float
    tau: int
    budget_mode: BudgetMode = BudgetMode.equality
    lp_tolerance: float = 1e-3

    def known_index(self) -> tuple[list[int], list[float]]:
        ''' States with a published index and their values.
            ::returns:: (states, values), empty when no index was published '''
        if self.lp_index is None:
            return ([], [])
        pairs = [(state, value) for (state, value) in enumerate(self.lp_index) if value is not None]
        return ([state for (state, _) in pairs], [value for (_, value) in pairs])


@dataclass(frozen=True)
class InstanceCatalogEntry:
    ''' Instance with its defaults and optional reference numbers. '''
    id: str
    instance: RmabInstance
    expected: Optional[GoldenValues] = None

    @property
    def alpha(self) -> float:
        ''' Budget fraction of the instance. '''
        return self.instance.alpha

    @property
    def tau(self) -> Optional[int]:
        ''' Recommended lookahead, when published. '''
        return self.expected.tau if self.expected is not None else None


def _stochastic(rows: list[list[float]]) -> np.ndarray:
    ''' Printed rows are rounded to 3 digits; rescale each to sum 1. '''
    matrix = np.array(rows, dtype=np.float64)
    return matrix / matrix.sum(axis=1, keepdims=True)


def _hong8() -> InstanceCatalogEntry:
    P0 = [
        [1.0, 0, 0, 0, 0, 0, 0, 0],
        [1.0, 0, 0, 0, 0, 0, 0, 0],
        [0, 0.48, 0.52, 0, 0, 0, 0, 0],
        [0, 0, 0.47, 0.53, 0, 0, 0, 0],
        [0, 0, 0, 0, 0.9, 0.1, 0, 0],
        [0, 0, 0, 0, 0, 0.9, 0.1, 0],
        [0, 0, 0, 0, 0, 0, 0.9, 0.1],
        [0.1, 0, 0, 0, 0, 0, 0, 0.9]
    ]
    P1 = [
        [0.9, 0.1, 0, 0, 0, 0, 0, 0],
        [0, 0.9, 0.1, 0, 0, 0, 0, 0],
        [0, 0, 0.9, 0.1, 0, 0, 0, 0],
        [0, 0, 0, 0.9, 0.1, 0, 0, 0],
        [0, 0, 0, 0.46, 0.54, 0, 0, 0],
        [0, 0, 0, 0, 0.45, 0.55, 0, 0],
        [0, 0, 0, 0, 0, 0.44, 0.56, 0],
        [0, 0, 0, 0, 0, 0, 0.43, 0.57]
    ]
    instance = RmabInstance(
        P0=_stochastic(P0),
        P1=_stochastic(P1),
        r0=np.array([0, 0, 0, 0, 0, 0, 0, 0.1]),
        r1=np.zeros(8),
        alpha=0.5,
        name='hong8'
    )
    golden = GoldenValues(
        lp_value=0.0125,
        lp_index=(0.025, 0.025, 0.025, 0.025, 0.0, -0.113, -0.110, -0.108),
        alpha=0.5,
        tau=10,
        lp_tolerance=1e-3
    )
    return InstanceCatalogEntry('hong8', instance, golden)


def _chen3() -> InstanceCatalogEntry:
    P0 = [
        [0.022, 0.102, 0.875],
        [0.034, 0.172, 0.794],
        [0.523, 0.455, 0.022]
    ]
    P1 = [
        [0.149, 0.304, 0.547],
        [0.568, 0.411, 0.020],
        [0.253, 0.273, 0.474]
    ]
    instance = RmabInstance(
        P0=_stochastic(P0),
        P1=_stochastic(P1),
        r0=np.zeros(3),
        r1=np.array([0.374, 0.117, 0.079]),
        alpha=0.4,
        name='chen3'
    )
    golden = GoldenValues(
        lp_value=0.1238,
        lp_index=(0.199, -0.000, -0.133),
        alpha=0.4,
        tau=50,
        lp_tolerance=2e-3
    )
    return InstanceCatalogEntry('chen3', instance, golden)


def _random8_seed3() -> InstanceCatalogEntry:
    P0 = [
        [0.101, 0.155, 0.043, 0.090, 0.281, 0.285, 0.017, 0.029],
        [0.006, 0.207, 0.076, 0.136, 0.085, 0.299, 0.147, 0.043],
        [0.317, 0.254, 0.065, 0.013, 0.144, 0.111, 0.061, 0.035],
        [0.098, 0.183, 0.069, 0.068, 0.218, 0.028, 0.200, 0.136],
        [0.053, 0.080, 0.009, 0.038, 0.483, 0.036, 0.159, 0.143],
        [0.018, 0.105, 0.027, 0.397, 0.150, 0.102, 0.161, 0.040],
        [0.110, 0.050, 0.088, 0.024, 0.023, 0.142, 0.169, 0.393],
        [0.055, 0.043, 0.017, 0.494, 0.227, 0.034, 0.119, 0.011]
    ]
    P1 = [
        [0.011, 0.124, 0.006, 0.131, 0.224, 0.070, 0.241, 0.191],
        [0.071, 0.138, 0.033, 0.023, 0.045, 0.250, 0.339, 0.101],
        [0.093, 0.113, 0.056, 0.061, 0.109, 0.351, 0.157, 0.059],
        [0.158, 0.176, 0.151, 0.150, 0.060, 0.142, 0.053, 0.109],
        [0.370, 0.185, 0.261, 0.020, 0.022, 0.064, 0.047, 0.030],
        [0.199, 0.139, 0.099, 0.050, 0.141, 0.104, 0.082, 0.187],
        [0.214, 0.088, 0.011, 0.075, 0.295, 0.174, 0.075, 0.068],
        [0.028, 0.157, 0.126, 0.078, 0.039, 0.127, 0.376, 0.069]
    ]
    instance = RmabInstance(
        P0=_stochastic(P0),
        P1=_stochastic(P1),
        r0=np.array([0.073, 0.087, 0.778, 0.186, 1.178, 0.417, 1.996, 1.351]),
        r1=np.array([0.059, 3.212, 1.817, 0.302, 2.259, 0.067, 0.344, 0.172]),
        alpha=0.5,
        name='random8-seed3'
    )
    golden = GoldenValues(
        lp_value=1.3885,
        lp_index=(0.377, 3.273, 0.846, -0.116, 0.802, None, -1.230, -0.562),
        alpha=0.5,
        tau=10,
        budget_mode=BudgetMode.inequality,
        lp_tolerance=1.5e-2
    )
    return InstanceCatalogEntry('random8-seed3', instance, golden)


_CATALOG = {
    'hong8': _hong8,
    'chen3': _chen3,
    'random8-seed3': _random8_seed3
}


def catalog_ids() -> list[str]:
    ''' Ids of bundled instances. '''
    return list(_CATALOG.keys())


def builtin(identifier: str) -> InstanceCatalogEntry:
    ''' Bundled instance by id. '''
    if identifier not in _CATALOG:
        raise KeyError(f'Unknown instance {identifier}; known: {", ".join(catalog_ids())}')
    return _CATALOG[identifier]()


def generate_random(n_states: int, seed: int, alpha: float = 0.5) -> RmabInstance:
    ''' Exponential(1) kernels normalized per row and Exponential(1) rewards. '''
    if n_states < 2:
        raise ValueError(f'n_states must be at least 2: {n_states}')
    rng = np.random.default_rng(seed)
    kernels = rng.exponential(size=(n_states, 2, n_states))
    kernels /= kernels.sum(axis=2, keepdims=True)
    rewards = rng.exponential(size=(n_states, 2))
    return RmabInstance(
        P0=kernels[:, 0, :],
        P1=kernels[:, 1, :],
        r0=rewards[:, 0],
        r1=rewards[:, 1],
        alpha=alpha,
        name=f'{RANDOM_PREFIX}:{n_states}:{seed}'
    )


def random_references(state_counts: Sequence[int], seeds: Sequence[int]) -> list[str]:
    ''' References random:<n_states>:<seed> for every state count and seed, state count major. '''
    return [f'{RANDOM_PREFIX}:{n_states}:{seed}' for n_states in state_counts for seed in seeds]


def from_dict(data: dict, source: str = '<data>') -> RmabInstance:
    ''' Build and validate an instance from its JSON form. '''
    if not isinstance(data, dict):
        raise InstanceFormatError(f'{source}: top level must be an object')
    missing = [key for key in INSTANCE_KEYS if key not in data]
    if missing:
        raise InstanceFormatError(f'{source}: missing key(s) {", ".join(missing)}')
    try:
        instance = RmabInstance(
            P0=np.array(data['P0'], dtype=np.float64),
            P1=np.array(data['P1'], dtype=np.float64),
            r0=np.array(data['r0'], dtype=np.float64),
            r1=np.array(data['r1'], dtype=np.float64),
            alpha=float(data['alpha']),
            name=str(data.get('name', ''))
        )
    except (TypeError, ValueError) as error:
        raise InstanceFormatError(f'{source}: {error}') from error
    violations = []
    if int(data['n_states']) != instance.n_states:
        violations.append(f'n_states = {data["n_states"]} but r0 has {instance.n_states} entries')
    violations += validate(instance)
    if violations:
        raise InstanceFormatError(f'{source}: ' + '; '.join(violations))
    return instance


def load(path: str) -> RmabInstance:
    ''' Read an instance file. '''
    with open(path, 'r', encoding='utf-8') as file:
        try:
            data = json.load(file)
        except json.JSONDecodeError as error:
            raise InstanceFormatError(f'{path}:{error.lineno}:{error.colno}: {error.msg}') from error
    return from_dict(data, path)


def save(path: str, instance: RmabInstance) -> None:
    ''' Write an instance file. '''
    with open(path, 'w', encoding='utf-8') as file:
        json.dump(instance.to_dict(), file, indent=2)
        file.write('\n')


def resolve_reference(reference: str) -> InstanceCatalogEntry:
    ''' Bundled id, random:<n_states>:<seed> or path to a JSON file. '''
    if reference in _CATALOG:
        return builtin(reference)
    if reference.startswith(RANDOM_PREFIX + ':'):
        parts = reference.split(':')
        if len(parts) != 3:
            raise ValueError(f'Expected {RANDOM_PREFIX}:<n_states>:<seed>, got {reference}')
        try:
            (n_states, seed) = (int(parts[1]), int(parts[2]))
        except ValueError as error:
            raise ValueError(f'Expected integers in {reference}') from error
        return InstanceCatalogEntry(reference, generate_random(n_states, seed))
    if os.path.isfile(reference):
        return InstanceCatalogEntry(reference, load(reference))
    raise ValueError(f'Instance {reference} is neither bundled, random nor an existing file')
