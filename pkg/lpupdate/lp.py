''' Linear programs: stationary relaxation, finite horizon control and their duals. '''
from __future__ import annotations
import logging
from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np
import pulp
from scipy import sparse
from scipy.optimize import linprog

from .model import (
    BudgetMode, ControlVector, Matrix, OccupancyVector, RmabInstance, SolverError, Vector,
    CLAMP_TOL
)

logger = logging.getLogger(__name__)

LP_TOL = 1e-7
# Slack allowed on the dual objective while refining multipliers.
DUAL_TOL = 1e-8
# Lower bound of nu when the budget is an equality.
NU_FLOOR_FACTOR = 1e3

_HIGHS_OPTIONS = {
    'presolve': True,
    'primal_feasibility_tolerance': 1e-10,
    'dual_feasibility_tolerance': 1e-10
}


@dataclass
class LinearProgram:
    ''' Minimization program in linprog form. '''
    c: Vector
    A_eq: Optional[sparse.csr_array] = None
    b_eq: Optional[Vector] = None
    A_ub: Optional[sparse.csr_array] = None
    b_ub: Optional[Vector] = None
    # One (low, high) pair for all columns or a list with one pair per column.
    bounds: Any = (0.0, None)
    label: str = 'lp'


def optimize(program: LinearProgram) -> np.ndarray:
    ''' Solve program with HiGHS.
        ::returns:: optimal point '''
    result = linprog(
        program.c,
        A_ub=program.A_ub, b_ub=program.b_ub,
        A_eq=program.A_eq, b_eq=program.b_eq,
        bounds=program.bounds,
        method='highs',
        options=_HIGHS_OPTIONS
    )
    if result.status != 0:
        raise SolverError(f'{program.label}: {result.message}')
    logger.debug('%s: %d variables, objective %.12g', program.label, len(program.c), result.fun)
    return np.asarray(result.x, dtype=np.float64)


def face_ranges(program: LinearProgram, optimum: float, columns: Sequence[int]) -> tuple[Vector, Vector]:
    ''' Range of selected variables over the optimal face {c.z <= optimum + LP_TOL}.
        ::returns:: (lowest values, highest values) '''
    face_row = sparse.csr_array(np.asarray(program.c, dtype=np.float64).reshape(1, -1))
    face_rhs = np.array([optimum + LP_TOL * (1.0 + abs(optimum))])
    if program.A_ub is None:
        A_ub = face_row
        b_ub = face_rhs
    else:
        A_ub = sparse.vstack([program.A_ub, face_row], format='csr')
        b_ub = np.concatenate([program.b_ub, face_rhs])
    size = len(program.c)
    lows = np.empty(len(columns))
    highs = np.empty(len(columns))
    for (position, column) in enumerate(columns):
        for (sign, target) in ((1.0, lows), (-1.0, highs)):
            objective = np.zeros(size)
            objective[column] = sign
            extreme = LinearProgram(objective, program.A_eq, program.b_eq, A_ub, b_ub,
                                    program.bounds, label=f'{program.label}-face-{column}')
            target[position] = optimize(extreme)[column]
    return (lows, highs)


@dataclass(frozen=True, eq=False)
class LpSolution:
    ''' Optimal stationary point of the relaxation with its canonical multipliers. '''
    x_star: OccupancyVector
    u_star: ControlVector
    gain: float
    lam: Vector
    nu: float
    y: Matrix
    mode: BudgetMode = BudgetMode.inequality
    dual_objective: float = 0.0

    @property
    def n_states(self) -> int:
        ''' Number of single-arm states. '''
        return int(self.x_star.shape[0])

    def budget_slack(self, alpha: float) -> float:
        ''' Unused budget alpha - |u*|. '''
        return float(alpha - self.u_star.sum())

    def to_dict(self) -> dict:
        ''' JSON-ready representation. '''
        return {
            'mode': self.mode.value,
            'g_star': self.gain,
            'x_star': self.x_star.tolist(),
            'u_star': self.u_star.tolist(),
            'lambda': self.lam.tolist(),
            'nu': self.nu
        }


@dataclass(frozen=True, eq=False)
class HorizonPlan:
    ''' Optimal open-loop plan of the tau-step problem. '''
    horizon: int
    xs: Matrix
    us: Matrix
    value: float
    terminal_weight_used: bool = False

    @property
    def first_control(self) -> ControlVector:
        ''' mu_tau(x0): the only control applied by the receding horizon policy. '''
        return self.us[0]


def relaxation_program(instance: RmabInstance,
                       mode: BudgetMode = BudgetMode.inequality) -> LinearProgram:
    ''' Stationary LP over y = (y(., 0), y(., 1)); flow row of the last state is redundant and dropped. '''
    size = instance.n_states
    identity = np.eye(size)
    flow = np.hstack([instance.P0.T - identity, instance.P1.T - identity])[:-1]
    mass = np.ones((1, 2 * size))
    budget = np.concatenate([np.zeros(size), np.ones(size)]).reshape(1, -1)
    c = -np.concatenate([instance.r0, instance.r1])
    if mode == BudgetMode.equality:
        A_eq = sparse.csr_array(np.vstack([flow, mass, budget]))
        b_eq = np.concatenate([np.zeros(size - 1), [1.0, instance.alpha]])
        return LinearProgram(c, A_eq, b_eq, label=f'relaxation-{mode.value}')
    A_eq = sparse.csr_array(np.vstack([flow, mass]))
    b_eq = np.concatenate([np.zeros(size - 1), [1.0]])
    return LinearProgram(c, A_eq, b_eq, sparse.csr_array(budget), np.array([instance.alpha]),
                         label=f'relaxation-{mode.value}')


def _dual_program(instance: RmabInstance, gain: float, mode: BudgetMode) -> LinearProgram:
    ''' Dual feasibility g + lam_s - P^a_s lam + a nu >= r^a_s restricted to dual objective g*.
        Variable order: g, lam(0..S-1), nu. '''
    size = instance.n_states
    rows = []
    rhs = []
    for action in (0, 1):
        block = np.zeros((size, size + 2))
        block[:, 0] = -1.0
        block[:, 1:size + 1] = -(np.eye(size) - instance.kernel(action))
        block[:, size + 1] = -float(action)
        rows.append(block)
        rhs.append(-instance.rewards(action))
    objective_row = np.zeros((1, size + 2))
    objective_row[0, 0] = 1.0
    objective_row[0, size + 1] = instance.alpha
    rows.append(objective_row)
    rhs.append(np.array([gain + DUAL_TOL * (1.0 + abs(gain))]))
    bounds: list[tuple[Optional[float], Optional[float]]] = [(None, None)] + [(0.0, None)] * size
    if mode == BudgetMode.equality:
        (low, high) = instance.reward_range()
        bounds.append((-NU_FLOOR_FACTOR * (1.0 + high - low), None))
    else:
        bounds.append((0.0, None))
    c = np.zeros(size + 2)
    c[size + 1] = 1.0
    return LinearProgram(c, A_ub=sparse.csr_array(np.vstack(rows)), b_ub=np.concatenate(rhs),
                         bounds=bounds, label=f'dual-{mode.value}')


def _canonical_dual(instance: RmabInstance, gain: float, mode: BudgetMode) -> tuple[Vector, float, float]:
    ''' Smallest nu, then smallest lam >= 0 (min component 0).
        ::returns:: (lam, nu, dual objective) '''
    size = instance.n_states
    program = _dual_program(instance, gain, mode)
    nu_min = float(optimize(program)[size + 1])
    (nu_low, _) = program.bounds[size + 1]
    if mode == BudgetMode.equality and nu_low is not None and nu_min <= nu_low + LP_TOL:
        logger.warning('%s: budget multiplier reached its floor %g', instance.name or 'instance', nu_low)
    bounds = list(program.bounds)
    bounds[size + 1] = (nu_low, nu_min + DUAL_TOL * (1.0 + abs(nu_min)))
    c = np.zeros(size + 2)
    c[1:size + 1] = 1.0
    refined = optimize(LinearProgram(c, A_ub=program.A_ub, b_ub=program.b_ub, bounds=bounds,
                                     label=f'dual-shift-{mode.value}'))
    lam = refined[1:size + 1]
    lam = lam - lam.min()
    nu = float(refined[size + 1])
    if mode == BudgetMode.inequality:
        nu = max(nu, 0.0)
    logger.debug('canonical dual: nu = %.9g, max lambda = %.9g', nu, lam.max())
    return (lam, nu, float(refined[0] + instance.alpha * nu))


def solve_relaxation(instance: RmabInstance, mode: BudgetMode = BudgetMode.inequality) -> LpSolution:
    ''' Solve the stationary relaxation and its canonical dual. '''
    size = instance.n_states
    program = relaxation_program(instance, mode)
    point = optimize(program)
    y = np.clip(point.reshape(2, size).T, 0.0, None)
    x_star = y.sum(axis=1)
    x_star = x_star / x_star.sum()
    u_star = np.minimum(y[:, 1], x_star)
    gain = float(instance.r0 @ x_star + (instance.r1 - instance.r0) @ u_star)
    (lam, nu, dual_objective) = _canonical_dual(instance, gain, mode)
    return LpSolution(x_star=x_star, u_star=u_star, gain=gain, lam=lam, nu=nu, y=y,
                      mode=mode, dual_objective=dual_objective)


def lp_priority_index(solution: LpSolution, instance: RmabInstance) -> Vector:
    ''' Reduced cost of pulling: r1 - r0 + (P1 - P0) lam - nu. '''
    return instance.r1 - instance.r0 + (instance.P1 - instance.P0) @ solution.lam - solution.nu


class FiniteHorizonSolver:
    ''' Tau-step control LP of one instance.
        Constraint matrix is built once; each solve only changes x0 and the terminal weight.
        Variable order: y_0, ..., y_{tau-1} (2S each, passive block first), then x_tau. '''
    def __init__(self, instance: RmabInstance, tau: int):
        if tau < 1:
            raise ValueError(f'Horizon must be positive: {tau}')
        self.instance = instance
        self.tau = tau
        size = instance.n_states
        identity = sparse.identity(size, format='csr')
        split = sparse.hstack([identity, identity], format='csr')
        advance = -sparse.csr_array(np.hstack([instance.P0.T, instance.P1.T]))
        blocks: list[list] = [[None] * (tau + 1) for _ in range(tau + 1)]
        for step in range(tau):
            blocks[step][step] = split
            if step > 0:
                blocks[step][step - 1] = advance
        blocks[tau][tau - 1] = advance
        blocks[tau][tau] = identity
        self._A_eq = sparse.bmat(blocks, format='csr')
        selector = sparse.csr_array(np.concatenate([np.zeros(size), np.ones(size)]).reshape(1, -1))
        self._A_ub = sparse.hstack([
            sparse.kron(sparse.identity(tau), selector),
            sparse.csr_array((tau, size))
        ], format='csr')
        self._b_ub = np.full(tau, instance.alpha)
        stage = -np.concatenate([instance.r0, instance.r1])
        self._stage_cost = np.concatenate([np.tile(stage, tau), np.zeros(size)])
        logger.debug('horizon %d solver for %s: %d variables', tau, instance.name or 'instance', self.n_variables)

    @property
    def n_variables(self) -> int:
        ''' Number of LP columns. '''
        return int(self._stage_cost.shape[0])

    def program(self, x0: OccupancyVector, terminal_weight: Optional[Vector] = None) -> LinearProgram:
        ''' Program of one solve. '''
        size = self.instance.n_states
        c = self._stage_cost.copy()
        if terminal_weight is not None:
            c[-size:] = -np.asarray(terminal_weight, dtype=np.float64)
        b_eq = np.zeros(size * (self.tau + 1))
        b_eq[:size] = np.clip(np.asarray(x0, dtype=np.float64), 0.0, None)
        return LinearProgram(c, self._A_eq, b_eq, self._A_ub, self._b_ub, label=f'horizon-{self.tau}')

    def solve(self, x0: OccupancyVector, terminal_weight: Optional[Vector] = None) -> HorizonPlan:
        ''' Optimal plan from x0. '''
        size = self.instance.n_states
        program = self.program(x0, terminal_weight)
        point = np.clip(optimize(program), 0.0, None)
        blocks = point[:-size].reshape(self.tau, 2, size)
        us = blocks[:, 1, :]
        xs = np.vstack([blocks.sum(axis=1), point[-size:]])
        us = np.minimum(us, xs[:-1])
        us[us < CLAMP_TOL] = 0.0
        return HorizonPlan(
            horizon=self.tau,
            xs=xs,
            us=us,
            value=float(-(program.c @ point)),
            terminal_weight_used=terminal_weight is not None
        )

    def first_control_ranges(self, x0: OccupancyVector,
                             terminal_weight: Optional[Vector] = None) -> tuple[Vector, Vector]:
        ''' Range of u(0) over all optimal plans. '''
        size = self.instance.n_states
        program = self.program(x0, terminal_weight)
        optimum = float(program.c @ optimize(program))
        return face_ranges(program, optimum, list(range(size, 2 * size)))


def solve_finite_horizon(instance: RmabInstance, x0: OccupancyVector, tau: int,
                         terminal_weight: Optional[Vector] = None) -> HorizonPlan:
    ''' One-shot tau-step solve; see FiniteHorizonSolver for repeated solves. '''
    return FiniteHorizonSolver(instance, tau).solve(x0, terminal_weight)


def export_lp(instance: RmabInstance, path: str, mode: BudgetMode = BudgetMode.inequality) -> None:
    ''' Write the stationary relaxation as CPLEX LP text. '''
    size = instance.n_states
    problem = pulp.LpProblem('relaxation', pulp.LpMaximize)
    passive = [pulp.LpVariable(f'y_{state}_0', lowBound=0) for state in range(size)]
    active = [pulp.LpVariable(f'y_{state}_1', lowBound=0) for state in range(size)]
    problem += pulp.lpSum(
        float(instance.r0[state]) * passive[state] + float(instance.r1[state]) * active[state]
        for state in range(size)
    ), 'reward'
    for target in range(size - 1):
        inflow = pulp.lpSum(
            float(instance.P0[state, target]) * passive[state] + float(instance.P1[state, target]) * active[state]
            for state in range(size)
        )
        problem += inflow - passive[target] - active[target] == 0, f'flow_{target}'
    problem += pulp.lpSum(passive) + pulp.lpSum(active) == 1, 'mass'
    if mode == BudgetMode.equality:
        problem += pulp.lpSum(active) == instance.alpha, 'budget'
    else:
        problem += pulp.lpSum(active) <= instance.alpha, 'budget'
    problem.writeLP(path)
    logger.debug('relaxation of %s written to %s', instance.name or 'instance', path)
