''' Diagnostics of the relaxed problem: ergodicity, degeneracy, stability, dissipativity and bounds. '''
from __future__ import annotations
from dataclasses import dataclass, field, replace
from enum import Enum, unique
from typing import Iterator, Optional

import numpy as np
from scipy import linalg, sparse

from .lp import (
    FiniteHorizonSolver, LinearProgram, LpSolution,
    face_ranges, optimize, relaxation_program, LP_TOL
)
from .model import (
    ControlVector, DegenerateError, InstanceTooLargeError, Matrix, OccupancyVector, RmabInstance, Vector,
    check_control, drift, normalize, FEASIBILITY_TOL
)

K_MAX = 12
STABILITY_MARGIN = 1e-9
UNIQUENESS_TOL = 1e-6


@unique
class StateClass(Enum):
    ''' Role of a state at the relaxed fixed point. '''
    empty = 'empty'
    passive = 'passive'
    active = 'active'
    interior = 'interior'


@dataclass(frozen=True)
class ErgodicityReport:
    ''' Smallest k with a positive coupling coefficient rho_k. '''
    k: int
    rho_k: float
    satisfied: bool

    @property
    def constant(self) -> float:
        ''' k / rho_k, infinite when unsatisfied. '''
        return self.k / self.rho_k if self.satisfied else float('inf')


@dataclass(frozen=True)
class StabilityReport:
    ''' Classification of the fixed point and spectrum of the linearized closed loop. '''
    classes: list[StateClass]
    i_star: Optional[int]
    nondegenerate: bool
    P_star: Optional[Matrix] = None
    eigen_moduli: list[float] = field(default_factory=list)
    stable: Optional[bool] = None


@dataclass(frozen=True)
class GapBound:
    ''' Right-hand side of the finite N optimality gap guarantee. '''
    epsilon: float
    tau_used: int
    n_arms: int
    rounding_term: float
    concentration_term: float
    bound: float


def _rho_levels(instance: RmabInstance, k_max: int) -> Iterator[tuple[int, float]]:
    ''' rho_1, ..., rho_{k_max}; products of all action sequences are extended one step at a time. '''
    if k_max > K_MAX:
        raise InstanceTooLargeError(f'k = {k_max} exceeds the enumeration limit {K_MAX}')
    products = np.stack([np.eye(instance.n_states)])
    passive = np.eye(instance.n_states)
    for k in range(1, k_max + 1):
        products = np.concatenate([products @ instance.P0, products @ instance.P1])
        passive = passive @ instance.P0
        overlap = np.minimum(products[:, :, None, :], passive[None, None, :, :]).sum(axis=-1)
        yield (k, float(overlap.min()))


def compute_rho(instance: RmabInstance, k: int) -> float:
    ''' Worst one-shot coupling probability after k steps between any action sequence and all-passive. '''
    if k < 1:
        raise ValueError(f'k must be positive: {k}')
    levels = list(_rho_levels(instance, k))
    return levels[-1][1]


def find_k(instance: RmabInstance, k_max: int = K_MAX) -> ErgodicityReport:
    ''' Smallest k <= k_max with rho_k > 0. '''
    last = ErgodicityReport(k_max, 0.0, False)
    for (k, rho) in _rho_levels(instance, k_max):
        if rho > 0.0:
            return ErgodicityReport(k, rho, True)
        last = ErgodicityReport(k, rho, False)
    return last


def check_nondegenerate(solution: LpSolution, tol: float = LP_TOL) -> StabilityReport:
    ''' Classify states by (x*, u*); non-degenerate iff full support and exactly one interior state. '''
    classes = []
    for (x, u) in zip(solution.x_star, solution.u_star):
        if x < tol:
            classes.append(StateClass.empty)
        elif u < tol:
            classes.append(StateClass.passive)
        elif x - u < tol:
            classes.append(StateClass.active)
        else:
            classes.append(StateClass.interior)
    interior = [state for (state, role) in enumerate(classes) if role == StateClass.interior]
    nondegenerate = StateClass.empty not in classes and len(interior) == 1
    return StabilityReport(
        classes=classes,
        i_star=interior[0] if len(interior) == 1 else None,
        nondegenerate=nondegenerate
    )


def build_p_star_and_spectrum(instance: RmabInstance, report: StabilityReport) -> StabilityReport:
    ''' Linearized closed loop at the fixed point and its eigenvalue moduli. '''
    if not report.nondegenerate or report.i_star is None:
        raise DegenerateError('Stability matrix requires a non-degenerate fixed point')
    pivot = report.i_star
    P_star = np.array(instance.P0, dtype=np.float64)
    for (state, role) in enumerate(report.classes):
        if role == StateClass.active:
            P_star[state] = instance.P1[state] - instance.P1[pivot] + instance.P0[pivot]
    moduli = sorted((float(value) for value in np.abs(linalg.eigvals(P_star))), reverse=True)
    stable = all(value < 1.0 - STABILITY_MARGIN for value in moduli[1:])
    return replace(report, P_star=P_star, eigen_moduli=moduli, stable=stable)


def rotated_cost(instance: RmabInstance, solution: LpSolution,
                 x: OccupancyVector, u: ControlVector) -> float:
    ''' g* - R(x, u) + lam.x - lam.Phi(x, u); nonnegative for inequality multipliers. '''
    u = check_control(instance, x, u)
    x = np.asarray(x, dtype=np.float64)
    gained = float(instance.r0 @ x + (instance.r1 - instance.r0) @ u)
    return solution.gain - gained + float(solution.lam @ x) - float(solution.lam @ drift(instance, x, u))


def min_rotated_cost(instance: RmabInstance, solution: LpSolution) -> float:
    ''' Minimum of the rotated cost over all feasible (x, u). '''
    lam = solution.lam
    passive = -instance.r0 + lam - instance.P0 @ lam
    active = -instance.r1 + lam - instance.P1 @ lam
    size = instance.n_states
    program = LinearProgram(
        c=np.concatenate([passive, active]),
        A_eq=sparse.csr_array(np.ones((1, 2 * size))),
        b_eq=np.array([1.0]),
        A_ub=sparse.csr_array(np.concatenate([np.zeros(size), np.ones(size)]).reshape(1, -1)),
        b_ub=np.array([instance.alpha]),
        label='rotated-cost'
    )
    point = optimize(program)
    return solution.gain + float(program.c @ point)


def sample_feasible(instance: RmabInstance, rng: np.random.Generator,
                    size: int) -> tuple[np.ndarray, np.ndarray]:
    ''' Random feasible pairs: x ~ Dirichlet(1), u ~ Uniform(0, x) scaled down into the budget.
        ::returns:: (xs, us) of shape (size, S) '''
    xs = rng.dirichlet(np.ones(instance.n_states), size=size)
    us = rng.uniform(0.0, xs)
    totals = us.sum(axis=1)
    over = totals > instance.alpha
    us[over] *= (instance.alpha / totals[over])[:, None]
    return (xs, np.minimum(us, xs))


class HorizonBias:
    ''' Finite horizon surrogate L_tau(x) = tau g* + lam.x - W_tau(x) with terminal weight lam. '''
    def __init__(self, instance: RmabInstance, solution: LpSolution):
        self.instance = instance
        self.solution = solution
        self._solvers: dict[int, FiniteHorizonSolver] = {}

    def _solver(self, tau: int) -> FiniteHorizonSolver:
        if tau not in self._solvers:
            self._solvers[tau] = FiniteHorizonSolver(self.instance, tau)
        return self._solvers[tau]

    def cost(self, x: OccupancyVector, tau: int) -> float:
        ''' L_tau(x). '''
        plan = self._solver(tau).solve(x, self.solution.lam)
        return tau * self.solution.gain + float(self.solution.lam @ np.asarray(x)) - plan.value

    def cauchy_gap(self, xs: np.ndarray, tau: int, tau_prime: int) -> float:
        ''' max over xs of |L_tau'(x) - L_tau(x)|. '''
        return max(abs(self.cost(x, tau_prime) - self.cost(x, tau)) for x in xs)


def horizon_cost(instance: RmabInstance, solution: LpSolution, x: OccupancyVector, tau: int) -> float:
    ''' L_tau(x) for a single point. '''
    return HorizonBias(instance, solution).cost(x, tau)


def bias_cauchy_gap(instance: RmabInstance, solution: LpSolution, xs: np.ndarray,
                    tau: int, tau_prime: int) -> float:
    ''' Largest change of L between two horizons over the given points. '''
    return HorizonBias(instance, solution).cauchy_gap(xs, tau, tau_prime)


def theorem1_bound(report: ErgodicityReport, alpha: float, n_states: int, n_arms: int,
                   epsilon: float = 0.0, tau_used: int = 0) -> GapBound:
    ''' Upper bound on g* minus the gain of the receding horizon policy with N arms.
        Stated for rewards in [0, 1]. '''
    if not report.satisfied or report.rho_k <= 0.0:
        raise ValueError(f'Bound needs rho_k > 0, got rho_{report.k} = {report.rho_k}')
    constant = report.constant
    factor = constant * (3.0 + 2.0 * alpha * constant)
    fraction = max(alpha * n_arms - np.floor(alpha * n_arms + FEASIBILITY_TOL), 0.0) / n_arms
    rounding_term = (2.0 * factor + 1.0) * fraction
    concentration_term = factor * np.sqrt(n_states / n_arms)
    return GapBound(
        epsilon=epsilon,
        tau_used=tau_used,
        n_arms=n_arms,
        rounding_term=float(rounding_term),
        concentration_term=float(concentration_term),
        bound=float(2.0 * epsilon + rounding_term + concentration_term)
    )


def lambda_bound(report: ErgodicityReport, instance: RmabInstance) -> float:
    ''' Span bound (k / rho)(1 + alpha k / rho), scaled to the reward range of the instance. '''
    if not report.satisfied:
        return float('inf')
    (_, scale, _) = normalize(instance)
    constant = report.constant
    return scale * constant * (1.0 + instance.alpha * constant)


def lambda_bound_check(solution: LpSolution, report: ErgodicityReport, instance: RmabInstance) -> bool:
    ''' True iff the min-shifted multipliers respect the span bound. '''
    return float(solution.lam.max()) <= lambda_bound(report, instance) + LP_TOL


def relaxation_is_unique(instance: RmabInstance, solution: LpSolution) -> bool:
    ''' Every coordinate of y is pinned on the optimal face. '''
    program = relaxation_program(instance, solution.mode)
    size = instance.n_states
    (lows, highs) = face_ranges(program, -solution.gain, list(range(2 * size)))
    return bool(np.all(highs - lows < UNIQUENESS_TOL))


def first_control_is_unique(instance: RmabInstance, x: OccupancyVector, tau: int) -> bool:
    ''' Every optimal tau-step plan from x starts with the same control. '''
    (lows, highs) = FiniteHorizonSolver(instance, tau).first_control_ranges(x)
    return bool(np.all(highs - lows < UNIQUENESS_TOL))


def fixed_point_residual(instance: RmabInstance, solution: LpSolution) -> float:
    ''' |Phi(x*, u*) - x*|_1. '''
    return float(np.abs(drift(instance, solution.x_star, solution.u_star) - solution.x_star).sum())


def index_of_pivot(index: Vector, report: StabilityReport) -> Optional[float]:
    ''' LP index at the interior state, close to zero by complementary slackness. '''
    if report.i_star is None:
        return None
    return float(index[report.i_star])
