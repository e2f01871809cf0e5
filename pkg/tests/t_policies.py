''' Unit tests: policies. '''
import unittest
from collections import Counter

import numpy as np

from lpupdate import (
    ActionAllocation, FtvaState, InfeasibleControlError, LpSolution, PolicyKind, RmabInstance, SystemState,
    builtin, ftva_action, lp_priority_action, lp_update_action, make_policy, round_control, solve_relaxation
)
from lpupdate.policies import LpUpdatePolicy, single_arm_policy


def _uniform(size: int, alpha: float) -> RmabInstance:
    kernel = np.full((size, size), 1.0 / size)
    return RmabInstance(P0=kernel, P1=kernel, r0=np.zeros(size), r1=np.arange(size, dtype=float), alpha=alpha)


def _solution(x_star, u_star) -> LpSolution:
    x_star = np.asarray(x_star, dtype=float)
    u_star = np.asarray(u_star, dtype=float)
    return LpSolution(x_star=x_star, u_star=u_star, gain=0.0, lam=np.zeros(len(x_star)), nu=0.0,
                      y=np.column_stack([x_star - u_star, u_star]))


class TestRounding(unittest.TestCase):
    ''' Test randomized rounding against the worked table with N = 39, alpha = 0.5. '''
    def setUp(self):
        self.instance = _uniform(4, 0.5)
        self.state = SystemState([10, 10, 10, 9])
        self.index = np.array([3.0, 0.0, 2.0, 1.0])


    def _pulls(self, scaled, draws: int = 100000) -> np.ndarray:
        rng = np.random.default_rng(2024)
        u = np.asarray(scaled, dtype=float) / 39
        return np.array([round_control(self.instance, u, self.state, rng, self.index).pulls for _ in range(draws)])


    def _distribution(self, scaled, draws: int = 100000) -> dict[tuple[int, ...], float]:
        outcomes = Counter(tuple(int(value) for value in row) for row in self._pulls(scaled, draws))
        return {key: count / draws for (key, count) in outcomes.items()}


    def test_excess_removed(self):
        self.assertEqual(self._distribution([10, 9.5, 0, 0], draws=50), {(10, 9, 0, 0): 1.0})


    def test_fractional_spread(self):
        frequencies = self._distribution([10, 5.7, 0.2, 0])
        self.assertEqual(set(frequencies), {(10, 6, 0, 0), (10, 5, 1, 0), (10, 5, 0, 0)})
        self.assertAlmostEqual(frequencies[(10, 6, 0, 0)], 0.7, delta=0.01)
        self.assertAlmostEqual(frequencies[(10, 5, 1, 0)], 0.2, delta=0.01)
        self.assertAlmostEqual(frequencies[(10, 5, 0, 0)], 0.1, delta=0.01)


    def test_excess_then_spread(self):
        frequencies = self._distribution([10, 4.9, 4.6, 0])
        self.assertEqual(set(frequencies), {(10, 5, 4, 0), (10, 4, 5, 0)})
        self.assertAlmostEqual(frequencies[(10, 5, 4, 0)], 0.4, delta=0.01)
        self.assertAlmostEqual(frequencies[(10, 4, 5, 0)], 0.6, delta=0.01)


    def test_unbiased(self):
        cases = (
            ([10, 5.7, 0.2, 0], [10, 5.7, 0.2, 0]),
            ([10, 4.9, 4.6, 0], [10, 4.4, 4.6, 0]),
            ([3.3, 2.25, 1.5, 0.8], [3.3, 2.25, 1.5, 0.8])
        )
        for (scaled, expected) in cases:
            pulls = self._pulls(scaled, draws=20000)
            error = np.abs(pulls.mean(axis=0) - np.array(expected))
            standard = pulls.std(axis=0) / np.sqrt(len(pulls))
            self.assertTrue(np.all(error <= 3.0 * standard + 1e-12), f'{scaled}: {error} vs {standard}')


    def test_budget_safety(self):
        rng = np.random.default_rng(7)
        instance = _uniform(5, 0.35)
        for _ in range(300):
            counts = rng.multinomial(rng.integers(1, 60), np.full(5, 0.2))
            if counts.sum() == 0:
                continue
            state = SystemState(counts)
            x = state.occupancy()
            u = x * rng.uniform(0.0, 1.0, 5)
            u *= min(1.0, instance.alpha / max(u.sum(), 1e-12))
            allocation = round_control(instance, u, state, rng)
            allocation.check(state, instance.budget(state.n_arms))
            target = min(float((u * state.n_arms).sum()), instance.budget(state.n_arms))
            support = {int(np.floor(target + 1e-9)), int(np.ceil(target - 1e-9))}
            self.assertIn(allocation.total, support)


    def test_infeasible(self):
        rng = np.random.default_rng(0)
        with self.assertRaises(InfeasibleControlError):
            round_control(self.instance, np.array([0.5, 0.0, 0.0, 0.0]), self.state, rng)


class TestPriority(unittest.TestCase):
    ''' Test LP-priority allocation. '''
    def setUp(self):
        self.instance = _uniform(3, 0.5)
        self.state = SystemState([4, 4, 2])


    def _assert_pulls(self, index: list[float], expected: list[int], threshold: bool = False):
        allocation = lp_priority_action(self.instance, self.state, np.array(index), threshold=threshold)
        self.assertEqual(allocation.pulls.tolist(), expected)


    def test_negative_indices(self):
        allocation = lp_priority_action(self.instance, self.state, np.array([-1.0, -2.0, -3.0]))
        self.assertEqual(allocation.pulls.tolist(), [4, 1, 0])
        allocation = lp_priority_action(self.instance, self.state, np.array([-1.0, -2.0, -3.0]), threshold=True)
        self.assertEqual(allocation.pulls.tolist(), [0, 0, 0])


    def test_threshold_partial(self):
        allocation = lp_priority_action(self.instance, self.state, np.array([-1.0, 0.0, 2.0]), threshold=True)
        self.assertEqual(allocation.pulls.tolist(), [0, 3, 2])


    def test_full_budget(self):
        allocation = lp_priority_action(self.instance.with_alpha(1.0), self.state, np.array([0.1, -0.2, 0.3]))
        self.assertEqual(allocation.pulls.tolist(), [4, 4, 2])


    def test_ties(self):
        self._assert_pulls([1.0, 1.0, 0.0], [4, 1, 0])
        self._assert_pulls([0.0, 1.0, 1.0 + 1e-12], [0, 4, 1])
        self._assert_pulls([2.0, 2.0, 2.0], [4, 1, 0], threshold=True)


class TestLpUpdate(unittest.TestCase):
    ''' Test the receding horizon policy. '''
    def test_one_step_greedy(self):
        instance = builtin('chen3').instance
        state = SystemState([20, 30, 50])
        allocation = lp_update_action(instance, state, 1, np.random.default_rng(0))
        self.assertEqual(allocation.pulls.tolist(), [20, 20, 0])


    def test_memo(self):
        instance = builtin('chen3').instance
        solution = solve_relaxation(instance)
        policy = make_policy(PolicyKind.lp_update, instance, solution, 5)
        assert isinstance(policy, LpUpdatePolicy)
        rng = np.random.default_rng(1)
        state = SystemState([5, 3, 2])
        first = policy.act(state, rng)
        second = policy.act(state, rng)
        self.assertEqual(policy.cache_size, 1)
        self.assertEqual(policy.tau, 5)
        self.assertLessEqual(first.total, instance.budget(10))
        self.assertLessEqual(second.total, instance.budget(10))


    def test_kinds(self):
        instance = builtin('chen3').instance
        solution = solve_relaxation(instance)
        for kind in PolicyKind:
            self.assertEqual(make_policy(kind, instance, solution, 3).kind, kind)
        self.assertEqual(PolicyKind.from_text('LP-Priority-Threshold'), PolicyKind.lp_priority_threshold)
        with self.assertRaises(ValueError):
            PolicyKind.from_text('whittle')


class TestFtva(unittest.TestCase):
    ''' Test follow-the-virtual-advice. '''
    def test_single_arm_policy(self):
        instance = builtin('chen3').instance
        solution = solve_relaxation(instance)
        table = single_arm_policy(solution)
        np.testing.assert_allclose(table.sum(axis=1), 1.0)
        np.testing.assert_allclose(table[:, 1], solution.u_star / solution.x_star, atol=1e-9)
        table = single_arm_policy(_solution([0.5, 0.5, 0.0], [0.25, 0.0, 0.0]))
        self.assertEqual(table[2].tolist(), [1.0, 0.0])


    def test_start(self):
        ftva = FtvaState.start(_solution([0.5, 0.5], [0.2, 0.0]), SystemState([2, 3]))
        self.assertEqual(ftva.real_states.tolist(), [0, 0, 1, 1, 1])
        self.assertEqual(ftva.virtual_states.tolist(), ftva.real_states.tolist())
        self.assertEqual(ftva.real_counts(2).tolist(), [2, 3])


    def test_budget_admission(self):
        instance = _uniform(2, 0.5)
        state = SystemState([2, 2])
        ftva = FtvaState.start(_solution([0.5, 0.5], [0.5, 0.5]), state)
        (allocation, plan) = ftva_action(instance, state, ftva, np.random.default_rng(3))
        self.assertEqual(plan.virtual_actions.tolist(), [1, 1, 1, 1])
        self.assertEqual(plan.real_actions.tolist(), [1, 1, 0, 0])
        self.assertEqual(plan.coupled.tolist(), [True, True, False, False])
        self.assertEqual(allocation.pulls.tolist(), [2, 0])


    def test_all_coupled(self):
        instance = _uniform(2, 1.0)
        state = SystemState([3, 3])
        ftva = FtvaState.start(_solution([0.5, 0.5], [0.25, 0.1]), state)
        (_, plan) = ftva_action(instance, state, ftva, np.random.default_rng(4))
        self.assertTrue(bool(plan.coupled.all()))


    def test_never_pull(self):
        instance = _uniform(2, 0.5)
        state = SystemState([4, 6])
        ftva = FtvaState.start(_solution([0.4, 0.6], [0.0, 0.0]), state)
        rng = np.random.default_rng(5)
        for _ in range(10):
            (allocation, _) = ftva_action(instance, state, ftva, rng)
            self.assertEqual(allocation.total, 0)


class TestAllocation(unittest.TestCase):
    ''' Test allocation checks. '''
    def test_check(self):
        state = SystemState([2, 3])
        ActionAllocation([1, 1]).check(state, 2)
        with self.assertRaises(InfeasibleControlError):
            ActionAllocation([3, 0]).check(state, 5)
        with self.assertRaises(InfeasibleControlError):
            ActionAllocation([2, 2]).check(state, 3)
        np.testing.assert_allclose(ActionAllocation([1, 1]).fraction(5), [0.2, 0.2])
