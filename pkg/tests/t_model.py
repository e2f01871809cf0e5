''' Unit tests: model. '''
import unittest

import numpy as np

from lpupdate import (
    BudgetMode, InfeasibleControlError, RmabInstance, SystemState,
    builtin, check_control, drift, normalize, reward, validate
)


def _two_state(alpha: float = 0.5) -> RmabInstance:
    return RmabInstance(
        P0=[[0.5, 0.5], [0.3, 0.7]],
        P1=[[0.9, 0.1], [0.6, 0.4]],
        r0=[0.0, 0.2],
        r1=[0.5, 1.0],
        alpha=alpha
    )


class TestInstance(unittest.TestCase):
    ''' Test instance invariants. '''
    def test_validate(self):
        self.assertEqual(validate(_two_state()), [])

        broken = RmabInstance(P0=[[0.5, 0.4], [0.3, 0.7]], P1=np.eye(2), r0=[0, 0], r1=[1, 1], alpha=0.5)
        violations = validate(broken)
        self.assertEqual(len(violations), 1)
        self.assertIn('P0 row 0', violations[0])

        self.assertEqual(len(validate(_two_state(alpha=0.0))), 1)

        shape = RmabInstance(P0=np.eye(3), P1=np.eye(2), r0=[0, 0], r1=[1, 1], alpha=0.5)
        self.assertIn('shape', validate(shape)[0])


    def test_budget(self):
        instance = _two_state(alpha=0.5)
        self.assertEqual(instance.budget(39), 19)
        self.assertEqual(instance.budget(40), 20)
        self.assertEqual(instance.with_alpha(0.3).budget(10), 3)


    def test_readonly(self):
        instance = _two_state()
        with self.assertRaises(ValueError):
            instance.P0[0, 0] = 1.0


    def test_budget_mode(self):
        self.assertEqual(BudgetMode.from_text('Equality'), BudgetMode.equality)
        with self.assertRaises(ValueError):
            BudgetMode.from_text('sometimes')


class TestNormalize(unittest.TestCase):
    ''' Test reward normalization. '''
    def test_identity(self):
        instance = RmabInstance(P0=np.eye(2), P1=np.eye(2), r0=[0.0, 0.5], r1=[1.0, 0.2], alpha=0.5)
        (result, scale, shift) = normalize(instance)
        self.assertEqual((scale, shift), (1.0, 0.0))
        np.testing.assert_allclose(result.r1, instance.r1)


    def test_span(self):
        instance = builtin('random8-seed3').instance
        (result, scale, shift) = normalize(instance)
        self.assertAlmostEqual(scale, 3.212 - 0.059)
        self.assertAlmostEqual(shift, 0.059)
        self.assertAlmostEqual(float(result.r1.max()), 1.0)
        self.assertAlmostEqual(float(min(result.r0.min(), result.r1.min())), 0.0)


    def test_constant(self):
        instance = RmabInstance(P0=np.eye(2), P1=np.eye(2), r0=[0.7, 0.7], r1=[0.7, 0.7], alpha=0.5)
        (result, scale, shift) = normalize(instance)
        self.assertEqual(scale, 1.0)
        self.assertAlmostEqual(shift, 0.7)
        np.testing.assert_allclose(result.r0, 0.0, atol=1e-15)


    def test_affine_consistency(self):
        instance = builtin('random8-seed3').instance
        (result, scale, shift) = normalize(instance)
        rng = np.random.default_rng(5)
        for _ in range(20):
            x = rng.dirichlet(np.ones(8))
            u = x * rng.uniform(0.0, 1.0, 8) * 0.5
            expected = (reward(instance, x, u) - shift) / scale
            self.assertAlmostEqual(reward(result, x, u), expected, delta=1e-12)


class TestDrift(unittest.TestCase):
    ''' Test mean field transition and reward. '''
    def test_identical_kernels(self):
        kernel = np.array([[0.2, 0.8], [0.6, 0.4]])
        instance = RmabInstance(P0=kernel, P1=kernel, r0=[0, 0], r1=[1, 1], alpha=0.5)
        x = np.array([0.3, 0.7])
        np.testing.assert_allclose(drift(instance, x, [0.3, 0.2]), x @ kernel)
        np.testing.assert_allclose(drift(instance, x, [0.0, 0.0]), x @ kernel)


    def test_stationary(self):
        instance = _two_state()
        stationary = np.array([0.375, 0.625])
        np.testing.assert_allclose(drift(instance, stationary, [0.0, 0.0]), stationary, atol=1e-12)


    def test_chen(self):
        instance = builtin('chen3').instance
        expected = 0.6 * instance.P0[0] + 0.4 * instance.P1[0]
        np.testing.assert_allclose(drift(instance, [1.0, 0.0, 0.0], [0.4, 0.0, 0.0]), expected, atol=1e-12)


    def test_simplex_and_lipschitz(self):
        instance = builtin('random8-seed3').instance
        rng = np.random.default_rng(11)
        for _ in range(500):
            x = rng.dirichlet(np.ones(8))
            u = x * rng.uniform(0.0, 1.0, 8)
            u *= min(1.0, instance.alpha / u.sum())
            y = rng.dirichlet(np.ones(8))
            v = y * rng.uniform(0.0, 1.0, 8)
            v *= min(1.0, instance.alpha / v.sum())
            image = drift(instance, x, u)
            self.assertAlmostEqual(float(image.sum()), 1.0, delta=1e-9)
            self.assertGreaterEqual(float(image.min()), -1e-12)
            distance = np.abs(image - drift(instance, y, v)).sum()
            self.assertLessEqual(distance, 2.0 * (np.abs(x - y).sum() + np.abs(u - v).sum()) + 1e-12)


    def test_reward(self):
        instance = _two_state(alpha=1.0)
        x = np.array([0.4, 0.6])
        self.assertAlmostEqual(reward(instance, x, [0.0, 0.0]), 0.12)
        self.assertAlmostEqual(reward(instance, x, x), 0.8)


    def test_infeasible(self):
        instance = _two_state(alpha=0.5)
        x = np.array([0.4, 0.6])
        with self.assertRaises(InfeasibleControlError):
            drift(instance, x, [0.5, 0.0])
        with self.assertRaises(InfeasibleControlError):
            reward(instance, x, [0.3, 0.3])
        with self.assertRaises(InfeasibleControlError):
            check_control(instance, x, [-0.1, 0.0])
        with self.assertRaises(InfeasibleControlError):
            check_control(instance, x, [0.1, 0.1], BudgetMode.equality)
        clamped = check_control(instance, x, [0.4 + 1e-11, 0.0])
        self.assertLessEqual(clamped[0], 0.4)


class TestSystemState(unittest.TestCase):
    ''' Test integer occupancy. '''
    def test_counts(self):
        state = SystemState([3, 0, 7])
        self.assertEqual(state.n_arms, 10)
        self.assertEqual(state.n_states, 3)
        self.assertEqual(state.key(), (3, 0, 7))
        np.testing.assert_allclose(state.occupancy(), [0.3, 0.0, 0.7])
        with self.assertRaises(ValueError):
            SystemState([2, -1])
        with self.assertRaises(ValueError):
            SystemState([0, 0])


    def test_all_in(self):
        self.assertEqual(SystemState.all_in(1, 3, 5).key(), (0, 5, 0))


    def test_nearest(self):
        self.assertEqual(SystemState.nearest([0.25, 0.25, 0.5], 4).key(), (1, 1, 2))
        self.assertEqual(SystemState.nearest([1 / 3, 1 / 3, 1 / 3], 10).n_arms, 10)
        self.assertEqual(SystemState.nearest([0.14, 0.26, 0.6], 10).key(), (1, 3, 6))
