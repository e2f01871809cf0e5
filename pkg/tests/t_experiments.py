''' Monte Carlo checks of policy performance; run with LPUPDATE_SLOW=1. '''
import os
import unittest

import numpy as np

from lpupdate import (
    PolicyKind, SimConfig, builtin, estimate_gain, exact_small_oracle, generate_random, run_replications,
    solve_relaxation
)
from lpupdate.simulator import GainEstimate

SLOW = os.environ.get('LPUPDATE_SLOW') == '1'


def _gain(instance, policy: PolicyKind, n_arms: int, tau: int = 10, replications: int = 20,
          horizon: int = 1000, warmup: int = 200, seed: int = 0) -> GainEstimate:
    config = SimConfig(n_arms=n_arms, horizon=horizon, warmup=warmup, replications=replications,
                       seed=seed, tau=tau, policy=policy)
    return estimate_gain(run_replications(instance, config), warmup)


def _width(estimate: GainEstimate) -> float:
    return estimate.half_width if estimate.half_width is not None else 0.0


@unittest.skipUnless(SLOW, 'set LPUPDATE_SLOW=1 to run simulation experiments')
class TestPolicyOrdering(unittest.TestCase):
    ''' LP-update against the baselines at N = 100. '''
    def test_update_beats_ftva(self):
        for identifier in ('hong8', 'chen3'):
            entry = builtin(identifier)
            tau = entry.tau or 10
            update = _gain(entry.instance, PolicyKind.lp_update, 100, tau)
            ftva = _gain(entry.instance, PolicyKind.ftva, 100, tau)
            self.assertGreater(update.mean - ftva.mean, _width(update) + _width(ftva), identifier)


    def test_update_matches_priority(self):
        instance = builtin('random8-seed3').instance
        update = _gain(instance, PolicyKind.lp_update, 100)
        priority = _gain(instance, PolicyKind.lp_priority, 100)
        self.assertLessEqual(abs(update.mean - priority.mean), _width(update) + _width(priority))


    def test_hong_positive(self):
        instance = builtin('hong8').instance
        ftva = _gain(instance, PolicyKind.ftva, 100)
        update = _gain(instance, PolicyKind.lp_update, 100)
        self.assertGreater(ftva.mean, 0.0)
        self.assertLess(ftva.mean, update.mean)


    def test_hong_priority_starves(self):
        instance = builtin('hong8').instance
        g_star = solve_relaxation(instance).gain
        priority = _gain(instance, PolicyKind.lp_priority, 100)
        self.assertLess(priority.mean + _width(priority), 0.4 * g_star)


@unittest.skipUnless(SLOW, 'set LPUPDATE_SLOW=1 to run simulation experiments')
class TestLookahead(unittest.TestCase):
    ''' The lookahead barely matters once it is a few steps long. '''
    def test_tau_insensitive(self):
        for seed in range(10):
            instance = generate_random(8, seed)
            gains = [_gain(instance, PolicyKind.lp_update, 50, tau, replications=20, horizon=1000, warmup=200)
                     for tau in (3, 5, 10)]
            for first in range(3):
                for second in range(first + 1, 3):
                    difference = abs(gains[first].mean - gains[second].mean)
                    self.assertLessEqual(difference, _width(gains[first]) + _width(gains[second]), f'seed {seed}')


@unittest.skipUnless(SLOW, 'set LPUPDATE_SLOW=1 to run simulation experiments')
class TestScaling(unittest.TestCase):
    ''' Gap to the relaxation as N grows. '''
    def test_chen_approaches_relaxation(self):
        instance = builtin('chen3').instance
        g_star = solve_relaxation(instance).gain
        estimate = _gain(instance, PolicyKind.lp_update, 100, tau=50)
        self.assertLessEqual(estimate.mean, g_star + _width(estimate))
        self.assertGreater(estimate.mean, 0.9 * g_star)


    def test_gap_shrinks(self):
        instance = builtin('random8-seed3').instance
        g_star = solve_relaxation(instance).gain
        small = _gain(instance, PolicyKind.lp_update, 50)
        large = _gain(instance, PolicyKind.lp_update, 200)
        self.assertGreater((g_star - small.mean) - (g_star - large.mean), _width(small) + _width(large))
        self.assertLess(g_star - large.mean, 0.05 * g_star)


    def test_small_n_below_oracle(self):
        instance = builtin('chen3').instance
        for n_arms in (1, 2, 3, 4):
            oracle = exact_small_oracle(instance, n_arms)
            self.assertLessEqual(oracle, solve_relaxation(instance).gain + 1e-7)
            estimate = _gain(instance, PolicyKind.lp_update, n_arms, tau=50, replications=20, horizon=1000, warmup=200)
            self.assertLessEqual(estimate.mean, oracle + _width(estimate), f'N = {n_arms}')


    def test_passive_single_arm(self):
        instance = builtin('chen3').instance
        (values, vectors) = np.linalg.eig(instance.P0.T)
        stationary = np.real(vectors[:, np.argmin(np.abs(values - 1.0))])
        stationary /= stationary.sum()
        self.assertAlmostEqual(exact_small_oracle(instance, 1), float(stationary @ instance.r0), delta=1e-9)
