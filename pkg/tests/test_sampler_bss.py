from balancedpy.sampler_bss import (
    BssConfig,
    BarrierState,
    BssProcedure,
    bss_step,
    bss_step_distribution,
    run_bss_procedure,
    dump_trace,
)
from balancedpy.erm import build_design, is_good, check_well_balanced
from balancedpy.family import BasisSpec, CoefficientVector, orthonormalize
from balancedpy.measure import Measure, WeightedSampleSet, uniform_grid, point_mass, empirical_norm, make_rng, spawn_rngs, seed_of
from balancedpy.sampler_iid import leverage_measure
from balancedpy.exceptions import RoundLimitExceeded
import numpy as np
import json
import os
import tempfile
import unittest

# Global params
seed = 9
grid = uniform_grid(201)
runs = 10
dims = [5, 10, 20]
epsilons = [0.1, 0.25]
bss_runs = 3
leverage_runs = 15
label_step = 250
label_max = 12000


class TestConfig(unittest.TestCase):
    def test_constants(self):

        config = BssConfig(0.09, 4)
        self.assertAlmostEqual(config.gamma, 0.1)
        self.assertEqual(config.round_budget, int(np.ceil(40 * 4 / config.gamma ** 2)))
        self.assertEqual(config.max_rounds, int(np.ceil(4 * 40 * 4 / config.gamma ** 2)))
        self.assertAlmostEqual(config.exit_gap, 320.0)

    def test_mid(self):

        self.assertAlmostEqual(BssConfig(0.09, 2).mid, 396.0, places=6)
        for eps, d in [(0.09, 2), (0.25, 5), (0.01, 7), (0.5, 50)]:
            config = BssConfig(eps, d)
            g = config.gamma
            self.assertTrue(np.isclose(config.mid, 2 * d * (1 - g ** 2) / g ** 2, rtol=1e-12))

    def test_gamma_clamp(self):

        self.assertAlmostEqual(BssConfig(0.25, 5).gamma, 0.1)
        self.assertAlmostEqual(BssConfig(0.25, 5, gamma_max=None).gamma, 0.5 / 3)
        self.assertAlmostEqual(BssConfig(0.01, 5).gamma, 0.1 / 3)
        self.assertEqual(BssProcedure(0.25, gamma_max=None).config(5).gamma, BssConfig(0.25, 5, gamma_max=None).gamma)

    def test_initial_state(self):

        config = BssConfig(0.25, 3)
        state = BarrierState.initial(config)
        state.check()
        self.assertAlmostEqual(state.u, -state.l)
        self.assertAlmostEqual(state.phi, 2 * 3 / state.u)


class TestStep(unittest.TestCase):
    def test_distribution_and_step(self):

        fam = orthonormalize(BasisSpec.legendre(3), grid)
        config = BssConfig(0.25, 4)
        state = BarrierState.initial(config)
        distribution = bss_step_distribution(state, fam)
        self.assertAlmostEqual(distribution.mass.sum(), 1.0)

        x, s, alpha, new_state = bss_step(state, fam, make_rng(seed), config, distribution)
        self.assertEqual(new_state.j, 1)
        self.assertGreater(new_state.u, state.u)
        self.assertGreater(new_state.l, state.l)
        self.assertAlmostEqual(alpha, config.gamma / state.phi / config.mid)
        self.assertIn(x, grid.support)
        new_state.check()


class TestProcedure(unittest.TestCase):
    def test_well_balanced_runs(self):

        for d in dims:
            fam = orthonormalize(BasisSpec.legendre(d - 1), grid)
            for eps in epsilons:
                good = []
                for rng in spawn_rngs(seed, runs):
                    S_w = run_bss_procedure(fam, eps, rng=rng)
                    report = check_well_balanced(S_w, eps)
                    self.assertTrue(report["sum_alpha_ok"])
                    self.assertTrue(report["balance_ok"])
                    self.assertTrue(S_w.info["within_budget"])
                    self.assertLessEqual(S_w.info["gap"], 9 * d / S_w.info["gamma"])
                    self.assertLessEqual(len(S_w), 50 * d / eps)

                    # Barriers at exit enclose the good interval
                    low, high = S_w.info["enclosure"]
                    self.assertGreaterEqual(low, 0.75)
                    self.assertLessEqual(high, 1.25)

                    # Stored spectrum matches the design
                    dm = build_design(fam, S_w)
                    self.assertTrue(np.allclose(dm.gram_eigs, S_w.info["gram_eigs"], atol=1e-8))
                    good.append(is_good(dm))
                self.assertGreaterEqual(np.mean(good), 0.9)

    def test_scalar_recurrence(self):

        # d = 1 constant family on a point mass: every round is deterministic
        fam = orthonormalize(BasisSpec.monomial(0), point_mass(0.3))
        S_w = run_bss_procedure(fam, 0.25, rng=make_rng(seed))

        g = 0.1
        mid = 2 * (1 - g ** 2) / g ** 2
        b, u, l = 0.0, 2 / g, -2 / g
        scales = []
        while True:
            phi = 1 / (u - b) + 1 / (b - l)
            scales.append(g / phi)
            b += g / phi
            u += g / (phi * (1 - g))
            l += g / (phi * (1 + g))
            if u - l >= 8 / g:
                break

        self.assertEqual(len(S_w), len(scales))
        self.assertTrue(np.allclose(S_w.weights, np.array(scales) / mid))
        self.assertAlmostEqual(np.sum(S_w.weights), 1.0, delta=0.02)
        self.assertAlmostEqual(S_w.info["gram_eigs"][0], np.sum(S_w.weights))

    def test_empirical_norm_on_good_execution(self):

        fam = orthonormalize(BasisSpec.legendre(4), grid)
        S_w = run_bss_procedure(fam, 0.25, rng=make_rng(seed))
        self.assertTrue(is_good(build_design(fam, S_w)))
        self.assertEqual(S_w.source_seed, seed_of(make_rng(seed)))

        rng = make_rng(seed + 1)
        for _ in range(50):
            c = rng.standard_normal(5) + 1j * rng.standard_normal(5)
            ratio = empirical_norm(fam, CoefficientVector(c), S_w) / np.linalg.norm(c) ** 2
            self.assertGreaterEqual(ratio, 0.75)
            self.assertLessEqual(ratio, 1.25)

    def test_linear_sample_size(self):

        # Rounds grow linearly in d
        rounds = []
        for d in [4, 8]:
            fam = orthonormalize(BasisSpec.legendre(d - 1), grid)
            rounds.append(run_bss_procedure(fam, 0.25, rng=make_rng(seed)).info["rounds"])
        self.assertLess(rounds[1] / rounds[0], 2.5)
        self.assertGreater(rounds[1] / rounds[0], 1.5)

    def test_round_limit(self):

        fam = orthonormalize(BasisSpec.legendre(3), grid)
        config = BssConfig(0.25, 4, max_rounds=10)
        with self.assertRaises(RoundLimitExceeded):
            run_bss_procedure(fam, 0.25, config, make_rng(seed))

    def test_deterministic_given_seed(self):

        fam = orthonormalize(BasisSpec.legendre(3), grid)
        a = run_bss_procedure(fam, 0.25, rng=make_rng(seed))
        b = run_bss_procedure(fam, 0.25, rng=make_rng(seed))
        self.assertTrue(np.array_equal(a.points, b.points))
        self.assertTrue(np.array_equal(a.weights, b.weights))

    def test_trace(self):

        fam = orthonormalize(BasisSpec.legendre(2), grid)
        trace = []
        S_w = run_bss_procedure(fam, 0.25, rng=make_rng(seed), trace=trace)
        self.assertEqual(len(trace), len(S_w))

        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "trace.jsonl")
            dump_trace(trace, path)
            with open(path) as f:
                rows = [json.loads(line) for line in f]
        self.assertEqual(len(rows), len(trace))
        self.assertEqual(set(rows[0]), {"j", "u", "l", "phi", "x", "s"})

    def test_rescale(self):

        procedure = BssProcedure(0.25, C0=4)
        inner = procedure.rescale(0.25 / 8)
        self.assertEqual(inner.epsilon, 0.25 / 8)
        self.assertEqual(inner.C0, 4)


class TestLabelCount(unittest.TestCase):
    def test_bss_against_leverage(self):

        # Frequencies k/2 on n equispaced points of [-1, 1) are exactly orthonormal, leverage d everywhere
        d, eps, n = 50, 0.5, 100
        D = Measure(-1 + 2 * np.arange(n) / n, np.full(n, 1.0 / n), label="dft")
        fam = orthonormalize(BasisSpec.fourier(np.arange(d) / 2), D)

        bss_labels = []
        for rng in spawn_rngs(seed, bss_runs):
            S_w = run_bss_procedure(fam, eps, rng=rng)
            self.assertTrue(is_good(build_design(fam, S_w)))
            bss_labels.append(len(S_w))

        # Smallest prefix of one leverage stream whose design is good
        D_F = leverage_measure(fam)
        sizes = np.arange(label_step, label_max + 1, label_step)
        leverage_labels = []
        for rng in spawn_rngs(seed + 1, leverage_runs):
            points = D_F.sample(rng, label_max)
            lev = fam.leverage(points)
            for m in sizes:
                S_w = WeightedSampleSet(points[:m], d / (m * lev[:m]), np.full(m, 1.0 / m))
                if is_good(build_design(fam, S_w)):
                    break
            leverage_labels.append(m)

        ratio = np.median(bss_labels) / np.median(leverage_labels)
        self.assertGreater(ratio, 1.0)
        self.assertLess(ratio, 4.0)


if __name__ == "__main__":
    unittest.main()
