from balancedpy.sparseft import (
    SparseFourierSignal,
    knee,
    fourier_weight_density,
    merge_frequencies,
    sup_ratio,
    verify_weight_bound,
    estimate_kappa,
    reweighted_kappa,
    sparse_ft_sample_count,
    sample_fourier,
    frequency_net,
    candidate_residual,
    recover_sparse_ft,
    signal_distance,
)
from balancedpy.measure import geometric_grid, make_rng, seed_of
from balancedpy.tools import cell_widths
from balancedpy.exceptions import InvalidK, NetTooLarge
import numpy as np
import unittest

# Global params
seed = 13
grid_size = 1000
density = fourier_weight_density(1, grid_size)
num_samples = 200
num_freq_draws = 30
ks = [2, 3, 4, 6]


class TestDensity(unittest.TestCase):
    def test_integrates_to_one(self):

        for k in [1, 2, 8]:
            D_F = fourier_weight_density(k, grid_size)
            x, values = D_F.grid.density_table()
            self.assertAlmostEqual(np.sum(values * cell_widths(x)), 1.0)
            self.assertTrue(np.allclose(values, values[::-1]))

    def test_profile(self):

        D_F = fourier_weight_density(4, grid_size)
        self.assertAlmostEqual(D_F.knee, knee(4))

        # Grows like 1 / (1 - |x|) up to the knee, flat beyond
        self.assertAlmostEqual(D_F.density(0.5) / D_F.density(0.0), 2.0)
        self.assertAlmostEqual(D_F.density(0.99999), D_F.density(1.0))
        self.assertGreater(D_F.density(0.9), D_F.density(0.5))

    def test_k_one_uses_k_two_shape(self):

        self.assertAlmostEqual(density.c, fourier_weight_density(2, grid_size).c)

    def test_bad_arguments(self):

        with self.assertRaises(InvalidK):
            fourier_weight_density(0)
        with self.assertRaises(ValueError):
            fourier_weight_density(2, grid_size=100)


class TestWeightBound(unittest.TestCase):
    def test_sup_ratio_trace_identity(self):

        # E_D sup_ratio = number of distinct frequencies
        D = density.uniform
        ratio = sup_ratio([-1.3, 0.2, 2.0], D.support, D)
        self.assertAlmostEqual(float(np.sum(D.mass * ratio)), 3.0, places=6)

    def test_merge(self):

        self.assertTrue(np.allclose(merge_frequencies([1.0, 0.0, 1.0 + 1e-12]), [0.0, 1.0]))

    def test_constant_does_not_grow(self):

        rng = make_rng(seed)
        D_grid = geometric_grid(grid_size)
        constants = [verify_weight_bound(k, num_freq_draws, rng=rng, D_grid=D_grid)["max_ratio_constant"] for k in ks]
        self.assertTrue(np.all(np.isfinite(constants)))

        # Least-squares slope over k, relative to the mean
        slope = np.polyfit(ks, constants, 1)[0]
        self.assertLessEqual(slope / np.mean(constants), 0.1)

    def test_kappa(self):

        for k in [2, 3]:
            D_F = fourier_weight_density(k, grid_size)
            self.assertGreaterEqual(estimate_kappa(k, D_F, 10, make_rng(seed)), k - 1e-6)
            self.assertGreaterEqual(reweighted_kappa(k, D_F, 10, make_rng(seed)), k - 1e-6)
        with self.assertRaises(InvalidK):
            verify_weight_bound(1)


class TestSampling(unittest.TestCase):
    def test_sample_count(self):

        self.assertEqual(sparse_ft_sample_count(1, 100, 1, 0.1), int(np.ceil(1 + np.log(1000))))

    def test_weights(self):

        samples = sample_fourier(density, 4000, make_rng(seed), T=2.0)
        self.assertTrue(np.all(np.abs(samples.points) <= 2.0))
        self.assertAlmostEqual(np.sum(samples.weights), 1.0, delta=0.1)
        self.assertEqual(samples.source_seed, seed_of(make_rng(seed)))

    def test_net(self):

        net = frequency_net(1.0, 0.25)
        self.assertTrue(np.allclose(net, [-1, -0.75, -0.5, -0.25, 0, 0.25, 0.5, 0.75, 1]))


class TestRecovery(unittest.TestCase):
    def test_single_frequency_on_net(self):

        net = frequency_net(10.0, 0.01)
        f = SparseFourierSignal([net[1337]], [0.8 - 0.3j], 10.0)
        samples = sample_fourier(density, num_samples, make_rng(seed))
        f_hat = recover_sparse_ft(samples, f(samples.points), 1, 10.0, net=0.01)
        self.assertLessEqual(signal_distance(f_hat, f, density.uniform), 1e-8)
        self.assertLess(candidate_residual(samples, f(samples.points), f.freqs), 1e-8)

    def test_single_frequency_off_net(self):

        # Error shrinks in proportion to the net spacing
        samples = sample_fourier(density, num_samples, make_rng(seed))
        spacings = [0.1, 0.05, 0.025, 0.0125]
        errors = []
        for delta in spacings:
            f = SparseFourierSignal([1.0 + 0.3 * delta], [1.0], 5.0)
            f_hat = recover_sparse_ft(samples, f(samples.points), 1, 5.0, net=delta)
            errors.append(signal_distance(f_hat, f, density.uniform))
        slope = np.polyfit(np.log(spacings), np.log(errors), 1)[0]
        self.assertAlmostEqual(slope, 1.0, delta=0.2)

    def test_two_frequencies_on_net(self):

        D_F = fourier_weight_density(2, grid_size)
        net = frequency_net(3.0, 0.05)
        f = SparseFourierSignal([net[10], net[70]], [1.0, 0.5j], 3.0)
        samples = sample_fourier(D_F, num_samples, make_rng(seed))
        f_hat = recover_sparse_ft(samples, f(samples.points), 2, 3.0, net=0.05)
        self.assertTrue(np.allclose(f_hat.freqs, f.freqs))
        self.assertLessEqual(signal_distance(f_hat, f, D_F.uniform), 1e-8)

    def test_limits(self):

        samples = sample_fourier(density, 10, make_rng(seed))
        labels = np.zeros(10)
        with self.assertRaises(InvalidK):
            recover_sparse_ft(samples, labels, 3, 1.0, net=0.5)
        with self.assertRaises(NetTooLarge):
            recover_sparse_ft(samples, labels, 2, 100.0, net=1e-3)


if __name__ == "__main__":
    unittest.main()
