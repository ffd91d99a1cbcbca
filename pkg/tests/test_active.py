from balancedpy.active import ActivePlan, LabelOracle, measure_condition_number, plan_active, run_active
from balancedpy.family import BasisSpec, orthonormalize
from balancedpy.measure import uniform_grid, make_rng, spawn_rngs
from balancedpy.exceptions import DegenerateFamily, EmptyInput
import numpy as np
import unittest

# Global params
seed = 21
d = 3
epsilon = 0.25
sigma = 1.0
trials = 12
basis = BasisSpec.legendre(d - 1)
grid = uniform_grid(301)
fam = orthonormalize(basis, grid)
beta = np.array([0.6, -0.8, 0.3])


def truth(x):
    return fam.evaluate(beta, x)


def make_oracle(rng, noise=sigma):
    return LabelOracle(lambda x: truth(x) + noise * rng.standard_normal())


class CountingStream(object):
    """Unlabeled draws from the grid, remembering how many were taken"""

    def __init__(self) -> None:
        self.taken = 0

    def __call__(self, n, rng):
        self.taken += n
        return grid.sample(rng, n)


class TestPlan(unittest.TestCase):
    def test_condition_number_of_polynomials(self):

        # Legendre leverage peaks at the ends, near d^2 on a fine grid
        self.assertAlmostEqual(measure_condition_number(basis, grid), d ** 2, delta=0.3)

    def test_plan_sizes(self):

        plan = plan_active(basis, epsilon, K=9)
        self.assertEqual(plan.m0, int(np.ceil(6 * (9 * np.log(3) + 9 / epsilon))))
        self.assertAlmostEqual(plan.inner_epsilon, epsilon / 8)
        self.assertEqual(plan_active(basis, epsilon, m0=40).m0, 40)
        self.assertIsInstance(plan_active(basis, epsilon, D_known=grid), ActivePlan)
        with self.assertRaises(ValueError):
            plan_active(basis, epsilon)


class TestOracle(unittest.TestCase):
    def test_counts_calls(self):

        oracle = LabelOracle(lambda x: 2 * x)
        self.assertEqual(oracle(1.5), 3.0)
        oracle.label_all([0.0, 1.0])
        self.assertEqual(oracle.call_counter, 3)


class TestRunActive(unittest.TestCase):
    def test_labels_only_the_good_execution(self):

        rng = make_rng(seed)
        stream = CountingStream()
        oracle = make_oracle(make_rng(seed + 1))
        solution, report = run_active(basis, stream, oracle, epsilon, rng, K=d ** 2)

        self.assertEqual(stream.taken, report["m0"])
        self.assertEqual(oracle.call_counter, report["labels"])
        self.assertEqual(report["labels"], report["rounds"])
        self.assertAlmostEqual(report["inner_epsilon"], epsilon / 8)
        self.assertEqual(report["procedure"], "bss")

    def test_mean_error(self):

        errors = []
        for i, rng in enumerate(spawn_rngs(seed, trials)):
            oracle = make_oracle(make_rng(1000 + i))
            solution, _ = run_active(basis, CountingStream(), oracle, epsilon, rng, K=d ** 2)
            diff = solution.predict(grid.support) - truth(grid.support)
            errors.append(np.sum(grid.mass * np.abs(diff) ** 2))
        self.assertLessEqual(np.mean(errors), 1.2 * epsilon * sigma ** 2)

    def test_noiseless_is_exact(self):

        oracle = make_oracle(make_rng(seed), noise=0.0)
        solution, _ = run_active(basis, CountingStream(), oracle, epsilon, make_rng(seed), K=d ** 2, procedure="leverage")
        self.assertTrue(np.allclose(solution.predict(grid.support), truth(grid.support), atol=1e-8))

    def test_iterable_stream(self):

        rng = make_rng(seed)
        points = list(grid.sample(rng, 200))
        oracle = make_oracle(rng)
        _, report = run_active(basis, iter(points), oracle, epsilon, rng, m0=200, procedure="leverage")
        self.assertEqual(report["m0"], 200)

        with self.assertRaises(EmptyInput):
            run_active(basis, iter(points[:10]), oracle, epsilon, rng, m0=50)

    def test_too_few_unlabeled_points(self):

        with self.assertRaises(DegenerateFamily):
            run_active(basis, iter([0.5, 0.5]), make_oracle(make_rng(seed)), epsilon, make_rng(seed), m0=2)


if __name__ == "__main__":
    unittest.main()
