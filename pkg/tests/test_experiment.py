from balancedpy.experiment import (
    ExperimentConfig,
    Experiment,
    TrialRecord,
    load_config,
    parse_noise,
    run_experiment,
    emit_weights_figure_data,
    SEED_ENV,
)
from balancedpy.cli import main
from balancedpy.family import BasisSpec, orthonormalize, project
from balancedpy.measure import uniform_grid, RNG_ALGORITHM
from balancedpy.tools import cell_widths, read_csv_table
from balancedpy.exceptions import ConfigError
from unittest import mock
import numpy as np
import json
import os
import tempfile
import unittest

# Global params
quiet = True
adversarial_trials = 100
small = dict(family="legendre", degree=3, dist="uniform-grid:201", epsilon=0.25, trials=4, seed=17)


def write_text(directory, name, text):
    path = os.path.join(directory, name)
    with open(path, "w") as f:
        f.write(text)
    return path


class TestConfig(unittest.TestCase):
    def test_defaults_validate(self):

        config = ExperimentConfig().validate()
        self.assertEqual(config.mode, "query")
        self.assertEqual(config.problems(), [])

    def test_out_of_range(self):

        with self.assertRaises(ConfigError):
            ExperimentConfig(epsilon=1.5).validate()
        with self.assertRaises(ConfigError):
            ExperimentConfig(mode="batch").validate()
        with self.assertRaises(ConfigError):
            ExperimentConfig(trials="ten").validate()

    def test_seed_fallback(self):

        with mock.patch.dict(os.environ, {SEED_ENV: "42"}):
            self.assertEqual(ExperimentConfig().resolved_seed(), 42)
            self.assertEqual(ExperimentConfig(seed=3).resolved_seed(), 3)
        with mock.patch.dict(os.environ, {}, clear=True):
            self.assertEqual(ExperimentConfig().resolved_seed(), 0)
        with mock.patch.dict(os.environ, {SEED_ENV: "abc"}):
            with self.assertRaises(ConfigError):
                ExperimentConfig().resolved_seed()

    def test_file_overrides_base(self):

        with tempfile.TemporaryDirectory() as tmp:
            path = write_text(tmp, "config.json", '{\n  "trials": 3,\n  "noise": "zero"\n}\n')
            config = load_config(path, base=ExperimentConfig(trials=10, seed=5))
        self.assertEqual(config.trials, 3)
        self.assertEqual(config.noise, "zero")
        self.assertEqual(config.seed, 5)

    def test_errors_name_the_line(self):

        with tempfile.TemporaryDirectory() as tmp:
            cases = [
                ('{\n  "trials": 3,\n  "bogus": 1\n}\n', ":3:", "bogus"),
                ('{\n  "trials": 3,\n}\n', ":3:", "Expecting"),
                ('{\n  "trials": 3,\n  "epsilon": 1.5\n}\n', ":3:", "epsilon"),
                ("[1, 2]\n", ":1:", "object"),
            ]
            for text, line, word in cases:
                path = write_text(tmp, "config.json", text)
                with self.assertRaises(ConfigError) as context:
                    load_config(path)
                message = str(context.exception)
                self.assertIn(path + line, message)
                self.assertIn(word, message)


class TestNoise(unittest.TestCase):
    def test_presets(self):

        fam = orthonormalize(BasisSpec.legendre(3), uniform_grid(201))
        self.assertEqual(parse_noise("zero").noise_sq, 0.0)
        self.assertEqual(parse_noise("gauss:2").noise_sq, 4.0)

        bump = parse_noise("adversarial:bump", fam)
        self.assertAlmostEqual(bump.noise_sq, 1.0)
        self.assertEqual(np.count_nonzero(bump.table), 1)

        # Orthogonal to the family, unit norm
        orthogonal = parse_noise("adversarial:orthogonal", fam)
        self.assertAlmostEqual(orthogonal.noise_sq, 1.0)
        self.assertLess(project(fam, orthogonal.table).norm(), 1e-10)

    def test_unknown(self):

        with self.assertRaises(ConfigError):
            parse_noise("laplace:1")
        with self.assertRaises(ConfigError):
            parse_noise("adversarial:bump")


class TestExperiment(unittest.TestCase):
    def test_zero_noise_is_exact(self):

        config = ExperimentConfig(noise="zero", sampler="bss", **small)
        experiment = Experiment(config, quiet=quiet)
        records = experiment.run()
        self.assertEqual([r.trial for r in records], list(range(4)))
        self.assertTrue(all(r.err_sq <= 1e-16 for r in records))

        summary = experiment.summarize()
        self.assertEqual(summary["rng"], RNG_ALGORITHM)
        self.assertEqual(summary["seed"], 17)
        self.assertNotIn("ratio_mean", summary)

    def test_gaussian_noise_bound(self):

        config = ExperimentConfig(family="legendre", degree=9, dist="uniform-grid:1001", noise="gauss:1", trials=20, seed=2)
        summary = run_experiment(config, quiet=quiet)
        self.assertLessEqual(summary["ratio_mean"], 1.2)
        self.assertIn("0.9", summary["ratio_quantiles"])

    def test_adversarial_noise_bound(self):

        for noise in ["adversarial:bump", "adversarial:orthogonal"]:
            config = ExperimentConfig(
                family="legendre", degree=9, dist="uniform-grid:1001", epsilon=0.25, noise=noise, trials=adversarial_trials, seed=17
            )
            records = Experiment(config, quiet=quiet).run()
            within = [np.sqrt(r.err_sq) <= (1 + 5 * 0.25) * np.sqrt(r.noise_sq) for r in records]
            self.assertEqual(len(records), adversarial_trials)
            self.assertGreaterEqual(np.mean(within), 0.97)

    def test_identical_csv(self):

        with tempfile.TemporaryDirectory() as tmp:
            contents = []
            for name in ["a.csv", "b.csv"]:
                config = ExperimentConfig(noise="gauss:1", out=os.path.join(tmp, name), **small)
                run_experiment(config, quiet=quiet)
                with open(config.out, "rb") as f:
                    contents.append(f.read())
            header, rows = read_csv_table(os.path.join(tmp, "a.csv"))
            with open(os.path.join(tmp, "a.json")) as f:
                summary = json.load(f)

        self.assertEqual(contents[0], contents[1])
        self.assertEqual(header, TrialRecord.header)
        self.assertEqual(len(rows), 4)
        self.assertEqual(summary["config"]["seed"], 17)

    def test_parallel_matches_serial(self):

        serial = Experiment(ExperimentConfig(sampler="leverage", **small), quiet=quiet).run()
        parallel = Experiment(ExperimentConfig(sampler="leverage", jobs=2, **small), quiet=quiet).run()
        self.assertEqual([r.err_sq for r in serial], [r.err_sq for r in parallel])
        self.assertEqual([r.trial for r in parallel], list(range(4)))

    def test_active_mode(self):

        config = ExperimentConfig(mode="active", family="legendre", degree=2, dist="uniform-grid:201", trials=2, seed=4)
        experiment = Experiment(config, quiet=quiet)
        records = experiment.run()
        self.assertTrue(all(r.m0 > 0 and r.m > 0 for r in records))
        self.assertEqual(experiment.summarize()["m0"], records[0].m0)

    def test_sparseft_mode(self):

        config = ExperimentConfig(mode="sparseft", k=1, F=5.0, net=0.01, noise="zero", m=100, grid_size=1000, trials=2, seed=8)
        records = Experiment(config, quiet=quiet).run()
        self.assertEqual(len(records), 2)
        self.assertTrue(all(r.err_sq < 0.05 and r.noise_sq == 0 for r in records))

        with self.assertRaises(ConfigError):
            Experiment(ExperimentConfig(mode="sparseft", noise="adversarial:bump"), quiet=quiet).configure()

    def test_bad_family_is_a_config_error(self):

        with self.assertRaises(ConfigError):
            Experiment(ExperimentConfig(family="spline"), quiet=quiet).configure()


class TestWeightsFigure(unittest.TestCase):
    def test_fourier_weights(self):

        x, density = emit_weights_figure_data(8)
        self.assertAlmostEqual(np.sum(density * cell_widths(x)), 1.0)
        self.assertTrue(np.allclose(density, density[::-1]))

    def test_polynomial_weights_grow_at_ends(self):

        x, density = emit_weights_figure_data("legendre", dist="uniform-grid:1001", degree=9)
        self.assertAlmostEqual(np.sum(density * cell_widths(x)), 1.0)
        self.assertGreater(density[0], 5 * density[500])


class TestCli(unittest.TestCase):
    def test_weights(self):

        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "weights.csv")
            self.assertEqual(main(["weights", "--degree", "4", "--dist", "uniform-grid:101", "--out", path]), 0)
            header, rows = read_csv_table(path)
            self.assertEqual(header, ["x", "density"])
            self.assertEqual(len(rows), 101)

            path = os.path.join(tmp, "fourier.csv")
            self.assertEqual(main(["sparseft", "weights", "--k", "2", "--out", path]), 0)
            self.assertTrue(os.path.exists(path))

    def test_run(self):

        with tempfile.TemporaryDirectory() as tmp:
            out = os.path.join(tmp, "trials.csv")
            args = ["run", "--degree", "3", "--dist", "uniform-grid:201", "--trials", "2", "--seed", "1", "--out", out, "--quiet"]
            self.assertEqual(main(args), 0)
            self.assertTrue(os.path.exists(os.path.join(tmp, "trials.json")))

            # Config file beats flags
            config = write_text(tmp, "config.json", '{"trials": 3}')
            self.assertEqual(main(args + ["--timing", "--config", config]), 0)
            header, rows = read_csv_table(out)
            self.assertEqual(len(rows), 3)
            self.assertEqual(header[-1], "wall_time")

    def test_bad_config_exit_code(self):

        with mock.patch("sys.stderr"):
            self.assertEqual(main(["run", "--epsilon", "1.5", "--quiet"]), 2)
            self.assertEqual(main(["active", "--true-dist", "nowhere:3", "--quiet"]), 2)


if __name__ == "__main__":
    unittest.main()
