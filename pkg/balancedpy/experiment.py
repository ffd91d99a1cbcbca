import json
import multiprocessing
import os
import re
import time
from dataclasses import dataclass, asdict, fields, replace
import numpy as np
from tqdm import tqdm
from balancedpy.active import LabelOracle, measure_condition_number, run_active
from balancedpy.erm import run_until_good, solve_erm
from balancedpy.exceptions import ConfigError
from balancedpy.family import BasisSpec, load_custom_basis, orthonormalize, parse_family, project
from balancedpy.measure import Measure, RNG_ALGORITHM, make_rng, parse_measure, spawn_seeds
from balancedpy.procedure import procedure_from_name
from balancedpy.sampler_iid import leverage_measure
from balancedpy.sparseft import (
    SparseFourierSignal,
    fourier_weight_density,
    recover_sparse_ft,
    sample_fourier,
    signal_distance,
    sparse_ft_sample_count,
)
from balancedpy.tools import read_csv_table, write_csv, write_json

SEED_ENV = "ACTIVE_SAMPLER_SEED"

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "family": {"type": "string"},
        "degree": {"type": "integer", "minimum": 0},
        "dist": {"type": "string"},
        "sampler": {"type": "string"},
        "epsilon": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "noise": {"type": "string"},
        "trials": {"type": "integer", "minimum": 1},
        "seed": {"type": ["integer", "null"], "minimum": 0},
        "jobs": {"type": "integer", "minimum": 1},
        "out": {"type": ["string", "null"]},
        "mode": {"type": "string", "enum": ["query", "active", "sparseft"]},
        "solver": {"type": "string", "enum": ["direct", "taylor"]},
        "m": {"type": ["integer", "null"], "minimum": 1},
        "m0": {"type": ["integer", "null"], "minimum": 1},
        "C": {"type": "number", "exclusiveMinimum": 0},
        "K": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "max_attempts": {"type": "integer", "minimum": 1},
        "k": {"type": "integer", "minimum": 1, "maximum": 2},
        "F": {"type": "number", "exclusiveMinimum": 0},
        "T": {"type": "number", "exclusiveMinimum": 0},
        "net": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "grid_size": {"type": "integer", "minimum": 1000},
        "timing": {"type": "boolean"},
    },
    "additionalProperties": False,
}

_TYPES = {
    "string": lambda v: isinstance(v, str),
    "integer": lambda v: isinstance(v, (int, np.integer)) and not isinstance(v, bool),
    "number": lambda v: isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool),
    "boolean": lambda v: isinstance(v, bool),
    "null": lambda v: v is None,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a run; (config, seed) reproduces every output"""

    family: str = "legendre"
    degree: int = 9
    dist: str = "uniform-grid:1001"
    sampler: str = "bss"
    epsilon: float = 0.25
    noise: str = "gauss:1"
    trials: int = 100
    seed: int = None
    jobs: int = 1
    out: str = None
    mode: str = "query"
    solver: str = "direct"
    m: int = None
    m0: int = None
    C: float = 6.0
    K: float = None
    max_attempts: int = 50
    k: int = 1
    F: float = 10.0
    T: float = 1.0
    net: float = None
    grid_size: int = 4000
    timing: bool = False

    def problems(self) -> list:
        """(field, message) pairs for every value that breaks CONFIG_SCHEMA"""

        out = []
        for f in fields(self):
            rule = CONFIG_SCHEMA["properties"][f.name]
            value = getattr(self, f.name)
            types = rule["type"] if isinstance(rule["type"], list) else [rule["type"]]
            if not any(_TYPES[t](value) for t in types):
                out.append((f.name, "expected {}, got {!r}".format(" or ".join(types), value)))
                continue
            if value is None or isinstance(value, (str, bool)):
                if "enum" in rule and value not in rule["enum"]:
                    out.append((f.name, "expected one of {}, got {!r}".format(rule["enum"], value)))
                continue
            if "minimum" in rule and value < rule["minimum"]:
                out.append((f.name, "must be >= {}, got {}".format(rule["minimum"], value)))
            if "maximum" in rule and value > rule["maximum"]:
                out.append((f.name, "must be <= {}, got {}".format(rule["maximum"], value)))
            if "exclusiveMinimum" in rule and value <= rule["exclusiveMinimum"]:
                out.append((f.name, "must be > {}, got {}".format(rule["exclusiveMinimum"], value)))
            if "exclusiveMaximum" in rule and value >= rule["exclusiveMaximum"]:
                out.append((f.name, "must be < {}, got {}".format(rule["exclusiveMaximum"], value)))
        return out

    def validate(self) -> "ExperimentConfig":
        problems = self.problems()
        if problems:
            name, message = problems[0]
            raise ConfigError("{}: {}".format(name, message))
        return self

    def resolved_seed(self) -> int:
        """The configured seed, else ACTIVE_SAMPLER_SEED, else 0"""

        if self.seed is not None:
            return int(self.seed)
        env = os.environ.get(SEED_ENV)
        if env is None:
            return 0
        try:
            return int(env)
        except ValueError as e:
            raise ConfigError("{}={!r} is not an integer seed".format(SEED_ENV, env)) from e


def _key_line(text: str, key: str) -> int:
    match = re.search(r'"{}"\s*:'.format(re.escape(key)), text)
    return 1 if match is None else text.count("\n", 0, match.start()) + 1


def load_config(path: str, base: ExperimentConfig = None) -> ExperimentConfig:
    """Reads a JSON config whose fields override base; errors carry path:line positions

    Parameters
    ----------
    path : str
        JSON file holding an object of ExperimentConfig fields
    base : ExperimentConfig
        values for fields the file leaves out (default: ExperimentConfig())
    """

    base = ExperimentConfig() if base is None else base
    with open(path, "r") as f:
        text = f.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError("{}:{}:{}: {}".format(path, e.lineno, e.colno, e.msg)) from e
    if not isinstance(data, dict):
        raise ConfigError("{}:1:1: the config must be a JSON object".format(path))

    known = CONFIG_SCHEMA["properties"]
    for key in data:
        if key not in known:
            raise ConfigError("{}:{}: unknown field '{}'".format(path, _key_line(text, key), key))

    config = replace(base, **data)
    problems = [p for p in config.problems() if p[0] in data] or config.problems()
    if problems:
        name, message = problems[0]
        line = _key_line(text, name) if name in data else 1
        raise ConfigError("{}:{}: {}: {}".format(path, line, name, message))
    return config


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    m: int
    m0: int
    err_sq: float
    noise_sq: float
    retries: int
    wall_time: float

    header = ["trial", "m", "m0", "err_sq", "noise_sq", "retries"]

    def row(self, timing: bool = False) -> list:
        row = [self.trial, self.m, self.m0, self.err_sq, self.noise_sq, self.retries]
        return row + [self.wall_time] if timing else row


class NoiseModel(object):
    """Label noise: i.i.d. Gaussian, zero, or an adversarial table fixed on the support of D before any sampling"""

    def __init__(self, kind: str, sigma: float = 0.0, table: "np.ndarray" = None, measure: Measure = None, label: str = None) -> None:
        self.kind = kind
        self.sigma = float(sigma)
        self.table = None if table is None else np.asarray(table, dtype=complex)
        self.measure = measure
        self.label = kind if label is None else label

    @property
    def noise_sq(self) -> float:
        """E ||g||_D^2"""
        if self.kind == "gauss":
            return self.sigma ** 2
        elif self.kind == "adversarial":
            return float(np.sum(self.measure.mass * np.abs(self.table) ** 2))
        return 0.0

    def sample(self, points, rng: "np.random.Generator") -> "np.ndarray":
        n = len(points)
        if self.kind == "gauss":
            return self.sigma * rng.standard_normal(n)
        elif self.kind == "adversarial":
            idx = self.measure.indices(points)
            if np.any(idx < 0):
                raise ConfigError("Adversarial noise '{}' is only defined on the support of {}".format(self.label, self.measure.label))
            return self.table[idx]
        return np.zeros(n)

    def __repr__(self) -> str:
        return "NoiseModel({})".format(self.label)


def parse_noise(spec: str, fam=None) -> NoiseModel:
    """Builds label noise from its command-line name

    Parameters
    ----------
    spec : str
        zero, gauss:<sigma>, adversarial:bump, adversarial:orthogonal or adversarial:file:<path> (CSV x,g)
    fam : OrthonormalFamily
        family and measure that adversarial tables live on (default: None)
    """

    kind, _, arg = spec.partition(":")
    if kind == "zero":
        return NoiseModel("zero")
    elif kind == "gauss":
        try:
            sigma = float(arg) if arg else 1.0
        except ValueError as e:
            raise ConfigError("noise: could not read sigma from '{}'".format(spec)) from e
        if sigma < 0:
            raise ConfigError("noise: sigma must be nonnegative, got {}".format(sigma))
        return NoiseModel("gauss", sigma=sigma, label=spec)
    elif kind == "adversarial":
        if fam is None:
            raise ConfigError("noise: '{}' needs a family and measure".format(spec))
        D = fam.measure
        if arg == "bump":
            # All of ||g||_D on the largest-leverage point
            i = int(np.argmax(np.where(D.mass > 0, fam.support_leverage, -np.inf)))
            table = np.zeros(len(D), dtype=complex)
            table[i] = 1 / np.sqrt(D.mass[i])
        elif arg == "orthogonal":
            try:
                x = np.asarray(D.support, dtype=float)
            except ValueError as e:
                raise ConfigError("noise: 'adversarial:orthogonal' needs a numeric support") from e
            g = np.sin(np.pi * (fam.dimension + 1) * x).astype(complex)
            g = g - fam.support_values @ project(fam, g).coeffs
            size = np.sqrt(np.sum(D.mass * np.abs(g) ** 2))
            if size < 1e-12:
                raise ConfigError("noise: the family spans the orthogonal preset on {}".format(D.label))
            table = g / size
        elif arg.startswith("file:"):
            header, rows = read_csv_table(arg[5:])
            if header[:2] != ["x", "g"]:
                raise ConfigError("noise: {} must have the header x,g".format(arg[5:]))
            table = np.zeros(len(D), dtype=complex)
            for r in rows:
                i = D.index(float(r[0]))
                if i is None:
                    raise ConfigError("noise: {} lists x={} outside the support of {}".format(arg[5:], r[0], D.label))
                table[i] = complex(r[1].replace(" ", ""))
        else:
            raise ConfigError("noise: unknown adversarial preset '{}', expected bump, orthogonal or file:<path>".format(arg))
        return NoiseModel("adversarial", table=table, measure=D, label=spec)

    raise ConfigError("noise: unknown noise '{}', expected zero, gauss:<sigma> or adversarial:<preset>".format(spec))


class ExperimentSetup(object):
    """Everything a trial needs, fixed before any trial runs and shipped to workers"""

    def __init__(self, **kwargs) -> None:
        self.__dict__.update(kwargs)


def _query_trial(setup: ExperimentSetup, trial: int, seed) -> TrialRecord:
    rng = make_rng(seed)
    start = time.perf_counter()

    S_w, dm, retries = run_until_good(setup.procedure, setup.fam, rng, setup.max_attempts)
    y = setup.fam.evaluate(setup.beta, S_w.points) + setup.noise.sample(S_w.points, rng)
    solution = solve_erm(dm, y, method=setup.solver)
    err_sq = float(np.sum(np.abs(solution.coeffs.coeffs - setup.beta) ** 2))

    return TrialRecord(trial, len(S_w), 0, err_sq, setup.noise.noise_sq, retries, time.perf_counter() - start)


def _active_trial(setup: ExperimentSetup, trial: int, seed) -> TrialRecord:
    rng = make_rng(seed)
    start = time.perf_counter()
    D = setup.fam.measure

    def stream(n, r):
        return D.sample(r, n)

    def label(x):
        return setup.fam.evaluate(setup.beta, x) + setup.noise.sample(np.asarray([x]), rng)[0]

    oracle = LabelOracle(label)
    solution, report = run_active(
        setup.basis,
        stream,
        oracle,
        setup.epsilon,
        rng,
        K=setup.K,
        m0=setup.m0,
        C=setup.C,
        procedure=setup.procedure,
        max_attempts=setup.max_attempts,
    )
    diff = solution.predict(D.support) - setup.fam.support_values @ setup.beta
    err_sq = float(np.sum(D.mass * np.abs(diff) ** 2))

    return TrialRecord(
        trial, report["labels"], report["m0"], err_sq, setup.noise.noise_sq, report["retries"], time.perf_counter() - start
    )


def _sparseft_trial(setup: ExperimentSetup, trial: int, seed) -> TrialRecord:
    rng = make_rng(seed)
    start = time.perf_counter()

    samples = sample_fourier(setup.density, setup.m, rng, setup.T)
    y = setup.signal(samples.points) + setup.noise.sample(samples.points, rng)
    f_hat = recover_sparse_ft(samples, y, setup.k, setup.F, setup.T, setup.epsilon, setup.net)
    err_sq = signal_distance(f_hat, setup.signal, setup.density.uniform, setup.T) ** 2

    return TrialRecord(trial, setup.m, 0, err_sq, setup.noise.noise_sq, 0, time.perf_counter() - start)


def _call_task(index: int, task: tuple) -> tuple:
    func, arguments, kwarguments = task
    return index, func(*arguments, **kwarguments)


class Experiment(object):
    """Seeded Monte-Carlo trials of one configuration, with CSV trial records and a JSON summary"""

    states = {
        0: "start",
        1: "configuring",
        2: "configured",
        3: "running_trials",
        4: "finished_trials",
        5: "summarizing",
        6: "finished",
    }

    trial_functions = {"query": _query_trial, "active": _active_trial, "sparseft": _sparseft_trial}

    def __init__(self, config: ExperimentConfig, quiet: bool = False) -> None:
        """Experiment class constructor

        Parameters
        ----------
        config : ExperimentConfig
            validated configuration
        quiet : bool
            if true, will not print the current state or progress bars (default: False)
        """

        self.config = config.validate()
        self.quiet = quiet
        self.seed = config.resolved_seed()
        self.setup = None
        self.records = []
        self.summary = None
        self._update_state(0)

    def configure(self) -> ExperimentSetup:
        """Builds the family, measure, truth, noise and sampler shared by every trial"""

        self._update_state(1)
        c = self.config
        rng = make_rng(np.random.SeedSequence([self.seed, 0]))

        try:
            if c.mode == "sparseft":
                self.setup = self._configure_sparseft(rng)
            else:
                self.setup = self._configure_regression(rng)
        except ConfigError:
            raise
        except (ValueError, OSError) as e:
            raise ConfigError(str(e)) from e

        self._update_state(2)
        return self.setup

    def _configure_regression(self, rng) -> ExperimentSetup:
        c = self.config

        # Family and measure
        if c.family.startswith("file:") and c.dist == "family":
            basis, D = load_custom_basis(c.family[5:])
        else:
            basis = parse_family(c.family, c.degree)
            D = parse_measure(c.dist)
        fam = orthonormalize(basis, D)

        # Truth, unit norm under D
        beta = rng.standard_normal(fam.dimension).astype(complex)
        beta /= np.linalg.norm(beta)

        noise = parse_noise(c.noise, fam)
        procedure = procedure_from_name(c.sampler, c.epsilon, m=c.m, C1=c.C)
        K = c.K
        if c.mode == "active" and K is None and c.m0 is None:
            K = measure_condition_number(basis, D)

        return ExperimentSetup(
            mode=c.mode,
            basis=basis,
            fam=fam,
            beta=beta,
            noise=noise,
            procedure=procedure,
            epsilon=c.epsilon,
            solver=c.solver,
            max_attempts=c.max_attempts,
            K=K,
            m0=c.m0,
            C=c.C,
        )

    def _configure_sparseft(self, rng) -> ExperimentSetup:
        c = self.config
        if c.noise.startswith("adversarial"):
            raise ConfigError("noise: sparseft mode supports zero and gauss noise only")

        density = fourier_weight_density(c.k, c.grid_size)
        freqs = rng.uniform(-c.F, c.F, size=c.k)
        amps = rng.standard_normal(c.k) + 1j * rng.standard_normal(c.k)
        signal = SparseFourierSignal(freqs, amps, c.F)
        scale = signal_distance(SparseFourierSignal(freqs, np.zeros(c.k), c.F), signal, density.uniform, c.T)
        signal = SparseFourierSignal(freqs, amps / scale, c.F)

        m = c.m if c.m is not None else sparse_ft_sample_count(c.k, c.F, c.T, c.epsilon, c.C)
        return ExperimentSetup(
            mode=c.mode,
            density=density,
            signal=signal,
            noise=parse_noise(c.noise),
            m=m,
            k=c.k,
            F=c.F,
            T=c.T,
            net=c.net,
            epsilon=c.epsilon,
        )

    def run(self) -> list:
        """Runs every trial, in parallel when jobs > 1; records come back in trial order"""

        if self.setup is None:
            self.configure()
        self._update_state(3)

        func = self.trial_functions[self.config.mode]
        seeds = spawn_seeds(self.seed, self.config.trials)
        tasks = [(func, [self.setup, i, s], {}) for i, s in enumerate(seeds)]
        self.records = self._run_parallel_functions(*tasks)

        self._update_state(4)
        return self.records

    def summarize(self) -> dict:
        """Mean and quantiles of err_sq / (epsilon noise_sq), label and retry counts, config echo and RNG identifier"""

        self._update_state(5)
        c = self.config
        err = np.array([r.err_sq for r in self.records])
        noise = np.array([r.noise_sq for r in self.records])
        labels = np.array([r.m for r in self.records])
        retries = np.array([r.retries for r in self.records])
        wall = np.array([r.wall_time for r in self.records])

        summary = {
            "config": asdict(c),
            "seed": self.seed,
            "rng": RNG_ALGORITHM,
            "trials": len(self.records),
            "err_sq_mean": float(err.mean()),
            "err_sq_max": float(err.max()),
            "labels_mean": float(labels.mean()),
            "labels_median": float(np.median(labels)),
            "retries_mean": float(retries.mean()),
            "retries_max": int(retries.max()),
            "wall_time_total": float(wall.sum()),
            "wall_time_mean": float(wall.mean()),
        }
        if c.mode == "active":
            summary["m0"] = int(self.records[0].m0)
        if np.all(noise > 0):
            ratio = err / (c.epsilon * noise)
            summary["bound"] = float(c.epsilon * noise.mean())
            summary["ratio_mean"] = float(ratio.mean())
            summary["ratio_median"] = float(np.median(ratio))
            summary["ratio_quantiles"] = {str(q): float(np.quantile(ratio, q)) for q in [0.1, 0.25, 0.5, 0.75, 0.9, 0.99]}

        self.summary = summary
        self._update_state(6)
        return summary

    def write(self, out: str = None) -> tuple:
        """Writes the trial CSV and the summary JSON next to it; returns both paths"""

        out = self.config.out if out is None else out
        if out is None:
            raise ConfigError("out: no output path configured")
        if self.summary is None:
            self.summarize()
        timing = self.config.timing
        header = TrialRecord.header + (["wall_time"] if timing else [])
        write_csv(out, header, [r.row(timing) for r in self.records])
        summary_path = os.path.splitext(out)[0] + ".json"
        write_json(summary_path, self.summary)
        return out, summary_path

    def _run_parallel_functions(self, *tasks) -> list:
        """Takes a series of "tasks" as arguments and returns a list of "results" in task order

        Arguments
        ---------
        *tasks : tuple
            Each "task" should take the following form: (function, list of arguments, dictionary of kwarguments)

        Returns
        -------
        list
            Each "result" in the return list will be whatever is returned by the function in the corresponding task
        """

        finished_tasks = []

        # Linearly execute tasks
        if self.config.jobs == 1:
            for i, a in tqdm(enumerate(tasks), total=len(tasks), disable=self.quiet):
                func, arguments, kwarguments = a
                finished_tasks.append(func(*arguments, **kwarguments))
            return finished_tasks

        # Worker pool, tagged by task index
        with multiprocessing.Pool(self.config.jobs) as pool:
            pending = [pool.apply_async(_call_task, (i, task)) for i, task in enumerate(tasks)]
            for p in tqdm(pending, disable=self.quiet):
                finished_tasks.append(p.get())

        # Sort by the tag to return in the original order
        finished_tasks = sorted(finished_tasks, key=lambda x: x[0])
        return [i[1] for i in finished_tasks]

    def _update_state(self, state: int) -> None:
        """Updates the state machine to the provided state

        Parameters
        ----------
        state : int
            state to move to
        """

        self.state = state
        if not self.quiet:
            print("current state: {}".format(self.states[self.state]))


def run_experiment(config: ExperimentConfig, quiet: bool = False) -> dict:
    """Configures, runs and summarizes one experiment, writing CSV/JSON when config.out is set"""

    experiment = Experiment(config, quiet=quiet)
    experiment.configure()
    experiment.run()
    summary = experiment.summarize()
    if config.out is not None:
        experiment.write()
    return summary


def emit_weights_figure_data(target, out: str = None, dist: str = "uniform-grid:1001", degree: int = None) -> tuple:
    """Density (per unit length) of the leverage measure of a family, or of the Fourier importance density

    Parameters
    ----------
    target : int or str or BasisSpec
        sparsity k for Fourier weights, else a family name or basis
    out : str
        CSV path for the (x, density) rows (default: None)
    dist : str
        reference measure of a family (default: "uniform-grid:1001")
    degree : int
        degree for a family name (default: None)

    Returns
    -------
    tuple
        (x, density) arrays; sum of density times cell length is one
    """

    if isinstance(target, (int, np.integer)):
        x, density = fourier_weight_density(int(target)).grid.density_table()
    else:
        basis = target if isinstance(target, BasisSpec) else parse_family(target, degree)
        fam = orthonormalize(basis, parse_measure(dist))
        x, density = leverage_measure(fam).density_table()

    if out is not None:
        write_csv(out, ["x", "density"], zip(x, density))
    return x, density
