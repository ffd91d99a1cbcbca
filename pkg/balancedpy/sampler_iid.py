import numpy as np
from tqdm import tqdm
from balancedpy.exceptions import InfiniteConditionNumber
from balancedpy.family import condition_number
from balancedpy.measure import Measure, WeightedSampleSet, make_rng, seed_of
from balancedpy.procedure import SamplingProcedure

DEFAULT_C1 = 6.0
DEFAULT_C1_GRID = [0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0]


def log_factor(d: int, delta: float = None) -> float:
    """Natural log of d (or d / delta), clamped below at 1"""

    value = np.log(d / delta) if delta is not None else np.log(d)
    return max(float(value), 1.0)


def chernoff_sample_size(K: float, d: int, delta: float = 1e-3, spectral: float = 0.25) -> int:
    """Draw count m >= 6 K log(d / delta) / spectral^2 after which ||A*A - I|| <= spectral with probability 1 - delta"""
    return int(np.ceil(6 * K * np.log(d / delta) / spectral ** 2))


class IidPlan(object):
    """Sizing of an i.i.d. procedure: m draws from D' with alpha_i = 1/m"""

    def __init__(self, D_prime: Measure, m: int, K_Dprime: float, epsilon: float, C1: float) -> None:
        self.D_prime = D_prime
        self.m = int(m)
        self.K_Dprime = float(K_Dprime)
        self.epsilon = float(epsilon)
        self.C1 = float(C1)

    @property
    def alpha(self) -> float:
        return 1.0 / self.m

    @property
    def balance(self) -> float:
        """alpha_i K_{D'}, equal for every draw"""
        return self.K_Dprime / self.m

    @property
    def balanced(self) -> bool:
        """Whether alpha_i K_{D'} <= epsilon / 2"""
        return self.balance <= self.epsilon / 2 + 1e-12

    def __repr__(self) -> str:
        return "IidPlan(m={}, K={:.4g}, epsilon={}, C1={})".format(self.m, self.K_Dprime, self.epsilon, self.C1)


def plan_iid(
    fam,
    D_prime: Measure,
    epsilon: float,
    m_override: int = None,
    C1: float = DEFAULT_C1,
    delta: float = None,
    K: float = None,
    quiet: bool = True,
) -> IidPlan:
    """Sizes an i.i.d. procedure, m = ceil(C1 (K log d + K / epsilon)) unless overridden

    Parameters
    ----------
    fam : OrthonormalFamily
        family and reference measure D
    D_prime : Measure
        sampling measure
    epsilon : float
        target accuracy in (0, 1)
    m_override : int
        fixed number of draws (default: None)
    C1 : float
        sizing constant (default: 6)
    delta : float
        failure probability; log d becomes log(d / delta) when given (default: None)
    K : float
        precomputed K_{D'} (default: None)
    quiet : bool
        if false, prints a notice when m is too small for alpha_i K_{D'} <= epsilon / 2 (default: True)
    """

    if not 0 < epsilon < 1:
        raise ValueError("epsilon must be in (0, 1), got {}".format(epsilon))
    K = condition_number(fam, D_prime) if K is None else K
    if not np.isfinite(K):
        raise InfiniteConditionNumber(
            "{} misses a point charged by {} where the family does not vanish".format(D_prime.label, fam.measure.label)
        )

    d = fam.dimension
    if m_override is not None:
        if m_override < 1:
            raise ValueError("m must be positive, got {}".format(m_override))
        m = int(m_override)
    else:
        m = int(np.ceil(C1 * (K * log_factor(d, delta) + K / epsilon)))

    plan = IidPlan(D_prime, m, K, epsilon, C1)
    if not plan.balanced and not quiet:
        print("m={} gives alpha*K={:.4g} above epsilon/2={:.4g}".format(m, plan.balance, epsilon / 2))
    return plan


def leverage_measure(fam) -> Measure:
    """The optimal sampling measure D_F(x) = D(x) leverage(x) / d. The realized normalizer (d up to rounding) is stored on the result as `normalizer`."""

    D = fam.measure
    mass = D.mass * fam.support_leverage
    normalizer = float(mass.sum())
    measure = Measure(D.support, mass / normalizer, label="leverage[{}]".format(D.label), normalize=True)
    measure.normalizer = normalizer
    return measure


def leverage_weight(fam, x):
    """Reweighting factor D(x) / D_F(x) = d / leverage(x)"""
    return fam.dimension / fam.leverage(x)


def _column_cdfs(fam) -> "np.ndarray":
    W = fam.measure.mass[:, None] * np.abs(fam.support_values) ** 2
    cdfs = np.cumsum(W, axis=0)
    return cdfs / cdfs[-1]


def sample_df(fam, rng: "np.random.Generator", cdfs: "np.ndarray" = None) -> tuple:
    """Two-stage draw from the leverage measure: pick j uniformly in [d], then x with probability D(x) |v_j(x)|^2

    Parameters
    ----------
    fam : OrthonormalFamily
        the family
    rng : np.random.Generator
        random source
    cdfs : np.ndarray
        per-column CDFs over the support, reused across draws (default: None)

    Returns
    -------
    tuple
        (point, weight) with weight d / leverage(point)
    """

    cdfs = _column_cdfs(fam) if cdfs is None else cdfs
    i = _draw_index(fam, rng, cdfs)
    return fam.measure.support[i], fam.dimension / fam.support_leverage[i]


def _draw_index(fam, rng, cdfs) -> int:
    j = rng.integers(fam.dimension)
    i = int(np.searchsorted(cdfs[:, j], rng.random(), side="right"))
    return min(i, len(fam.measure) - 1)


def sample_df_marginal(fam) -> "np.ndarray":
    """Exact marginal of the two-stage draw, (1/d) sum_j D(x) |v_j(x)|^2, per support point"""
    W = fam.measure.mass[:, None] * np.abs(fam.support_values) ** 2
    return W.sum(axis=1) / fam.dimension


def run_iid_procedure(
    fam,
    D_prime: Measure,
    epsilon: float,
    m_override: int = None,
    rng: "np.random.Generator" = None,
    C1: float = DEFAULT_C1,
    delta: float = None,
    plan: IidPlan = None,
) -> WeightedSampleSet:
    """Draws m points i.i.d. from D' with alpha_i = 1/m and w_i = D(x_i) / (m D'(x_i))

    Raises
    ------
    InfiniteConditionNumber
        if K_{D'} is unbounded
    """

    rng = make_rng(0) if rng is None else rng
    plan = plan_iid(fam, D_prime, epsilon, m_override, C1, delta) if plan is None else plan
    m = plan.m

    idx = D_prime.sample_indices(rng, m)
    points = D_prime.support[idx]
    weights = fam.measure.masses_at(points) / (m * D_prime.mass[idx])
    alphas = np.full(m, plan.alpha)

    info = {
        "procedure": "iid",
        "sampling_measure": D_prime.label,
        "K": plan.K_Dprime,
        "balance": np.full(m, plan.balance),
    }
    return WeightedSampleSet(points, weights, alphas, source_seed=seed_of(rng), info=info)


def run_leverage_procedure(
    fam,
    epsilon: float,
    m_override: int = None,
    rng: "np.random.Generator" = None,
    C1: float = DEFAULT_C1,
    delta: float = None,
    cdfs: "np.ndarray" = None,
) -> WeightedSampleSet:
    """i.i.d. procedure with D' = D_F, drawn by sample_df; K_{D_F} = d"""

    rng = make_rng(0) if rng is None else rng
    d = fam.dimension
    m = int(m_override) if m_override is not None else int(np.ceil(C1 * (d * log_factor(d, delta) + d / epsilon)))
    cdfs = _column_cdfs(fam) if cdfs is None else cdfs

    idx = np.array([_draw_index(fam, rng, cdfs) for _ in range(m)], dtype=int)
    weights = d / (m * fam.support_leverage[idx])
    info = {"procedure": "leverage", "sampling_measure": "leverage", "K": float(d), "balance": np.full(m, d / m)}
    return WeightedSampleSet(fam.measure.support[idx], weights, np.full(m, 1.0 / m), source_seed=seed_of(rng), info=info)


def calibrate_c1(
    fam,
    D_prime: Measure,
    target_good_rate: float,
    epsilon: float = 0.25,
    trials: int = 100,
    grid: list = None,
    seed: int = 0,
    quiet: bool = True,
) -> float:
    """Smallest C1 on a grid whose empirical good-execution rate reaches the target

    Every grid value is scored on the same seeded draws. The rates are made monotone by a running maximum and the target is located by binary search, so a higher target never returns a smaller C1. If no grid value reaches the target the largest is returned.

    Parameters
    ----------
    fam : OrthonormalFamily
        the family
    D_prime : Measure
        sampling measure
    target_good_rate : float
        required fraction of good executions
    epsilon : float
        accuracy used to size m (default: 0.25)
    trials : int
        executions per grid value (default: 100)
    grid : list
        increasing candidate values (default: DEFAULT_C1_GRID)
    seed : int
        seed shared by every grid value (default: 0)
    quiet : bool
        if true, hides the progress bar (default: True)
    """

    from balancedpy.erm import build_design, is_good

    grid = sorted(DEFAULT_C1_GRID if grid is None else grid)
    if target_good_rate <= 0:
        return float(grid[0])

    K = condition_number(fam, D_prime)
    rates = []
    for c in tqdm(grid, disable=quiet):
        plan = plan_iid(fam, D_prime, epsilon, C1=c, K=K)
        rng = make_rng(seed)
        good = 0
        for _ in range(trials):
            S_w = run_iid_procedure(fam, D_prime, epsilon, rng=rng, plan=plan)
            good += is_good(build_design(fam, S_w))
        rates.append(good / trials)

    envelope = np.maximum.accumulate(rates)
    i = int(np.searchsorted(envelope, target_good_rate, side="left"))
    return float(grid[min(i, len(grid) - 1)])


class UniformProcedure(SamplingProcedure):
    """i.i.d. draws from D itself"""

    name = "uniform"

    def __init__(self, epsilon: float, m: int = None, C1: float = DEFAULT_C1, delta: float = None, **kwargs) -> None:
        self.epsilon = epsilon
        self.m = m
        self.C1 = C1
        self.delta = delta

    def run(self, fam, rng) -> WeightedSampleSet:
        return run_iid_procedure(fam, fam.measure, self.epsilon, self.m, rng, self.C1, self.delta)

    def rescale(self, epsilon: float) -> "UniformProcedure":
        return UniformProcedure(epsilon, self.m, self.C1, self.delta)


class IidProcedure(SamplingProcedure):
    """i.i.d. draws from a fixed measure D'"""

    name = "iid"

    def __init__(
        self, epsilon: float, D_prime: Measure, m: int = None, C1: float = DEFAULT_C1, delta: float = None, **kwargs
    ) -> None:
        self.epsilon = epsilon
        self.D_prime = D_prime
        self.m = m
        self.C1 = C1
        self.delta = delta

    def run(self, fam, rng) -> WeightedSampleSet:
        return run_iid_procedure(fam, self.D_prime, self.epsilon, self.m, rng, self.C1, self.delta)

    def rescale(self, epsilon: float) -> "IidProcedure":
        return IidProcedure(epsilon, self.D_prime, self.m, self.C1, self.delta)


class LeverageProcedure(SamplingProcedure):
    """i.i.d. draws from the leverage measure D_F via the two-stage sampler"""

    name = "leverage"

    def __init__(self, epsilon: float, m: int = None, C1: float = DEFAULT_C1, delta: float = None, **kwargs) -> None:
        self.epsilon = epsilon
        self.m = m
        self.C1 = C1
        self.delta = delta
        self._cached = None

    def run(self, fam, rng) -> WeightedSampleSet:
        # Column CDFs depend only on the family
        if self._cached is None or self._cached[0] is not fam:
            self._cached = (fam, _column_cdfs(fam))
        return run_leverage_procedure(fam, self.epsilon, self.m, rng, self.C1, self.delta, self._cached[1])

    def rescale(self, epsilon: float) -> "LeverageProcedure":
        return LeverageProcedure(epsilon, self.m, self.C1, self.delta)
