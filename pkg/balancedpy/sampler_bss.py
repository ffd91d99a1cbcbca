import json
import numpy as np
from scipy.linalg import eigh
from tqdm import tqdm
from balancedpy.exceptions import BarrierViolation, RoundLimitExceeded, WellBalancedViolation
from balancedpy.measure import Measure, WeightedSampleSet, make_rng, seed_of
from balancedpy.procedure import SamplingProcedure

DEFAULT_C0 = 3.0
DEFAULT_ROUND_CONSTANT = 40.0

# At exit the barriers hold the Gram spectrum in ((1 - 2g) / (1 - g^2), (1 + 2g) / (1 - g^2)) up to one step,
# which stays inside the good interval [3/4, 5/4] for g <= 0.1
GAMMA_MAX = 0.1


class BssConfig(object):
    """Constants of the randomized BSS procedure for a family of dimension d"""

    def __init__(
        self,
        epsilon: float,
        d: int,
        C0: float = DEFAULT_C0,
        C: float = DEFAULT_ROUND_CONSTANT,
        max_rounds: int = None,
        gamma_max: float = GAMMA_MAX,
    ) -> None:
        """BssConfig class constructor

        Parameters
        ----------
        epsilon : float
            target accuracy in (0, 1)
        d : int
            family dimension
        C0 : float
            gamma = sqrt(epsilon) / C0 (default: 3)
        C : float
            round constant; the expected budget is ceil(C d / gamma^2) and the hard cap four times that (default: 40)
        max_rounds : int
            explicit hard cap on rounds (default: None)
        gamma_max : float
            upper clamp on gamma, None for none (default: 0.1)
        """

        if not 0 < epsilon < 1:
            raise ValueError("epsilon must be in (0, 1), got {}".format(epsilon))
        if d < 1:
            raise ValueError("d must be positive, got {}".format(d))
        self.epsilon = float(epsilon)
        self.d = int(d)
        self.C0 = float(C0)
        self.C = float(C)
        self.gamma = np.sqrt(epsilon) / C0
        if gamma_max is not None:
            self.gamma = min(self.gamma, float(gamma_max))
        if not 0 < self.gamma < 1:
            raise ValueError("gamma = sqrt(epsilon)/C0 = {} must be in (0, 1)".format(self.gamma))
        g = self.gamma
        self.mid = 4 * (d / g) / (1 / (1 - g) - 1 / (1 + g))
        self.round_budget = int(np.ceil(C * d / g ** 2))
        self.max_rounds = int(np.ceil(4 * C * d / g ** 2)) if max_rounds is None else int(max_rounds)

    @property
    def exit_gap(self) -> float:
        return 8 * self.d / self.gamma

    def __repr__(self) -> str:
        return "BssConfig(epsilon={}, d={}, gamma={:.4g}, mid={:.6g})".format(self.epsilon, self.d, self.gamma, self.mid)


class BarrierState(object):
    """B_j with its barriers l_j < lambda(B_j) < u_j and round counter j"""

    def __init__(self, B: "np.ndarray", u: float, l: float, j: int = 0) -> None:
        self.B = np.asarray(B, dtype=complex)
        self.u = float(u)
        self.l = float(l)
        self.j = int(j)
        self.eigs, self.vecs = eigh(0.5 * (self.B + self.B.conj().T))

    @classmethod
    def initial(cls, config: BssConfig) -> "BarrierState":
        d = config.d
        return cls(np.zeros((d, d), dtype=complex), 2 * d / config.gamma, -2 * d / config.gamma, 0)

    def check(self) -> None:
        if not (self.l < self.eigs[0] and self.eigs[-1] < self.u):
            raise BarrierViolation(
                "Round {}: spectrum [{:.6g}, {:.6g}] left the barriers ({:.6g}, {:.6g})".format(
                    self.j, self.eigs[0], self.eigs[-1], self.l, self.u
                )
            )

    @property
    def upper_resolvent_eigs(self) -> "np.ndarray":
        return 1 / (self.u - self.eigs)

    @property
    def lower_resolvent_eigs(self) -> "np.ndarray":
        return 1 / (self.eigs - self.l)

    @property
    def phi(self) -> float:
        """Tr(uI - B)^-1 + Tr(B - lI)^-1"""
        return float(np.sum(self.upper_resolvent_eigs) + np.sum(self.lower_resolvent_eigs))

    def __repr__(self) -> str:
        return "BarrierState(j={}, l={:.6g}, u={:.6g}, phi={:.6g})".format(self.j, self.l, self.u, self.phi)


def _resolvent_forms(state: BarrierState, fam) -> "np.ndarray":
    """v(x)* (uI - B)^-1 v(x) + v(x)* (B - lI)^-1 v(x) at every support point"""

    # |<eigvec_k, conj(v(x))>|^2 for each point and eigenvector
    P = np.abs(fam.support_values @ state.vecs) ** 2
    return P @ (state.upper_resolvent_eigs + state.lower_resolvent_eigs)


def bss_step_distribution(state: BarrierState, fam) -> Measure:
    """The round-j sampling measure D_j(x) = D(x) (v* (uI-B)^-1 v + v* (B-lI)^-1 v) / phi_j

    Raises
    ------
    BarrierViolation
        if either resolvent is not positive definite
    """

    state.check()
    forms = _resolvent_forms(state, fam)
    mass = fam.measure.mass * forms / state.phi
    return Measure(fam.measure.support, mass, label="bss-round-{}".format(state.j), normalize=True)


def _step_balance(fam, forms: "np.ndarray", alpha: float, phi: float) -> float:
    """alpha_j K_{D_j} = alpha_j max_x phi leverage(x) / forms(x)"""

    lev = fam.support_leverage
    ok = (fam.measure.mass > 0) & (lev > 1e-12 * max(lev.max(), 1.0))
    return float(alpha * np.max(phi * lev[ok] / forms[ok]))


def bss_step(state: BarrierState, fam, rng: "np.random.Generator", config: BssConfig, distribution: Measure = None) -> tuple:
    """Runs one round: draws x_j from D_j, adds s_j v v* to B and moves both barriers

    Parameters
    ----------
    state : BarrierState
        current state, left unchanged
    fam : OrthonormalFamily
        family and reference measure D
    rng : np.random.Generator
        random source
    config : BssConfig
        procedure constants
    distribution : Measure
        precomputed bss_step_distribution(state, fam) (default: None)

    Returns
    -------
    tuple
        (point, s_j, alpha_j, new state)
    """

    distribution = bss_step_distribution(state, fam) if distribution is None else distribution
    return _advance(state, fam, rng, config, distribution.mass)


def _advance(state: BarrierState, fam, rng: "np.random.Generator", config: BssConfig, mass: "np.ndarray") -> tuple:
    g = config.gamma
    phi = state.phi

    cdf = np.cumsum(mass)
    i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    i = min(i, len(mass) - 1)
    x = fam.measure.support[i]
    s = (g / phi) * fam.measure.mass[i] / mass[i]
    alpha = (g / phi) / config.mid

    a = fam.support_values[i].conj()
    B = state.B + s * np.outer(a, a.conj())
    u = state.u + g / (phi * (1 - g))
    l = state.l + g / (phi * (1 + g))
    new_state = BarrierState(B, u, l, state.j + 1)
    new_state.check()

    return x, s, alpha, new_state


def run_bss_procedure(
    fam,
    epsilon: float,
    config: BssConfig = None,
    rng: "np.random.Generator" = None,
    trace: list = None,
    quiet: bool = True,
) -> WeightedSampleSet:
    """Randomized BSS sampling: rounds continue until the barrier gap u - l reaches 8d / gamma

    Parameters
    ----------
    fam : OrthonormalFamily
        family over a finite-support measure D
    epsilon : float
        target accuracy in (0, 1)
    config : BssConfig
        constants; built from epsilon and the family dimension when None (default: None)
    rng : np.random.Generator
        random source (default: None)
    trace : list
        if given, one dict per round (j, u, l, phi, x, s) is appended (default: None)
    quiet : bool
        if true, hides the progress bar (default: True)

    Returns
    -------
    WeightedSampleSet
        points x_j with w_j = s_j / mid and alpha_j = gamma / (phi_j mid); info holds the round count, barriers, per-round alpha_j K_{D_j} and bookkeeping checks

    Raises
    ------
    RoundLimitExceeded
        if the gap is not closed within config.max_rounds
    WellBalancedViolation
        if a completed run breaks sum(alpha) <= 5/4, sum(gamma / phi) >= mid or the spectral implication
    """

    d = fam.dimension
    config = BssConfig(epsilon, d) if config is None else config
    rng = make_rng(0) if rng is None else rng
    g = config.gamma

    state = BarrierState.initial(config)
    points, scales, alphas, balance, steps = [], [], [], [], []

    # Main loop
    with tqdm(total=config.round_budget, disable=quiet) as bar:
        while True:
            if state.j >= config.max_rounds:
                raise RoundLimitExceeded(
                    "BSS did not close the barrier gap within {} rounds ({:.6g} of {:.6g})".format(
                        config.max_rounds, state.u - state.l, config.exit_gap
                    )
                )
            state.check()
            forms = _resolvent_forms(state, fam)
            phi = state.phi
            mass = fam.measure.mass * forms / phi
            mass = mass / mass.sum()
            balance.append(_step_balance(fam, forms, (g / phi) / config.mid, phi))
            steps.append(g / phi)

            x, s, alpha, state = _advance(state, fam, rng, config, mass)
            points.append(x)
            scales.append(s)
            alphas.append(alpha)
            if trace is not None:
                trace.append({"j": state.j - 1, "u": state.u, "l": state.l, "phi": phi, "x": x, "s": s})
            bar.update(1)

            if state.u - state.l >= config.exit_gap:
                break

    scales = np.array(scales)
    alphas = np.array(alphas)
    weights = scales / config.mid
    gram_eigs = state.eigs / config.mid
    ratio = state.u / state.l if state.l > 0 else np.inf

    # Bookkeeping
    sum_alpha = float(alphas.sum())
    sum_steps = float(np.sum(steps))
    if sum_alpha > 1.25 + 1e-12:
        raise WellBalancedViolation("BSS coefficients sum to {:.6g} > 5/4".format(sum_alpha))
    if sum_steps < config.mid * (1 - 1e-12):
        raise WellBalancedViolation("sum of gamma/phi {:.6g} fell short of mid {:.6g}".format(sum_steps, config.mid))
    if state.u - state.l > 9 * d / g:
        raise WellBalancedViolation("final barrier gap {:.6g} exceeds 9d/gamma = {:.6g}".format(state.u - state.l, 9 * d / g))
    if ratio <= 1 + 8 * g and not (gram_eigs[0] > 1 - 5 * g and gram_eigs[-1] < 1 + 5 * g):
        raise WellBalancedViolation(
            "u/l = {:.6g} <= 1 + 8 gamma but the spectrum [{:.6g}, {:.6g}] left (1 - 5 gamma, 1 + 5 gamma)".format(
                ratio, gram_eigs[0], gram_eigs[-1]
            )
        )

    info = {
        "procedure": "bss",
        "rounds": state.j,
        "within_budget": state.j <= config.round_budget,
        "u": state.u,
        "l": state.l,
        "gap": state.u - state.l,
        "barrier_ratio": ratio,
        "gamma": g,
        "mid": config.mid,
        "sum_steps": sum_steps,
        "gram_eigs": gram_eigs,
        "enclosure": (state.l / config.mid, state.u / config.mid),
        "balance": np.array(balance),
    }
    return WeightedSampleSet(np.array(points), weights, alphas, source_seed=seed_of(rng), info=info)


def dump_trace(trace: list, path: str) -> None:
    """Writes a BSS trace as JSON lines"""

    from balancedpy.tools import to_serializable

    with open(path, "w") as f:
        for row in trace:
            f.write(json.dumps(to_serializable(row)) + "\n")


class BssProcedure(SamplingProcedure):
    """Randomized BSS with barrier potentials"""

    name = "bss"

    def __init__(
        self,
        epsilon: float,
        C0: float = DEFAULT_C0,
        C: float = DEFAULT_ROUND_CONSTANT,
        max_rounds: int = None,
        quiet: bool = True,
        gamma_max: float = GAMMA_MAX,
        **kwargs
    ) -> None:
        """BssProcedure class constructor

        Parameters
        ----------
        epsilon : float
            target accuracy
        C0 : float
            gamma = sqrt(epsilon) / C0 (default: 3)
        C : float
            round constant (default: 40)
        max_rounds : int
            hard cap on rounds (default: None)
        quiet : bool
            if true, hides the per-round progress bar (default: True)
        gamma_max : float
            upper clamp on gamma, None for none (default: 0.1)
        """

        self.epsilon = epsilon
        self.C0 = C0
        self.C = C
        self.max_rounds = max_rounds
        self.quiet = quiet
        self.gamma_max = gamma_max

    def config(self, d: int) -> BssConfig:
        return BssConfig(self.epsilon, d, self.C0, self.C, self.max_rounds, self.gamma_max)

    def run(self, fam, rng) -> WeightedSampleSet:
        return run_bss_procedure(fam, self.epsilon, self.config(fam.dimension), rng, quiet=self.quiet)

    def rescale(self, epsilon: float) -> "BssProcedure":
        return BssProcedure(epsilon, self.C0, self.C, self.max_rounds, self.quiet, self.gamma_max)
