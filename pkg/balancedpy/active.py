import itertools
import numpy as np
from balancedpy.erm import run_until_good, solve_erm, MAX_ATTEMPTS
from balancedpy.exceptions import BalancedError, DegenerateFamily, EmptyInput
from balancedpy.family import BasisSpec, orthonormalize
from balancedpy.measure import Measure, empirical_uniform, make_rng
from balancedpy.procedure import SamplingProcedure, procedure_from_name
from balancedpy.sampler_iid import log_factor

DEFAULT_C = 6.0


class ActivePlan(object):
    """Budget of the unknown-distribution pipeline: m0 unlabeled draws, inner procedure at epsilon / 8"""

    def __init__(self, m0: int, K: float, epsilon: float, C: float = DEFAULT_C) -> None:
        self.m0 = int(m0)
        self.K = K
        self.epsilon = float(epsilon)
        self.inner_epsilon = self.epsilon / 8
        self.C = float(C)
        self.label_budget_observed = None

    def __repr__(self) -> str:
        return "ActivePlan(m0={}, K={}, epsilon={}, labels={})".format(self.m0, self.K, self.epsilon, self.label_budget_observed)


class LabelOracle(object):
    """Counts every label request made against a labeling callback"""

    def __init__(self, callback) -> None:
        """LabelOracle class constructor

        Parameters
        ----------
        callback : callable
            maps a domain point to its (possibly noisy) label
        """

        self.callback = callback
        self.call_counter = 0
        self.queried = []

    def __call__(self, x) -> complex:
        self.call_counter += 1
        self.queried.append(x)
        return complex(self.callback(x))

    def label_all(self, points) -> "np.ndarray":
        return np.array([self(x) for x in points], dtype=complex)


def measure_condition_number(fam_basis: BasisSpec, D_known: Measure) -> float:
    """K = max over the support of sum_i |v_i(x)|^2 with v orthonormal under D_known"""

    fam = orthonormalize(fam_basis, D_known)
    lev = fam.support_leverage[D_known.mass > 0]
    return float(lev.max())


def plan_active(
    fam_basis: BasisSpec,
    epsilon: float,
    K: float = None,
    m0: int = None,
    C: float = DEFAULT_C,
    D_known: Measure = None,
) -> ActivePlan:
    """Sizes m0 = ceil(C (K log d + K / epsilon)) unless m0 is given

    K is either supplied or measured exactly from a known D.
    """

    if not 0 < epsilon < 1:
        raise ValueError("epsilon must be in (0, 1), got {}".format(epsilon))
    if K is None and D_known is not None:
        K = measure_condition_number(fam_basis, D_known)
    if m0 is None:
        if K is None:
            raise ValueError("Supply the condition number K, a known measure, or m0 directly")
        m0 = int(np.ceil(C * (K * log_factor(fam_basis.dimension) + K / epsilon)))
    if m0 < 1:
        raise ValueError("m0 must be positive, got {}".format(m0))
    return ActivePlan(m0, K, epsilon, C)


def _take(unlabeled_stream, n: int, rng) -> "np.ndarray":
    if callable(unlabeled_stream):
        points = np.asarray(unlabeled_stream(n, rng))
    else:
        points = np.asarray(list(itertools.islice(iter(unlabeled_stream), n)))
    if points.ndim == 0:
        points = points.reshape(1)
    if len(points) < n:
        raise EmptyInput("The unlabeled stream yielded {} points, {} were needed".format(len(points), n))
    return points[:n]


def run_active(
    fam_basis: BasisSpec,
    unlabeled_stream,
    oracle: LabelOracle,
    epsilon: float,
    rng: "np.random.Generator" = None,
    K: float = None,
    m0: int = None,
    C: float = DEFAULT_C,
    procedure="bss",
    max_attempts: int = MAX_ATTEMPTS,
) -> tuple:
    """Regression under an unknown distribution with few labels

    m0 unlabeled points are drawn and their empirical distribution D0 replaces the unknown D: the family is orthonormalized under D0, a well-balanced procedure at epsilon / 8 is rerun until good, and only its points are labeled.

    Parameters
    ----------
    fam_basis : BasisSpec
        raw basis of the family
    unlabeled_stream : callable or iterable
        source of unlabeled draws from the true distribution; a callable is invoked as stream(n, rng)
    oracle : LabelOracle
        label source
    epsilon : float
        target accuracy in (0, 1)
    rng : np.random.Generator
        random source (default: None)
    K : float
        condition number used to size m0 (default: None)
    m0 : int
        explicit unlabeled count (default: None)
    C : float
        sizing constant for m0 (default: 6)
    procedure : str or SamplingProcedure
        inner well-balanced procedure, rescaled to epsilon / 8 (default: "bss")
    max_attempts : int
        reruns allowed before giving up (default: 50)

    Returns
    -------
    tuple
        (ErmSolution carrying the D0 family, report dict with m0, labels, retries, rounds)
    """

    rng = make_rng(0) if rng is None else rng
    plan = plan_active(fam_basis, epsilon, K=K, m0=m0, C=C)

    # Unlabeled draws and their empirical measure
    points = _take(unlabeled_stream, plan.m0, rng)
    D0 = empirical_uniform(points, label="empirical:{}".format(plan.m0))
    try:
        fam = orthonormalize(fam_basis, D0)
    except DegenerateFamily as e:
        raise DegenerateFamily("{}. The {} unlabeled points do not support the family, use a larger m0".format(e, plan.m0)) from e

    # Inner well-balanced procedure
    if isinstance(procedure, SamplingProcedure):
        inner = procedure.rescale(plan.inner_epsilon)
    else:
        inner = procedure_from_name(procedure, plan.inner_epsilon)
    S_w, dm, retries = run_until_good(inner, fam, rng, max_attempts)
    if np.any(D0.indices(S_w.points) < 0):
        raise BalancedError("The inner procedure proposed a point outside the unlabeled set")

    # Label only the good execution
    before = oracle.call_counter
    labels = oracle.label_all(S_w.points)
    plan.label_budget_observed = oracle.call_counter - before

    solution = solve_erm(dm, labels)
    solution.family = fam
    report = {
        "m0": plan.m0,
        "labels": plan.label_budget_observed,
        "retries": retries,
        "rounds": int(S_w.info.get("rounds", len(S_w))),
        "K": plan.K,
        "epsilon": plan.epsilon,
        "inner_epsilon": plan.inner_epsilon,
        "procedure": inner.name,
        "support": len(D0),
    }
    return solution, report
