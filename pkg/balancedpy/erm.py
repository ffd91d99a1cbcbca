import numpy as np
from scipy.linalg import eigvalsh, cho_factor, cho_solve, LinAlgError
from balancedpy.exceptions import EmptyInput, SingularGram, NotGood, NoGoodExecution
from balancedpy.family import CoefficientVector
from balancedpy.measure import WeightedSampleSet

GOOD_LOW = 0.75
GOOD_HIGH = 1.25
SINGULAR_TOLERANCE = 1e-12
DEFAULT_DELTA = 1e-6
MAX_ATTEMPTS = 50


class DesignMatrix(object):
    """The m x d matrix A(i, j) = sqrt(w_i) v_j(x_i) of a weighted sample, with the spectrum of A*A"""

    def __init__(self, A: "np.ndarray", weights: "np.ndarray", points: "np.ndarray" = None) -> None:
        """DesignMatrix class constructor

        Parameters
        ----------
        A : np.ndarray
            weighted design, shape (m, d)
        weights : np.ndarray
            the sample weights w_i, used to weight labels
        points : np.ndarray
            the sample points (default: None)
        """

        A = np.array(A, dtype=complex)
        if A.ndim != 2 or A.shape[0] == 0:
            raise EmptyInput("A design matrix needs at least one sampled row")
        self.A = A
        self.weights = np.asarray(weights, dtype=float).ravel()
        self.points = points
        self.gram = A.conj().T @ A
        self.gram = 0.5 * (self.gram + self.gram.conj().T)
        self.gram_eigs = eigvalsh(self.gram)
        self.A.flags.writeable = False

    @classmethod
    def from_columns(cls, columns: "np.ndarray", weights: "np.ndarray", points: "np.ndarray" = None) -> "DesignMatrix":
        """Weights arbitrary column values, for designs that do not come from an orthonormal family"""
        weights = np.asarray(weights, dtype=float).ravel()
        return cls(np.sqrt(weights)[:, None] * np.asarray(columns), weights, points)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]

    @property
    def contraction(self) -> float:
        """The norm of I - A*A"""
        return float(np.max(np.abs(1 - self.gram_eigs)))

    def weighted_labels(self, labels) -> "np.ndarray":
        labels = np.asarray(labels, dtype=complex).ravel()
        if len(labels) != self.m:
            raise ValueError("Expected {} labels, got {}".format(self.m, len(labels)))
        return np.sqrt(self.weights) * labels


class ErmSolution(object):
    """Coefficients of the weighted empirical risk minimizer"""

    def __init__(
        self, coeffs: CoefficientVector, residual: float, good: bool, solver: str, terms: int = None, family=None
    ) -> None:
        self.coeffs = coeffs
        self.residual = residual
        self.good = good
        self.solver = solver
        self.terms = terms
        self.family = family

    def predict(self, points):
        """Values of the fitted function, needs the family the coefficients refer to"""
        if self.family is None:
            raise ValueError("This solution carries no family to evaluate")
        return self.family.evaluate(self.coeffs, points)

    def __repr__(self) -> str:
        solver = self.solver if self.terms is None else "{}({})".format(self.solver, self.terms)
        return "ErmSolution({}, residual={:.3e}, good={})".format(solver, self.residual, self.good)


def build_design(fam, S_w: WeightedSampleSet) -> DesignMatrix:
    """Builds A(i, j) = sqrt(w_i) v_j(x_i) for an orthonormal family and a weighted sample"""

    if not len(S_w):
        raise EmptyInput("Cannot build a design from an empty sample")
    values = fam.values(S_w.points)
    return DesignMatrix(np.sqrt(S_w.weights)[:, None] * values, S_w.weights, S_w.points)


def is_good(dm: DesignMatrix, low: float = GOOD_LOW, high: float = GOOD_HIGH) -> bool:
    """True iff the spectrum of A*A lies in the closed interval [low, high]"""
    return bool(dm.gram_eigs[0] >= low and dm.gram_eigs[-1] <= high)


def taylor_terms(delta: float = DEFAULT_DELTA, contraction: float = 0.25) -> int:
    """Smallest t with contraction^t <= delta, so the truncated series sum_{i<=t} (I - A*A)^i is within delta * contraction of the inverse"""

    if not 0 < delta < 1:
        raise ValueError("delta must be in (0, 1), got {}".format(delta))
    if contraction <= 0:
        return 0
    if contraction >= 1:
        raise NotGood("The series for (A*A)^-1 does not converge when ||I - A*A|| = {:.3f} >= 1".format(contraction))
    return int(np.ceil(np.log(delta) / np.log(contraction)))


def solve_erm(
    dm: DesignMatrix,
    labels,
    method: str = "direct",
    t: int = None,
    delta: float = DEFAULT_DELTA,
) -> ErmSolution:
    """Solves the weighted least squares problem min_h sum_i w_i |h(x_i) - y_i|^2

    Parameters
    ----------
    dm : DesignMatrix
        the design
    labels : array_like
        one label per sample row
    method : str
        "direct" (Cholesky of A*A) or "taylor" (truncated Neumann series, needs a good design) (default: "direct")
    t : int
        number of series terms for "taylor"; calibrated from delta and ||I - A*A|| when None (default: None)
    delta : float
        target relative accuracy of the series (default: 1e-6)

    Returns
    -------
    ErmSolution
        coefficients (A*A)^-1 A* y_w and the residual ||A coeffs - y_w||
    """

    y_w = dm.weighted_labels(labels)
    b = dm.A.conj().T @ y_w
    good = is_good(dm)

    if method == "direct":
        if dm.gram_eigs[0] < SINGULAR_TOLERANCE:
            raise SingularGram("A*A has smallest eigenvalue {:.3e} below {}".format(dm.gram_eigs[0], SINGULAR_TOLERANCE))
        try:
            coeffs = cho_solve(cho_factor(dm.gram), b)
        except LinAlgError as e:
            raise SingularGram("Cholesky factorization of A*A failed") from e
        terms = None
    elif method == "taylor":
        if not good:
            raise NotGood(
                "The Taylor solver needs a good design, spectrum is [{:.4f}, {:.4f}]".format(dm.gram_eigs[0], dm.gram_eigs[-1])
            )
        terms = taylor_terms(delta, dm.contraction) if t is None else int(t)

        # sum_{i=0}^t (I - A*A)^i b
        term = b.copy()
        coeffs = b.copy()
        for _ in range(terms):
            term = term - dm.gram @ term
            coeffs = coeffs + term
    else:
        raise ValueError("Unknown solver '{}', expected 'direct' or 'taylor'".format(method))

    residual = float(np.linalg.norm(dm.A @ coeffs - y_w))
    return ErmSolution(CoefficientVector(coeffs), residual, good, method, terms)


def weighted_erm(fam, S_w: WeightedSampleSet, labels, method: str = "direct", **kwargs) -> ErmSolution:
    solution = solve_erm(build_design(fam, S_w), labels, method=method, **kwargs)
    solution.family = fam
    return solution


def noise_projection_diagnostic(dm: DesignMatrix, y, f_true_values) -> float:
    """Returns ||A*(y_w - f_w)||^2, the weighted noise after projection onto the family"""

    r = dm.weighted_labels(np.asarray(y, dtype=complex) - np.asarray(f_true_values, dtype=complex))
    return float(np.linalg.norm(dm.A.conj().T @ r) ** 2)


def run_until_good(procedure, fam, rng: "np.random.Generator", max_attempts: int = MAX_ATTEMPTS) -> tuple:
    """Reruns a sampling procedure until its design is good

    Parameters
    ----------
    procedure : SamplingProcedure or callable
        anything with run(fam, rng), or a function (fam, rng) -> WeightedSampleSet
    fam : OrthonormalFamily
        the family
    rng : np.random.Generator
        random source
    max_attempts : int
        attempt cap (default: 50)

    Returns
    -------
    tuple
        (WeightedSampleSet, DesignMatrix, retries) of the first good execution

    Raises
    ------
    NoGoodExecution
        if no attempt is good
    """

    run = procedure.run if hasattr(procedure, "run") else procedure
    worst = None
    for attempt in range(max_attempts):
        S_w = run(fam, rng)
        dm = build_design(fam, S_w)
        if is_good(dm):
            S_w.info["retries"] = attempt
            return S_w, dm, attempt
        worst = dm.gram_eigs[[0, -1]]

    raise NoGoodExecution(
        "No good execution in {} attempts; the last spectrum was [{:.4f}, {:.4f}]".format(max_attempts, worst[0], worst[1])
    )


def check_well_balanced(S_w: WeightedSampleSet, epsilon: float) -> dict:
    """Recomputes the coefficient bookkeeping of a sample

    Returns
    -------
    dict
        sum_alpha, max_balance (max_i alpha_i K_{D_i}) and whether each bound (sum_alpha <= 5/4, max_balance <= epsilon / 2) holds
    """

    sum_alpha = float(np.sum(S_w.alphas))
    balance = np.asarray(S_w.info.get("balance", []), dtype=float)
    max_balance = float(balance.max()) if len(balance) else np.nan
    return {
        "sum_alpha": sum_alpha,
        "max_balance": max_balance,
        "sum_alpha_ok": sum_alpha <= GOOD_HIGH + 1e-12,
        "balance_ok": bool(len(balance)) and max_balance <= epsilon / 2 + 1e-12,
    }
