import numpy as np
from scipy.linalg import cholesky, eigvalsh, solve_triangular
from tqdm import tqdm
from balancedpy.erm import DesignMatrix, solve_erm
from balancedpy.exceptions import InvalidK, NetTooLarge, SingularGram
from balancedpy.measure import Measure, WeightedSampleSet, geometric_grid, make_rng, seed_of
from balancedpy.tools import cell_widths

MERGE_TOLERANCE = 1e-9
DEFAULT_CAP = 10 ** 7


class SparseFourierSignal(object):
    """f(x) = sum_j v_j exp(2 pi i f_j x) with every |f_j| <= F"""

    def __init__(self, freqs, amps, bandlimit: float = None) -> None:
        """SparseFourierSignal class constructor

        Parameters
        ----------
        freqs : array_like
            real frequencies f_1..f_k, not necessarily distinct
        amps : array_like
            complex amplitudes v_1..v_k
        bandlimit : float
            F, defaults to the largest |f_j| (default: None)
        """

        self.freqs = np.asarray(freqs, dtype=float).ravel()
        self.amps = np.asarray(amps, dtype=complex).ravel()
        if not len(self.freqs):
            raise InvalidK("A sparse Fourier signal needs k >= 1 frequencies")
        if len(self.freqs) != len(self.amps):
            raise ValueError("Got {} frequencies and {} amplitudes".format(len(self.freqs), len(self.amps)))
        self.bandlimit = float(np.max(np.abs(self.freqs))) if bandlimit is None else float(bandlimit)
        if np.any(np.abs(self.freqs) > self.bandlimit * (1 + 1e-12)):
            raise ValueError("Frequencies {} exceed the bandlimit {}".format(self.freqs, self.bandlimit))

    @property
    def k(self) -> int:
        return len(self.freqs)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        values = np.exp(2j * np.pi * np.multiply.outer(x, self.freqs)) @ self.amps
        return complex(values) if np.ndim(values) == 0 else values

    def __repr__(self) -> str:
        return "SparseFourierSignal(freqs={}, amps={})".format(self.freqs, self.amps)


def knee(k: int) -> float:
    """Point 1 - 1 / (k^3 log^2 k) where the 1/(1-|x|) profile is capped"""
    return 1 - 1 / (k ** 3 * np.log(k) ** 2)


def _profile(x, k: int) -> "np.ndarray":
    x = np.abs(np.asarray(x, dtype=float))
    inner = 1 / (np.maximum(1 - x, 1e-300) * np.log(k))
    return np.where(x <= knee(k), inner, k ** 3 * np.log(k))


class FourierWeightDensity(object):
    """Importance density on [-1, 1] for k-sparse Fourier signals: c / ((1 - |x|) log k) up to the knee and c k^3 log k beyond, realized on a grid refined toward +-1. For k = 1 the k = 2 shape is used."""

    def __init__(self, k: int, c: float, knee: float, grid: Measure, uniform: Measure) -> None:
        """FourierWeightDensity class constructor

        Parameters
        ----------
        k : int
            sparsity
        c : float
            normalizer of the density against Lebesgue measure
        knee : float
            switch point of the profile
        grid : Measure
            the density realized as a measure (cell mass = density times cell length)
        uniform : Measure
            the discretized uniform measure on the same points
        """

        self.k = k
        self.shape_k = max(k, 2)
        self.c = c
        self.knee = knee
        self.grid = grid
        self.uniform = uniform

    def density(self, x):
        """Density against Lebesgue measure on [-1, 1]"""
        return self.c * _profile(x, self.shape_k)

    def weights(self) -> "np.ndarray":
        """Reweighting D(x) / D_F(x) at every grid point"""
        return self.uniform.mass / self.grid.mass


def fourier_weight_density(k: int, grid_size: int = 4000, min_gap: float = 1e-9) -> FourierWeightDensity:
    """Builds the piecewise importance density for k-sparse signals

    Parameters
    ----------
    k : int
        sparsity, at least 1
    grid_size : int
        approximate number of grid points, at least 1000 (default: 4000)
    min_gap : float
        closest approach of the grid to +-1 (default: 1e-9)
    """

    if int(k) != k or k < 1:
        raise InvalidK("k must be a positive integer, got {}".format(k))
    if grid_size < 1000:
        raise ValueError("grid_size must be at least 1000, got {}".format(grid_size))
    k = int(k)
    shape_k = max(k, 2)

    uniform = geometric_grid(grid_size, min_gap)
    x = np.asarray(uniform.support, dtype=float)
    widths = cell_widths(x, -1.0, 1.0)
    profile = _profile(x, shape_k)
    c = 1 / np.sum(profile * widths)
    grid = Measure(x, c * profile * widths, label="fourier-weights:{}".format(k), normalize=True)

    return FourierWeightDensity(k, c, knee(shape_k), grid, uniform)


def merge_frequencies(freqs, tol: float = MERGE_TOLERANCE) -> "np.ndarray":
    """Sorted frequencies with any within tol of the previous kept one dropped"""

    freqs = np.sort(np.asarray(freqs, dtype=float).ravel())
    kept = [freqs[0]]
    for f in freqs[1:]:
        if f - kept[-1] > tol:
            kept.append(f)
    return np.array(kept)


def _exponential_gram(freqs: "np.ndarray", D_grid: Measure) -> "np.ndarray":
    x = np.asarray(D_grid.support, dtype=float)
    E = np.exp(2j * np.pi * np.outer(x, freqs))
    M = (E.conj().T * D_grid.mass) @ E
    return 0.5 * (M + M.conj().T)


def sup_ratio(freqs, x, D_grid: Measure, tol: float = 1e-12):
    """Largest |f(x)|^2 / ||f||_D^2 over amplitudes for fixed frequencies, e(x)* G^-1 e(x)

    Parameters
    ----------
    freqs : array_like
        the frequencies; near duplicates are merged
    x : float or array_like
        evaluation point(s)
    D_grid : Measure
        measure defining ||.||_D
    tol : float
        relative eigenvalue floor of the Gram matrix (default: 1e-12)

    Raises
    ------
    SingularGram
        if the merged exponentials are numerically dependent under D_grid
    """

    f = merge_frequencies(freqs)
    M = _exponential_gram(f, D_grid)
    eigs = eigvalsh(M)
    if eigs[0] < tol * eigs[-1]:
        raise SingularGram("Exponentials at {} are numerically dependent under {}".format(f, D_grid.label))
    L = cholesky(M, lower=True)

    xs = np.atleast_1d(np.asarray(x, dtype=float))
    a = np.exp(-2j * np.pi * np.outer(f, xs))
    Z = solve_triangular(L, a, lower=True)
    values = np.sum(np.abs(Z) ** 2, axis=0)
    return float(values[0]) if np.ndim(x) == 0 else values


def _draw_frequencies(k: int, F: float, rng) -> "np.ndarray":
    return rng.uniform(-F, F, size=k)


def _max_sup_ratio(k: int, xs, D_grid: Measure, num_freq_draws: int, F: float, rng, quiet: bool = True) -> tuple:
    """Pointwise max of sup_ratio over random frequency draws, skipping numerically dependent draws"""

    best = np.zeros(len(xs))
    skipped = 0
    for _ in tqdm(range(num_freq_draws), disable=quiet):
        try:
            best = np.maximum(best, sup_ratio(_draw_frequencies(k, F, rng), xs, D_grid))
        except SingularGram:
            skipped += 1
    return best, skipped


def verify_weight_bound(
    k: int,
    num_freq_draws: int = 200,
    x_grid=None,
    F: float = None,
    rng: "np.random.Generator" = None,
    D_grid: Measure = None,
    quiet: bool = True,
) -> dict:
    """Empirical constant in sup_ratio(x) <= C k log k / (1 - |x|)

    Parameters
    ----------
    k : int
        sparsity, at least 2
    num_freq_draws : int
        random frequency tuples, uniform on [-F, F] (default: 200)
    x_grid : array_like
        points with |x| < 1 (default: interior points of D_grid)
    F : float
        bandlimit of the draws (default: k)
    rng : np.random.Generator
        random source (default: None)
    D_grid : Measure
        discretized uniform measure on [-1, 1] (default: geometric_grid(2000))

    Returns
    -------
    dict
        max_ratio_constant, the point where it is attained, and the number of skipped draws
    """

    if int(k) != k or k < 2:
        raise InvalidK("verify_weight_bound needs k >= 2, got {}".format(k))
    rng = make_rng(0) if rng is None else rng
    D_grid = geometric_grid(2000) if D_grid is None else D_grid
    F = float(k) if F is None else F
    xs = np.asarray(D_grid.support, dtype=float) if x_grid is None else np.asarray(x_grid, dtype=float)
    xs = xs[np.abs(xs) < 1]

    best, skipped = _max_sup_ratio(k, xs, D_grid, num_freq_draws, F, rng, quiet)
    constants = best * (1 - np.abs(xs)) / (k * np.log(k))
    i = int(np.argmax(constants))
    return {
        "k": k,
        "max_ratio_constant": float(constants[i]),
        "argmax_x": float(xs[i]),
        "draws": num_freq_draws,
        "skipped": skipped,
    }


def estimate_kappa(
    k: int,
    D_F: FourierWeightDensity,
    num_freq_draws: int = 200,
    rng: "np.random.Generator" = None,
    F: float = None,
) -> float:
    """E_{x ~ D}[max over draws of sup_ratio(x)] with D uniform on the density's grid. Sampling the frequency sup makes this a lower estimate of kappa."""

    if int(k) != k or k < 2:
        raise InvalidK("estimate_kappa needs k >= 2, got {}".format(k))
    rng = make_rng(0) if rng is None else rng
    F = float(k) if F is None else F
    D = D_F.uniform
    best, _ = _max_sup_ratio(k, np.asarray(D.support, dtype=float), D, num_freq_draws, F, rng)
    return float(np.sum(D.mass * best))


def reweighted_kappa(
    k: int,
    D_F: FourierWeightDensity,
    num_freq_draws: int = 200,
    rng: "np.random.Generator" = None,
    F: float = None,
) -> float:
    """max_x (D(x) / D_F(x)) max over draws of sup_ratio(x), the condition number under D_F"""

    if int(k) != k or k < 2:
        raise InvalidK("reweighted_kappa needs k >= 2, got {}".format(k))
    rng = make_rng(0) if rng is None else rng
    F = float(k) if F is None else F
    D = D_F.uniform
    best, _ = _max_sup_ratio(k, np.asarray(D.support, dtype=float), D, num_freq_draws, F, rng)
    return float(np.max(D_F.weights() * best))


def sparse_ft_sample_count(k: int, F: float, T: float, epsilon: float, C: float = 1.0) -> int:
    """m = C (k^4 log^3 k + k^2 log^2 k log(F T / epsilon)), logs clamped below at 1"""

    L = max(np.log(k), 1.0)
    tail = max(np.log(F * T / epsilon), 1.0)
    return int(np.ceil(C * (k ** 4 * L ** 3 + k ** 2 * L ** 2 * tail)))


def sample_fourier(D_F: FourierWeightDensity, m: int, rng: "np.random.Generator", T: float = 1.0) -> WeightedSampleSet:
    """m i.i.d. draws from D_F with w_i = D(x_i) / (m D_F(x_i)), returned as times T x_i"""

    idx = D_F.grid.sample_indices(rng, m)
    x = np.asarray(D_F.grid.support, dtype=float)[idx]
    weights = D_F.uniform.mass[idx] / (m * D_F.grid.mass[idx])
    info = {"procedure": "fourier", "k": D_F.k, "T": T}
    return WeightedSampleSet(T * x, weights, np.full(m, 1.0 / m), source_seed=seed_of(rng), info=info)


def frequency_net(F: float, spacing: float) -> "np.ndarray":
    """spacing * Z intersected with [-F, F]"""

    if spacing <= 0:
        raise ValueError("Net spacing must be positive, got {}".format(spacing))
    lo = int(np.ceil(-F / spacing - 1e-9))
    hi = int(np.floor(F / spacing + 1e-9))
    return spacing * np.arange(lo, hi + 1)


def candidate_residual(samples: WeightedSampleSet, labels, freqs) -> float:
    """Weighted ERM residual ||h - y||_{S,w} of the best h in span{exp(2 pi i f t) : f in freqs}"""

    f = merge_frequencies(freqs)
    t = np.asarray(samples.points, dtype=float)
    dm = DesignMatrix.from_columns(np.exp(2j * np.pi * np.outer(t, f)), samples.weights, samples.points)
    return solve_erm(dm, labels).residual


def _residuals_single(t, w, y, net, chunk: int = 512) -> tuple:
    """Squared residual of every one-frequency candidate, and the correlations b_f = sum w conj(e_f) y"""

    S = np.sum(w)
    yy = np.sum(w * np.abs(y) ** 2)
    b = np.empty(len(net), dtype=complex)
    for start in range(0, len(net), chunk):
        f = net[start : start + chunk]
        b[start : start + chunk] = np.exp(-2j * np.pi * np.outer(f, t)) @ (w * y)
    return yy - np.abs(b) ** 2 / S, b, S, yy


def recover_sparse_ft(
    samples: WeightedSampleSet,
    labels,
    k: int,
    F: float,
    T: float = 1.0,
    epsilon: float = 0.1,
    net: float = None,
    cap: int = DEFAULT_CAP,
    quiet: bool = True,
) -> SparseFourierSignal:
    """Recovers a k-sparse signal by exhaustive weighted ERM over a frequency net

    Every candidate tuple (frequencies taken from the net in lexicographic order, repeats allowed) is scored by its exact weighted least-squares residual; the first minimizer wins and is refit with solve_erm.

    Parameters
    ----------
    samples : WeightedSampleSet
        sample times in [-T, T] with weights
    labels : array_like
        noisy observations at the sample times
    k : int
        sparsity, 1 or 2
    F : float
        bandlimit
    T : float
        half length of the observation window (default: 1)
    epsilon : float
        accuracy, used for the default net spacing epsilon / (T k^(k^2)) (default: 0.1)
    net : float
        explicit net spacing (default: None)
    cap : int
        largest number of candidate tuples allowed (default: 1e7)
    quiet : bool
        if true, hides the progress bar (default: True)

    Raises
    ------
    InvalidK
        if k is not 1 or 2
    NetTooLarge
        if the net has more than cap candidate tuples
    """

    if k not in [1, 2]:
        raise InvalidK("Net enumeration supports k = 1 or 2, got {}".format(k))
    spacing = epsilon / (T * k ** (k * k)) if net is None else net
    grid = frequency_net(F, spacing)
    N = len(grid)
    count = N if k == 1 else N * (N + 1) // 2
    if count > cap:
        raise NetTooLarge("A net of spacing {} on [-{}, {}] gives {} candidates, above the cap {}".format(spacing, F, F, count, cap))

    t = np.asarray(samples.points, dtype=float)
    w = samples.weights
    y = np.asarray(labels, dtype=complex).ravel()
    single, b, S, yy = _residuals_single(t, w, y, grid)

    if k == 1:
        best = (int(np.argmin(single)),)
    else:
        # Pair correlations depend only on the index difference
        h = np.exp(2j * np.pi * np.outer(spacing * np.arange(N), t)) @ w
        best, best_value = None, np.inf
        for a in tqdm(range(N), disable=quiet):
            if single[a] < best_value:
                best, best_value = (a, a), single[a]
            if a + 1 == N:
                continue
            c = h[1 : N - a]
            bb = b[a + 1 :]
            det = S ** 2 - np.abs(c) ** 2
            fit = (S * np.abs(b[a]) ** 2 + S * np.abs(bb) ** 2 - 2 * np.real(np.conj(b[a]) * c * bb)) / np.where(
                det > 1e-12 * S ** 2, det, np.inf
            )
            values = np.where(det > 1e-12 * S ** 2, yy - fit, np.inf)
            j = int(np.argmin(values))
            if values[j] < best_value:
                best, best_value = (a, a + 1 + j), values[j]

    # Refit the winner
    freqs = grid[list(best)]
    distinct = merge_frequencies(freqs)
    dm = DesignMatrix.from_columns(np.exp(2j * np.pi * np.outer(t, distinct)), w, samples.points)
    amps = solve_erm(dm, y).coeffs.coeffs
    if k == 2 and len(distinct) == 1:
        distinct = np.array([distinct[0], distinct[0]])
        amps = np.array([amps[0], 0])
    return SparseFourierSignal(distinct, amps, F)


def signal_distance(f_hat: SparseFourierSignal, f, D_grid: Measure, T: float = 1.0) -> float:
    """||f_hat - f||_D with D uniform on [-T, T], realized by scaling a grid on [-1, 1]"""

    t = T * np.asarray(D_grid.support, dtype=float)
    f_values = f(t) if callable(f) else np.asarray(f)
    return float(np.sqrt(np.sum(D_grid.mass * np.abs(f_hat(t) - f_values) ** 2)))
