import numpy as np
from balancedpy.exceptions import EmptyInput, InvalidMeasure, UnsupportedPoint, ConfigError
from balancedpy.tools import read_csv_table, cell_widths

RNG_ALGORITHM = "numpy.random.Philox-4x64-10/SeedSequence.spawn"
MASS_TOLERANCE = 1e-9


def make_rng(seed=0) -> "np.random.Generator":
    """Returns a counter-based Philox generator for an integer seed or a SeedSequence"""

    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def spawn_rngs(seed: int, n: int) -> list:
    """Returns n independent Philox generators derived from one seed, in trial order"""

    return [np.random.Generator(np.random.Philox(s)) for s in np.random.SeedSequence(seed).spawn(n)]


def spawn_seeds(seed: int, n: int) -> list:
    return np.random.SeedSequence(seed).spawn(n)


def seed_of(rng: "np.random.Generator"):
    """64-bit fingerprint of the SeedSequence behind a generator, independent of the draws already made. None if the generator was not seeded through a SeedSequence."""

    bit_generator = rng.bit_generator
    seed_seq = getattr(bit_generator, "seed_seq", None) or getattr(bit_generator, "_seed_seq", None)
    if not hasattr(seed_seq, "generate_state"):
        return None
    return int(seed_seq.generate_state(1, np.uint64)[0])


def _point_key(x):
    if isinstance(x, str):
        return x
    x = np.asarray(x)
    if x.ndim == 0:
        if x.dtype.kind in "US":
            return str(x)
        return float(x)
    return tuple(float(i) for i in x.ravel())


class Measure(object):
    """A probability distribution over a finite set of domain points. Continuous distributions enter as grids (see uniform_grid, chebyshev_grid, geometric_grid) so that every expectation is an exact finite sum."""

    def __init__(self, support, mass, label: str = "measure", normalize: bool = False) -> None:
        """Measure class constructor

        Parameters
        ----------
        support : array_like
            ordered, distinct domain points; scalars, small vectors (one per row) or string ids
        mass : array_like
            nonnegative probability of each support point
        label : str
            name used in reports (default: "measure")
        normalize : bool
            if true, masses are divided by their sum instead of being required to sum to one (default: False)
        """

        support = np.array(support)
        if support.ndim == 0:
            support = support.reshape(1)
        mass = np.array(mass, dtype=float).ravel()

        # Validate
        if not len(support):
            raise EmptyInput("A measure needs at least one support point")
        if len(support) != len(mass):
            raise InvalidMeasure("Support has {} points but {} masses were given".format(len(support), len(mass)))
        if not np.all(np.isfinite(mass)) or np.any(mass < 0):
            raise InvalidMeasure("Masses of {} must be finite and nonnegative".format(label))
        total = mass.sum()
        if normalize:
            if total <= 0:
                raise InvalidMeasure("Masses of {} sum to zero".format(label))
            mass = mass / total
        elif abs(total - 1) > MASS_TOLERANCE:
            raise InvalidMeasure("Masses of {} sum to {!r}, expected 1 within {}".format(label, total, MASS_TOLERANCE))

        # Index points
        self._index = {}
        for i, x in enumerate(support):
            key = _point_key(x)
            if key in self._index:
                raise InvalidMeasure("Support point {!r} of {} appears twice".format(x, label))
            self._index[key] = i

        self.support = support
        self.mass = mass
        self.label = label
        self._cdf = np.cumsum(mass)
        self._last = int(np.flatnonzero(mass > 0)[-1])
        self.support.flags.writeable = False
        self.mass.flags.writeable = False

    def __len__(self) -> int:
        return len(self.support)

    def __repr__(self) -> str:
        return "Measure({}, {} points)".format(self.label, len(self))

    def index(self, x):
        """Returns the support index of x or None if x is not a support point"""
        return self._index.get(_point_key(x))

    def indices(self, points) -> "np.ndarray":
        """Support indices of several points, -1 where a point is not in the support"""
        return np.array([self._index.get(_point_key(x), -1) for x in points], dtype=int)

    def mass_at(self, x) -> float:
        i = self.index(x)
        return 0.0 if i is None else float(self.mass[i])

    def masses_at(self, points) -> "np.ndarray":
        idx = self.indices(points)
        out = np.zeros(len(idx))
        found = idx >= 0
        out[found] = self.mass[idx[found]]
        return out

    def expectation(self, values: "np.ndarray"):
        """Returns E[values] where values are given per support point (first axis)"""
        return np.tensordot(self.mass, np.asarray(values), axes=(0, 0))

    def sample_indices(self, rng: "np.random.Generator", size: int = None) -> "np.ndarray":
        """Inverse-CDF draws of support indices"""

        u = rng.random(size)
        idx = np.searchsorted(self._cdf, u, side="right")
        return np.minimum(idx, self._last)

    def sample(self, rng: "np.random.Generator", size: int = None):
        return self.support[self.sample_indices(rng, size)]

    def density_table(self) -> tuple:
        """Returns (x, mass per unit length) for a sorted scalar support, so that the density integrates to one over the cells"""

        x = np.asarray(self.support, dtype=float)
        if x.ndim != 1 or np.any(np.diff(x) <= 0):
            raise InvalidMeasure("density_table needs a strictly increasing scalar support")
        widths = cell_widths(x)
        if len(x) == 1:
            return x, np.array([np.inf])
        return x, self.mass / widths


class WeightedSampleSet(object):
    """The output of one run of a sampling procedure: points x_i, weights w_i and coefficients alpha_i with w_i = alpha_i * D(x_i) / D_i(x_i). Points are not merged, the same point may appear with different weights."""

    def __init__(
        self,
        points,
        weights,
        alphas,
        source_seed: int = None,
        info: dict = None,
    ) -> None:
        """WeightedSampleSet class constructor

        Parameters
        ----------
        points : array_like
            the sampled points
        weights : array_like
            one nonnegative finite weight per point
        alphas : array_like
            one nonnegative coefficient per point
        source_seed : int
            seed of the generator the sample came from, if known (default: None)
        info : dict
            diagnostics recorded by the producing procedure (default: None)
        """

        points = np.asarray(points)
        if points.ndim == 0:
            points = points.reshape(1)
        weights = np.asarray(weights, dtype=float).ravel()
        alphas = np.asarray(alphas, dtype=float).ravel()
        if not (len(points) == len(weights) == len(alphas)):
            raise ValueError(
                "Sample set has {} points, {} weights and {} coefficients".format(len(points), len(weights), len(alphas))
            )
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("Sample weights must be finite and nonnegative")
        if np.any(alphas < 0):
            raise ValueError("Sample coefficients must be nonnegative")

        self.points = points
        self.weights = weights
        self.alphas = alphas
        self.source_seed = source_seed
        self.info = {} if info is None else dict(info)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def m(self) -> int:
        return len(self.points)


def sample(D: Measure, rng: "np.random.Generator"):
    """Draws one point of D by inverse CDF over its ordered support"""
    return D.support[D.sample_indices(rng)]


def density_ratio(D: Measure, D_prime: Measure, x) -> float:
    """Returns D(x) / D'(x)

    Raises
    ------
    UnsupportedPoint
        if D'(x) = 0 while D(x) > 0
    """

    top = D.mass_at(x)
    bottom = D_prime.mass_at(x)
    if bottom == 0:
        if top > 0:
            raise UnsupportedPoint("{!r} has mass {} under {} but none under {}".format(x, top, D.label, D_prime.label))
        return 0.0
    return top / bottom


def density_ratios(D: Measure, D_prime: Measure, points) -> "np.ndarray":
    top = D.masses_at(points)
    bottom = D_prime.masses_at(points)
    bad = (bottom == 0) & (top > 0)
    if np.any(bad):
        x = points[int(np.flatnonzero(bad)[0])]
        raise UnsupportedPoint("{!r} has mass under {} but none under {}".format(x, D.label, D_prime.label))
    out = np.zeros(len(top))
    ok = bottom > 0
    out[ok] = top[ok] / bottom[ok]
    return out


def empirical_uniform(points, label: str = "empirical") -> Measure:
    """Uniform distribution over a list of points, each occurrence weighing 1/m. Duplicates are merged with summed mass, in order of first appearance."""

    points = np.asarray(points)
    if points.ndim == 0:
        points = points.reshape(1)
    if not len(points):
        raise EmptyInput("empirical_uniform needs at least one point")

    # Merge duplicates
    first, counts = {}, []
    support = []
    for x in points:
        key = _point_key(x)
        if key in first:
            counts[first[key]] += 1
        else:
            first[key] = len(support)
            support.append(x)
            counts.append(1)

    return Measure(np.array(support), np.array(counts, dtype=float) / len(points), label=label)


def empirical_norm(fam, coeffs_or_values, S_w: WeightedSampleSet) -> float:
    """Returns the weighted empirical norm sum_j w_j |f(x_j)|^2

    Parameters
    ----------
    fam : OrthonormalFamily
        family the coefficients refer to
    coeffs_or_values : CoefficientVector or array_like or callable
        coefficients of f in the family's orthonormal basis, f itself, or the values of f at the sample points
    S_w : WeightedSampleSet
        the weighted sample
    """

    if hasattr(coeffs_or_values, "coeffs"):
        values = fam.evaluate(coeffs_or_values.coeffs, S_w.points)
    elif callable(coeffs_or_values):
        values = np.asarray(coeffs_or_values(S_w.points))
    else:
        values = np.asarray(coeffs_or_values)
        if values.shape[0] != len(S_w):
            raise ValueError("Got {} values for {} sample points".format(values.shape[0], len(S_w)))

    return float(np.sum(S_w.weights * np.abs(values) ** 2))


def total_variation(D: Measure, D_prime: Measure) -> float:
    """Total-variation distance between two finite measures"""

    keys = set(D._index) | set(D_prime._index)
    total = 0.0
    for key in keys:
        i, j = D._index.get(key), D_prime._index.get(key)
        p = D.mass[i] if i is not None else 0.0
        q = D_prime.mass[j] if j is not None else 0.0
        total += abs(p - q)
    return 0.5 * total


def uniform_grid(n: int, a: float = -1.0, b: float = 1.0) -> Measure:
    """n equally spaced points on [a, b], endpoints included, each with mass 1/n"""

    if n < 1:
        raise InvalidMeasure("A grid needs at least one point")
    return Measure(np.linspace(a, b, n), np.full(n, 1.0 / n), label="uniform-grid:{}".format(n))


def chebyshev_grid(n: int) -> Measure:
    """The points of uniform_grid(n) weighted by the arcsine (Chebyshev) law. Each point carries the arcsine mass of its cell, which is proportional to 1/sqrt(1 - x^2) away from the ends and finite at +-1."""

    if n < 1:
        raise InvalidMeasure("A grid needs at least one point")
    x = np.linspace(-1.0, 1.0, n)
    if n == 1:
        return Measure(x, [1.0], label="chebyshev-grid:1")
    mids = 0.5 * (x[1:] + x[:-1])
    edges = np.concatenate([[-1.0], mids, [1.0]])
    mass = np.diff(np.arcsin(edges)) / np.pi
    return Measure(x, mass, label="chebyshev-grid:{}".format(n), normalize=True)


def geometric_grid(n: int = 2000, min_gap: float = 1e-9) -> Measure:
    """Discretized uniform measure on [-1, 1] whose points refine geometrically toward +-1

    Parameters
    ----------
    n : int
        approximate number of points (default: 2000)
    min_gap : float
        distance to +-1 of the innermost refined point (default: 1e-9)

    Returns
    -------
    Measure
        symmetric grid containing 0 and +-1, mass equal to half the cell length
    """

    half = max(n // 2, 4)
    n_lin = half // 2
    n_geo = half - n_lin

    # Uniform interior, then geometric refinement
    x_lin = np.linspace(0.0, 1.0, n_lin + 1)[:-1]
    first_gap = 0.5 / n_lin
    if min_gap >= first_gap:
        raise InvalidMeasure("min_gap {} must be below the interior spacing {}".format(min_gap, first_gap))
    x_geo = 1.0 - np.geomspace(first_gap, min_gap, n_geo)
    positive = np.concatenate([x_lin, x_geo, [1.0]])

    x = np.concatenate([-positive[:0:-1], positive])
    mass = cell_widths(x, -1.0, 1.0) / 2.0
    return Measure(x, mass, label="geometric-grid:{}".format(n), normalize=True)


def discrete_uniform(d: int) -> Measure:
    """Uniform measure on the points 1..d"""

    if d < 1:
        raise InvalidMeasure("discrete_uniform needs d >= 1")
    return Measure(np.arange(1, d + 1, dtype=float), np.full(d, 1.0 / d), label="discrete:{}".format(d))


def point_mass(x) -> Measure:
    return Measure(np.asarray([x]), [1.0], label="point:{}".format(x))


def load_measure_csv(path: str) -> Measure:
    """Reads a measure from CSV rows 'x,p'. x is a number or a point id."""

    header, rows = read_csv_table(path)
    if header[:2] != ["x", "p"]:
        raise InvalidMeasure("{} must start with the header 'x,p', found {}".format(path, ",".join(header)))
    if not rows:
        raise EmptyInput("{} has no rows".format(path))

    points = [_parse_point(r[0]) for r in rows]
    mass = [float(r[1]) for r in rows]
    return Measure(np.array(points), mass, label="file:{}".format(path))


def _parse_point(text: str):
    try:
        return float(text)
    except ValueError:
        return text


def parse_measure(name: str) -> Measure:
    """Builds a measure from a command-line name

    Parameters
    ----------
    name : str
        one of uniform-grid:<n>, chebyshev-grid:<n>, geometric-grid:<n>, discrete:<d>, file:<path>

    Returns
    -------
    Measure
        the named measure
    """

    kind, _, arg = name.partition(":")
    if not arg:
        raise ConfigError("Measure '{}' needs an argument after ':'".format(name))
    try:
        if kind == "uniform-grid":
            return uniform_grid(int(arg))
        elif kind == "chebyshev-grid":
            return chebyshev_grid(int(arg))
        elif kind == "geometric-grid":
            return geometric_grid(int(arg))
        elif kind == "discrete":
            return discrete_uniform(int(arg))
        elif kind == "file":
            return load_measure_csv(arg)
    except ValueError as e:
        raise ConfigError("Could not build measure '{}': {}".format(name, e)) from e

    raise ConfigError(
        "Unknown measure '{}', expected uniform-grid:, chebyshev-grid:, geometric-grid:, discrete: or file:".format(name)
    )
