import numpy as np
from numpy.polynomial import polynomial, chebyshev, legendre
from scipy.linalg import eigh
from balancedpy.exceptions import DegenerateFamily, EvaluationError
from balancedpy.measure import Measure, _point_key
from balancedpy.tools import read_csv_table, parse_scalar

RANK_TOLERANCE = 1e-10
GRAM_TOLERANCE = 1e-8


class BasisSpec(object):
    """Raw (not yet orthonormal) basis functions v_1..v_d spanning a linear family. Use the constructors monomial, chebyshev, legendre, fourier, indicator and custom."""

    kinds = ["monomial", "chebyshev", "legendre", "fourier", "indicator", "custom"]

    def __init__(
        self,
        kind: str,
        degree: int = None,
        freqs: list = None,
        size: int = None,
        points: "np.ndarray" = None,
        table: "np.ndarray" = None,
    ) -> None:
        """BasisSpec class constructor

        Parameters
        ----------
        kind : str
            one of BasisSpec.kinds
        degree : int
            polynomial degree for monomial, chebyshev and legendre; dimension is degree + 1 (default: None)
        freqs : list
            real frequencies f_j of the exponentials exp(2 pi i f_j x) for fourier (default: None)
        size : int
            domain size for indicator, whose domain is 1..size (default: None)
        points : np.ndarray
            domain points of a custom table, one per row of table (default: None)
        table : np.ndarray
            custom basis values, shape (len(points), d) (default: None)
        """

        if kind not in self.kinds:
            raise ValueError("Unknown basis kind '{}', expected one of {}".format(kind, self.kinds))
        self.kind = kind
        self.degree = degree
        self.freqs = None if freqs is None else np.asarray(freqs, dtype=float).ravel()
        self.size = size
        self.points = None
        self.table = None

        # Check each kind
        if kind in ["monomial", "chebyshev", "legendre"]:
            if degree is None or int(degree) != degree or degree < 0:
                raise ValueError("A {} basis needs a nonnegative integer degree, got {}".format(kind, degree))
            self.degree = int(degree)
        elif kind == "fourier":
            if self.freqs is None or not len(self.freqs) or not np.all(np.isfinite(self.freqs)):
                raise ValueError("A fourier basis needs at least one finite frequency")
        elif kind == "indicator":
            if size is None or int(size) != size or size < 1:
                raise ValueError("An indicator basis needs a positive integer size, got {}".format(size))
            self.size = int(size)
        elif kind == "custom":
            points = np.asarray(points)
            table = np.asarray(table, dtype=complex)
            if table.ndim != 2 or table.shape[1] < 1:
                raise ValueError("A custom basis table must be two dimensional with at least one column")
            if len(points) != table.shape[0]:
                raise ValueError(
                    "A custom basis table needs one row per domain point, got {} rows for {} points".format(
                        table.shape[0], len(points)
                    )
                )
            self.points = points
            self.table = table
            self._rows = {_point_key(x): i for i, x in enumerate(points)}

    @classmethod
    def monomial(cls, degree: int) -> "BasisSpec":
        return cls("monomial", degree=degree)

    @classmethod
    def chebyshev(cls, degree: int) -> "BasisSpec":
        return cls("chebyshev", degree=degree)

    @classmethod
    def legendre(cls, degree: int) -> "BasisSpec":
        return cls("legendre", degree=degree)

    @classmethod
    def fourier(cls, freqs: list) -> "BasisSpec":
        return cls("fourier", freqs=freqs)

    @classmethod
    def indicator(cls, size: int) -> "BasisSpec":
        return cls("indicator", size=size)

    @classmethod
    def custom(cls, points, table) -> "BasisSpec":
        return cls("custom", points=points, table=table)

    @property
    def dimension(self) -> int:
        if self.kind in ["monomial", "chebyshev", "legendre"]:
            return self.degree + 1
        elif self.kind == "fourier":
            return len(self.freqs)
        elif self.kind == "indicator":
            return self.size
        return self.table.shape[1]

    def __repr__(self) -> str:
        return "BasisSpec({}, d={})".format(self.kind, self.dimension)

    def evaluate(self, points) -> "np.ndarray":
        """Evaluates every raw basis function at every point

        Parameters
        ----------
        points : array_like
            a domain point or an array of domain points

        Returns
        -------
        np.ndarray
            complex values, shape (d,) for a single point or (n, d)
        """

        points = np.asarray(points)
        single = points.ndim == 0 or (self.kind == "custom" and points.ndim == 1 and self._is_vector_point(points))
        if single:
            points = points.reshape((1,) + points.shape)

        if self.kind in ["monomial", "chebyshev", "legendre", "fourier"]:
            x = self._as_reals(points)
            if self.kind == "monomial":
                values = polynomial.polyvander(x, self.degree)
            elif self.kind == "chebyshev":
                values = chebyshev.chebvander(x, self.degree)
            elif self.kind == "legendre":
                values = legendre.legvander(x, self.degree)
            else:
                values = np.exp(2j * np.pi * np.outer(x, self.freqs))
        elif self.kind == "indicator":
            x = self._as_reals(points)
            idx = np.rint(x)
            if np.any(np.abs(x - idx) > 0) or np.any(idx < 1) or np.any(idx > self.size):
                raise EvaluationError("Indicator basis of size {} is only defined on 1..{}".format(self.size, self.size))
            values = np.zeros((len(x), self.size))
            values[np.arange(len(x)), idx.astype(int) - 1] = 1.0
        else:
            rows = []
            for x in points:
                row = self._rows.get(_point_key(x))
                if row is None:
                    raise EvaluationError("Custom basis has no row for point {!r}".format(x))
                rows.append(row)
            values = self.table[rows]

        values = np.asarray(values, dtype=complex)
        if not np.all(np.isfinite(values)):
            raise EvaluationError("{} produced non-finite values".format(self))
        return values[0] if single else values

    def _is_vector_point(self, points) -> bool:
        return self.points is not None and np.asarray(self.points).ndim == 2 and points.shape[0] == self.points.shape[1]

    def _as_reals(self, points) -> "np.ndarray":
        try:
            x = np.asarray(points, dtype=float)
        except (TypeError, ValueError) as e:
            raise EvaluationError("{} needs real scalar points".format(self)) from e
        if x.ndim != 1:
            raise EvaluationError("{} needs scalar points, got shape {}".format(self, x.shape))
        if not np.all(np.isfinite(x)):
            raise EvaluationError("{} cannot be evaluated at a non-finite point".format(self))
        return x


class CoefficientVector(object):
    """Coefficients of a family member in an orthonormal basis. Its 2-norm equals the member's norm under the family's measure."""

    def __init__(self, coeffs) -> None:
        self.coeffs = np.asarray(coeffs, dtype=complex).ravel()

    def __len__(self) -> int:
        return len(self.coeffs)

    def __repr__(self) -> str:
        return "CoefficientVector({})".format(self.coeffs)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    @classmethod
    def zeros(cls, d: int) -> "CoefficientVector":
        return cls(np.zeros(d))

    @classmethod
    def unit(cls, d: int, i: int) -> "CoefficientVector":
        """The i-th unit vector (0 indexed)"""
        c = np.zeros(d, dtype=complex)
        c[i] = 1
        return cls(c)


class OrthonormalFamily(object):
    """A linear family with a basis that is orthonormal under a reference measure D. Build it with orthonormalize; it is immutable afterwards."""

    def __init__(self, basis: BasisSpec, measure: Measure, transform: "np.ndarray", gram_residual: float) -> None:
        """OrthonormalFamily class constructor

        Parameters
        ----------
        basis : BasisSpec
            the raw basis
        measure : Measure
            the measure D the basis is orthonormal under
        transform : np.ndarray
            d x d matrix T with orthonormal values = raw values @ T
        gram_residual : float
            max-entry distance of the Gram matrix under D from the identity
        """

        self.basis = basis
        self.measure = measure
        self.transform = np.array(transform, dtype=complex)
        self.gram_residual = float(gram_residual)
        self.transform.flags.writeable = False

        # Cache values on the support
        self.support_values = self.values(measure.support)
        self.support_leverage = np.sum(np.abs(self.support_values) ** 2, axis=1)
        self.support_values.flags.writeable = False
        self.support_leverage.flags.writeable = False

    @property
    def dimension(self) -> int:
        return self.transform.shape[1]

    def __repr__(self) -> str:
        return "OrthonormalFamily({}, {})".format(self.basis, self.measure.label)

    def values(self, points) -> "np.ndarray":
        """Orthonormal basis values v_1(x)..v_d(x), shape (d,) or (n, d)"""
        return self.basis.evaluate(points) @ self.transform

    def leverage(self, points):
        values = self.values(points)
        return np.sum(np.abs(values) ** 2, axis=-1)

    def evaluate(self, coeffs, points):
        coeffs = _coeff_array(coeffs, self.dimension)
        return self.values(points) @ coeffs

    def gram(self) -> "np.ndarray":
        """Recomputes G(i, j) = E_D[v_i(x) conj(v_j(x))]"""
        V = self.support_values
        return (V.T * self.measure.mass) @ V.conj()


def _coeff_array(coeffs, d: int) -> "np.ndarray":
    if isinstance(coeffs, CoefficientVector):
        coeffs = coeffs.coeffs
    coeffs = np.asarray(coeffs, dtype=complex).ravel()
    if len(coeffs) != d:
        raise ValueError("Expected {} coefficients, got {}".format(d, len(coeffs)))
    return coeffs


def _inverse_sqrt(M: "np.ndarray", label: str) -> "np.ndarray":
    eigs, U = eigh(M)
    top = eigs[-1]
    if top <= 0 or eigs[0] < RANK_TOLERANCE * top:
        raise DegenerateFamily(
            "Gram matrix of {} is rank deficient: smallest eigenvalue {:.3e} vs largest {:.3e}".format(label, eigs[0], top)
        )
    return (U / np.sqrt(eigs)) @ U.conj().T


def orthonormalize(basis: BasisSpec, D: Measure, refinements: int = 3) -> OrthonormalFamily:
    """Orthonormalizes a basis under D with the symmetric inverse square root of its Gram matrix

    Parameters
    ----------
    basis : BasisSpec
        the raw basis
    D : Measure
        reference measure; every support point must be in the basis domain
    refinements : int
        extra inverse-square-root passes used when the first pass leaves a Gram residual above 1e-8 (default: 3)

    Returns
    -------
    OrthonormalFamily
        the orthonormalized family

    Raises
    ------
    DegenerateFamily
        if the Gram matrix is numerically rank deficient, including when d exceeds the number of charged support points
    EvaluationError
        if the basis is undefined at a support point
    """

    d = basis.dimension
    charged = int(np.count_nonzero(D.mass > 0))
    if d > charged:
        raise DegenerateFamily(
            "{} has dimension {} but {} only charges {} points".format(basis, d, D.label, charged)
        )

    # Raw Gram, conjugated so that T^H M T = I
    R = basis.evaluate(D.support)
    p = D.mass
    M = (R.conj().T * p) @ R
    M = 0.5 * (M + M.conj().T)
    T = _inverse_sqrt(M, "{} under {}".format(basis, D.label))

    # Refine until the Gram residual is below tolerance
    residual = _gram_residual(R @ T, p)
    for _ in range(refinements):
        if residual <= GRAM_TOLERANCE * 1e-3:
            break
        V = R @ T
        M2 = (V.conj().T * p) @ V
        M2 = 0.5 * (M2 + M2.conj().T)
        T = T @ _inverse_sqrt(M2, "{} under {}".format(basis, D.label))
        residual = _gram_residual(R @ T, p)

    if residual > GRAM_TOLERANCE:
        raise DegenerateFamily(
            "Could not orthonormalize {} under {}: Gram residual {:.3e} exceeds {}".format(
                basis, D.label, residual, GRAM_TOLERANCE
            )
        )

    return OrthonormalFamily(basis, D, T, residual)


def _gram_residual(V: "np.ndarray", p: "np.ndarray") -> float:
    G = (V.T * p) @ V.conj()
    return float(np.max(np.abs(G - np.eye(G.shape[0]))))


def leverage(fam: OrthonormalFamily, x):
    """Returns sum_i |v_i(x)|^2, the largest |h(x)|^2 over family members h with unit norm under D"""

    value = fam.leverage(x)
    return float(value) if np.ndim(value) == 0 else value


def condition_number(fam: OrthonormalFamily, D_prime: Measure) -> float:
    """Returns K_{D'} = max over the support of D of (D(x) / D'(x)) * leverage(x)

    A point charged by D with positive leverage that D' misses makes the ratio unbounded; +inf is returned.
    """

    D = fam.measure
    lev = fam.support_leverage
    top = D.mass
    bottom = D_prime.masses_at(D.support)

    relevant = (top > 0) & (lev > 1e-12 * max(lev.max(), 1.0))
    if np.any(relevant & (bottom == 0)):
        return np.inf
    ok = relevant & (bottom > 0)
    if not np.any(ok):
        return 0.0
    return float(np.max(top[ok] / bottom[ok] * lev[ok]))


def evaluate(fam: OrthonormalFamily, coeffs, x):
    """Returns sum_i alpha_i v_i(x)"""

    value = fam.evaluate(coeffs, x)
    return complex(value) if np.ndim(value) == 0 else value


def project(fam: OrthonormalFamily, values) -> CoefficientVector:
    """Orthogonal projection under D of a function table onto the family

    Parameters
    ----------
    fam : OrthonormalFamily
        the family
    values : array_like
        function values at every support point of fam.measure

    Returns
    -------
    CoefficientVector
        coefficients E_D[conj(v_i(x)) g(x)]
    """

    values = np.asarray(values, dtype=complex).ravel()
    if len(values) != len(fam.measure):
        raise ValueError("Expected {} values, one per support point, got {}".format(len(fam.measure), len(values)))
    V = fam.support_values
    return CoefficientVector((V.conj().T * fam.measure.mass) @ values)


def norm(fam: OrthonormalFamily, values) -> float:
    """Returns the D-norm of a function given by its values on the support"""
    values = np.asarray(values).ravel()
    return float(np.sqrt(np.sum(fam.measure.mass * np.abs(values) ** 2)))


def load_custom_basis(path: str) -> tuple:
    """Reads a CSV with header x,p,b1..bd

    Returns
    -------
    tuple
        (BasisSpec, Measure) for the table and its point masses
    """

    header, rows = read_csv_table(path)
    if header[:2] != ["x", "p"] or len(header) < 3:
        raise ValueError("{} must have the header x,p,b1,...,bd, found {}".format(path, ",".join(header)))
    d = len(header) - 2
    for i, r in enumerate(rows):
        if len(r) != d + 2:
            raise ValueError("{} row {} has {} columns, expected {}".format(path, i + 2, len(r), d + 2))

    points = []
    for r in rows:
        try:
            points.append(float(r[0]))
        except ValueError:
            points.append(r[0])
    points = np.array(points)
    mass = np.array([float(r[1]) for r in rows])
    table = np.array([[parse_scalar(c) for c in r[2:]] for r in rows])

    measure = Measure(points, mass, label="file:{}".format(path))
    return BasisSpec.custom(points, table), measure


def parse_family(name: str, degree: int = None) -> BasisSpec:
    """Builds a basis from a command-line name

    Parameters
    ----------
    name : str
        monomial, chebyshev, legendre, indicator[:<d>], fourier:<f1>,<f2>,... or file:<path>
    degree : int
        polynomial degree; for indicator without a size, the size is degree + 1 (default: None)
    """

    kind, _, arg = name.partition(":")
    if kind in ["monomial", "chebyshev", "legendre"]:
        if degree is None:
            raise ValueError("Family '{}' needs a degree".format(name))
        return BasisSpec(kind, degree=degree)
    elif kind == "indicator":
        size = int(arg) if arg else (None if degree is None else degree + 1)
        return BasisSpec.indicator(size)
    elif kind == "fourier":
        if not arg:
            raise ValueError("Family 'fourier' needs frequencies, as in fourier:0,0.5")
        return BasisSpec.fourier([float(f) for f in arg.split(",")])
    elif kind == "file":
        return load_custom_basis(arg)[0]
    raise ValueError(
        "Unknown family '{}', expected monomial, chebyshev, legendre, indicator, fourier: or file:".format(name)
    )
