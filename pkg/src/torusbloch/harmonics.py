"""Trigonometric polynomials on the torus T^m and their Sobolev calculus.

Fields are born spectral: a field is the finite map of its Fourier coefficients
k -> c_k, so f(omega) = sum_k c_k exp(2*pi*i k.omega). The dual measure is the
counting measure, hence Plancherel reads ||f||_2^2 = sum_k |c_k|^2.
"""

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from .dual_lattice import FreqVector, GammaWeight, QuasiMatrix, add, as_freq, negate, window_sublevel
from .errors import DimensionMismatchError, EllipticityError, OperandError

logger = logging.getLogger(__name__)

COEFF_FLOOR = 1e-30
STRUCTURE_RTOL = 1e-12
Scalar = Union[int, float, complex]


def _structure_slack(scale: float) -> float:
    return STRUCTURE_RTOL * max(scale, 1e-300)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """A finitely supported coefficient map on the dual of T^m.

    Coefficients below 1e-30 in modulus are dropped. With ``real_valued`` set the
    map must satisfy c_{-k} = conj(c_k), i.e. the field takes real values.
    """

    dim: int
    coeffs: Mapping[FreqVector, complex]
    real_valued: bool = False

    def __post_init__(self):
        dim = int(self.dim)
        if dim < 1:
            raise OperandError(f"field dimension must be >= 1, got {self.dim}")
        canonical: Dict[FreqVector, complex] = {}
        for key, value in dict(self.coeffs).items():
            k = as_freq(key if isinstance(key, (tuple, list)) else (key,))
            if len(k) != dim:
                raise DimensionMismatchError("field coefficient key", dim, len(k))
            amplitude = complex(value)
            if not (math.isfinite(amplitude.real) and math.isfinite(amplitude.imag)):
                raise OperandError(f"coefficient at {k} is not finite")
            canonical[k] = canonical.get(k, 0j) + amplitude
        canonical = {k: c for k, c in sorted(canonical.items()) if abs(c) >= COEFF_FLOOR}
        if self.real_valued:
            scale = max((abs(c) for c in canonical.values()), default=0.0)
            for k, c in canonical.items():
                partner = canonical.get(negate(k), 0j)
                if abs(partner - c.conjugate()) > _structure_slack(scale):
                    raise OperandError(f"real-valued field violates c(-k) = conj(c(k)) at k={k}")
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "coeffs", canonical)
        object.__setattr__(self, "real_valued", bool(self.real_valued))

    @classmethod
    def zero(cls, dim: int) -> "SpectralField":
        return cls(dim, {}, real_valued=True)

    @classmethod
    def constant(cls, dim: int, value: Scalar) -> "SpectralField":
        value = complex(value)
        return cls(dim, {(0,) * dim: value}, real_valued=value.imag == 0)

    @classmethod
    def cosine(cls, k: FreqVector, amplitude: float = 1.0) -> "SpectralField":
        """amplitude * cos(2*pi k.omega)."""
        k = as_freq(k)
        if all(v == 0 for v in k):
            return cls.constant(len(k), amplitude)
        return cls(len(k), {k: amplitude / 2, negate(k): amplitude / 2}, real_valued=True)

    @property
    def support(self) -> List[FreqVector]:
        return list(self.coeffs)

    def coefficient(self, k: FreqVector) -> complex:
        return self.coeffs.get(tuple(k), 0j)

    @cached_property
    def _arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        freqs = np.array(list(self.coeffs), dtype=np.int64).reshape(len(self.coeffs), self.dim)
        amps = np.array(list(self.coeffs.values()), dtype=complex)
        return freqs, amps

    def arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        """Support as an (N, m) integer array and the matching coefficient vector."""
        return self._arrays

    @property
    def max_frequency(self) -> int:
        """Largest |k_j| over the support."""
        freqs, _ = self.arrays()
        return int(np.max(np.abs(freqs))) if freqs.size else 0

    def _check_same_dim(self, other: "SpectralField") -> None:
        if other.dim != self.dim:
            raise DimensionMismatchError("field arithmetic", self.dim, other.dim)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check_same_dim(other)
        merged = dict(self.coeffs)
        for k, c in other.coeffs.items():
            merged[k] = merged.get(k, 0j) + c
        return SpectralField(self.dim, merged, self.real_valued and other.real_valued)

    def __neg__(self) -> "SpectralField":
        return self.scale(-1.0)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return self + (-other)

    def scale(self, factor: Scalar) -> "SpectralField":
        factor = complex(factor)
        return SpectralField(
            self.dim,
            {k: factor * c for k, c in self.coeffs.items()},
            self.real_valued and factor.imag == 0,
        )

    def __mul__(self, other: Union["SpectralField", Scalar]) -> "SpectralField":
        if not isinstance(other, SpectralField):
            return self.scale(other)
        self._check_same_dim(other)
        product: Dict[FreqVector, complex] = {}
        for k, c in self.coeffs.items():
            for q, d in other.coeffs.items():
                key = add(k, q)
                product[key] = product.get(key, 0j) + c * d
        return SpectralField(self.dim, product, self.real_valued and other.real_valued)

    __rmul__ = __mul__

    def conj(self) -> "SpectralField":
        """Complex conjugate field: c_k -> conj(c_{-k})."""
        return SpectralField(self.dim, {negate(k): c.conjugate() for k, c in self.coeffs.items()}, self.real_valued)


def _points(omega, dim: int) -> Tuple[np.ndarray, bool]:
    points = np.asarray(omega, dtype=float)
    single = points.ndim <= 1
    points = np.atleast_2d(points)
    if points.shape[1] != dim:
        raise DimensionMismatchError("torus point", dim, points.shape[1])
    return points, single


def _characters(points: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    return np.exp(2j * np.pi * (points @ freqs.T.astype(float)))


def evaluate(f: SpectralField, omega) -> Union[complex, np.ndarray]:
    """f(omega) = sum_k c_k exp(2*pi*i k.omega) at one point or at every row of a (P, m) array."""
    points, single = _points(omega, f.dim)
    freqs, amps = f.arrays()
    values = _characters(points, freqs) @ amps if amps.size else np.zeros(len(points), dtype=complex)
    return complex(values[0]) if single else values


def l2_norm(f: SpectralField) -> float:
    _, amps = f.arrays()
    return float(np.sqrt(np.sum(np.abs(amps) ** 2)))


def inner(u: SpectralField, v: SpectralField) -> complex:
    """Spectral inner product sum_k u_k conj(v_k)."""
    if u.dim != v.dim:
        raise DimensionMismatchError("inner product", u.dim, v.dim)
    return complex(sum(c * v.coefficient(k).conjugate() for k, c in u.coeffs.items()))


def _weights_on_support(f: SpectralField, w: GammaWeight) -> np.ndarray:
    freqs, _ = f.arrays()
    if not len(freqs):
        return np.zeros(0)
    return w.values(freqs)


def sobolev_norm(f: SpectralField, w: GammaWeight, s: float) -> float:
    """H^s_gamma norm (sum_k (1 + gamma(k)^2)^s |c_k|^2)^(1/2)."""
    if s < 0:
        raise OperandError(f"Sobolev order must be nonnegative, got {s}")
    _, amps = f.arrays()
    gammas = _weights_on_support(f, w)
    return float(np.sqrt(np.sum((1.0 + gammas**2) ** s * np.abs(amps) ** 2)))


def spectral_derivative(f: SpectralField, lam: QuasiMatrix, axis: int) -> SpectralField:
    """Derivative along spatial axis ``axis`` (0-based) of y -> f(tau(y)omega): c_k -> 2*pi*i (Lambda^T k)_axis c_k."""
    if lam.m != f.dim:
        raise DimensionMismatchError("frequency matrix rows", f.dim, lam.m)
    if not 0 <= axis < lam.n:
        raise OperandError(f"derivative axis must lie in [0, {lam.n}), got {axis}")
    coeffs = {k: 2j * np.pi * lam.project(k)[axis] * c for k, c in f.coeffs.items()}
    return SpectralField(f.dim, coeffs, f.real_valued)


def apply_T(f: SpectralField, w: GammaWeight) -> SpectralField:
    """Diagonal multiplier c_k -> c_k / sqrt(1 + gamma(k)^2); its compactness is equivalent to finite sublevel sets."""
    gammas = _weights_on_support(f, w)
    coeffs = {k: c / math.sqrt(1.0 + g * g) for (k, c), g in zip(f.coeffs.items(), gammas)}
    return SpectralField(f.dim, coeffs, f.real_valued)


def t_spectrum(w: GammaWeight, window: int, top: Optional[int] = None) -> List[float]:
    """Eigenvalues 1/sqrt(1 + gamma(k)^2) of T over the window box, descending.

    Each value is the exact eigenvalue of T on the point mass at k. With ``top``
    only the largest ``top`` values are computed, by enumerating sublevel sets of
    doubling level until enough frequencies are found.
    """
    radius = int(window)
    if radius < 1:
        raise OperandError(f"window radius must be >= 1, got {window}")
    dims = w.window_dim(radius)
    box_size = (2 * radius + 1) ** dims
    if top is not None and int(top) < 1:
        raise OperandError(f"top must be >= 1, got {top}")

    if top is None or int(top) >= box_size:
        frequencies = window_sublevel(w, math.inf, radius)
    else:
        unit_weights = w.values(np.eye(dims, dtype=np.int64))
        positive = unit_weights[unit_weights > 0]
        level = float(np.min(positive)) if positive.size else 1.0
        while True:
            frequencies = window_sublevel(w, level, radius)
            if len(frequencies) >= int(top):
                break
            level *= 2.0
    gammas = w.values(np.array(frequencies, dtype=np.int64))
    values = np.sort(1.0 / np.sqrt(1.0 + gammas**2))[::-1]
    if top is not None:
        values = values[: int(top)]
    logger.debug("T spectrum over window %d: %d values", radius, len(values))
    return [float(v) for v in values]


def integration_by_parts_check(u: SpectralField, zeta: SpectralField, lam: QuasiMatrix, axis: int) -> float:
    """Residual |<u, d zeta> + <d u, zeta>| of the weak-derivative identity; zero up to rounding."""
    if u.dim != zeta.dim:
        raise DimensionMismatchError("integration by parts", u.dim, zeta.dim)
    left = inner(u, spectral_derivative(zeta, lam, axis))
    right = inner(spectral_derivative(u, lam, axis), zeta)
    return abs(left + right)


def torus_grid(m: int, size: int) -> np.ndarray:
    """Uniform tensor grid {j/size} on [0, 1)^m as a (size^m, m) array."""
    axis = np.arange(size, dtype=float) / size
    grids = np.meshgrid(*([axis] * m), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def minimal_grid_size(f: SpectralField) -> int:
    """Smallest uniform grid size strictly above twice the largest frequency."""
    return 2 * f.max_frequency + 1


def grid_mean(f: SpectralField, size: Optional[int] = None) -> complex:
    """Average of f over a uniform grid; exact for trigonometric polynomials once size > max frequency."""
    size = size or minimal_grid_size(f)
    return complex(np.mean(evaluate(f, torus_grid(f.dim, size))))


def grid_l2_norm(f: SpectralField, size: Optional[int] = None) -> float:
    """Quadrature L^2 norm of f on a uniform grid."""
    size = size or minimal_grid_size(f)
    values = evaluate(f, torus_grid(f.dim, size))
    return float(np.sqrt(np.mean(np.abs(values) ** 2)))


def sample_torus(m: int, grid_side: Optional[int] = None, count: int = 10_000, seed: int = 0) -> np.ndarray:
    """Sampling points for hypothesis checks: a uniform grid when ``grid_side`` is given, else seeded uniform draws."""
    if grid_side is not None:
        return torus_grid(m, grid_side)
    return np.random.default_rng(seed).random((count, m))


@dataclass(frozen=True, eq=False)
class MatrixSpectralField:
    """n x n matrix field on T^m with real values: A_{-q} = conj(A_q).

    With ``symmetric`` set (coefficient fields of the operator) every A_q is also
    symmetric, so each A(omega) is real symmetric.
    """

    dim: int
    n: int
    coeffs: Mapping[FreqVector, np.ndarray]
    symmetric: bool = True

    def __post_init__(self):
        dim, n = int(self.dim), int(self.n)
        if dim < 1 or n < 1:
            raise OperandError(f"matrix field needs dim >= 1 and n >= 1, got dim={dim}, n={n}")
        canonical: Dict[FreqVector, np.ndarray] = {}
        for key, value in dict(self.coeffs).items():
            k = as_freq(key if isinstance(key, (tuple, list)) else (key,))
            if len(k) != dim:
                raise DimensionMismatchError("matrix field coefficient key", dim, len(k))
            block = np.array(value, dtype=complex)
            if block.ndim == 0:
                block = block.reshape(1, 1)
            if block.shape != (n, n):
                raise OperandError(f"matrix coefficient at {k} has shape {block.shape}, expected ({n}, {n})")
            if not np.all(np.isfinite(block)):
                raise OperandError(f"matrix coefficient at {k} is not finite")
            if np.max(np.abs(block)) >= COEFF_FLOOR:
                canonical[k] = block
        canonical = dict(sorted(canonical.items()))
        scale = max((float(np.max(np.abs(b))) for b in canonical.values()), default=0.0)
        slack = _structure_slack(scale)
        for k, block in canonical.items():
            partner = canonical.get(negate(k), np.zeros((n, n), dtype=complex))
            if np.max(np.abs(partner - block.conj())) > slack:
                raise OperandError(f"matrix field is not real-valued: A(-q) != conj(A(q)) at q={k}")
            if self.symmetric and np.max(np.abs(block - block.T)) > slack:
                raise OperandError(f"matrix field is not symmetric at q={k}")
        for block in canonical.values():
            block.setflags(write=False)
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "coeffs", canonical)

    @classmethod
    def identity(cls, dim: int, n: int) -> "MatrixSpectralField":
        return cls(dim, n, {(0,) * dim: np.eye(n)})

    @classmethod
    def zero(cls, dim: int, n: int, symmetric: bool = True) -> "MatrixSpectralField":
        return cls(dim, n, {}, symmetric)

    @classmethod
    def scalar(cls, field: SpectralField, n: int) -> "MatrixSpectralField":
        """The matrix field field(omega) * I_n of a real-valued scalar field."""
        if not field.real_valued:
            raise OperandError("scalar matrix fields need a real-valued field")
        return cls(field.dim, n, {k: c * np.eye(n) for k, c in field.coeffs.items()})

    @property
    def max_frequency(self) -> int:
        return max((max(abs(v) for v in k) for k in self.coeffs), default=0)

    def mean(self) -> np.ndarray:
        """The zero coefficient, i.e. the average of A over the torus."""
        block = self.coeffs.get((0,) * self.dim)
        return np.zeros((self.n, self.n)) if block is None else block.real.copy()

    def entry(self, i: int, j: int) -> SpectralField:
        return SpectralField(self.dim, {k: block[i, j] for k, block in self.coeffs.items()}, real_valued=True)

    def evaluate(self, omega) -> np.ndarray:
        """A(omega) as an (n, n) real array, or (P, n, n) for a (P, m) array of points."""
        points, single = _points(omega, self.dim)
        if not self.coeffs:
            values = np.zeros((len(points), self.n, self.n))
        else:
            freqs = np.array(list(self.coeffs), dtype=np.int64)
            blocks = np.stack(list(self.coeffs.values()))
            values = np.einsum("pq,qij->pij", _characters(points, freqs), blocks).real
        return values[0] if single else values


def ellipticity_constant(a: MatrixSpectralField, grid_side: int = 32, random_count: int = 10_000) -> float:
    """Sampled estimate of a0 = min over omega of the smallest eigenvalue of A(omega).

    Uses a grid_side^m grid for m <= 3 and seeded random points otherwise.
    """
    points = sample_torus(a.dim, grid_side if a.dim <= 3 else None, random_count)
    values = a.evaluate(points)
    symmetric = 0.5 * (values + np.swapaxes(values, 1, 2))
    a0 = float(np.min(np.linalg.eigvalsh(symmetric)))
    logger.debug("ellipticity estimate a0=%g over %d points", a0, len(points))
    return a0


def require_elliptic(a: MatrixSpectralField) -> float:
    """Return the sampled a0, raising when it is not positive."""
    a0 = ellipticity_constant(a)
    if a0 <= 0:
        raise EllipticityError(a0)
    return a0
