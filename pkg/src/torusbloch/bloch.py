"""Plane-wave Galerkin discretization of the shifted cell operator and its Bloch bands.

The stationary character chi_k is realized as exp(2 pi i (Lambda^T k).y), so the
shifted gradient acts diagonally, (grad + 2 pi i theta) chi_k = 2 pi i (Lambda^T k + theta) chi_k,
and the quadratic form becomes a Hermitian matrix over a finite truncation set K.
"""

import copy
import logging
import math
from concurrent.futures import Future, ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from .dual_lattice import (
    FreqVector,
    GammaWeight,
    QuasiEuclidean,
    QuasiMatrix,
    add,
    as_freq,
    enumerate_sublevel,
    negate,
)
from .errors import (
    BandSweepError,
    DimensionMismatchError,
    EigensolverError,
    MissingWindowError,
    OperandError,
)
from .harmonics import MatrixSpectralField, SpectralField, require_elliptic

logger = logging.getLogger(__name__)

FOUR_PI_SQ = 4.0 * math.pi**2
RESIDUAL_RTOL = 1e-8


@dataclass(frozen=True)
class SublevelTruncation:
    """K = {k : gamma(k) <= d}; the weight defaults to the quasi-Euclidean weight of the problem."""

    d: float
    weight: Optional[GammaWeight] = None


@dataclass(frozen=True)
class ExplicitTruncation:
    frequencies: Tuple[FreqVector, ...]


Truncation = Union[SublevelTruncation, ExplicitTruncation]


def _theta_vector(theta, n: int) -> np.ndarray:
    vector = np.asarray(theta, dtype=float).reshape(-1)
    if vector.size != n:
        raise DimensionMismatchError("Bloch frequency", n, vector.size)
    if not np.all(np.isfinite(vector)):
        raise OperandError(f"Bloch frequency must be finite, got {vector.tolist()}")
    vector.setflags(write=False)
    return vector


@dataclass(frozen=True, eq=False)
class BlochProblem:
    """Coefficients A, V on T^m, the frequency matrix, a Bloch frequency and a truncation.

    Construction checks ellipticity of A (sampled a0 > 0), that V is real-valued and
    that K is finite, symmetric and contains 0.
    """

    lam: QuasiMatrix
    a: MatrixSpectralField
    v: SpectralField
    theta: np.ndarray
    truncation: Truncation
    a0: float = field(init=False, repr=False)
    frequencies: Tuple[FreqVector, ...] = field(init=False, repr=False)

    def __post_init__(self):
        m, n = self.lam.m, self.lam.n
        if self.a.dim != m:
            raise DimensionMismatchError("coefficient field A", m, self.a.dim)
        if self.a.n != n:
            raise DimensionMismatchError("coefficient matrix size", n, self.a.n)
        if not self.a.symmetric:
            raise OperandError("coefficient field A must be symmetric")
        if self.v.dim != m:
            raise DimensionMismatchError("potential V", m, self.v.dim)
        if not self.v.real_valued:
            raise OperandError("potential V must be real-valued")
        object.__setattr__(self, "theta", _theta_vector(self.theta, n))
        object.__setattr__(self, "a0", require_elliptic(self.a))
        object.__setattr__(self, "frequencies", self._truncation_set())
        logger.debug("Bloch problem: m=%d n=%d |K|=%d a0=%g", m, n, len(self.frequencies), self.a0)

    def _truncation_set(self) -> Tuple[FreqVector, ...]:
        if isinstance(self.truncation, SublevelTruncation):
            weight = self.truncation.weight or QuasiEuclidean(self.lam)
            try:
                frequencies = enumerate_sublevel(weight, self.truncation.d).frequencies
            except MissingWindowError as exc:
                raise OperandError(
                    f"{weight.describe()} has no finite sublevel certificate; give the truncation set K explicitly"
                ) from exc
        else:
            frequencies = [as_freq(k) for k in self.truncation.frequencies]
        for k in frequencies:
            if len(k) != self.lam.m:
                raise DimensionMismatchError("truncation frequency", self.lam.m, len(k))
        members = set(frequencies)
        if len(members) != len(frequencies):
            raise OperandError("truncation set has repeated frequencies")
        if (0,) * self.lam.m not in members:
            raise OperandError("truncation set must contain the zero frequency")
        for k in members:
            if negate(k) not in members:
                raise OperandError(f"truncation set is not symmetric: {k} present without {negate(k)}")
        return tuple(sorted(members))

    @property
    def size(self) -> int:
        return len(self.frequencies)

    @property
    def certified(self) -> bool:
        """True when the quasi-Euclidean sublevel sets of Lambda are provably finite."""
        return self.lam.positive

    @cached_property
    def _index(self) -> Dict[FreqVector, int]:
        return {k: i for i, k in enumerate(self.frequencies)}

    def shifted_frequencies(self) -> np.ndarray:
        """Rows Lambda^T k + theta for k in K."""
        return self.lam.project_many(np.array(self.frequencies, dtype=float)) + self.theta

    def with_theta(self, theta) -> "BlochProblem":
        """Same coefficients and truncation at another Bloch frequency, without revalidating."""
        clone = copy.copy(self)
        object.__setattr__(clone, "theta", _theta_vector(theta, self.lam.n))
        return clone


@dataclass
class BandResult:
    """Lowest eigenpairs of the truncated problem at one Bloch frequency."""

    theta: Tuple[float, ...]
    eigenvalues: np.ndarray
    residuals: np.ndarray
    eigenvectors: Optional[np.ndarray] = None
    size: int = 0


def _shift_pairs(p: BlochProblem, q: FreqVector) -> Tuple[np.ndarray, np.ndarray]:
    """Index pairs (i, j) with K[i] - K[j] = q."""
    rows, cols = [], []
    for j, k in enumerate(p.frequencies):
        i = p._index.get(add(k, q))
        if i is not None:
            rows.append(i)
            cols.append(j)
    return np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64)


def kinetic_matrix(p: BlochProblem) -> np.ndarray:
    """4 pi^2 (Lambda^T k' + theta)^T A_{k'-k} (Lambda^T k + theta) over K x K."""
    shifted = p.shifted_frequencies()
    matrix = np.zeros((p.size, p.size), dtype=complex)
    for q, block in p.a.coeffs.items():
        rows, cols = _shift_pairs(p, q)
        if rows.size:
            matrix[rows, cols] += FOUR_PI_SQ * np.einsum("pi,ij,pj->p", shifted[rows], block, shifted[cols])
    return matrix


def potential_matrix(p: BlochProblem) -> np.ndarray:
    """V_{k'-k} over K x K."""
    matrix = np.zeros((p.size, p.size), dtype=complex)
    for q, c in p.v.coeffs.items():
        rows, cols = _shift_pairs(p, q)
        if rows.size:
            matrix[rows, cols] += c
    return matrix


def assemble(p: BlochProblem) -> np.ndarray:
    """Hermitian Galerkin matrix of the shifted form, rows and columns in lexicographic K order."""
    logger.debug("assembling %dx%d Bloch matrix at theta=%s", p.size, p.size, p.theta.tolist())
    return kinetic_matrix(p) + potential_matrix(p)


def solve_bands(p: BlochProblem, count: int, with_vectors: bool = False) -> BandResult:
    """Lowest ``count`` eigenpairs by a dense Hermitian eigensolve.

    Raises EigensolverError when LAPACK fails or when a residual |Hc - lambda c|
    exceeds 1e-8 (1 + |lambda|).
    """
    count = int(count)
    if not 1 <= count <= p.size:
        raise OperandError(f"band count must lie in [1, {p.size}], got {count}")
    matrix = assemble(p)
    try:
        values, vectors = scipy.linalg.eigh(matrix, subset_by_index=[0, count - 1], driver="evr")
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise EigensolverError(f"Hermitian eigensolver failed: {exc}", p.size) from exc
    residuals = np.linalg.norm(matrix @ vectors - vectors * values[None, :], axis=0)
    limits = RESIDUAL_RTOL * (1.0 + np.abs(values))
    if np.any(residuals > limits):
        worst = int(np.argmax(residuals / limits))
        raise EigensolverError(
            f"residual {residuals[worst]:.3g} of eigenpair {worst} exceeds {limits[worst]:.3g}", p.size
        )
    return BandResult(
        theta=tuple(float(v) for v in p.theta),
        eigenvalues=values,
        residuals=residuals,
        eigenvectors=vectors if with_vectors else None,
        size=p.size,
    )


def _coefficient_vector(p: BlochProblem, c) -> np.ndarray:
    vector = np.asarray(c, dtype=complex).reshape(-1)
    if vector.size != p.size:
        raise DimensionMismatchError("coefficient vector", p.size, vector.size)
    norm_sq = float(np.vdot(vector, vector).real)
    if norm_sq == 0:
        raise OperandError("energy of the zero vector is undefined")
    return vector


def _rayleigh(matrix: np.ndarray, vector: np.ndarray) -> float:
    return float((np.vdot(vector, matrix @ vector) / np.vdot(vector, vector)).real)


def energy(p: BlochProblem, c) -> float:
    """Rayleigh quotient c^H H c / c^H c."""
    vector = _coefficient_vector(p, c)
    return _rayleigh(assemble(p), vector)


def energy_parts(p: BlochProblem, c) -> Tuple[float, float]:
    """Kinetic and potential contributions to the Rayleigh quotient; they sum to ``energy``."""
    vector = _coefficient_vector(p, c)
    return _rayleigh(kinetic_matrix(p), vector), _rayleigh(potential_matrix(p), vector)


def _solve_band_worker(args):
    """Worker function for multiprocessing: solve one Bloch frequency of a sweep."""
    problem, index, theta, count = args
    return index, solve_bands(problem.with_theta(theta), count)


def band_structure(
    p: BlochProblem, thetas: Sequence[Sequence[float]], count: int, workers: int = 1
) -> List[BandResult]:
    """Solve every Bloch frequency of ``thetas``; results follow input order.

    With more than one worker the frequencies run on a process pool. A failing
    frequency is reported as BandSweepError carrying the lowest failing index.
    """
    points = [tuple(float(v) for v in _theta_vector(theta, p.lam.n)) for theta in thetas]
    if not points:
        raise OperandError("band structure needs at least one Bloch frequency")
    logger.info("band sweep: %d frequencies, %d bands, |K|=%d, workers=%d", len(points), count, p.size, workers)

    results: List[Optional[BandResult]] = [None] * len(points)
    if workers <= 1 or len(points) == 1:
        for index, theta in enumerate(points):
            try:
                results[index] = solve_bands(p.with_theta(theta), count)
            except Exception as exc:
                raise BandSweepError(index, theta, exc) from exc
        return results

    failures: Dict[int, Exception] = {}
    with ProcessPoolExecutor(max_workers=workers) as executor:
        futures: Dict[Future, int] = {
            executor.submit(_solve_band_worker, (p, index, theta, count)): index for index, theta in enumerate(points)
        }
        for future in as_completed(futures):
            index = futures[future]
            try:
                _, result = future.result()
                results[index] = result
            except Exception as exc:
                failures[index] = exc
    if failures:
        first = min(failures)
        raise BandSweepError(first, points[first], failures[first]) from failures[first]
    return results
