"""The torus flow tau(x)omega = omega + Lambda x mod 1 and its mean values.

A stationary function is realized as f(x, omega) = F(tau(x)omega) for a field F on
T^m. Box averages of x -> F(tau(x)omega0) converge to the torus mean of F when the
flow is ergodic, and the deformed averages compare against their closed form.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Callable, Optional, Tuple

import numpy as np

from .dual_lattice import FreqVector, QuasiMatrix, window_box
from .errors import (
    DeformationError,
    DimensionMismatchError,
    EstimateCancelled,
    JacobianError,
    OperandError,
)
from .harmonics import MatrixSpectralField, SpectralField, evaluate, sample_torus

logger = logging.getLogger(__name__)

PANELS_PER_CYCLE = 8
MODE_CHUNK = 32
# complex entries per character block, about 16 MB
NODE_BUDGET = 1 << 20
ORBIT_SAMPLES = 4096

StopCheck = Callable[[], bool]


class Averaging(str, Enum):
    """Kernel used for box averages over [0, t]^n."""

    UNIFORM = "uniform"
    BUMP = "bump"


def tau(lam: QuasiMatrix, x, omega) -> np.ndarray:
    """Fractional part of omega + Lambda x; accepts (n,) or (P, n) for x."""
    points = np.asarray(x, dtype=float)
    base = np.asarray(omega, dtype=float)
    if points.shape[-1] != lam.n:
        raise DimensionMismatchError("flow time", lam.n, points.shape[-1])
    if base.shape[-1] != lam.m:
        raise DimensionMismatchError("torus point", lam.m, base.shape[-1])
    shifted = base + points @ lam.rows.T
    fractional = shifted - np.floor(shifted)
    # rounding can land a tiny negative on exactly 1.0
    return np.where(fractional >= 1.0, 0.0, fractional)


class DensityStatus(str, Enum):
    NO_OBSTRUCTION_FOUND = "NO_OBSTRUCTION_FOUND"
    OBSTRUCTION = "OBSTRUCTION"


@dataclass(frozen=True)
class DensityVerdict:
    """Window-limited search for a character annihilating the orbit phi(R^n)."""

    status: DensityStatus
    obstruction: Optional[FreqVector]
    window: int
    tol: float
    min_norm: float


def _canonical_obstruction(candidates: np.ndarray) -> FreqVector:
    normalized = []
    for row in candidates:
        k = tuple(int(v) for v in row)
        lead = next(v for v in k if v != 0)
        if lead < 0:
            k = tuple(-v for v in k)
        normalized.append((max(abs(v) for v in k), sum(abs(v) for v in k), k))
    return min(normalized)[2]


def density_kernel_test(lam: QuasiMatrix, window: int, tol: float) -> DensityVerdict:
    """Search nonzero k in [-R, R]^m with |Lambda^T k| <= tol.

    Such a k is a character that is constant along the flow, so the orbit cannot be
    dense. Finding none is evidence of ergodicity within the window, never a proof.
    The reported obstruction is the smallest one (sup norm, then l1) with a positive
    leading entry.
    """
    radius = int(window)
    if radius < 1:
        raise OperandError(f"window radius must be >= 1, got {window}")
    if not tol > 0:
        raise OperandError(f"tolerance must be positive, got {tol}")
    freqs = window_box([radius] * lam.m)
    nonzero = np.any(freqs != 0, axis=1)
    norms = np.sqrt(np.sum(lam.project_many(freqs.astype(float)) ** 2, axis=1))
    min_norm = float(np.min(norms[nonzero]))
    hits = nonzero & (norms <= tol)
    if np.any(hits):
        k = _canonical_obstruction(freqs[hits])
        logger.info("orbit obstruction k=%s within window %d", k, radius)
        return DensityVerdict(DensityStatus.OBSTRUCTION, k, radius, tol, min_norm)
    return DensityVerdict(DensityStatus.NO_OBSTRUCTION_FOUND, None, radius, tol, min_norm)


def exact_mean(f: SpectralField) -> complex:
    """Torus mean of f, its zero Fourier coefficient."""
    return f.coefficient((0,) * f.dim)


def minimal_frequency(f: SpectralField, lam: QuasiMatrix) -> float:
    """Smallest |Lambda^T k| over the nonzero support of f (inf for constants)."""
    freqs, _ = f.arrays()
    nonzero = np.any(freqs != 0, axis=1)
    if not np.any(nonzero):
        return math.inf
    return float(np.min(np.linalg.norm(lam.project_many(freqs[nonzero].astype(float)), axis=1)))


def _bump(s: np.ndarray) -> np.ndarray:
    return np.exp(-1.0 / (s * (1.0 - s)))


def axis_rule(t: float, max_freq: float, order: int, averaging: Averaging) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on [0, t] whose weights average rather than integrate.

    The panel count is 8 * ceil(t * max_freq), tying resolution to the top frequency
    of the band-limited integrand.
    """
    panels = max(1, PANELS_PER_CYCLE * math.ceil(t * max_freq))
    reference_nodes, reference_weights = np.polynomial.legendre.leggauss(order)
    width = t / panels
    starts = np.arange(panels, dtype=float) * width
    nodes = (starts[:, None] + 0.5 * width * (reference_nodes[None, :] + 1.0)).ravel()
    weights = np.tile(0.5 * width * reference_weights, panels)
    if Averaging(averaging) is Averaging.BUMP:
        weights = weights * _bump(nodes / t)
        weights = weights / np.sum(weights)
    else:
        weights = weights / t
    logger.debug("axis rule: %d panels x %d nodes on [0, %g]", panels, order, t)
    return nodes, weights


def mode_chunk_size(node_count: int) -> int:
    """Modes per chunk so that one chunk's character block stays within NODE_BUDGET entries."""
    return max(1, min(MODE_CHUNK, NODE_BUDGET // max(1, node_count)))


def axis_averages(frequencies: np.ndarray, nodes: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_q w_q exp(2 pi i y x_q) for each y, summed over node blocks in a fixed order."""
    span = max(1, NODE_BUDGET // max(1, len(frequencies)))
    totals = np.zeros(len(frequencies), dtype=complex)
    for start in range(0, len(nodes), span):
        segment = nodes[start : start + span]
        totals += np.exp(2j * np.pi * frequencies[:, None] * segment[None, :]) @ weights[start : start + span]
    return totals


def _check_horizon(t: float, order: int) -> None:
    if not t > 0:
        raise OperandError(f"box size t must be positive, got {t}")
    if int(order) < 1:
        raise OperandError(f"quadrature order must be >= 1, got {order}")


def mean_value_estimate(
    f: SpectralField,
    lam: QuasiMatrix,
    omega0,
    t: float,
    order: int = 8,
    averaging: Averaging = Averaging.UNIFORM,
    should_stop: Optional[StopCheck] = None,
) -> complex:
    """Average of x -> f(tau(x)omega0) over the box [0, t]^n.

    Each mode contributes c_k exp(2 pi i k.omega0) prod_j avg(exp(2 pi i y_j x_j)) with
    y = Lambda^T k, so the tensor rule factorizes into one 1-D rule per axis. Modes
    with y_j = 0 average to exactly 1. ``should_stop`` is polled between mode chunks.
    """
    if lam.m != f.dim:
        raise DimensionMismatchError("frequency matrix rows", f.dim, lam.m)
    base = np.asarray(omega0, dtype=float).reshape(-1)
    if base.size != lam.m:
        raise DimensionMismatchError("base point", lam.m, base.size)
    _check_horizon(t, order)

    freqs, amps = f.arrays()
    if not amps.size:
        return 0j
    projected = lam.project_many(freqs.astype(float))
    phases = np.exp(2j * np.pi * (freqs @ base))
    max_freq = float(np.max(np.linalg.norm(projected, axis=1)))
    nodes, weights = axis_rule(t, max_freq, int(order), averaging)

    factors = np.ones(len(amps), dtype=complex)
    chunk_size = mode_chunk_size(len(nodes))
    total_chunks = math.ceil(len(amps) / chunk_size)
    for chunk, start in enumerate(range(0, len(amps), chunk_size)):
        if should_stop is not None and should_stop():
            raise EstimateCancelled(chunk, total_chunks)
        block = projected[start : start + chunk_size]
        for axis in range(lam.n):
            frequencies = block[:, axis]
            averages = axis_averages(frequencies, nodes, weights)
            averages[frequencies == 0] = 1.0
            factors[start : start + chunk_size] *= averages
    return complex(np.sum(amps * phases * factors))


def _permutation_sign(perm: Tuple[int, ...]) -> int:
    inversions = sum(1 for i, j in itertools.combinations(range(len(perm)), 2) if perm[i] > perm[j])
    return -1 if inversions % 2 else 1


@dataclass(frozen=True, eq=False)
class Deformation:
    """Deterministic realization of a stationary deformation through the torus flow.

    grad Phi(y) = I + G(tau(y)omega0) with G a real matrix field on T^m. Construction
    samples det grad Phi >= nu_lower and |grad Phi| <= grad_bound (spectral norm)
    over ``sample_count`` torus points and fails otherwise.
    """

    lam: QuasiMatrix
    omega0: np.ndarray
    gradient_perturbation: MatrixSpectralField
    nu_lower: float
    grad_bound: float
    sample_count: int = 10_000

    def __post_init__(self):
        base = np.asarray(self.omega0, dtype=float).reshape(-1)
        if base.size != self.lam.m:
            raise DimensionMismatchError("deformation base point", self.lam.m, base.size)
        perturbation = self.gradient_perturbation
        if perturbation.dim != self.lam.m:
            raise DimensionMismatchError("deformation gradient field", self.lam.m, perturbation.dim)
        if perturbation.n != self.lam.n:
            raise DimensionMismatchError("deformation gradient size", self.lam.n, perturbation.n)
        if not (self.nu_lower > 0 and math.isfinite(self.nu_lower)):
            raise DeformationError(f"Jacobian lower bound must be positive, got {self.nu_lower}")
        if not (self.grad_bound > 0 and math.isfinite(self.grad_bound)):
            raise DeformationError(f"gradient bound must be positive and finite, got {self.grad_bound}")
        base.setflags(write=False)
        object.__setattr__(self, "omega0", base)
        self._validate_bounds()

    def _validate_bounds(self) -> None:
        points = np.vstack([self.omega0, sample_torus(self.m, count=self.sample_count)])
        gradients = np.eye(self.n) + self.gradient_perturbation.evaluate(points)
        determinants = np.linalg.det(gradients)
        norms = np.linalg.norm(gradients, ord=2, axis=(1, 2))
        if np.min(determinants) < self.nu_lower:
            raise DeformationError(
                f"sampled det grad Phi = {np.min(determinants):.6g} is below the lower bound {self.nu_lower:.6g}"
            )
        if np.max(norms) > self.grad_bound:
            raise DeformationError(f"sampled |grad Phi| = {np.max(norms):.6g} exceeds the bound {self.grad_bound:.6g}")

    @classmethod
    def identity(cls, lam: QuasiMatrix, omega0) -> "Deformation":
        return cls(lam, omega0, MatrixSpectralField.zero(lam.m, lam.n, symmetric=False), 1.0, 1.0)

    @property
    def m(self) -> int:
        return self.lam.m

    @property
    def n(self) -> int:
        return self.lam.n

    @cached_property
    def jacobian_field(self) -> SpectralField:
        """det(I + G) as an exact trigonometric polynomial (Leibniz expansion)."""
        entries = [
            [
                self.gradient_perturbation.entry(i, j) + SpectralField.constant(self.m, 1.0 if i == j else 0.0)
                for j in range(self.n)
            ]
            for i in range(self.n)
        ]
        determinant = SpectralField.zero(self.m)
        for perm in itertools.permutations(range(self.n)):
            term = SpectralField.constant(self.m, float(_permutation_sign(perm)))
            for i, j in enumerate(perm):
                term = term * entries[i][j]
            determinant = determinant + term
        return determinant

    def mean_gradient(self) -> np.ndarray:
        """E[grad Phi] = I + G_0."""
        return np.eye(self.n) + self.gradient_perturbation.mean()


def phi2_rhs(f: SpectralField, deformation: Deformation) -> float:
    """Closed form E[f det grad Phi] / det E[grad Phi] of the deformed mean value."""
    if not f.real_valued:
        raise OperandError("deformed mean values need a real-valued field")
    if f.dim != deformation.m:
        raise DimensionMismatchError("field", deformation.m, f.dim)
    denominator = float(np.linalg.det(deformation.mean_gradient()))
    if denominator <= 0:
        raise DeformationError(f"det E[grad Phi] = {denominator:.6g} is not positive")
    numerator = exact_mean(f * deformation.jacobian_field).real
    return numerator / denominator


def _check_orbit_jacobian(deformation: Deformation, t: float) -> None:
    rng = np.random.default_rng(1)
    times = np.vstack([np.zeros(deformation.n), t * rng.random((ORBIT_SAMPLES, deformation.n))])
    values = evaluate(deformation.jacobian_field, tau(deformation.lam, times, deformation.omega0)).real
    worst = int(np.argmin(values))
    if values[worst] <= 0:
        raise JacobianError(f"non-positive Jacobian {values[worst]:.6g} at y={times[worst].tolist()}")


def phi2_lhs_estimate(
    f: SpectralField,
    deformation: Deformation,
    t: float,
    order: int = 8,
    averaging: Averaging = Averaging.UNIFORM,
    should_stop: Optional[StopCheck] = None,
) -> float:
    """Mean of f over the deformed box Phi([0, t]^n), by change of variables.

    Returns the ratio of the averages of f(tau(y)omega0) det grad Phi(y) and of
    det grad Phi(y) over [0, t]^n, which avoids inverting Phi.
    """
    if f.dim != deformation.m:
        raise DimensionMismatchError("field", deformation.m, f.dim)
    _check_horizon(t, order)
    _check_orbit_jacobian(deformation, t)
    jacobian = deformation.jacobian_field
    arguments = (deformation.lam, deformation.omega0, t, order, averaging, should_stop)
    numerator = mean_value_estimate(f * jacobian, *arguments)
    denominator = mean_value_estimate(jacobian, *arguments)
    if denominator.real <= 0:
        raise JacobianError(f"average Jacobian {denominator.real:.6g} over [0, {t}]^n is not positive")
    return float((numerator / denominator).real)
