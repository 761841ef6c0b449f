"""Dual-lattice frequencies of the torus, gamma weights and finiteness certificates.

A character of the torus T^m is indexed by an integer vector k; a gamma weight
assigns it a nonnegative size. The embedding H^1_gamma into L^2 is compact exactly
when every sublevel set {k : gamma(k) <= d} is finite, which this module certifies
(by an explicit coordinate bound) or collects window evidence against.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatchError, MissingWindowError, OperandError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
LEVEL_RTOL = 1e-12
MAX_SCAN = 20_000_000

FreqVector = Tuple[int, ...]


def as_freq(entries: Iterable[Any]) -> FreqVector:
    """Convert a sequence of integral numbers into a frequency vector."""
    values = []
    for entry in entries:
        as_int = int(round(float(entry)))
        if as_int != float(entry):
            raise OperandError(f"frequency entries must be integers, got {entry!r}")
        values.append(as_int)
    if not values:
        raise OperandError("frequency vectors need at least one entry")
    return tuple(values)


def negate(k: FreqVector) -> FreqVector:
    return tuple(-v for v in k)


def add(k: FreqVector, other: FreqVector) -> FreqVector:
    if len(k) != len(other):
        raise DimensionMismatchError("frequency sum", len(k), len(other))
    return tuple(a + b for a, b in zip(k, other))


def zero(m: int) -> FreqVector:
    return (0,) * m


def unit_generators(m: int) -> List[FreqVector]:
    """The standard generators 1_1, ..., 1_m of Z^m."""
    return [tuple(1 if i == j else 0 for i in range(m)) for j in range(m)]


def within_level(values, level: float):
    """``values <= level`` with a relative slack for rounding in the weight sums."""
    return values <= level + LEVEL_RTOL * max(1.0, level)


def _level_floor(x: float) -> int:
    return int(math.floor(x * (1.0 + LEVEL_RTOL) + LEVEL_RTOL))


@dataclass(frozen=True, eq=False)
class QuasiMatrix:
    """Frequency matrix Lambda with rows lambda_1, ..., lambda_m in R^n.

    The torus flow is omega -> omega + Lambda x, and a character k is seen by the
    flow through the real frequency Lambda^T k. The matrix is *positive* when
    B = Lambda Lambda^T is nonsingular, which bounds |k| <= ||B^-1|| ||Lambda|| |Lambda^T k|.
    """

    rows: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.rows, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] < 1 or matrix.shape[1] < 1:
            raise OperandError(f"frequency matrix must be a non-empty m x n array, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            raise OperandError("frequency matrix entries must be finite")
        matrix.setflags(write=False)
        object.__setattr__(self, "rows", matrix)

    @classmethod
    def identity(cls, m: int) -> "QuasiMatrix":
        return cls(np.eye(m))

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    @property
    def n(self) -> int:
        return self.rows.shape[1]

    @cached_property
    def gram(self) -> np.ndarray:
        return self.rows @ self.rows.T

    @cached_property
    def gram_det(self) -> float:
        return float(np.linalg.det(self.gram))

    @cached_property
    def norm(self) -> float:
        """Spectral norm of Lambda."""
        return float(np.linalg.norm(self.rows, 2))

    @cached_property
    def positive(self) -> bool:
        # scale-aware: det B is homogeneous of degree 2m in Lambda
        return self.gram_det > 1e-12 * self.norm ** (2 * self.m)

    @cached_property
    def inverse_gram_norm(self) -> float:
        """Spectral norm of B^-1, infinite when B is singular."""
        if not self.positive:
            return math.inf
        return float(1.0 / np.min(np.linalg.eigvalsh(self.gram)))

    def coordinate_bound(self, level: float) -> float:
        """Upper bound on |k| over the sublevel set gamma(k) <= level."""
        return self.inverse_gram_norm * self.norm * level / TWO_PI

    def project(self, k: Sequence[int]) -> np.ndarray:
        """Real frequency y(k) = Lambda^T k."""
        vector = np.asarray(k, dtype=float)
        if vector.shape != (self.m,):
            raise DimensionMismatchError("frequency vector", self.m, vector.size)
        return self.rows.T @ vector

    def project_many(self, freqs: np.ndarray) -> np.ndarray:
        """Row-wise Lambda^T k for an (N, m) array of frequencies."""
        if freqs.shape[1] != self.m:
            raise DimensionMismatchError("frequency array", self.m, freqs.shape[1])
        return freqs @ self.rows

    def to_list(self) -> List[List[float]]:
        return self.rows.tolist()


class GammaWeight:
    """A weight gamma(k) = p(k, 0) built from an invariant pseudo-metric on Z^m.

    Every scheme carries the 2*pi prefactor, vanishes at k = 0, is even and
    subadditive.
    """

    scheme = "abstract"

    @property
    def dim(self) -> Optional[int]:
        """Fixed dimension m, or None for weights on the finitely supported sequences Z^N_c."""
        raise NotImplementedError

    def values(self, freqs: np.ndarray) -> np.ndarray:
        """Evaluate gamma on every row of an (N, m) integer array."""
        raise NotImplementedError

    def exact_radii(self, level: float) -> Optional[List[int]]:
        """Per-coordinate radii of a box that contains the whole sublevel set, if one is known."""
        raise NotImplementedError

    def coordinate_weights(self, dims: int) -> Optional[np.ndarray]:
        """Per-coordinate l1 weights for pruned search; None when gamma is not an l1 sum."""
        return None

    def window_dim(self, window: int) -> int:
        """Number of coordinates a window of radius ``window`` ranges over."""
        return self.dim

    def to_dict(self) -> Dict[str, Any]:
        raise NotImplementedError

    def describe(self) -> str:
        return self.scheme

    def _check_width(self, freqs: np.ndarray) -> np.ndarray:
        array = np.atleast_2d(np.asarray(freqs, dtype=np.int64))
        if self.dim is not None and array.shape[1] != self.dim:
            raise DimensionMismatchError(f"{self.scheme} weight", self.dim, array.shape[1])
        return array


@dataclass(frozen=True)
class PeriodicL1(GammaWeight):
    """gamma(k) = 2*pi * sum_j |k_j| on the periodic torus T^m."""

    m: int
    scheme = "periodic_l1"

    def __post_init__(self):
        if int(self.m) < 1:
            raise OperandError(f"periodic weight dimension must be >= 1, got {self.m}")

    @property
    def dim(self) -> Optional[int]:
        return self.m

    def values(self, freqs: np.ndarray) -> np.ndarray:
        array = self._check_width(freqs)
        return TWO_PI * np.abs(array).sum(axis=1)

    def exact_radii(self, level: float) -> Optional[List[int]]:
        return [_level_floor(level / TWO_PI)] * self.m

    def coordinate_weights(self, dims: int) -> Optional[np.ndarray]:
        return np.full(dims, TWO_PI)

    def to_dict(self) -> Dict[str, Any]:
        return {"scheme": self.scheme, "m": self.m}

    def describe(self) -> str:
        return f"periodic l1 (m={self.m})"


@dataclass(frozen=True)
class WeightedL1(GammaWeight):
    """gamma(k) = 2*pi * sum_l alpha_l |k_l| with a finite nonnegative weight vector."""

    alpha: Tuple[float, ...]
    scheme = "weighted_l1"

    def __post_init__(self):
        alpha = tuple(float(a) for a in self.alpha)
        if not alpha:
            raise OperandError("weighted l1 needs at least one alpha")
        if any(not math.isfinite(a) or a < 0 for a in alpha):
            raise OperandError(f"alpha entries must be finite and nonnegative, got {alpha}")
        object.__setattr__(self, "alpha", alpha)

    @property
    def dim(self) -> Optional[int]:
        return len(self.alpha)

    def values(self, freqs: np.ndarray) -> np.ndarray:
        array = self._check_width(freqs)
        return TWO_PI * (np.abs(array) @ np.asarray(self.alpha))

    def exact_radii(self, level: float) -> Optional[List[int]]:
        if min(self.alpha) <= 0:
            return None
        return [_level_floor(level / (TWO_PI * a)) for a in self.alpha]

    def coordinate_weights(self, dims: int) -> Optional[np.ndarray]:
        return TWO_PI * np.asarray(self.alpha[:dims])

    def to_dict(self) -> Dict[str, Any]:
        return {"scheme": self.scheme, "alpha": list(self.alpha)}

    def describe(self) -> str:
        return f"weighted l1 (alpha={list(self.alpha)})"


@dataclass(frozen=True)
class SequenceWeightedL1(GammaWeight):
    """Weighted l1 on Z^N_c, the dual of the infinite torus: alpha_l = scale * l**exponent.

    With ``exponent > 0`` the weights grow without bound and only the coordinates
    with 2*pi*alpha_l <= d can be active, so sublevel sets are enumerated exactly.
    A constant sequence (``exponent == 0``) admits no such bound: a window of
    radius R then stands for the first R coordinates, each in [-R, R].
    """

    scale: float
    exponent: float = 0.0
    scheme = "sequence_weighted_l1"

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale >= 0):
            raise OperandError(f"sequence weight scale must be finite and nonnegative, got {self.scale}")
        if not (math.isfinite(self.exponent) and self.exponent >= 0):
            raise OperandError(f"sequence weight exponent must be nonnegative, got {self.exponent}")

    @property
    def dim(self) -> Optional[int]:
        return None

    @property
    def unbounded(self) -> bool:
        return self.scale > 0 and self.exponent > 0

    def alpha(self, count: int) -> np.ndarray:
        return self.scale * np.arange(1, count + 1, dtype=float) ** self.exponent

    def values(self, freqs: np.ndarray) -> np.ndarray:
        array = self._check_width(freqs)
        return TWO_PI * (np.abs(array) @ self.alpha(array.shape[1]))

    def exact_radii(self, level: float) -> Optional[List[int]]:
        if not self.unbounded:
            return None
        radii = []
        index = 1
        while True:
            weight = TWO_PI * self.scale * index**self.exponent
            if not within_level(weight, level):
                break
            radii.append(_level_floor(level / weight))
            index += 1
        return radii or [0]

    def coordinate_weights(self, dims: int) -> Optional[np.ndarray]:
        return TWO_PI * self.alpha(dims)

    def window_dim(self, window: int) -> int:
        return window

    def to_dict(self) -> Dict[str, Any]:
        return {"scheme": "weighted_l1", "alpha_rule": {"scale": self.scale, "exponent": self.exponent}}

    def describe(self) -> str:
        return f"weighted l1 on Z^N_c (alpha_l = {self.scale:g} * l^{self.exponent:g})"


@dataclass(frozen=True)
class QuasiEuclidean(GammaWeight):
    """gamma(k) = 2*pi * |Lambda^T k|, the weight seen through the torus flow."""

    lam: QuasiMatrix
    scheme = "quasi_euclidean"

    @property
    def dim(self) -> Optional[int]:
        return self.lam.m

    def values(self, freqs: np.ndarray) -> np.ndarray:
        array = self._check_width(freqs)
        projected = self.lam.project_many(array.astype(float))
        return TWO_PI * np.sqrt(np.sum(projected**2, axis=1))

    def exact_radii(self, level: float) -> Optional[List[int]]:
        if not self.lam.positive:
            return None
        return [_level_floor(self.lam.coordinate_bound(level))] * self.lam.m

    def to_dict(self) -> Dict[str, Any]:
        return {"scheme": self.scheme, "lambda": self.lam.to_list()}

    def describe(self) -> str:
        return f"quasi-euclidean (m={self.lam.m}, n={self.lam.n}, positive={self.lam.positive})"


def gamma(w: GammaWeight, k: Sequence[int]) -> float:
    """Weight of a single frequency."""
    return float(w.values(np.array([as_freq(k)], dtype=np.int64))[0])


@dataclass(frozen=True)
class SublevelSet:
    """Frequencies with gamma(k) <= level, lexicographically ordered."""

    frequencies: List[FreqVector]
    exact: bool
    level: float
    window: Optional[int] = None

    def __len__(self) -> int:
        return len(self.frequencies)

    def as_array(self) -> np.ndarray:
        return np.array(self.frequencies, dtype=np.int64)


def _check_level(level: float) -> float:
    level = float(level)
    if math.isnan(level) or level < 0:
        raise OperandError(f"sublevel d must be nonnegative, got {level}")
    return level


def _check_window(window: Any) -> int:
    radius = int(window)
    if radius < 1:
        raise OperandError(f"window radius must be >= 1, got {window}")
    return radius


def window_box(radii: Sequence[int]) -> np.ndarray:
    """Every integer vector of the box prod_j [-radii[j], radii[j]], lexicographically ordered."""
    total = math.prod(2 * r + 1 for r in radii)
    if total > MAX_SCAN:
        raise OperandError(f"window box holds {total} frequencies, more than the scan limit {MAX_SCAN}")
    axes = [np.arange(-r, r + 1, dtype=np.int64) for r in radii]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def _l1_search(weights: np.ndarray, level: float, radii: Sequence[int]) -> np.ndarray:
    """Depth-first search over a box, pruned on the partial weighted l1 sum."""
    budget = level + 1e-9 * max(1.0, level) if math.isfinite(level) else math.inf
    dims = len(radii)
    current = [0] * dims
    found: List[Tuple[int, ...]] = []

    def descend(axis: int, spent: float) -> None:
        if axis == dims:
            found.append(tuple(current))
            if len(found) > MAX_SCAN:
                raise OperandError(f"sublevel set exceeds the scan limit {MAX_SCAN}")
            return
        reach = radii[axis]
        weight = weights[axis]
        if weight > 0 and math.isfinite(budget):
            reach = min(reach, int(math.floor((budget - spent) / weight)))
        for value in range(-reach, reach + 1):
            current[axis] = value
            descend(axis + 1, spent + weight * abs(value))
        current[axis] = 0

    descend(0, 0.0)
    return np.array(found, dtype=np.int64).reshape(len(found), dims)


def _collect(w: GammaWeight, level: float, radii: Sequence[int]) -> List[FreqVector]:
    weights = w.coordinate_weights(len(radii))
    if weights is not None:
        candidates = _l1_search(weights, level, radii)
    else:
        candidates = window_box(radii)
    keep = within_level(w.values(candidates), level)
    logger.debug("scanned %d candidates, kept %d at level %g", len(candidates), int(keep.sum()), level)
    return [tuple(int(v) for v in row) for row in candidates[keep]]


def window_sublevel(w: GammaWeight, level: float, window: int) -> List[FreqVector]:
    """Sublevel set intersected with the window box, whether or not the full set is finite."""
    radius = _check_window(window)
    dims = w.window_dim(radius)
    return _collect(w, level, [radius] * dims)


def enumerate_sublevel(w: GammaWeight, d: float, window: Optional[int] = None) -> SublevelSet:
    """Enumerate {k : gamma(k) <= d}.

    The set is exact when the weight admits a coordinate bound at level d;
    otherwise a window radius is required and only sublevel-inside-window is returned.
    """
    level = _check_level(d)
    radii = w.exact_radii(level)
    if radii is not None:
        return SublevelSet(_collect(w, level, radii), True, level, window)
    if window is None:
        raise MissingWindowError(f"{w.describe()} has no coordinate bound for its sublevel sets")
    radius = _check_window(window)
    return SublevelSet(window_sublevel(w, level, radius), False, level, radius)


class Verdict(str, Enum):
    CERTIFIED_FINITE = "CERTIFIED_FINITE"
    EVIDENCE_INFINITE = "EVIDENCE_INFINITE"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass
class LevelCounts:
    """Sublevel counts at one level: the exact count (when certified) and per-window counts."""

    level: float
    exact_count: Optional[int]
    window_counts: List[int] = field(default_factory=list)


@dataclass
class ConditionCReport:
    """Outcome of checking that every gamma sublevel set is finite."""

    weight: GammaWeight
    windows: List[int]
    levels: List[LevelCounts]
    verdict: Verdict
    growth: Optional[List[int]] = None
    growth_level: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "weight": self.weight.to_dict(),
            "verdict": self.verdict.value,
            "windows": list(self.windows),
            "levels": [
                {"d": entry.level, "exact_count": entry.exact_count, "window_counts": list(entry.window_counts)}
                for entry in self.levels
            ],
            "growth": list(self.growth) if self.growth is not None else None,
            "growth_level": self.growth_level,
        }


def _count_in_window(w: GammaWeight, frequencies: Sequence[FreqVector], radius: int) -> int:
    dims = w.window_dim(radius)
    count = 0
    for k in frequencies:
        if all(abs(v) <= radius for v in k) and all(v == 0 for v in k[dims:]):
            count += 1
    return count


def _strictly_increasing(counts: Sequence[int]) -> bool:
    return len(counts) >= 3 and all(b > a for a, b in zip(counts, counts[1:]))


def condition_c_report(w: GammaWeight, d_levels: Sequence[float], windows: Sequence[int]) -> ConditionCReport:
    """Certify finiteness of the sublevel sets, or report window growth as evidence against it.

    Infinite sublevel sets are never claimed as proven: strictly growing counts over
    at least three windows at a fixed level are reported as evidence only.
    """
    levels = [_check_level(d) for d in d_levels]
    if not levels:
        raise OperandError("condition C report needs at least one level")
    if any(b < a for a, b in zip(levels, levels[1:])):
        raise OperandError(f"levels must be ascending, got {levels}")
    radii = sorted({_check_window(r) for r in windows})

    entries = []
    all_exact = True
    for level in levels:
        bound = w.exact_radii(level)
        if bound is not None:
            frequencies = _collect(w, level, bound)
            counts = [_count_in_window(w, frequencies, r) for r in radii]
            entries.append(LevelCounts(level, len(frequencies), counts))
        else:
            all_exact = False
            counts = [len(window_sublevel(w, level, r)) for r in radii]
            entries.append(LevelCounts(level, None, counts))

    if all_exact:
        return ConditionCReport(w, radii, entries, Verdict.CERTIFIED_FINITE)
    for entry in entries:
        if entry.exact_count is None and _strictly_increasing(entry.window_counts):
            logger.info("window counts grow at level %g: %s", entry.level, entry.window_counts)
            return ConditionCReport(
                w, radii, entries, Verdict.EVIDENCE_INFINITE, list(entry.window_counts), entry.level
            )
    return ConditionCReport(w, radii, entries, Verdict.INCONCLUSIVE)


@dataclass
class GeneratorBound:
    """Supremum of gamma over a list of generators of the dual."""

    bounded: bool
    sup: float
    values: List[float]
    uniform: bool
    note: str = ""


def generator_bounded_check(w: GammaWeight, generators: Sequence[Sequence[int]]) -> GeneratorBound:
    """Evaluate gamma on a generator list.

    A finite list is always bounded; the check documents the obstruction where
    infinitely many generators share one weight (the infinite torus with constant
    alpha), in which case the sublevel set at that weight cannot be finite.
    """
    if not generators:
        raise OperandError("generator list must not be empty")
    frequencies = [as_freq(g) for g in generators]
    width = len(frequencies[0])
    for k in frequencies:
        if len(k) != width:
            raise DimensionMismatchError("generator list", width, len(k))
    values = w.values(np.array(frequencies, dtype=np.int64))
    sup = float(np.max(values))
    uniform = len(values) > 1 and bool(np.allclose(values, values[0], rtol=LEVEL_RTOL, atol=0.0))
    note = ""
    if uniform:
        note = (
            f"all {len(values)} generators carry gamma = {values[0]:.6g}; an unbounded family of such "
            "generators keeps the sublevel set at that level infinite (see condition_c_report evidence)"
        )
    return GeneratorBound(True, sup, [float(v) for v in values], uniform, note)
