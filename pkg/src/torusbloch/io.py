"""JSON input documents and CSV reports.

Documents are plain JSON objects. Structural problems (bad JSON, missing keys,
wrong types) raise ParseError; values that parse but break a contract raise the
library error of the object being built.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Sequence, TextIO, Tuple

import numpy as np

from .bloch import BandResult, BlochProblem, ExplicitTruncation, SublevelTruncation
from .dual_lattice import (
    GammaWeight,
    PeriodicL1,
    QuasiEuclidean,
    QuasiMatrix,
    SequenceWeightedL1,
    SublevelSet,
    WeightedL1,
    as_freq,
)
from .errors import ParseError
from .harmonics import MatrixSpectralField, SpectralField
from .quasi_dynamics import Deformation
from .utils import format_float

logger = logging.getLogger(__name__)


def load_json(path: Path) -> Dict[str, Any]:
    """Read a JSON object from ``path``."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not valid UTF-8 text at byte {exc.start}: {exc.reason}") from exc
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(document, dict):
        raise ParseError(f"{path}: top-level JSON value must be an object")
    logger.debug("loaded %s with keys %s", path, sorted(document))
    return document


def _require(doc: Dict[str, Any], key: str, context: str) -> Any:
    if not isinstance(doc, dict):
        raise ParseError(f"{context} must be a JSON object")
    if key not in doc:
        raise ParseError(f"{context} is missing the key '{key}'")
    return doc[key]


def _number(value: Any, context: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{context} must be a number, got {value!r}")
    return float(value)


def _integer(value: Any, context: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"{context} must be an integer, got {value!r}")
    return value


def _numeric_array(value: Any, context: str, ndim: int) -> np.ndarray:
    try:
        array = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{context} must be a numeric array: {exc}") from exc
    if array.ndim != ndim:
        raise ParseError(f"{context} must be a {ndim}-dimensional array, got shape {array.shape}")
    return array


def _frequency(value: Any, context: str) -> Tuple[int, ...]:
    if isinstance(value, int) and not isinstance(value, bool):
        return (value,)
    if not isinstance(value, list):
        raise ParseError(f"{context} must be a list of integers, got {value!r}")
    for entry in value:
        _number(entry, context)
    return as_freq(value)


def quasi_matrix_from(value: Any, context: str = "lambda") -> QuasiMatrix:
    return QuasiMatrix(_numeric_array(value, context, 2))


def weight_from_dict(doc: Dict[str, Any]) -> GammaWeight:
    """Build a gamma weight from ``{"scheme": ..., ...}``."""
    scheme = _require(doc, "scheme", "weight")
    if scheme == "periodic_l1":
        return PeriodicL1(_integer(_require(doc, "m", "periodic_l1 weight"), "periodic_l1 m"))
    if scheme == "weighted_l1":
        if "alpha_rule" in doc:
            rule = doc["alpha_rule"]
            scale = _number(_require(rule, "scale", "alpha_rule"), "alpha_rule scale")
            exponent = _number(rule.get("exponent", 0.0), "alpha_rule exponent")
            return SequenceWeightedL1(scale, exponent)
        alpha = _numeric_array(_require(doc, "alpha", "weighted_l1 weight"), "alpha", 1)
        return WeightedL1(tuple(alpha.tolist()))
    if scheme == "quasi_euclidean":
        return QuasiEuclidean(quasi_matrix_from(_require(doc, "lambda", "quasi_euclidean weight")))
    raise ParseError(f"unknown weight scheme '{scheme}' (expected periodic_l1, weighted_l1 or quasi_euclidean)")


def field_from_dict(doc: Dict[str, Any]) -> SpectralField:
    """``{"dim": m, "real": bool, "coeffs": [{"k": [...], "re": x, "im": y}, ...]}``."""
    dim = _integer(_require(doc, "dim", "field"), "field dim")
    entries = _require(doc, "coeffs", "field")
    if not isinstance(entries, list):
        raise ParseError("field coeffs must be a list")
    coeffs: Dict[Tuple[int, ...], complex] = {}
    for entry in entries:
        k = _frequency(_require(entry, "k", "field coefficient"), "field coefficient k")
        value = complex(_number(entry.get("re", 0.0), "re"), _number(entry.get("im", 0.0), "im"))
        coeffs[k] = coeffs.get(k, 0j) + value
    return SpectralField(dim, coeffs, real_valued=bool(doc.get("real", False)))


def field_to_dict(f: SpectralField) -> Dict[str, Any]:
    return {
        "dim": f.dim,
        "real": f.real_valued,
        "coeffs": [{"k": list(k), "re": c.real, "im": c.imag} for k, c in f.coeffs.items()],
    }


def matrix_field_to_dict(field: MatrixSpectralField) -> Dict[str, Any]:
    return {
        "dim": field.dim,
        "n": field.n,
        "coeffs": [
            {"k": list(k), "re": block.real.tolist(), "im": block.imag.tolist()} for k, block in field.coeffs.items()
        ],
    }


def matrix_field_from_dict(doc: Dict[str, Any], symmetric: bool = True) -> MatrixSpectralField:
    """``{"dim": m, "n": n, "coeffs": [{"k": [...], "re": [[...]], "im": [[...]]}, ...]}``."""
    dim = _integer(_require(doc, "dim", "matrix field"), "matrix field dim")
    n = _integer(_require(doc, "n", "matrix field"), "matrix field n")
    entries = _require(doc, "coeffs", "matrix field")
    if not isinstance(entries, list):
        raise ParseError("matrix field coeffs must be a list")
    coeffs = {}
    for entry in entries:
        k = _frequency(_require(entry, "k", "matrix coefficient"), "matrix coefficient k")
        block = _numeric_array(_require(entry, "re", "matrix coefficient"), "re", 2).astype(complex)
        if "im" in entry:
            imaginary = _numeric_array(entry["im"], "im", 2)
            if imaginary.shape != block.shape:
                raise ParseError(f"matrix coefficient at {k}: re and im shapes differ")
            block = block + 1j * imaginary
        coeffs[k] = coeffs[k] + block if k in coeffs else block
    return MatrixSpectralField(dim, n, coeffs, symmetric)


def dynamics_from_dict(doc: Dict[str, Any]) -> Tuple[QuasiMatrix, np.ndarray]:
    """``{"lambda": [[...]], "omega0": [...]}``; omega0 defaults to the origin."""
    lam = quasi_matrix_from(_require(doc, "lambda", "dynamics"))
    omega0 = _numeric_array(doc.get("omega0", [0.0] * lam.m), "omega0", 1)
    return lam, omega0


def deformation_from_dict(doc: Dict[str, Any]) -> Deformation:
    """``{"lambda", "omega0", "G": <matrix field>, "nu_lower", "M"}`` with grad Phi = I + G."""
    lam, omega0 = dynamics_from_dict(doc)
    for key, actual in (("m", lam.m), ("n", lam.n)):
        if key in doc and _integer(doc[key], key) != actual:
            raise ParseError(f"deformation declares {key}={doc[key]} but lambda is {lam.m} x {lam.n}")
    perturbation = matrix_field_from_dict(_require(doc, "G", "deformation"), symmetric=False)
    nu_lower = _number(_require(doc, "nu_lower", "deformation"), "nu_lower")
    grad_bound = _number(_require(doc, "M", "deformation"), "M")
    sample_count = _integer(doc.get("samples", 10_000), "samples")
    return Deformation(lam, omega0, perturbation, nu_lower, grad_bound, sample_count)


def truncation_from_dict(doc: Dict[str, Any]):
    """``{"K": [[...], ...]}`` or ``{"d": ..., "weight": ...}``."""
    if "K" in _require_object(doc, "truncation"):
        frequencies = doc["K"]
        if not isinstance(frequencies, list):
            raise ParseError("truncation K must be a list of frequency vectors")
        return ExplicitTruncation(tuple(_frequency(k, "truncation K entry") for k in frequencies))
    d = _number(_require(doc, "d", "truncation"), "truncation d")
    weight = weight_from_dict(doc["weight"]) if "weight" in doc else None
    return SublevelTruncation(d, weight)


def _require_object(doc: Any, context: str) -> Dict[str, Any]:
    if not isinstance(doc, dict):
        raise ParseError(f"{context} must be a JSON object")
    return doc


def problem_from_dict(doc: Dict[str, Any]) -> BlochProblem:
    """``{"lambda", "theta", "A", "V", "truncation"}``; A defaults to I and V to 0."""
    lam = quasi_matrix_from(_require(doc, "lambda", "problem"))
    a = matrix_field_from_dict(doc["A"]) if "A" in doc else MatrixSpectralField.identity(lam.m, lam.n)
    v = field_from_dict(doc["V"]) if "V" in doc else SpectralField.zero(lam.m)
    theta = _numeric_array(doc.get("theta", [0.0] * lam.n), "theta", 1)
    truncation = truncation_from_dict(_require(doc, "truncation", "problem"))
    return BlochProblem(lam, a, v, theta, truncation)


def _writer(handle: TextIO):
    return csv.writer(handle, lineterminator="\n")


def write_sublevel_csv(handle: TextIO, sublevel: SublevelSet, gammas: Sequence[float]) -> None:
    """Columns k_1..k_m, gamma, exact; one row per frequency in lexicographic order."""
    writer = _writer(handle)
    dims = len(sublevel.frequencies[0]) if sublevel.frequencies else 0
    writer.writerow([f"k_{j + 1}" for j in range(dims)] + ["gamma", "exact"])
    exact = "true" if sublevel.exact else "false"
    for k, value in zip(sublevel.frequencies, gammas):
        writer.writerow([str(v) for v in k] + [format_float(value), exact])


def write_bands_csv(handle: TextIO, results: Iterable[BandResult], n: int, count: int) -> None:
    """Columns theta_1..theta_n, lambda_0..lambda_{count-1}; rows follow the sweep order."""
    writer = _writer(handle)
    writer.writerow([f"theta_{j + 1}" for j in range(n)] + [f"lambda_{j}" for j in range(count)])
    for result in results:
        writer.writerow([format_float(v) for v in result.theta] + [format_float(v) for v in result.eigenvalues])


def write_mean_value_csv(handle: TextIO, rows: Iterable[Tuple[float, float, float]]) -> None:
    """Columns t, estimate, reference, abs_error."""
    writer = _writer(handle)
    writer.writerow(["t", "estimate", "reference", "abs_error"])
    for t, estimate, reference in rows:
        error = abs(estimate - reference)
        writer.writerow([format_float(t), format_float(estimate), format_float(reference), format_float(error)])


def write_json(handle: TextIO, payload: Dict[str, Any]) -> None:
    json.dump(payload, handle, indent=2, sort_keys=False)
    handle.write("\n")

