"""Small formatting and parsing helpers shared by the CLI and the report writers."""

import itertools
import math
from os import cpu_count
from typing import List, Sequence, Tuple

import numpy as np

from .errors import OperandError

FLOAT_DIGITS = 17


def format_float(value: float) -> str:
    """Format a float with 17 significant digits so doubles round-trip exactly."""
    return f"{float(value):.{FLOAT_DIGITS}g}"


def format_duration(seconds: float) -> str:
    """Format duration in a human-readable way.

    Args:
        seconds: Duration in seconds

    Returns:
        Human-readable duration string (e.g., "1.5ms", "2.3s", "1m 30.5s")
    """
    if seconds < 1:
        return f"{seconds * 1000:.1f}ms"
    elif seconds < 60:
        return f"{seconds:.3f}s"
    else:
        minutes = int(seconds // 60)
        remaining_seconds = seconds % 60
        return f"{minutes}m {remaining_seconds:.1f}s"


def default_workers() -> int:
    """Half of the available CPU cores, at least one."""
    return max(1, (cpu_count() or 2) // 2)


def parse_float_list(text: str, name: str) -> List[float]:
    """Parse a comma separated list of floats, e.g. ``"6.28,12.56"``.

    The token ``pi`` is accepted as a factor, so ``"2pi,4pi"`` and ``"3*pi"`` work too.
    """
    values = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        values.append(_parse_pi_expression(token, name))
    if not values:
        raise OperandError(f"{name} must contain at least one number")
    return values


def _parse_pi_expression(token: str, name: str) -> float:
    lowered = token.lower().replace("*", "")
    try:
        if lowered.endswith("pi"):
            factor = lowered[:-2]
            return (float(factor) if factor else 1.0) * math.pi
        return float(lowered)
    except ValueError:
        raise OperandError(f"{name}: cannot parse number '{token}'")


def parse_axis_grid(spec: str) -> np.ndarray:
    """Parse one ``start:stop:count`` axis specification into ``count`` points (endpoints included)."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise OperandError(f"theta grid axis must look like start:stop:count, got '{spec}'")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise OperandError(f"theta grid axis has non-numeric parts: '{spec}'")
    if count < 1:
        raise OperandError(f"theta grid axis count must be positive, got {count}")
    return np.linspace(start, stop, count)


def theta_grid(axis_specs: Sequence[str]) -> List[Tuple[float, ...]]:
    """Cartesian product of per-axis grids, first axis varying slowest."""
    axes = [parse_axis_grid(spec) for spec in axis_specs]
    return [tuple(float(v) for v in point) for point in itertools.product(*axes)]
