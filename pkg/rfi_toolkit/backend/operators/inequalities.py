"""
Pointwise nonexpansive and averaged inequality checks.

All checks compare differences of squared norms, so they use the tolerance
``1e-9 * scale + 1e-12`` where ``scale`` is the sum of the magnitudes involved.
"""
from dataclasses import dataclass
from typing import Any

import numpy as np

from .base import BaseOperator, as_point
from ...shared.errors import DimensionMismatchError
from ...shared.models import AveragedCheck

RELATIVE_TOL = 1e-9
ABSOLUTE_TOL = 1e-12


def _tolerance(*magnitudes: float) -> float:
    return RELATIVE_TOL * float(sum(abs(m) for m in magnitudes)) + ABSOLUTE_TOL


def _check_alpha(alpha: float):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"Averaging constant must lie in (0, 1), got {alpha}")


def transport_discrepancy(x: Any, y: Any, fx: Any, fy: Any) -> float:
    """psi = ||(fx - x) - (fy - y)||^2."""
    x = as_point(x)
    dimension = x.shape[0]
    try:
        y, fx, fy = (as_point(v, dimension) for v in (y, fx, fy))
    except DimensionMismatchError as e:
        raise DimensionMismatchError(f"Transport discrepancy needs equal dimensions: {str(e)}") from e
    difference = (fx - x) - (fy - y)
    return float(difference @ difference)


@dataclass(frozen=True)
class DiscrepancyRecord:
    """Images of a pair of points under one operator with their transport discrepancy."""
    x: np.ndarray
    y: np.ndarray
    fx: np.ndarray
    fy: np.ndarray
    psi: float

    @classmethod
    def from_operator(cls, op: BaseOperator, x: Any, y: Any) -> "DiscrepancyRecord":
        x = as_point(x, op.dimension)
        y = as_point(y, op.dimension)
        fx, fy = op(x), op(y)
        return cls(x=x, y=y, fx=fx, fy=fy, psi=transport_discrepancy(x, y, fx, fy))

    @property
    def distance_sq(self) -> float:
        gap = self.x - self.y
        return float(gap @ gap)

    @property
    def image_distance_sq(self) -> float:
        gap = self.fx - self.fy
        return float(gap @ gap)


def _averaged_slack(distance_sq: float, image_sq: float, psi: float, alpha: float) -> AveragedCheck:
    coefficient = (1.0 - alpha) / alpha
    slack = distance_sq - image_sq - coefficient * psi
    tolerance = _tolerance(distance_sq, image_sq, coefficient * psi)
    return AveragedCheck(holds=bool(slack >= -tolerance), slack=float(slack), tolerance=tolerance)


def check_averaged_inequality(op: BaseOperator, alpha: float, x: Any, y: Any) -> AveragedCheck:
    """
    Check ||Tx - Ty||^2 <= ||x - y||^2 - ((1 - alpha) / alpha) psi at one pair.

    Returns:
        AveragedCheck with slack = ||x - y||^2 - ||Tx - Ty||^2 - ((1 - alpha) / alpha) psi
    """
    _check_alpha(alpha)
    record = DiscrepancyRecord.from_operator(op, x, y)
    return _averaged_slack(record.distance_sq, record.image_distance_sq, record.psi, alpha)


def check_nonexpansive_inequality(op: BaseOperator, x: Any, y: Any) -> AveragedCheck:
    """Check ||Tx - Ty|| <= ||x - y|| at one pair."""
    record = DiscrepancyRecord.from_operator(op, x, y)
    slack = record.distance_sq - record.image_distance_sq
    tolerance = _tolerance(record.distance_sq, record.image_distance_sq)
    return AveragedCheck(holds=bool(slack >= -tolerance), slack=float(slack), tolerance=tolerance)


def check_averaged_in_expectation(family, sampler, alpha: float, x: Any, y: Any,
                                  draws: int = 1000) -> AveragedCheck:
    """
    Monte Carlo check of E||T_xi x - T_xi y||^2 + ((1 - alpha) / alpha) E psi <= ||x - y||^2.

    Draws come from stream iterations 0..draws-1 of chain 0 of ``sampler``, so the result
    is deterministic given the sampler seed.
    """
    _check_alpha(alpha)
    if draws < 1:
        raise ValueError(f"Need at least one draw, got {draws}")
    x = as_point(x, family.dimension)
    y = as_point(y, family.dimension)
    image_sq = 0.0
    psi = 0.0
    for iteration in range(draws):
        record = DiscrepancyRecord.from_operator(sampler.operator(family, 0, iteration), x, y)
        image_sq += record.image_distance_sq
        psi += record.psi
    gap = x - y
    return _averaged_slack(float(gap @ gap), image_sq / draws, psi / draws, alpha)
