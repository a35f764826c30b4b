"""
Base classes for all operator types used by random function iterations.
"""
from abc import ABC, abstractmethod
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ...shared.errors import DimensionMismatchError, NonFiniteInputError


class RegularityKind(str, Enum):
    """Regularity classes an operator can be tagged with."""
    NONE = "none"
    NONEXPANSIVE = "nonexpansive"
    AVERAGED = "averaged"
    CONTRACTION_IN_EXPECTATION = "contraction_in_expectation"


class Regularity(BaseModel):
    """
    Regularity tag of an operator.

    ``constant`` is the averaging constant alpha in (0, 1) for AVERAGED and the
    rate r in [0, 1) for CONTRACTION_IN_EXPECTATION; it is unused otherwise.
    """
    model_config = ConfigDict(frozen=True)

    kind: RegularityKind
    constant: Optional[float] = Field(default=None)

    @classmethod
    def none(cls) -> "Regularity":
        return cls(kind=RegularityKind.NONE)

    @classmethod
    def nonexpansive(cls) -> "Regularity":
        return cls(kind=RegularityKind.NONEXPANSIVE)

    @classmethod
    def averaged(cls, alpha: float) -> "Regularity":
        if not 0.0 < alpha < 1.0:
            raise ValueError(f"Averaging constant must lie in (0, 1), got {alpha}")
        return cls(kind=RegularityKind.AVERAGED, constant=float(alpha))

    @classmethod
    def contraction_in_expectation(cls, rate: float) -> "Regularity":
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"Contraction rate must lie in [0, 1), got {rate}")
        return cls(kind=RegularityKind.CONTRACTION_IN_EXPECTATION, constant=float(rate))

    @property
    def is_nonexpansive(self) -> bool:
        """True for tags that make every draw nonexpansive; contraction in expectation does not."""
        return self.kind in (RegularityKind.NONEXPANSIVE, RegularityKind.AVERAGED)

    @property
    def alpha(self) -> Optional[float]:
        return self.constant if self.kind == RegularityKind.AVERAGED else None


def as_point(x: Any, dimension: Optional[int] = None) -> np.ndarray:
    """
    Convert ``x`` to a finite float64 vector, optionally checking its length.

    Raises:
        DimensionMismatchError: if the length differs from ``dimension``.
        NonFiniteInputError: if any entry is NaN or Inf.
    """
    point = np.asarray(x, dtype=np.float64)
    if point.ndim == 0:
        point = point.reshape(1)
    if point.ndim != 1:
        raise DimensionMismatchError(f"A point must be a vector, got shape {point.shape}")
    if dimension is not None and point.shape[0] != dimension:
        raise DimensionMismatchError(
            f"Point has dimension {point.shape[0]}, expected {dimension}"
        )
    if not np.all(np.isfinite(point)):
        raise NonFiniteInputError("Point contains non-finite entries")
    return point


def frozen_array(values: Any, ndim: int) -> np.ndarray:
    """Read-only float64 copy of ``values`` with the given number of dimensions."""
    array = np.array(values, dtype=np.float64, copy=True)
    if ndim == 1 and array.ndim == 0:
        array = array.reshape(1)
    if array.ndim != ndim:
        raise DimensionMismatchError(f"Expected a {ndim}-d array, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise NonFiniteInputError("Operator data contains non-finite entries")
    array.setflags(write=False)
    return array


class BaseOperator(ABC):
    """
    Abstract base class for all self-mappings of the ambient space.
    Operators are immutable after construction and safe to share across threads.
    """
    kind = "operator"
    #: Step size t of a prox or gradient step; None when the map has no step.
    step: Optional[float] = None

    def __init__(self, dimension: int, regularity: Optional[Regularity] = None):
        if dimension < 1:
            raise ValueError(f"Operator dimension must be positive, got {dimension}")
        self._dimension = int(dimension)
        self._regularity = regularity or Regularity.none()

    @property
    def dimension(self) -> int:
        return self._dimension

    @property
    def regularity(self) -> Regularity:
        return self._regularity

    @abstractmethod
    def _apply(self, x: np.ndarray) -> np.ndarray:
        """
        Evaluate the operator at a validated point.
        Must be implemented by all derived classes.
        """

    def __call__(self, x: Any) -> np.ndarray:
        return self._apply(as_point(x, self._dimension))

    def describe(self) -> Dict[str, Any]:
        """Dictionary representation used in logs and diagnostics output."""
        return {
            "kind": self.kind,
            "dimension": self.dimension,
            "regularity": self.regularity.model_dump(mode="json"),
        }

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dimension={self.dimension}, regularity={self.regularity.kind.value})"


class OperatorRegistry:
    """
    Registry for operator kinds and factory for creating operators from parameters.
    """
    _registry = {}

    @classmethod
    def register(cls, kind: str, operator_class):
        """Register an operator class for a specific kind name."""
        cls._registry[kind] = operator_class
        operator_class.kind = kind

    @classmethod
    def create(cls, kind: str, **parameters) -> BaseOperator:
        """Create an operator instance from keyword parameters."""
        if kind not in cls._registry:
            raise ValueError(f"Operator kind '{kind}' is not registered")
        return cls._registry[kind](**parameters)

    @classmethod
    def get_kinds(cls) -> List[str]:
        """Get a list of all registered operator kinds."""
        return list(cls._registry.keys())
