"""
Metric projectors onto closed convex sets.

Every projector is firmly nonexpansive, so it is tagged Averaged(1/2).
"""
from typing import Any, Dict, Optional

import numpy as np
from scipy import linalg

from .base import BaseOperator, OperatorRegistry, Regularity, as_point, frozen_array
from ...shared.errors import DegenerateDrawError, DimensionMismatchError

# Squared norms below this are treated as a zero normal
DEGENERATE_NORM_SQ = 1e-300


class ProjectorBase(BaseOperator):
    """Common base for projectors; provides the set-membership residual."""

    def __init__(self, dimension: int):
        super().__init__(dimension, Regularity.averaged(0.5))

    def residual(self, x: Any) -> float:
        """Signed or unsigned violation of the set equation at ``x`` (0 on the set)."""
        point = as_point(x, self.dimension)
        return float(np.linalg.norm(self._apply(point) - point))


class Hyperplane(ProjectorBase):
    """
    Projector onto {x : <a, x - anchor> = b}.

    Without an anchor the set is the plain hyperplane {x : <a, x> = b}. The anchored
    form keeps the residual computation exact for hyperplanes through a known point.
    """
    def __init__(self, normal: Any, offset: float = 0.0, anchor: Optional[Any] = None):
        normal = frozen_array(normal, 1)
        super().__init__(normal.shape[0])
        self.normal_sq = float(normal @ normal)
        if not self.normal_sq > DEGENERATE_NORM_SQ:
            raise DegenerateDrawError("Hyperplane normal must be nonzero")
        self.normal = normal
        self.offset = float(offset)
        self.anchor = None if anchor is None else frozen_array(anchor, 1)
        if self.anchor is not None and self.anchor.shape != normal.shape:
            raise DimensionMismatchError(
                f"Anchor has dimension {self.anchor.shape[0]}, normal has {normal.shape[0]}"
            )

    def residual(self, x: Any) -> float:
        point = as_point(x, self.dimension)
        if self.anchor is None:
            return float(self.normal @ point - self.offset)
        return float(self.normal @ (point - self.anchor) - self.offset)

    def _apply(self, x: np.ndarray) -> np.ndarray:
        if self.anchor is None:
            gap = self.normal @ x - self.offset
        else:
            gap = self.normal @ (x - self.anchor) - self.offset
        return x - (gap / self.normal_sq) * self.normal

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info.update({"normal": self.normal.tolist(), "offset": self.offset})
        if self.anchor is not None:
            info["anchor"] = self.anchor.tolist()
        return info


class Halfspace(ProjectorBase):
    """Projector onto {x : <a, x> <= b}."""

    def __init__(self, normal: Any, offset: float = 0.0):
        normal = frozen_array(normal, 1)
        super().__init__(normal.shape[0])
        self.normal_sq = float(normal @ normal)
        if not self.normal_sq > DEGENERATE_NORM_SQ:
            raise DegenerateDrawError("Halfspace normal must be nonzero")
        self.normal = normal
        self.offset = float(offset)

    def residual(self, x: Any) -> float:
        point = as_point(x, self.dimension)
        return max(0.0, float(self.normal @ point - self.offset))

    def _apply(self, x: np.ndarray) -> np.ndarray:
        gap = self.normal @ x - self.offset
        if gap <= 0.0:
            return x.copy()
        return x - (gap / self.normal_sq) * self.normal

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info.update({"normal": self.normal.tolist(), "offset": self.offset})
        return info


class Ball(ProjectorBase):
    """Projector onto the closed ball B(center, radius)."""

    def __init__(self, center: Any, radius: float):
        center = frozen_array(center, 1)
        super().__init__(center.shape[0])
        if not radius > 0.0:
            raise ValueError(f"Ball radius must be positive, got {radius}")
        self.center = center
        self.radius = float(radius)

    def _apply(self, x: np.ndarray) -> np.ndarray:
        offset = x - self.center
        distance = float(np.linalg.norm(offset))
        if distance <= self.radius:
            return x.copy()
        return self.center + (self.radius / distance) * offset

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info.update({"center": self.center.tolist(), "radius": self.radius})
        return info


class AffineSubspace(ProjectorBase):
    """
    Projector onto anchor + span(basis).

    Args:
        basis: n x k matrix whose columns span the direction space (rank may be deficient)
        anchor: a point of the subspace
    """
    def __init__(self, basis: Any, anchor: Any):
        anchor = frozen_array(anchor, 1)
        basis = np.array(basis, dtype=np.float64)
        if basis.ndim == 1:
            basis = basis.reshape(-1, 1)
        if basis.shape[0] != anchor.shape[0]:
            raise DimensionMismatchError(
                f"Basis has {basis.shape[0]} rows, anchor has dimension {anchor.shape[0]}"
            )
        super().__init__(anchor.shape[0])
        self.anchor = anchor
        self.orthonormal = frozen_array(linalg.orth(basis), 2)

    def _apply(self, x: np.ndarray) -> np.ndarray:
        shifted = x - self.anchor
        return self.anchor + self.orthonormal @ (self.orthonormal.T @ shifted)

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info.update({"anchor": self.anchor.tolist(), "rank": int(self.orthonormal.shape[1])})
        return info


# Register projector types with the registry
OperatorRegistry.register("hyperplane", Hyperplane)
OperatorRegistry.register("halfspace", Halfspace)
OperatorRegistry.register("ball", Ball)
OperatorRegistry.register("affine_subspace", AffineSubspace)
