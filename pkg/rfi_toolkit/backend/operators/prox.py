"""
Proximal maps, gradient steps and affine maps.
"""
from typing import Any, Callable, Dict, Optional

import numpy as np
from scipy import linalg

from .base import BaseOperator, OperatorRegistry, Regularity, as_point, frozen_array
from ...shared import logger
from ...shared.errors import DimensionMismatchError

# Spectral norms within this distance of 1 are treated as exactly nonexpansive
UNIT_NORM_TOL = 1e-12
# Relative tolerance on the smallest eigenvalue of a quadratic's matrix
PSD_TOLERANCE = 1e-12


class Identity(BaseOperator):
    """The identity map; prox of the zero function, hence Averaged(1/2)."""

    def __init__(self, dimension: int):
        super().__init__(dimension, Regularity.averaged(0.5))

    def _apply(self, x: np.ndarray) -> np.ndarray:
        return x.copy()


def regularity_from_norm(norm: float) -> Regularity:
    """
    Regularity tag of a linear part with the given spectral norm.

    A map with Lipschitz constant r < 1 is averaged with constant (1 + r) / 2.
    """
    if norm < 1.0 - UNIT_NORM_TOL:
        return Regularity.averaged((1.0 + norm) / 2.0)
    if norm <= 1.0 + UNIT_NORM_TOL:
        return Regularity.nonexpansive()
    return Regularity.none()


class AffineMap(BaseOperator):
    """
    The affine map x -> M x + offset.

    Covers reflections such as -Id, rotations, scalings, translations and constant maps.
    """
    def __init__(self, matrix: Any, offset: Optional[Any] = None):
        matrix = frozen_array(matrix, 2)
        if matrix.shape[0] != matrix.shape[1]:
            raise DimensionMismatchError(f"Affine map needs a square matrix, got {matrix.shape}")
        dimension = matrix.shape[0]
        self.matrix = matrix
        self.offset = frozen_array(np.zeros(dimension) if offset is None else offset, 1)
        if self.offset.shape[0] != dimension:
            raise DimensionMismatchError(
                f"Offset has dimension {self.offset.shape[0]}, matrix has {dimension}"
            )
        self.norm = float(np.linalg.norm(matrix, 2))
        super().__init__(dimension, regularity_from_norm(self.norm))

    @classmethod
    def scaling(cls, factor: float, dimension: int) -> "AffineMap":
        return cls(factor * np.eye(dimension))

    @classmethod
    def translation(cls, shift: Any) -> "AffineMap":
        shift = np.asarray(shift, dtype=np.float64).reshape(-1)
        return cls(np.eye(shift.shape[0]), shift)

    @classmethod
    def constant(cls, value: Any) -> "AffineMap":
        value = np.asarray(value, dtype=np.float64).reshape(-1)
        return cls(np.zeros((value.shape[0], value.shape[0])), value)

    @classmethod
    def rotation(cls, angle: float) -> "AffineMap":
        """Planar rotation by ``angle`` radians."""
        c, s = np.cos(angle), np.sin(angle)
        return cls([[c, -s], [s, c]])

    def _apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x + self.offset

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info.update({
            "matrix": self.matrix.tolist(),
            "offset": self.offset.tolist(),
            "spectral_norm": self.norm,
        })
        return info


class ProxQuadratic(BaseOperator):
    """
    prox of t f with f(x) = 1/2 x^T Q x + c^T x, i.e. the solution y of (I + tQ) y = x - t c.
    """
    def __init__(self, matrix: Any, step: float, linear: Optional[Any] = None):
        matrix = frozen_array(matrix, 2)
        if matrix.shape[0] != matrix.shape[1]:
            raise DimensionMismatchError(f"Quadratic needs a square matrix, got {matrix.shape}")
        if not np.allclose(matrix, matrix.T, rtol=1e-12, atol=1e-12):
            raise ValueError("Quadratic matrix must be symmetric")
        smallest = float(np.linalg.eigvalsh(matrix)[0])
        if smallest < -PSD_TOLERANCE * max(1.0, float(np.abs(matrix).max(initial=0.0))):
            raise ValueError(f"Quadratic matrix is not positive semidefinite: smallest eigenvalue {smallest}")
        if not step > 0.0:
            raise ValueError(f"Prox step must be positive, got {step}")
        dimension = matrix.shape[0]
        super().__init__(dimension, Regularity.averaged(0.5))
        self.matrix = matrix
        self.step = float(step)
        self.linear = frozen_array(np.zeros(dimension) if linear is None else linear, 1)
        if self.linear.shape[0] != dimension:
            raise DimensionMismatchError("Linear term and quadratic matrix differ in dimension")
        try:
            self._factor = linalg.cho_factor(np.eye(dimension) + self.step * matrix)
        except linalg.LinAlgError as e:
            raise ValueError(f"Quadratic matrix is not positive semidefinite: {str(e)}") from e

    def _apply(self, x: np.ndarray) -> np.ndarray:
        return linalg.cho_solve(self._factor, x - self.step * self.linear)


class ProxL1(BaseOperator):
    """prox of t * weight * ||x||_1: componentwise soft thresholding."""

    def __init__(self, dimension: int, step: float, weight: float = 1.0):
        if not step > 0.0:
            raise ValueError(f"Prox step must be positive, got {step}")
        if not weight > 0.0:
            raise ValueError(f"L1 weight must be positive, got {weight}")
        super().__init__(dimension, Regularity.averaged(0.5))
        self.step = float(step)
        self.weight = float(weight)

    def _apply(self, x: np.ndarray) -> np.ndarray:
        threshold = self.step * self.weight
        return np.sign(x) * np.maximum(np.abs(x) - threshold, 0.0)


class ProxIndicator(BaseOperator):
    """
    prox of t times the indicator of a convex set: the projector, whatever t is.
    """
    def __init__(self, projector: BaseOperator, step: float = 1.0):
        if not step > 0.0:
            raise ValueError(f"Prox step must be positive, got {step}")
        super().__init__(projector.dimension, Regularity.averaged(0.5))
        self.projector = projector
        self.step = float(step)

    def _apply(self, x: np.ndarray) -> np.ndarray:
        return self.projector(x)

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info["set"] = self.projector.describe()
        return info


def step_regularity(step: float, lipschitz: float) -> Regularity:
    """
    Regularity tag of x -> x - t grad f(x) when grad f is L-Lipschitz.

    Averaged(tL/2) for t < 2/L, nonexpansive at t = 2/L, untagged beyond (with a warning).
    """
    product = step * lipschitz
    if product < 2.0:
        return Regularity.averaged(product / 2.0)
    if product == 2.0:
        return Regularity.nonexpansive()
    logger.warning(
        f"Gradient step t={step} exceeds 2/L={2.0 / lipschitz}; the averaged tag is dropped"
    )
    return Regularity.none()


class GradStep(BaseOperator):
    """
    Gradient step x -> x - t grad f(x) for a convex f with L-Lipschitz gradient.

    The step is averaged with constant tL/2 for t < 2/L and nonexpansive at t = 2/L.
    Larger steps are allowed but lose the averaging property; the tag is dropped then.
    """
    def __init__(self, gradient: Callable[[np.ndarray], np.ndarray], lipschitz: float,
                 step: float, dimension: int):
        if not lipschitz > 0.0:
            raise ValueError(f"Lipschitz constant must be positive, got {lipschitz}")
        if not step > 0.0:
            raise ValueError(f"Gradient step must be positive, got {step}")
        self.gradient = gradient
        self.lipschitz = float(lipschitz)
        self.step = float(step)
        super().__init__(dimension, step_regularity(self.step, self.lipschitz))

    @classmethod
    def quadratic(cls, matrix: Any, step: float, linear: Optional[Any] = None) -> "GradStep":
        """
        Gradient step on 1/2 x^T Q x + linear . x with L = lambda_max(Q).
        """
        matrix = frozen_array(matrix, 2)
        dimension = matrix.shape[0]
        linear = frozen_array(np.zeros(dimension) if linear is None else linear, 1)
        eigenvalues = np.linalg.eigvalsh(matrix)
        if eigenvalues[0] < -PSD_TOLERANCE * max(1.0, float(np.abs(matrix).max(initial=0.0))):
            raise ValueError(f"Quadratic matrix is not positive semidefinite: smallest eigenvalue {eigenvalues[0]}")
        lipschitz = float(eigenvalues[-1])

        def gradient(x: np.ndarray) -> np.ndarray:
            return matrix @ x + linear

        return cls(gradient, lipschitz, step, dimension)

    def _apply(self, x: np.ndarray) -> np.ndarray:
        direction = as_point(self.gradient(x), self.dimension)
        return x - self.step * direction

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info.update({"step": self.step, "lipschitz": self.lipschitz})
        return info


# Register prox and step types with the registry
OperatorRegistry.register("identity", Identity)
OperatorRegistry.register("affine_map", AffineMap)
OperatorRegistry.register("prox_quadratic", ProxQuadratic)
OperatorRegistry.register("prox_l1", ProxL1)
OperatorRegistry.register("prox_indicator", ProxIndicator)
OperatorRegistry.register("grad_step", GradStep)
