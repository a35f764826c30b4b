"""
Operators built from other operators: reflectors, relaxations, compositions and the
forward-backward and Douglas-Rachford splitting steps.
"""
from typing import Any, Dict, List, Sequence

import numpy as np

from .base import BaseOperator, OperatorRegistry, Regularity, RegularityKind, as_point
from ...shared import logger
from ...shared.errors import DimensionMismatchError


def composed_alpha(first: float, second: float) -> float:
    """Averaging constant of the composition of two averaged maps."""
    return 2.0 / (1.0 + 1.0 / max(first, second))


def fold_regularity(tags: Sequence[Regularity]) -> Regularity:
    """
    Fold regularity tags of composed maps left to right.

    All averaged gives Averaged with the pairwise constant folded from the left; all
    nonexpansive gives Nonexpansive; anything else gives no tag.
    """
    tags = list(tags)
    if not tags:
        raise ValueError("Cannot fold an empty list of regularity tags")
    if len(tags) == 1:
        return tags[0]
    if all(tag.kind == RegularityKind.AVERAGED for tag in tags):
        alpha = tags[0].constant
        for tag in tags[1:]:
            alpha = composed_alpha(alpha, tag.constant)
        # long folds can round up to 1
        if alpha >= 1.0:
            return Regularity.nonexpansive()
        return Regularity.averaged(alpha)
    if all(tag.is_nonexpansive for tag in tags):
        return Regularity.nonexpansive()
    return Regularity.none()


def composition_regularity(operators: Sequence[BaseOperator]) -> Regularity:
    """Regularity tag of the composition of ``operators``."""
    return fold_regularity([op.regularity for op in operators])


def _check_dimensions(operators: Sequence[BaseOperator]) -> int:
    dimensions = {op.dimension for op in operators}
    if len(dimensions) != 1:
        raise DimensionMismatchError(f"Operators act on different dimensions: {sorted(dimensions)}")
    return dimensions.pop()


class Reflector(BaseOperator):
    """The reflector 2 P - Id of a prox or projector P."""

    def __init__(self, inner: BaseOperator):
        alpha = inner.regularity.alpha
        regularity = (
            Regularity.nonexpansive() if alpha is not None and alpha <= 0.5 else Regularity.none()
        )
        super().__init__(inner.dimension, regularity)
        self.inner = inner

    def _apply(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * self.inner(x) - x

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info["inner"] = self.inner.describe()
        return info


class Relaxation(BaseOperator):
    """
    The relaxed map (1 - lambda) Id + lambda T.

    For nonexpansive T the result is Averaged(lambda); for Averaged(alpha) T it is
    Averaged(lambda * alpha).
    """
    def __init__(self, inner: BaseOperator, lam: float):
        if not 0.0 < lam <= 1.0:
            raise ValueError(f"Relaxation parameter must lie in (0, 1], got {lam}")
        tag = inner.regularity
        if tag.kind == RegularityKind.AVERAGED:
            regularity = Regularity.averaged(lam * tag.constant)
        elif tag.kind == RegularityKind.NONEXPANSIVE:
            regularity = Regularity.averaged(lam) if lam < 1.0 else Regularity.nonexpansive()
        else:
            logger.warning(f"Relaxing {inner!r}, which carries no nonexpansive tag")
            regularity = Regularity.none()
        super().__init__(inner.dimension, regularity)
        self.inner = inner
        self.lam = float(lam)

    def _apply(self, x: np.ndarray) -> np.ndarray:
        return (1.0 - self.lam) * x + self.lam * self.inner(x)

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info.update({"lambda": self.lam, "inner": self.inner.describe()})
        return info


class Composition(BaseOperator):
    """
    Composition of an ordered list of operators, applied right to left:
    ``Composition([A, B, C])(x) == A(B(C(x)))``.
    """
    def __init__(self, operators: Sequence[BaseOperator]):
        operators = list(operators)
        if not operators:
            raise ValueError("Composition needs at least one operator")
        dimension = _check_dimensions(operators)
        super().__init__(dimension, composition_regularity(operators))
        self.operators: List[BaseOperator] = operators

    def _apply(self, x: np.ndarray) -> np.ndarray:
        result = x
        for op in reversed(self.operators):
            result = op(result)
        return result

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info["operators"] = [op.describe() for op in self.operators]
        return info


class ForwardBackward(BaseOperator):
    """
    One forward-backward step prox_{tg}(x - t grad f(x)).

    Both parts must use the same step t when both declare one.
    """
    def __init__(self, prox_part: BaseOperator, grad_part: BaseOperator):
        _check_dimensions([prox_part, grad_part])
        prox_step, grad_step = prox_part.step, grad_part.step
        if prox_step is not None and grad_step is not None and not np.isclose(
            prox_step, grad_step, rtol=1e-12, atol=0.0
        ):
            raise ValueError(
                f"Forward-backward parts use different steps: prox t={prox_step}, gradient t={grad_step}"
            )
        super().__init__(prox_part.dimension, composition_regularity([prox_part, grad_part]))
        self.prox_part = prox_part
        self.grad_part = grad_part
        self.step = grad_step if grad_step is not None else prox_step

    def _apply(self, x: np.ndarray) -> np.ndarray:
        return self.prox_part(self.grad_part(x))

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info.update({"prox": self.prox_part.describe(), "gradient": self.grad_part.describe()})
        return info


class DouglasRachford(BaseOperator):
    """
    One Douglas-Rachford step 1/2 (R_f R_g + Id) with reflectors of two prox maps.

    Averaged(1/2) whenever both prox maps are firmly nonexpansive.
    """
    def __init__(self, prox_f: BaseOperator, prox_g: BaseOperator):
        dimension = _check_dimensions([prox_f, prox_g])
        self.reflect_f = Reflector(prox_f)
        self.reflect_g = Reflector(prox_g)
        both_reflectors_nonexpansive = (
            self.reflect_f.regularity.is_nonexpansive and self.reflect_g.regularity.is_nonexpansive
        )
        regularity = Regularity.averaged(0.5) if both_reflectors_nonexpansive else Regularity.none()
        super().__init__(dimension, regularity)
        self.prox_f = prox_f
        self.prox_g = prox_g

    def _apply(self, x: np.ndarray) -> np.ndarray:
        return 0.5 * (self.reflect_f(self.reflect_g(x)) + x)

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info.update({"prox_f": self.prox_f.describe(), "prox_g": self.prox_g.describe()})
        return info


# Register combinator types with the registry
OperatorRegistry.register("reflector", Reflector)
OperatorRegistry.register("relaxation", Relaxation)
OperatorRegistry.register("composition", Composition)
OperatorRegistry.register("forward_backward", ForwardBackward)
OperatorRegistry.register("douglas_rachford", DouglasRachford)


def apply(op: BaseOperator, x: Any) -> np.ndarray:
    """
    Evaluate ``op`` at ``x``.

    Raises:
        DimensionMismatchError: if ``x`` does not match the operator dimension.
        NonFiniteInputError: if ``x`` has NaN or Inf entries.
    """
    return op(x)


def reflect(prox_op: BaseOperator, x: Any) -> np.ndarray:
    """Evaluate the reflector 2 prox(x) - x."""
    point = as_point(x, prox_op.dimension)
    return 2.0 * prox_op(point) - point


def relax(op: BaseOperator, lam: float) -> BaseOperator:
    """Relaxed map (1 - lam) Id + lam op; ``lam == 1`` returns ``op`` itself."""
    if not 0.0 < lam <= 1.0:
        raise ValueError(f"Relaxation parameter must lie in (0, 1], got {lam}")
    if lam == 1.0:
        return op
    return Relaxation(op, lam)


def compose(ops: Sequence[BaseOperator]) -> BaseOperator:
    """Composition applied right to left; a single operator is returned unchanged."""
    ops = list(ops)
    if len(ops) == 1:
        return ops[0]
    return Composition(ops)


def forward_backward_step(prox_g: BaseOperator, grad_f: BaseOperator, x: Any) -> np.ndarray:
    """prox_{tg}(x - t grad f(x))."""
    return ForwardBackward(prox_g, grad_f)(x)


def douglas_rachford_step(prox_f: BaseOperator, prox_g: BaseOperator, x: Any) -> np.ndarray:
    """1/2 (R_f(R_g(x)) + x)."""
    return DouglasRachford(prox_f, prox_g)(x)
