"""
Operator families and the built-in stochastic problems.

A family maps a random draw xi to an operator T_xi. Families know how to sample their
draws, reject degenerate ones and apply T_xi without building an operator object, which
is the hot path of the engine.
"""
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .operators import (
    Ball,
    BaseOperator,
    Composition,
    DouglasRachford,
    ForwardBackward,
    GradStep,
    Halfspace,
    Hyperplane,
    Identity,
    OperatorRegistry,
    ProxIndicator,
    ProxL1,
    Regularity,
    RegularityKind,
    as_point,
    fold_regularity,
)
from .operators.projectors import DEGENERATE_NORM_SQ
from .operators.prox import step_regularity
from .sampling import (
    DrawDistribution,
    FiniteDiscrete,
    IndexSampler,
    Mixture,
    NoiseComponent,
    NoiseDriven,
)
from ..shared import logger
from ..shared.errors import DimensionMismatchError, InsufficientDataError
from ..shared.models import (
    AffineFeasibilityProblemConfig,
    AffineMapsProblem,
    DouglasRachfordProblemConfig,
    ForwardBackwardProblemConfig,
    HalfspaceConfig,
    NoiseSpec,
    NoisyHyperplaneProblem,
    ProxConfig,
    SgdProblemConfig,
)

# Relative tolerance of the anchor equation <a_j, anchor_j> = b_j
ANCHOR_TOL = 1e-12
# Sphere directions processed per block in estimate_c
DIRECTION_BLOCK = 256


class OperatorFamily(ABC):
    """
    Abstract base class for indexed operator families {T_xi}.
    Families are immutable; all randomness comes from an IndexSampler.
    """
    kind = "family"
    #: Shared step t of prox and gradient parts, when the family has one
    step: Optional[float] = None

    def __init__(self, dimension: int):
        if dimension < 1:
            raise ValueError(f"Family dimension must be positive, got {dimension}")
        self._dimension = int(dimension)

    @property
    def dimension(self) -> int:
        return self._dimension

    @abstractmethod
    def distribution(self) -> DrawDistribution:
        """Law of the draw xi."""

    @abstractmethod
    def operator(self, draw: Any) -> BaseOperator:
        """The operator T_xi for one draw."""

    @property
    @abstractmethod
    def regularity(self) -> Regularity:
        """Regularity shared by every T_xi."""

    def is_degenerate(self, draw: Any) -> bool:
        """True when T_xi cannot be built for ``draw``."""
        return False

    def apply(self, draw: Any, x: np.ndarray) -> np.ndarray:
        """T_xi(x); subclasses override this with closed forms."""
        return self.operator(draw)(x)

    def apply_batch(self, draws: Sequence[Any], points: np.ndarray) -> np.ndarray:
        """Row i of the result is T_{draws[i]}(points[i])."""
        return np.vstack([self.apply(draw, x) for draw, x in zip(draws, points)])

    def describe(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "dimension": self.dimension,
            "regularity": self.regularity.model_dump(mode="json"),
        }

    def __repr__(self) -> str:
        return f"{type(self).__name__}(dimension={self.dimension})"


class FiniteFamily(OperatorFamily):
    """Finitely many fixed operators chosen with fixed probabilities."""

    kind = "affine_maps"

    def __init__(self, operators: Sequence[BaseOperator], weights: Optional[Sequence[float]] = None):
        operators = list(operators)
        if not operators:
            raise ValueError("A finite family needs at least one operator")
        dimensions = {op.dimension for op in operators}
        if len(dimensions) != 1:
            raise DimensionMismatchError(f"Family operators act on different dimensions: {sorted(dimensions)}")
        super().__init__(dimensions.pop())
        self.operators = operators
        self._distribution = FiniteDiscrete(weights=weights, size=len(operators))
        if self._distribution.size != len(operators):
            raise ValueError(f"Got {self._distribution.size} weights for {len(operators)} operators")
        steps = {op.step for op in operators if op.step is not None}
        self.step = steps.pop() if len(steps) == 1 else None

    @classmethod
    def from_config(cls, config: AffineMapsProblem, dimension: int) -> "FiniteFamily":
        operators = [OperatorRegistry.create("affine_map", matrix=m.matrix, offset=m.offset) for m in config.maps]
        family = cls(operators, config.weights)
        if family.dimension != dimension:
            raise DimensionMismatchError(
                f"Affine maps act on dimension {family.dimension}, experiment declares {dimension}"
            )
        return family

    def distribution(self) -> DrawDistribution:
        return self._distribution

    def operator(self, draw: int) -> BaseOperator:
        return self.operators[draw]

    @property
    def regularity(self) -> Regularity:
        tags = [op.regularity for op in self.operators]
        if all(tag.kind == RegularityKind.AVERAGED for tag in tags):
            return Regularity.averaged(max(tag.constant for tag in tags))
        if all(tag.is_nonexpansive for tag in tags):
            return Regularity.nonexpansive()
        return Regularity.none()


class NoisyHyperplaneFamily(OperatorFamily):
    """
    Exact projections onto H(xi, zeta) = {x : <a + xi, x - anchor> = zeta}.

    The noiseless hyperplane is {<a, x> = b} with b = <a, anchor>.
    """
    kind = "noisy_hyperplane"

    def __init__(self, normal: Any, anchor: Any, xi_noise: Optional[NoiseSpec] = None,
                 zeta_noise: Optional[NoiseSpec] = None):
        normal = as_point(normal)
        super().__init__(normal.shape[0])
        self.anchor = as_point(anchor, self.dimension)
        if not float(normal @ normal) > DEGENERATE_NORM_SQ:
            raise ValueError("Hyperplane normal must be nonzero")
        self.normal = normal
        self.offset = float(normal @ self.anchor)
        self.xi_noise = xi_noise or NoiseSpec()
        self.zeta_noise = zeta_noise or NoiseSpec()
        self.xi = NoiseComponent(self.xi_noise, self.dimension)
        self.zeta = NoiseComponent(self.zeta_noise)

    @classmethod
    def from_config(cls, config: NoisyHyperplaneProblem, dimension: int) -> "NoisyHyperplaneFamily":
        family = cls(config.normal, config.anchor, config.xi_noise, config.zeta_noise)
        if family.dimension != dimension:
            raise DimensionMismatchError(
                f"Hyperplane lives in dimension {family.dimension}, experiment declares {dimension}"
            )
        return family

    def distribution(self) -> DrawDistribution:
        return NoiseDriven({"xi": self.xi, "zeta": self.zeta})

    def is_degenerate(self, draw: Dict[str, Any]) -> bool:
        normal = self.normal + draw["xi"]
        return not float(normal @ normal) > DEGENERATE_NORM_SQ

    def operator(self, draw: Dict[str, Any]) -> Hyperplane:
        return Hyperplane(self.normal + draw["xi"], offset=draw["zeta"], anchor=self.anchor)

    def apply(self, draw: Dict[str, Any], x: np.ndarray) -> np.ndarray:
        # same arithmetic as Hyperplane._apply
        normal = self.normal + draw["xi"]
        normal_sq = float(normal @ normal)
        if not normal_sq > DEGENERATE_NORM_SQ:
            return self.operator(draw)(x)
        gap = normal @ (x - self.anchor) - float(draw["zeta"])
        return x - (gap / normal_sq) * normal

    @property
    def regularity(self) -> Regularity:
        return Regularity.averaged(0.5)

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info.update({
            "normal": self.normal.tolist(),
            "anchor": self.anchor.tolist(),
            "xi_noise": self.xi_noise.model_dump(),
            "zeta_noise": self.zeta_noise.model_dump(),
        })
        return info


class NoisyHalfspaceFamily(OperatorFamily):
    """Projections onto {x : <a + xi, x> <= b + zeta}."""

    kind = "noisy_halfspace"

    def __init__(self, normal: Any, offset: float, xi_noise: Optional[NoiseSpec] = None,
                 zeta_noise: Optional[NoiseSpec] = None):
        normal = as_point(normal)
        super().__init__(normal.shape[0])
        if not float(normal @ normal) > DEGENERATE_NORM_SQ:
            raise ValueError("Halfspace normal must be nonzero")
        self.normal = normal
        self.offset = float(offset)
        self.xi = NoiseComponent(xi_noise or NoiseSpec(), self.dimension)
        self.zeta = NoiseComponent(zeta_noise or NoiseSpec())

    @classmethod
    def from_config(cls, config: HalfspaceConfig) -> "NoisyHalfspaceFamily":
        return cls(config.normal, config.offset, config.xi_noise, config.zeta_noise)

    def distribution(self) -> DrawDistribution:
        return NoiseDriven({"xi": self.xi, "zeta": self.zeta})

    def is_degenerate(self, draw: Dict[str, Any]) -> bool:
        normal = self.normal + draw["xi"]
        return not float(normal @ normal) > DEGENERATE_NORM_SQ

    def operator(self, draw: Dict[str, Any]) -> Halfspace:
        return Halfspace(self.normal + draw["xi"], self.offset + draw["zeta"])

    @property
    def regularity(self) -> Regularity:
        return Regularity.averaged(0.5)


def noisy_projection(family: NoisyHyperplaneFamily, x: Any, draw: Dict[str, Any]) -> np.ndarray:
    """
    Project ``x`` onto the sampled hyperplane {<a + xi, x - anchor> = zeta}.

    Raises:
        DegenerateDrawError: if a + xi = 0.
    """
    return family.operator(draw)(x)


class AffineFeasibilityProblem(OperatorFamily):
    """
    Noisy projections for a consistent linear system Ax = b, one noisy hyperplane per row.

    With ``sweep="cyclic"`` one draw holds the noise of every row and T_xi = P_m ... P_1.
    With ``sweep="uniform_random"`` one draw picks a single row uniformly at random.
    """
    kind = "affine_feasibility"

    def __init__(self, rows: Sequence[NoisyHyperplaneFamily], sweep: str = "cyclic"):
        rows = list(rows)
        if not rows:
            raise ValueError("An affine feasibility problem needs at least one row")
        dimensions = {row.dimension for row in rows}
        if len(dimensions) != 1:
            raise DimensionMismatchError(f"Rows live in different dimensions: {sorted(dimensions)}")
        if sweep not in ("cyclic", "uniform_random"):
            raise ValueError(f"Unknown sweep order '{sweep}'")
        super().__init__(dimensions.pop())
        self.rows = rows
        self.sweep = sweep
        self.solution: Optional[np.ndarray] = None

    @classmethod
    def from_system(cls, matrix: Any, rhs: Any, anchor_point: Optional[Any] = None,
                    xi_noise: Optional[NoiseSpec] = None, zeta_noise: Optional[NoiseSpec] = None,
                    sweep: str = "cyclic") -> "AffineFeasibilityProblem":
        """
        Build the rows of Ax = b with anchors obtained by projecting ``anchor_point``
        (the origin by default) onto each noiseless row.
        """
        matrix = np.asarray(matrix, dtype=np.float64)
        rhs = np.asarray(rhs, dtype=np.float64).reshape(-1)
        if matrix.ndim != 2 or matrix.shape[0] != rhs.shape[0]:
            raise DimensionMismatchError(f"System shapes disagree: A {matrix.shape}, b {rhs.shape}")
        point = np.zeros(matrix.shape[1]) if anchor_point is None else as_point(anchor_point, matrix.shape[1])
        rows = []
        for j, (a, b) in enumerate(zip(matrix, rhs)):
            norm_sq = float(a @ a)
            if not norm_sq > DEGENERATE_NORM_SQ:
                raise ValueError(f"Row {j} of the system is zero")
            anchor = point - ((a @ point - b) / norm_sq) * a
            scale = abs(b) + float(np.linalg.norm(a)) * float(np.linalg.norm(anchor)) + 1.0
            if abs(a @ anchor - b) > ANCHOR_TOL * scale:
                raise ValueError(f"Anchor of row {j} misses its equation by {abs(a @ anchor - b)}")
            rows.append(NoisyHyperplaneFamily(a, anchor, xi_noise, zeta_noise))
        return cls(rows, sweep)

    @classmethod
    def random_consistent(cls, rows: int, dimension: int, seed: int, solution_scale: float = 1.0,
                          anchor_spread: float = 1.0, xi_noise: Optional[NoiseSpec] = None,
                          zeta_noise: Optional[NoiseSpec] = None,
                          sweep: str = "cyclic") -> "AffineFeasibilityProblem":
        """
        Random consistent system with Gaussian A and solution x* = A^T w in the row space of A,
        so x* is the projection of the origin onto the solution set.
        """
        rng = np.random.default_rng(seed)
        matrix = rng.standard_normal((rows, dimension))
        solution = matrix.T @ (solution_scale * rng.standard_normal(rows))
        rhs = matrix @ solution
        anchor_point = solution + anchor_spread * rng.standard_normal(dimension)
        problem = cls.from_system(matrix, rhs, anchor_point, xi_noise, zeta_noise, sweep)
        problem.solution = solution
        return problem

    @classmethod
    def from_config(cls, config: AffineFeasibilityProblemConfig, dimension: int) -> "AffineFeasibilityProblem":
        if config.matrix is None:
            return cls.random_consistent(
                config.rows, dimension, config.generator_seed, config.solution_scale,
                config.anchor_spread, config.xi_noise, config.zeta_noise, config.sweep,
            )
        if config.rhs is None:
            raise ValueError("An explicit 'matrix' needs its 'rhs'")
        if len(config.matrix) != config.rows:
            raise ValueError(f"'rows' is {config.rows} but 'matrix' has {len(config.matrix)} rows")
        problem = cls.from_system(config.matrix, config.rhs, None, config.xi_noise,
                                  config.zeta_noise, config.sweep)
        if problem.dimension != dimension:
            raise DimensionMismatchError(
                f"System has {problem.dimension} columns, experiment declares dimension {dimension}"
            )
        return problem

    @property
    def matrix(self) -> np.ndarray:
        return np.vstack([row.normal for row in self.rows])

    @property
    def rhs(self) -> np.ndarray:
        return np.array([row.offset for row in self.rows])

    def distribution(self) -> DrawDistribution:
        if self.sweep == "cyclic":
            return NoiseDriven([row.distribution() for row in self.rows])
        return Mixture(FiniteDiscrete(size=len(self.rows)), [row.distribution() for row in self.rows])

    def is_degenerate(self, draw: Any) -> bool:
        if self.sweep == "cyclic":
            return any(row.is_degenerate(d) for row, d in zip(self.rows, draw))
        index, value = draw
        return self.rows[index].is_degenerate(value)

    def operator(self, draw: Any) -> BaseOperator:
        if self.sweep == "cyclic":
            projectors = [row.operator(d) for row, d in zip(self.rows, draw)]
            return Composition(list(reversed(projectors)))
        index, value = draw
        return self.rows[index].operator(value)

    def apply(self, draw: Any, x: np.ndarray) -> np.ndarray:
        if self.sweep == "cyclic":
            return cyclic_sweep(self, x, draw)
        index, value = draw
        return self.rows[index].apply(value, x)

    @property
    def regularity(self) -> Regularity:
        if self.sweep == "cyclic":
            return fold_regularity([row.regularity for row in self.rows])
        return Regularity.averaged(0.5)

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info.update({"rows": len(self.rows), "sweep": self.sweep})
        return info


def cyclic_sweep(problem: AffineFeasibilityProblem, x: Any, draws: Sequence[Any]) -> np.ndarray:
    """Apply the noisy projections of rows 1..m in order; the result lies on the last one."""
    if len(draws) != len(problem.rows):
        raise ValueError(f"Sweep needs {len(problem.rows)} draws, got {len(draws)}")
    point = as_point(x, problem.dimension)
    for row, draw in zip(problem.rows, draws):
        point = row.apply(draw, point)
    return point


class NoisyGradientFamily(OperatorFamily):
    """
    Gradient steps x - t (Q x + eta) on f_eta(x) = 1/2 x^T Q x + eta . x with random eta.
    """
    kind = "noisy_gradient"

    def __init__(self, matrix: Any, noise: Optional[NoiseSpec], step: float):
        matrix = np.array(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DimensionMismatchError(f"Quadratic needs a square matrix, got {matrix.shape}")
        if not np.allclose(matrix, matrix.T, rtol=1e-12, atol=1e-12):
            raise ValueError("Quadratic matrix must be symmetric")
        if not step > 0.0:
            raise ValueError(f"Gradient step must be positive, got {step}")
        super().__init__(matrix.shape[0])
        eigenvalues = np.linalg.eigvalsh(matrix)
        if not eigenvalues[0] > 0.0:
            raise ValueError("Quadratic matrix must be positive definite")
        matrix.setflags(write=False)
        self.matrix = matrix
        self.lipschitz = float(eigenvalues[-1])
        self.strong_convexity = float(eigenvalues[0])
        self.step = float(step)
        self.noise = NoiseComponent(noise or NoiseSpec(), self.dimension)

    def _gradient(self, x: np.ndarray, eta: np.ndarray) -> np.ndarray:
        # row sums instead of BLAS so that single and batched steps agree bit for bit
        return (self.matrix * x).sum(axis=1) + eta

    def distribution(self) -> DrawDistribution:
        return self.noise

    def operator(self, draw: np.ndarray) -> GradStep:
        eta = np.array(draw, dtype=np.float64)
        return GradStep(lambda x: self._gradient(x, eta), self.lipschitz, self.step, self.dimension)

    def apply(self, draw: np.ndarray, x: np.ndarray) -> np.ndarray:
        return x - self.step * self._gradient(x, draw)

    def apply_batch(self, draws: Sequence[np.ndarray], points: np.ndarray) -> np.ndarray:
        etas = np.vstack(draws)
        gradients = (self.matrix[None, :, :] * points[:, None, :]).sum(axis=2) + etas
        return points - self.step * gradients

    @property
    def regularity(self) -> Regularity:
        return step_regularity(self.step, self.lipschitz)

    @property
    def minimizer(self) -> np.ndarray:
        """Minimizer of E f_eta, i.e. -Q^{-1} E[eta]."""
        return -np.linalg.solve(self.matrix, np.full(self.dimension, self.noise.spec.mean))

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info.update({
            "step": self.step,
            "lipschitz": self.lipschitz,
            "strong_convexity": self.strong_convexity,
        })
        return info


class NoisySgdProblem(NoisyGradientFamily):
    """
    Stochastic gradient descent on a strongly convex quadratic with linear noise.

    Each objective is shifted by the constant 1/2 eta^T Q^{-1} eta so that f_eta >= 0;
    the shift leaves the gradients and hence the iteration unchanged. The optimal value
    of E f_eta is then p_bar = 1/2 Var(eta_i) trace(Q^{-1}).
    """
    kind = "sgd"

    def __init__(self, matrix: Any, noise: Optional[NoiseSpec], step: float,
                 allow_outside_theory: bool = False):
        super().__init__(matrix, noise, step)
        self.outside_theory = self.step > self.max_step * (1.0 + 1e-12)
        if self.outside_theory:
            message = (
                f"Step t={self.step} is outside the admissible range (0, {self.max_step}] "
                "of the boundedness guarantee"
            )
            if not allow_outside_theory:
                raise ValueError(message)
            logger.warning(f"{message}; results are tagged outside_theory")

    @classmethod
    def from_config(cls, config: SgdProblemConfig, dimension: int) -> "NoisySgdProblem":
        matrix = np.diag(config.q_diagonal) if config.q_diagonal is not None else config.q_matrix
        problem = cls(matrix, config.noise, config.step, config.allow_outside_theory)
        if problem.dimension != dimension:
            raise DimensionMismatchError(
                f"Quadratic lives in dimension {problem.dimension}, experiment declares {dimension}"
            )
        return problem

    @property
    def max_step(self) -> float:
        L, tau = self.lipschitz, self.strong_convexity
        return min(1.0 / L, 1.0 / tau, tau / L ** 2)

    @property
    def optimal_value(self) -> float:
        """p_bar = E f_eta(minimizer) for the nonnegative shifted objectives."""
        trace_inverse = float(np.trace(np.linalg.inv(self.matrix)))
        return 0.5 * self.noise.component_variance * trace_inverse

    def second_moment_bound(self, initial_second_moment: float) -> float:
        """E||X_k - x_bar||^2 <= E||X_0 - x_bar||^2 + 2 p_bar / tau."""
        return initial_second_moment + 2.0 * self.optimal_value / self.strong_convexity

    def describe(self) -> Dict[str, Any]:
        info = super().describe()
        info.update({"max_step": self.max_step, "outside_theory": self.outside_theory})
        return info


def sgd_step(problem: NoisyGradientFamily, x: Any, draw: Any) -> np.ndarray:
    """x - t (Q x + eta)."""
    point = as_point(x, problem.dimension)
    return problem.apply(as_point(draw, problem.dimension), point)


def prox_family_from_config(config: ProxConfig, dimension: int, step: float) -> "FiniteFamily":
    """Deterministic backward part of a forward-backward step."""
    if config.kind == "zero":
        prox = Identity(dimension)
    elif config.kind == "l1":
        prox = ProxL1(dimension, step, config.weight)
    elif config.kind == "halfspace":
        if config.normal is None or config.offset is None:
            raise ValueError("A halfspace prox needs 'normal' and 'offset'")
        prox = ProxIndicator(Halfspace(config.normal, config.offset), step)
    else:
        if config.radius is None:
            raise ValueError("A ball prox needs 'radius'")
        center = np.zeros(dimension) if config.center is None else config.center
        prox = ProxIndicator(Ball(center, config.radius), step)
    if prox.dimension != dimension:
        raise DimensionMismatchError(f"Prox acts on dimension {prox.dimension}, expected {dimension}")
    return FiniteFamily([prox])


class StochasticForwardBackward(OperatorFamily):
    """
    T_xi x = prox_{t g_{xi_g}}(x - t grad f_{xi_f}(x)) with independent draws
    ``{"g": xi_g, "f": xi_f}``.
    """
    kind = "forward_backward"

    def __init__(self, prox_family: OperatorFamily, grad_family: OperatorFamily):
        if prox_family.dimension != grad_family.dimension:
            raise DimensionMismatchError("Prox and gradient families live in different dimensions")
        if prox_family.step is not None and grad_family.step is not None and not np.isclose(
            prox_family.step, grad_family.step, rtol=1e-12, atol=0.0
        ):
            raise ValueError(
                f"Prox step {prox_family.step} differs from gradient step {grad_family.step}"
            )
        super().__init__(prox_family.dimension)
        self.prox_family = prox_family
        self.grad_family = grad_family
        self.step = grad_family.step if grad_family.step is not None else prox_family.step

    @classmethod
    def from_config(cls, config: ForwardBackwardProblemConfig, dimension: int) -> "StochasticForwardBackward":
        grad_family = NoisyGradientFamily(np.diag(config.q_diagonal), config.noise, config.step)
        if grad_family.dimension != dimension:
            raise DimensionMismatchError(
                f"Quadratic lives in dimension {grad_family.dimension}, experiment declares {dimension}"
            )
        return cls(prox_family_from_config(config.prox, dimension, config.step), grad_family)

    def distribution(self) -> DrawDistribution:
        return NoiseDriven({"g": self.prox_family.distribution(), "f": self.grad_family.distribution()})

    def is_degenerate(self, draw: Dict[str, Any]) -> bool:
        return self.prox_family.is_degenerate(draw["g"]) or self.grad_family.is_degenerate(draw["f"])

    def operator(self, draw: Dict[str, Any]) -> ForwardBackward:
        return ForwardBackward(self.prox_family.operator(draw["g"]), self.grad_family.operator(draw["f"]))

    def apply(self, draw: Dict[str, Any], x: np.ndarray) -> np.ndarray:
        return self.prox_family.apply(draw["g"], self.grad_family.apply(draw["f"], x))

    @property
    def regularity(self) -> Regularity:
        return fold_regularity([self.prox_family.regularity, self.grad_family.regularity])


class StochasticDouglasRachford(OperatorFamily):
    """T_xi x = 1/2 (R_{f_xi} R_{g_xi} + Id) x with independent draws ``{"f": ..., "g": ...}``."""

    kind = "douglas_rachford"

    def __init__(self, f_family: OperatorFamily, g_family: OperatorFamily):
        if f_family.dimension != g_family.dimension:
            raise DimensionMismatchError("Douglas-Rachford families live in different dimensions")
        super().__init__(f_family.dimension)
        self.f_family = f_family
        self.g_family = g_family

    @classmethod
    def from_config(cls, config: DouglasRachfordProblemConfig, dimension: int) -> "StochasticDouglasRachford":
        family = cls(NoisyHalfspaceFamily.from_config(config.f), NoisyHalfspaceFamily.from_config(config.g))
        if family.dimension != dimension:
            raise DimensionMismatchError(
                f"Halfspaces live in dimension {family.dimension}, experiment declares {dimension}"
            )
        return family

    def distribution(self) -> DrawDistribution:
        return NoiseDriven({"f": self.f_family.distribution(), "g": self.g_family.distribution()})

    def is_degenerate(self, draw: Dict[str, Any]) -> bool:
        return self.f_family.is_degenerate(draw["f"]) or self.g_family.is_degenerate(draw["g"])

    def operator(self, draw: Dict[str, Any]) -> DouglasRachford:
        return DouglasRachford(self.f_family.operator(draw["f"]), self.g_family.operator(draw["g"]))

    @property
    def regularity(self) -> Regularity:
        alphas = [self.f_family.regularity.alpha, self.g_family.regularity.alpha]
        if all(alpha is not None and alpha <= 0.5 for alpha in alphas):
            return Regularity.averaged(0.5)
        return Regularity.none()


# ---------------------------------------------------------------------------
# Theoretical constants
# ---------------------------------------------------------------------------

def _unit_normals(family: NoisyHyperplaneFamily, rng: np.random.Generator, count: int) -> np.ndarray:
    normals = family.normal + family.xi.sample_many(rng, count)
    norms = np.linalg.norm(normals, axis=1)
    keep = norms ** 2 > DEGENERATE_NORM_SQ
    return normals[keep] / norms[keep, None]


def estimate_c(family, sphere_samples: int = 2000, noise_samples: int = 20000, seed: int = 0,
               method: str = "sphere") -> float:
    """
    Estimate c = inf_z E[<a + xi, z>^2 / ||a + xi||^2] over unit vectors z.

    ``method="sphere"`` takes the minimum over ``sphere_samples`` random directions of the
    Monte Carlo expectation (an upper estimate of c); ``method="eigen"`` returns the
    smallest eigenvalue of the empirical E[u u^T], the exact infimum of the Monte Carlo
    expectation. For a feasibility problem the minimum over its rows is returned.
    """
    if isinstance(family, AffineFeasibilityProblem):
        return min(
            estimate_c(row, sphere_samples, noise_samples, seed + j, method)
            for j, row in enumerate(family.rows)
        )
    if sphere_samples < 1 or noise_samples < 1:
        raise ValueError("Sample counts must be positive")
    rng = np.random.default_rng(seed)
    units = _unit_normals(family, rng, noise_samples)
    if units.shape[0] == 0:
        raise InsufficientDataError("Every noise draw was degenerate")
    if method == "eigen":
        second_moment = units.T @ units / units.shape[0]
        return float(max(np.linalg.eigvalsh(second_moment)[0], 0.0))
    if method != "sphere":
        raise ValueError(f"Unknown estimation method '{method}'")
    directions = rng.standard_normal((sphere_samples, family.dimension))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    best = np.inf
    for start in range(0, sphere_samples, DIRECTION_BLOCK):
        block = directions[start:start + DIRECTION_BLOCK]
        values = ((units @ block.T) ** 2).mean(axis=0)
        best = min(best, float(values.min()))
    return best


def estimate_d(family: NoisyHyperplaneFamily, noise_samples: int = 20000, seed: int = 0) -> float:
    """Monte Carlo estimate of d = E[(b + zeta)^2 / ||a + xi||^2]."""
    if noise_samples < 1:
        raise ValueError("Sample counts must be positive")
    rng = np.random.default_rng(seed)
    normals = family.normal + family.xi.sample_many(rng, noise_samples)
    zetas = family.zeta.sample_many(rng, noise_samples)[:, 0]
    norms_sq = np.einsum("ij,ij->i", normals, normals)
    keep = norms_sq > DEGENERATE_NORM_SQ
    return float(np.mean((family.offset + zetas[keep]) ** 2 / norms_sq[keep]))


def contraction_rate_estimate(family: OperatorFamily, sampler: IndexSampler, pair_samples: int = 50,
                              noise_samples: int = 2000, seed: int = 0) -> float:
    """
    Empirical lower estimate of r in E||T_xi x - T_xi y||^2 <= r^2 ||x - y||^2.

    Pairs are standard Gaussian points drawn from ``seed``; all pairs share the draws of
    chain 0 at iterations 0..noise_samples-1 of ``sampler``. Coincident pairs are skipped.
    """
    if pair_samples < 1 or noise_samples < 1:
        raise ValueError("Sample counts must be positive")
    rng = np.random.default_rng(seed)
    draws = [sampler.draw(0, j, family) for j in range(noise_samples)]
    worst = None
    for _ in range(pair_samples):
        x = rng.standard_normal(family.dimension)
        y = rng.standard_normal(family.dimension)
        distance_sq = float((x - y) @ (x - y))
        if distance_sq == 0.0:
            continue
        images = family.apply_batch(draws, np.tile(x, (noise_samples, 1))) - family.apply_batch(
            draws, np.tile(y, (noise_samples, 1))
        )
        ratio = float(np.einsum("ij,ij->i", images, images).mean()) / distance_sq
        worst = ratio if worst is None else max(worst, ratio)
    if worst is None:
        raise InsufficientDataError("Every sampled pair was coincident")
    return float(np.sqrt(worst))


def cyclic_contraction_bound(c: float, rows: int) -> float:
    """E||T x - T y||^2 <= (1 - c)^m ||x - y||^2 for a cyclic sweep over m noisy rows."""
    if not 0.0 <= c <= 1.0:
        raise ValueError(f"c must lie in [0, 1], got {c}")
    return (1.0 - c) ** rows


def averaged_in_expectation_constant(rate: float) -> float:
    """A contraction in expectation with rate r is averaged in expectation with (1 + r) / 2."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"Contraction rate must lie in [0, 1), got {rate}")
    return (1.0 + rate) / 2.0


class ProblemRegistry:
    """
    Registry for problem kinds and factory for building families from configurations.
    """
    _registry = {}

    @classmethod
    def register(cls, kind: str, family_class):
        """Register a family class (with a ``from_config`` builder) for a config kind."""
        cls._registry[kind] = family_class

    @classmethod
    def create(cls, config, dimension: int) -> OperatorFamily:
        """Build the operator family described by ``config``."""
        if config.kind not in cls._registry:
            raise ValueError(f"Problem kind '{config.kind}' is not registered")
        return cls._registry[config.kind].from_config(config, dimension)

    @classmethod
    def get_kinds(cls) -> List[str]:
        """Get a list of all registered problem kinds."""
        return list(cls._registry.keys())


# Register built-in problems with the registry
ProblemRegistry.register("affine_maps", FiniteFamily)
ProblemRegistry.register("noisy_hyperplane", NoisyHyperplaneFamily)
ProblemRegistry.register("affine_feasibility", AffineFeasibilityProblem)
ProblemRegistry.register("sgd", NoisySgdProblem)
ProblemRegistry.register("forward_backward", StochasticForwardBackward)
ProblemRegistry.register("douglas_rachford", StochasticDouglasRachford)
