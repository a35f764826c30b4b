"""
Seeded draw distributions and the counter-based index sampler.

Every draw is keyed by (seed, chain id, iteration, purpose). The key selects a Philox
stream, so a draw can be regenerated in isolation and chains can be stepped in any
order or on any number of threads without changing results.
"""
from abc import ABC, abstractmethod
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Union

import numpy as np

from ..shared import logger
from ..shared.errors import ResampleExhaustedError
from ..shared.models import NoiseSpec

# Stream purposes (last counter word)
STEP_STREAM = 0
INITIAL_STREAM = 1

MAX_RESAMPLES = 100
SEED_LIMIT = 2 ** 64


class DrawDistribution(ABC):
    """Law of one random index or noise realization."""

    @property
    def is_deterministic(self) -> bool:
        """True when ``sample`` never consumes randomness."""
        return False

    @abstractmethod
    def sample(self, rng: Optional[np.random.Generator]) -> Any:
        """Produce one draw; ``rng`` may be None for deterministic laws."""


class FiniteDiscrete(DrawDistribution):
    """Index in {0, ..., m-1} drawn with fixed probabilities."""

    def __init__(self, weights: Optional[Sequence[float]] = None, size: Optional[int] = None):
        if weights is None:
            if size is None or size < 1:
                raise ValueError("FiniteDiscrete needs weights or a positive size")
            weights = np.full(size, 1.0 / size)
        weights = np.asarray(weights, dtype=np.float64)
        if weights.ndim != 1 or weights.size == 0:
            raise ValueError("Weights must be a nonempty vector")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("Weights must be finite and nonnegative")
        total = weights.sum()
        if not total > 0:
            raise ValueError("Weights must not all be zero")
        self.weights = weights / total
        self._support = np.flatnonzero(self.weights > 0)

    @property
    def size(self) -> int:
        return int(self.weights.size)

    @property
    def is_deterministic(self) -> bool:
        return self._support.size == 1

    def sample(self, rng: Optional[np.random.Generator]) -> int:
        if self.is_deterministic:
            return int(self._support[0])
        return int(rng.choice(self.size, p=self.weights))


class NoiseComponent(DrawDistribution):
    """
    One noise component: a vector of length ``size`` or a scalar when ``size`` is None.

    Laws: isotropic Gaussian with standard deviation ``scale``, componentwise uniform on
    [-scale, scale], or uniform on the ball of radius ``scale``; all shifted by ``mean``.
    """
    def __init__(self, spec: NoiseSpec, size: Optional[int] = None):
        self.spec = spec
        self.size = size

    @property
    def is_deterministic(self) -> bool:
        return self.spec.kind == "none" or self.spec.scale == 0.0

    @property
    def dimension(self) -> int:
        return 1 if self.size is None else self.size

    @property
    def component_variance(self) -> float:
        """Variance of each coordinate of the centered noise."""
        if self.is_deterministic:
            return 0.0
        scale = self.spec.scale
        if self.spec.kind == "gaussian":
            return scale ** 2
        if self.spec.kind == "uniform":
            return scale ** 2 / 3.0
        # uniform ball in dimension n: E||v||^2 = n r^2 / (n + 2)
        return scale ** 2 / (self.dimension + 2.0)

    def _centered(self, rng: np.random.Generator) -> np.ndarray:
        n = self.dimension
        scale = self.spec.scale
        if self.spec.kind == "gaussian":
            return rng.normal(0.0, scale, size=n)
        if self.spec.kind == "uniform":
            return rng.uniform(-scale, scale, size=n)
        direction = rng.standard_normal(n)
        norm = np.linalg.norm(direction)
        while norm == 0.0:
            direction = rng.standard_normal(n)
            norm = np.linalg.norm(direction)
        radius = scale * rng.random() ** (1.0 / n)
        return radius * direction / norm

    def sample_many(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """``count`` independent draws as a (count, dimension) array."""
        n = self.dimension
        scale = self.spec.scale
        if self.is_deterministic:
            return np.full((count, n), self.spec.mean)
        if self.spec.kind == "gaussian":
            values = rng.normal(0.0, scale, size=(count, n))
        elif self.spec.kind == "uniform":
            values = rng.uniform(-scale, scale, size=(count, n))
        else:
            directions = rng.standard_normal((count, n))
            norms = np.linalg.norm(directions, axis=1, keepdims=True)
            norms[norms == 0.0] = 1.0
            radii = scale * rng.random((count, 1)) ** (1.0 / n)
            values = radii * directions / norms
        return values + self.spec.mean

    def sample(self, rng: Optional[np.random.Generator]) -> Union[float, np.ndarray]:
        if self.is_deterministic:
            value = np.full(self.dimension, self.spec.mean)
        else:
            value = self._centered(rng) + self.spec.mean
        if self.size is None:
            return float(value[0])
        return value


class NoiseDriven(DrawDistribution):
    """
    Joint law of independent components, sampled in declaration order.

    ``components`` is either a mapping (draws are dicts) or a sequence (draws are lists).
    """
    def __init__(self, components: Union[Mapping[str, DrawDistribution], Sequence[DrawDistribution]]):
        if isinstance(components, Mapping):
            self.keys: Optional[List[str]] = list(components.keys())
            self.parts = list(components.values())
        else:
            self.keys = None
            self.parts = list(components)
        if not self.parts:
            raise ValueError("NoiseDriven needs at least one component")

    @property
    def is_deterministic(self) -> bool:
        return all(part.is_deterministic for part in self.parts)

    def sample(self, rng: Optional[np.random.Generator]) -> Union[Dict[str, Any], List[Any]]:
        values = [part.sample(rng) for part in self.parts]
        if self.keys is None:
            return values
        return dict(zip(self.keys, values))


class Mixture(DrawDistribution):
    """Pick a branch index, then draw from that branch; draws are ``(index, value)``."""

    def __init__(self, index: FiniteDiscrete, branches: Sequence[DrawDistribution]):
        if index.size != len(branches):
            raise ValueError(f"Mixture has {index.size} weights but {len(branches)} branches")
        self.index = index
        self.branches = list(branches)

    @property
    def is_deterministic(self) -> bool:
        return self.index.is_deterministic and all(b.is_deterministic for b in self.branches)

    def sample(self, rng: Optional[np.random.Generator]) -> tuple:
        i = self.index.sample(rng)
        return i, self.branches[i].sample(rng)


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < SEED_LIMIT:
        raise ValueError(f"Seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def stream(seed: int, chain_id: int, iteration: int, purpose: int = STEP_STREAM) -> np.random.Generator:
    """Independent generator for one (seed, chain id, iteration, purpose) key."""
    counter = np.array([0, iteration, chain_id, purpose], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=seed, counter=counter))


class IndexSampler:
    """
    Seeded i.i.d. source of the operator draws xi_k.

    Args:
        seed: unsigned 64-bit seed
        distribution: law of one draw
        coupled: when True every chain receives the draw of chain 0 at each iteration
    """
    def __init__(self, seed: int, distribution: DrawDistribution, coupled: bool = False):
        self.seed = check_seed(seed)
        self.distribution = distribution
        self.coupled = bool(coupled)

    @classmethod
    def for_family(cls, seed: int, family, coupled: bool = False) -> "IndexSampler":
        """Sampler drawing from ``family.distribution()``."""
        return cls(seed, family.distribution(), coupled=coupled)

    def generator(self, chain_id: int, iteration: int, purpose: int = STEP_STREAM) -> np.random.Generator:
        if purpose == STEP_STREAM and self.coupled:
            chain_id = 0
        return stream(self.seed, chain_id, iteration, purpose)

    def draw(self, chain_id: int, iteration: int, family=None) -> Any:
        """
        Draw xi for (chain_id, iteration).

        Draws that ``family`` rejects as degenerate are replaced by further draws from the
        same stream, up to MAX_RESAMPLES times.

        Raises:
            ResampleExhaustedError: if every attempt was degenerate.
        """
        if self.distribution.is_deterministic:
            value = self.distribution.sample(None)
            if family is not None and family.is_degenerate(value):
                raise ResampleExhaustedError("Deterministic draw is degenerate; resampling cannot help")
            return value
        rng = self.generator(chain_id, iteration)
        value = self.distribution.sample(rng)
        if family is None or not family.is_degenerate(value):
            return value
        for attempt in range(1, MAX_RESAMPLES + 1):
            logger.debug(f"Degenerate draw at chain {chain_id}, iteration {iteration}; resample {attempt}")
            value = self.distribution.sample(rng)
            if not family.is_degenerate(value):
                return value
        raise ResampleExhaustedError(
            f"Draw at chain {chain_id}, iteration {iteration} stayed degenerate after {MAX_RESAMPLES} resamples"
        )

    def operator(self, family, chain_id: int, iteration: int):
        """Operator T_xi selected by the draw for (chain_id, iteration)."""
        return family.operator(self.draw(chain_id, iteration, family))

    def iter_draws(self, chain_id: int = 0, start: int = 0, family=None) -> Iterator[Any]:
        """Draws of one chain for iterations start, start + 1, ..."""
        iteration = start
        while True:
            yield self.draw(chain_id, iteration, family)
            iteration += 1
