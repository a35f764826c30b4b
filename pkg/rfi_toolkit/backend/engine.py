"""
Random function iteration engine: X_{k+1} = T_{xi_k} X_k for single chains and
particle ensembles.

Draws come from an IndexSampler keyed by (seed, chain id, iteration), so ensembles are
reproducible regardless of how particles are split across worker threads.
"""
import math
import time
from abc import ABC, abstractmethod
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .measures import EmpiricalMeasure, wasserstein
from .operators import as_point
from .problems import OperatorFamily
from .sampling import INITIAL_STREAM, IndexSampler, stream
from ..shared import logger
from ..shared.errors import DimensionMismatchError, InsufficientDataError, NonFiniteInputError
from ..shared.models import DiracLawConfig, GaussianLawConfig, UniformBoxLawConfig

# Particles handed to one worker task
CHUNK_SIZE = 64


@dataclass(frozen=True)
class ChainState:
    """Position of one chain after ``k`` steps."""
    x: np.ndarray
    k: int = 0
    chain_id: int = 0

    @classmethod
    def start(cls, x0: Any, chain_id: int = 0, dimension: Optional[int] = None) -> "ChainState":
        return cls(as_point(x0, dimension), 0, chain_id)


def rfi_step(state: ChainState, sampler: IndexSampler, family: OperatorFamily) -> ChainState:
    """One update x -> T_{xi_k} x using the draw keyed by (chain id, k)."""
    draw = sampler.draw(state.chain_id, state.k, family)
    x = family.apply(draw, state.x)
    return replace(state, x=x, k=state.k + 1)


@dataclass
class TrajectoryLog:
    """Iterates x_0..x_K of one chain and the step lengths ||x_{k+1} - x_k||."""
    iterates: np.ndarray
    residuals: np.ndarray
    chain_id: int = 0

    @property
    def iterations(self) -> int:
        return int(self.residuals.shape[0])

    @property
    def final(self) -> ChainState:
        return ChainState(self.iterates[-1], self.iterations, self.chain_id)

    def mean_norms(self) -> np.ndarray:
        return np.linalg.norm(self.iterates, axis=1)


def run_chain(x0: Any, iterations: int, sampler: IndexSampler, family: OperatorFamily,
              chain_id: int = 0) -> TrajectoryLog:
    """
    Run one chain for ``iterations`` steps from ``x0``.

    Raises:
        NonFiniteInputError: if the start point or an iterate is not finite.
    """
    if iterations < 1:
        raise ValueError(f"Need at least one iteration, got {iterations}")
    state = ChainState.start(x0, chain_id, family.dimension)
    iterates = np.empty((iterations + 1, family.dimension))
    iterates[0] = state.x
    for _ in range(iterations):
        state = rfi_step(state, sampler, family)
        iterates[state.k] = state.x
    if not np.all(np.isfinite(iterates)):
        raise NonFiniteInputError(f"Chain {chain_id} produced non-finite iterates")
    residuals = np.linalg.norm(np.diff(iterates, axis=0), axis=1)
    logger.debug(f"Chain {chain_id} finished {iterations} steps, last residual {residuals[-1]:.3e}")
    return TrajectoryLog(iterates, residuals, chain_id)


# ---------------------------------------------------------------------------
# Initial laws
# ---------------------------------------------------------------------------

class InitialLaw(ABC):
    """Law mu_0 of the starting points; particle i is drawn from its own stream."""

    def __init__(self, dimension: int):
        self.dimension = int(dimension)

    @abstractmethod
    def _sample(self, rng: np.random.Generator) -> np.ndarray:
        """Draw one starting point."""

    @property
    def is_deterministic(self) -> bool:
        return False

    def sample(self, seed: int, chain_ids: Sequence[int]) -> np.ndarray:
        """Starting points of the given chains as a (len(chain_ids), dimension) array."""
        points = np.empty((len(chain_ids), self.dimension))
        for row, chain_id in enumerate(chain_ids):
            rng = None if self.is_deterministic else stream(seed, chain_id, 0, INITIAL_STREAM)
            points[row] = self._sample(rng)
        return points


class DiracLaw(InitialLaw):
    def __init__(self, point: Any):
        self.point = as_point(point)
        super().__init__(self.point.shape[0])

    @property
    def is_deterministic(self) -> bool:
        return True

    def _sample(self, rng) -> np.ndarray:
        return self.point


class GaussianLaw(InitialLaw):
    """Isotropic Gaussian N(mean, scale^2 I)."""

    def __init__(self, dimension: int, mean: Optional[Any] = None, scale: float = 1.0):
        super().__init__(dimension)
        self.mean = np.zeros(dimension) if mean is None else as_point(mean, dimension)
        if not scale > 0.0:
            raise ValueError(f"Gaussian scale must be positive, got {scale}")
        self.scale = float(scale)

    def _sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.mean + self.scale * rng.standard_normal(self.dimension)


class UniformBoxLaw(InitialLaw):
    """Uniform law on the box [low, high]^n."""

    def __init__(self, dimension: int, low: float = -1.0, high: float = 1.0):
        super().__init__(dimension)
        if not low < high:
            raise ValueError("Uniform box needs low < high")
        self.low = float(low)
        self.high = float(high)

    def _sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.low, self.high, size=self.dimension)


class EmpiricalLaw(InitialLaw):
    """Resamples the atoms of a finite measure according to its weights."""

    def __init__(self, measure: EmpiricalMeasure):
        super().__init__(measure.dimension)
        self.measure = measure

    @property
    def is_deterministic(self) -> bool:
        return self.measure.size == 1

    def _sample(self, rng) -> np.ndarray:
        if rng is None:
            return self.measure.atoms[0]
        return self.measure.atoms[rng.choice(self.measure.size, p=self.measure.weights)]


def initial_law_from_config(config: Union[DiracLawConfig, GaussianLawConfig, UniformBoxLawConfig],
                            dimension: int) -> InitialLaw:
    if config.kind == "dirac":
        law = DiracLaw(np.zeros(dimension) if config.point is None else config.point)
    elif config.kind == "gaussian":
        law = GaussianLaw(dimension, config.mean, config.scale)
    else:
        law = UniformBoxLaw(dimension, config.low, config.high)
    if law.dimension != dimension:
        raise DimensionMismatchError(
            f"Initial law lives in dimension {law.dimension}, experiment declares {dimension}"
        )
    return law


# ---------------------------------------------------------------------------
# Ensembles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnsembleSummary:
    """Statistics of the ensemble at one iteration."""
    k: int
    mean_norm: float
    mean_residual: float
    second_moment: float
    second_moment_se: float


class EnsembleHistory:
    """
    Snapshots of the particle ensemble, one per stored iteration, plus per-iteration
    summaries for every k.

    Snapshots are taken every ``thinning`` iterations (the final one is always kept);
    with ``max_snapshots`` the oldest snapshots are evicted first.
    """
    def __init__(self, particles: int, dimension: int, thinning: int = 1,
                 max_snapshots: Optional[int] = None, center: Optional[Any] = None):
        if thinning < 1:
            raise ValueError(f"Thinning must be positive, got {thinning}")
        if max_snapshots is not None and max_snapshots < 1:
            raise ValueError(f"max_snapshots must be positive, got {max_snapshots}")
        self.particles = int(particles)
        self.dimension = int(dimension)
        self.thinning = int(thinning)
        self.max_snapshots = max_snapshots
        self.center = np.zeros(dimension) if center is None else as_point(center, dimension)
        self._snapshots: Dict[int, np.ndarray] = {}
        self._order: deque = deque()
        self.evicted_until = -1
        self.summaries: List[EnsembleSummary] = []
        self.time_budget_exceeded = False

    def record(self, k: int, points: np.ndarray, previous: Optional[np.ndarray] = None,
               final: bool = False):
        """Add the summary for iteration ``k`` and store a snapshot when it is due."""
        norms = np.linalg.norm(points, axis=1)
        mean_residual = math.nan if previous is None else float(np.linalg.norm(points - previous, axis=1).mean())
        deviations = np.einsum("ij,ij->i", points - self.center, points - self.center)
        se = float(deviations.std(ddof=1) / math.sqrt(len(deviations))) if len(deviations) > 1 else 0.0
        self.summaries.append(EnsembleSummary(
            k=k,
            mean_norm=float(norms.mean()),
            mean_residual=mean_residual,
            second_moment=float(deviations.mean()),
            second_moment_se=se,
        ))
        if k % self.thinning == 0 or final:
            self._store(k, points)

    def _store(self, k: int, points: np.ndarray):
        if k in self._snapshots:
            return
        snapshot = np.array(points, copy=True)
        snapshot.setflags(write=False)
        self._snapshots[k] = snapshot
        self._order.append(k)
        if self.max_snapshots is not None and len(self._order) > self.max_snapshots:
            evicted = self._order.popleft()
            del self._snapshots[evicted]
            self.evicted_until = max(self.evicted_until, evicted)

    @property
    def last_k(self) -> int:
        return self.summaries[-1].k if self.summaries else -1

    @property
    def stored_iterations(self) -> List[int]:
        return sorted(self._snapshots)

    def points(self, k: int) -> np.ndarray:
        if k not in self._snapshots:
            raise InsufficientDataError(f"No snapshot stored for iteration {k}")
        return self._snapshots[k]

    def __getitem__(self, k: int) -> EmpiricalMeasure:
        """Uniform empirical measure of the particles at iteration ``k``."""
        return EmpiricalMeasure.uniform(self.points(k))

    def __len__(self) -> int:
        return len(self._snapshots)

    def __iter__(self) -> Iterator[Tuple[int, EmpiricalMeasure]]:
        for k in self.stored_iterations:
            yield k, self[k]

    @property
    def final(self) -> EmpiricalMeasure:
        return self[self.stored_iterations[-1]]

    def summary_arrays(self) -> Dict[str, np.ndarray]:
        return {
            "k": np.array([s.k for s in self.summaries], dtype=int),
            "mean_norm": np.array([s.mean_norm for s in self.summaries]),
            "mean_residual": np.array([s.mean_residual for s in self.summaries]),
            "second_moment": np.array([s.second_moment for s in self.summaries]),
            "second_moment_se": np.array([s.second_moment_se for s in self.summaries]),
        }


def _as_initial_law(init: Any, dimension: int) -> InitialLaw:
    if isinstance(init, InitialLaw):
        law = init
    elif isinstance(init, EmpiricalMeasure):
        law = EmpiricalLaw(init)
    else:
        law = DiracLaw(init)
    if law.dimension != dimension:
        raise DimensionMismatchError(
            f"Initial law lives in dimension {law.dimension}, family acts on {dimension}"
        )
    return law


def _advance(family: OperatorFamily, sampler: IndexSampler, points: np.ndarray,
             chain_ids: Sequence[int], k: int, shared_draw: Any = None) -> np.ndarray:
    if sampler.coupled:
        draws = [shared_draw] * len(chain_ids)
    else:
        draws = [sampler.draw(chain_id, k, family) for chain_id in chain_ids]
    return family.apply_batch(draws, points)


def run_ensemble(init: Any, particles: int, iterations: int, sampler: IndexSampler,
                 family: OperatorFamily, thinning: int = 1, max_snapshots: Optional[int] = None,
                 threads: int = 1, center: Optional[Any] = None, time_budget: Optional[float] = None,
                 chain_offset: int = 0) -> EnsembleHistory:
    """
    Evolve ``particles`` chains for ``iterations`` steps; chain i uses id chain_offset + i.

    ``init`` is an InitialLaw, an EmpiricalMeasure (resampled) or a single point (Dirac).
    The result is independent of ``threads``. Running past ``time_budget`` seconds flags the
    history and logs a warning, but never shortens the run.

    Returns:
        EnsembleHistory whose item k is the empirical measure mu_k.
    """
    if particles < 1:
        raise ValueError(f"Need at least one particle, got {particles}")
    if iterations < 1:
        raise ValueError(f"Need at least one iteration, got {iterations}")
    if threads < 1:
        raise ValueError(f"Need at least one thread, got {threads}")
    law = _as_initial_law(init, family.dimension)
    chain_ids = list(range(chain_offset, chain_offset + particles))
    points = law.sample(sampler.seed, chain_ids)
    if not np.all(np.isfinite(points)):
        raise NonFiniteInputError("Initial law produced non-finite points")

    history = EnsembleHistory(particles, family.dimension, thinning, max_snapshots, center)
    history.record(0, points)
    chunks = [slice(start, min(start + CHUNK_SIZE, particles)) for start in range(0, particles, CHUNK_SIZE)]
    executor = ThreadPoolExecutor(max_workers=threads) if threads > 1 and len(chunks) > 1 else None
    started = time.monotonic()
    logger.info(
        f"Running {particles} particles for {iterations} iterations on {family.kind} "
        f"(dimension {family.dimension}, {threads} thread(s))"
    )
    try:
        for k in range(iterations):
            shared_draw = sampler.draw(0, k, family) if sampler.coupled else None
            if executor is None:
                new_points = _advance(family, sampler, points, chain_ids, k, shared_draw)
            else:
                futures = [
                    executor.submit(_advance, family, sampler, points[chunk], chain_ids[chunk], k, shared_draw)
                    for chunk in chunks
                ]
                new_points = np.vstack([future.result() for future in futures])
            if not np.all(np.isfinite(new_points)):
                raise NonFiniteInputError(f"Ensemble produced non-finite points at iteration {k + 1}")
            history.record(k + 1, new_points, points, final=(k + 1 == iterations))
            points = new_points
            if (time_budget is not None and not history.time_budget_exceeded
                    and time.monotonic() - started > time_budget):
                history.time_budget_exceeded = True
                logger.warning(
                    f"Time budget of {time_budget}s exceeded after {k + 1} of {iterations} iterations"
                )
    finally:
        if executor is not None:
            executor.shutdown()
    logger.debug(f"Ensemble finished in {time.monotonic() - started:.2f}s")
    return history


def cesaro_pool(history: EnsembleHistory, k: int) -> EmpiricalMeasure:
    """
    Pooled measure nu_k = (1/k) sum_{j=1}^k mu_j.

    With thinning, a stored snapshot j stands for the iterations since the previous
    stored snapshot and is weighted by how many of them fall in [1, k].

    Raises:
        InsufficientDataError: if k exceeds the stored history or needed snapshots were evicted.
    """
    if k < 1:
        raise ValueError(f"Cesaro pooling needs k >= 1, got {k}")
    stored = history.stored_iterations
    if not stored or stored[-1] < k:
        raise InsufficientDataError(f"History ends at iteration {history.last_k}; cannot pool up to {k}")
    if history.evicted_until >= 1:
        raise InsufficientDataError(
            f"Snapshots up to iteration {history.evicted_until} were evicted; pooled measures need them"
        )
    blocks = []
    previous = 0
    for j in stored:
        if j == 0:
            continue
        weight = min(j, k) - previous
        if weight > 0:
            blocks.append((j, weight / k))
        previous = j
        if j >= k:
            break
    atoms = np.vstack([history.points(j) for j, _ in blocks])
    weights = np.concatenate([np.full(history.particles, w / history.particles) for _, w in blocks])
    return EmpiricalMeasure(atoms, weights / weights.sum())


def markov_kernel_mc(x: Any, draws: int, sampler: IndexSampler, family: OperatorFamily) -> EmpiricalMeasure:
    """
    Empirical version of p(x, .): ``draws`` independent images T_xi x.

    The draws always come from independent streams, even when ``sampler`` is coupled.
    """
    if draws < 1:
        raise ValueError(f"Need at least one draw, got {draws}")
    point = as_point(x, family.dimension)
    if sampler.coupled:
        sampler = IndexSampler(sampler.seed, sampler.distribution)
    samples = [sampler.draw(chain_id, 0, family) for chain_id in range(draws)]
    images = family.apply_batch(samples, np.tile(point, (draws, 1)))
    return EmpiricalMeasure.uniform(images)


@dataclass
class CoupledPairProfile:
    """Distances ||X_k^x - X_k^y|| for k = 0..K and the per-step transport discrepancies."""
    distances: np.ndarray
    discrepancies: np.ndarray

    def averaged_slack(self, alpha: float) -> np.ndarray:
        """d_k^2 - d_{k+1}^2 - ((1 - alpha) / alpha) psi_k for every step."""
        d_sq = self.distances ** 2
        return d_sq[:-1] - d_sq[1:] - ((1.0 - alpha) / alpha) * self.discrepancies


def run_coupled_pair(x: Any, y: Any, iterations: int, sampler: IndexSampler,
                     family: OperatorFamily) -> CoupledPairProfile:
    """Run two chains from ``x`` and ``y`` that share the draw of chain 0 at every step."""
    if iterations < 1:
        raise ValueError(f"Need at least one iteration, got {iterations}")
    x = as_point(x, family.dimension)
    y = as_point(y, family.dimension)
    distances = np.empty(iterations + 1)
    discrepancies = np.empty(iterations)
    distances[0] = np.linalg.norm(x - y)
    for k in range(iterations):
        draw = sampler.draw(0, k, family)
        tx, ty = family.apply(draw, x), family.apply(draw, y)
        shift = (tx - x) - (ty - y)
        discrepancies[k] = float(shift @ shift)
        x, y = tx, ty
        distances[k + 1] = np.linalg.norm(x - y)
    return CoupledPairProfile(distances, discrepancies)


def ensemble_sampling_error(init: Any, particles: int, iterations: int, sampler: IndexSampler,
                            family: OperatorFamily, p: float = 2.0, threads: int = 1) -> float:
    """
    W_p between the final measures of two independent ensembles of size ``particles``.

    The second ensemble uses chain ids particles..2*particles-1, so the value estimates
    the Monte Carlo error of mu_K at this particle count.
    """
    first = run_ensemble(init, particles, iterations, sampler, family, thinning=iterations,
                         threads=threads)
    second = run_ensemble(init, particles, iterations, sampler, family, thinning=iterations,
                          threads=threads, chain_offset=particles)
    return wasserstein(first.final, second.final, p).value
