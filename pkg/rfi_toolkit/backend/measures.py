"""
Finite empirical measures and distances between them.

Wasserstein distances are exact: sorted couplings on the line, assignment for
equal-weight atoms and network simplex (POT) for general weights. The Prokhorov-Levy
distance is computed exactly for small supports through the minimal mass a coupling
must move farther than epsilon, and bounded through W_p otherwise.
"""
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import ot
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from ..shared import logger
from ..shared.errors import BudgetExceededError, DimensionMismatchError, NonFiniteInputError
from ..shared.models import DistanceMethod, DistanceReport

WEIGHT_TOL = 1e-12
# Total atoms above which exact transport is refused
MAX_EXACT_ATOMS = 5000
# Largest common size used when splitting equal-weight atoms of unequal counts
MAX_SPLIT_ATOMS = 2000
# Largest combined support for the exact Prokhorov-Levy evaluation
MAX_PROKHOROV_ATOMS = 64
# Dense couplings are only returned below this many entries
MAX_COUPLING_ENTRIES = 4_000_000


class EmpiricalMeasure:
    """
    Weighted finite set of atoms: sum_i w_i delta_{atom_i}.

    Atoms are stored as a read-only (size, dimension) array; weights are nonnegative and
    sum to 1 within 1e-12.
    """
    def __init__(self, atoms: Any, weights: Optional[Any] = None):
        atoms = np.array(atoms, dtype=np.float64)
        if atoms.ndim == 1:
            atoms = atoms.reshape(-1, 1)
        if atoms.ndim != 2 or atoms.shape[0] == 0:
            raise ValueError(f"Atoms must be a nonempty (size, dimension) array, got shape {atoms.shape}")
        if not np.all(np.isfinite(atoms)):
            raise NonFiniteInputError("Measure atoms contain non-finite entries")
        if weights is None:
            weights = np.full(atoms.shape[0], 1.0 / atoms.shape[0])
        weights = np.array(weights, dtype=np.float64).reshape(-1)
        if weights.shape[0] != atoms.shape[0]:
            raise ValueError(f"Got {weights.shape[0]} weights for {atoms.shape[0]} atoms")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("Weights must be finite and nonnegative")
        if abs(weights.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError(f"Weights must sum to 1, got {weights.sum()!r}")
        atoms.setflags(write=False)
        weights.setflags(write=False)
        self.atoms = atoms
        self.weights = weights

    @classmethod
    def uniform(cls, atoms: Any) -> "EmpiricalMeasure":
        return cls(atoms)

    @classmethod
    def dirac(cls, point: Any) -> "EmpiricalMeasure":
        point = np.asarray(point, dtype=np.float64).reshape(1, -1)
        return cls(point, [1.0])

    @classmethod
    def from_counts(cls, atoms: Any, counts: Sequence[float]) -> "EmpiricalMeasure":
        """Measure with weights proportional to ``counts``."""
        counts = np.asarray(counts, dtype=np.float64)
        total = counts.sum()
        if not total > 0:
            raise ValueError("Counts must have a positive total")
        return cls(atoms, counts / total)

    @classmethod
    def mixture(cls, measures: Sequence["EmpiricalMeasure"], coefficients: Sequence[float]) -> "EmpiricalMeasure":
        """sum_j lambda_j mu_j for coefficients summing to 1."""
        measures = list(measures)
        coefficients = np.asarray(coefficients, dtype=np.float64)
        if len(measures) != coefficients.shape[0] or not measures:
            raise ValueError("Need one coefficient per measure")
        if np.any(coefficients < 0) or abs(coefficients.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError("Mixture coefficients must be nonnegative and sum to 1")
        _check_same_dimension(*measures)
        atoms = np.vstack([m.atoms for m in measures])
        weights = np.concatenate([c * m.weights for c, m in zip(coefficients, measures)])
        return cls(atoms, weights / weights.sum())

    @property
    def size(self) -> int:
        return int(self.atoms.shape[0])

    @property
    def dimension(self) -> int:
        return int(self.atoms.shape[1])

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(np.abs(self.weights - 1.0 / self.size) <= WEIGHT_TOL / self.size))

    def mean(self) -> np.ndarray:
        return self.weights @ self.atoms

    def compressed(self) -> "EmpiricalMeasure":
        """Merge identical atoms and drop zero weights."""
        unique, inverse = np.unique(self.atoms, axis=0, return_inverse=True)
        merged = np.bincount(inverse.reshape(-1), weights=self.weights, minlength=unique.shape[0])
        keep = merged > 0
        return EmpiricalMeasure(unique[keep], merged[keep] / merged[keep].sum())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "dimension": self.dimension,
            "atoms": self.atoms.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EmpiricalMeasure":
        measure = cls(data["atoms"], data.get("weights"))
        if "dimension" in data and int(data["dimension"]) != measure.dimension:
            raise DimensionMismatchError(
                f"Declared dimension {data['dimension']} differs from atom dimension {measure.dimension}"
            )
        return measure

    def __len__(self) -> int:
        return self.size

    def __repr__(self) -> str:
        return f"EmpiricalMeasure(size={self.size}, dimension={self.dimension})"


def _check_same_dimension(*measures: EmpiricalMeasure) -> int:
    dimensions = {m.dimension for m in measures}
    if len(dimensions) != 1:
        raise DimensionMismatchError(f"Measures live in different dimensions: {sorted(dimensions)}")
    return dimensions.pop()


def _sorted_coupling(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """North-west corner rule on sorted atoms: the monotone (quantile) coupling on the line."""
    x_order = np.argsort(mu.atoms[:, 0], kind="stable")
    y_order = np.argsort(nu.atoms[:, 0], kind="stable")
    a = mu.weights[x_order].copy()
    b = nu.weights[y_order].copy()
    rows: List[int] = []
    cols: List[int] = []
    mass: List[float] = []
    i = j = 0
    while i < a.size and j < b.size:
        moved = min(a[i], b[j])
        if moved > 0:
            rows.append(x_order[i])
            cols.append(y_order[j])
            mass.append(moved)
        a[i] -= moved
        b[j] -= moved
        # advance the side that is exhausted; on ties advance both
        if a[i] <= b[j]:
            i += 1
            if b[j] <= 0:
                j += 1
        else:
            j += 1
    return np.asarray(rows, dtype=int), np.asarray(cols, dtype=int), np.asarray(mass)


def _dense(rows: np.ndarray, cols: np.ndarray, mass: np.ndarray, shape: Tuple[int, int]) -> Optional[np.ndarray]:
    if shape[0] * shape[1] > MAX_COUPLING_ENTRIES:
        return None
    coupling = np.zeros(shape)
    np.add.at(coupling, (rows, cols), mass)
    return coupling


def _wasserstein_sorted(mu, nu, p):
    rows, cols, mass = _sorted_coupling(mu, nu)
    gaps = np.abs(mu.atoms[rows, 0] - nu.atoms[cols, 0])
    cost = float(mass @ gaps ** p)
    return cost, _dense(rows, cols, mass, (mu.size, nu.size))


def _wasserstein_assignment(mu, nu, p):
    n, m = mu.size, nu.size
    size = n if n == m else math.lcm(n, m)
    if size > MAX_SPLIT_ATOMS and n != m:
        return None
    x = np.repeat(mu.atoms, size // n, axis=0)
    y = np.repeat(nu.atoms, size // m, axis=0)
    costs = cdist(x, y) ** p
    row, col = linear_sum_assignment(costs)
    cost = float(costs[row, col].sum() / size)
    coupling = _dense(row // (size // n), col // (size // m), np.full(size, 1.0 / size), (n, m))
    return cost, coupling


def _wasserstein_simplex(mu, nu, p):
    costs = cdist(mu.atoms, nu.atoms) ** p
    a = mu.weights / mu.weights.sum()
    b = nu.weights / nu.weights.sum()
    coupling = ot.emd(a, b, costs)
    return float(np.sum(coupling * costs)), coupling


def wasserstein(mu: EmpiricalMeasure, nu: EmpiricalMeasure, p: float = 2.0,
                method: Optional[Union[str, DistanceMethod]] = None) -> DistanceReport:
    """
    Exact W_p between two finite measures.

    One-dimensional inputs use the sorted coupling; equal-weight inputs use an optimal
    assignment (after splitting atoms to a common count when the counts differ); all
    other inputs use network simplex. ``method`` forces a particular solver.

    Raises:
        DimensionMismatchError: if the measures live in different dimensions.
        BudgetExceededError: if a general-dimension problem has more than MAX_EXACT_ATOMS atoms.
    """
    if p < 1:
        raise ValueError(f"Wasserstein order must be >= 1, got {p}")
    dimension = _check_same_dimension(mu, nu)
    if method is not None:
        method = DistanceMethod(method)
    if method is None:
        if dimension == 1:
            method = DistanceMethod.SORTED_1D
        elif mu.is_uniform and nu.is_uniform and (
            mu.size == nu.size or math.lcm(mu.size, nu.size) <= MAX_SPLIT_ATOMS
        ):
            method = DistanceMethod.ASSIGNMENT
        else:
            method = DistanceMethod.NETWORK_SIMPLEX

    if method == DistanceMethod.SORTED_1D:
        if dimension != 1:
            raise ValueError("The sorted coupling only applies to one-dimensional measures")
        cost, coupling = _wasserstein_sorted(mu, nu, p)
    else:
        if mu.size + nu.size > MAX_EXACT_ATOMS:
            raise BudgetExceededError(
                f"Exact transport between {mu.size} and {nu.size} atoms exceeds the budget of {MAX_EXACT_ATOMS}"
            )
        result = None
        if method == DistanceMethod.ASSIGNMENT:
            if not (mu.is_uniform and nu.is_uniform):
                raise ValueError("The assignment solver needs equal weights on both sides")
            result = _wasserstein_assignment(mu, nu, p)
            if result is None:
                logger.debug("Common atom count too large for splitting; using network simplex")
                method = DistanceMethod.NETWORK_SIMPLEX
        elif method != DistanceMethod.NETWORK_SIMPLEX:
            raise ValueError(f"'{method.value}' is not a Wasserstein method")
        if result is None:
            result = _wasserstein_simplex(mu, nu, p)
        cost, coupling = result
    value = max(cost, 0.0) ** (1.0 / p)
    return DistanceReport(value=value, method=method, p=p, coupling=coupling)


def transport_deficiency(a: np.ndarray, b: np.ndarray, distances: np.ndarray, epsilon: float) -> float:
    """Least mass any coupling of (a, b) must move over a distance larger than ``epsilon``."""
    far = (distances > epsilon).astype(np.float64)
    if not far.any():
        return 0.0
    return max(float(ot.emd2(a, b, far)), 0.0)


def _prokhorov_exact(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """
    d_P = inf {eps : some coupling moves mass at most eps farther than eps}.

    The deficiency delta(eps) is a nonincreasing step function that jumps only at pairwise
    distances D_k, so d_P = min_k max(D_k, delta(D_k)) with D_0 = 0. The first k with
    delta(D_k) <= D_k is found by bisection; the answer is min(D_k, delta(D_{k-1})).
    """
    a = mu.weights / mu.weights.sum()
    b = nu.weights / nu.weights.sum()
    distances = cdist(mu.atoms, nu.atoms)
    candidates = np.unique(np.concatenate([[0.0], distances.ravel()]))
    cache: Dict[int, float] = {}

    def deficiency(k: int) -> float:
        if k not in cache:
            cache[k] = transport_deficiency(a, b, distances, candidates[k])
        return cache[k]

    def feasible(k: int) -> bool:
        return deficiency(k) <= candidates[k] + WEIGHT_TOL

    low, high = 0, candidates.size - 1
    while low < high:
        mid = (low + high) // 2
        if feasible(mid):
            high = mid
        else:
            low = mid + 1
    if low == 0:
        return 0.0
    return min(1.0, candidates[low], deficiency(low - 1))


def prokhorov(mu: EmpiricalMeasure, nu: EmpiricalMeasure, mode: str = "auto", p: float = 1.0) -> DistanceReport:
    """
    Prokhorov-Levy distance between two finite measures.

    ``mode="exact"`` evaluates the definition for combined supports up to
    MAX_PROKHOROV_ATOMS atoms; larger inputs degrade to ``mode="bound"``, which returns
    min(1, W_p^(p / (p + 1))). At p = 1 the bound reads d_P^2 <= W_1.
    """
    if mode not in ("auto", "exact", "bound"):
        raise ValueError(f"Unknown Prokhorov mode '{mode}'")
    _check_same_dimension(mu, nu)
    if mode != "bound":
        mu_c, nu_c = mu.compressed(), nu.compressed()
        if mu_c.size + nu_c.size <= MAX_PROKHOROV_ATOMS:
            return DistanceReport(value=_prokhorov_exact(mu_c, nu_c), method=DistanceMethod.PROKHOROV_GRID)
        logger.info(
            f"Combined support {mu_c.size + nu_c.size} exceeds {MAX_PROKHOROV_ATOMS} atoms; "
            "using the Wasserstein bound for the Prokhorov-Levy distance"
        )
    w = wasserstein(mu, nu, p).value
    return DistanceReport(
        value=min(1.0, w ** (p / (p + 1.0))), method=DistanceMethod.PROKHOROV_BOUND, p=p
    )


def moment(mu: EmpiricalMeasure, p: float, center: Optional[Any] = None) -> float:
    """sum_i w_i ||atom_i - center||^p."""
    if p < 1:
        raise ValueError(f"Moment order must be >= 1, got {p}")
    center = np.zeros(mu.dimension) if center is None else np.asarray(center, dtype=np.float64).reshape(-1)
    if center.shape[0] != mu.dimension:
        raise DimensionMismatchError(f"Center has dimension {center.shape[0]}, measure has {mu.dimension}")
    radii = np.linalg.norm(mu.atoms - center, axis=1)
    return float(mu.weights @ radii ** p)


def tightness_profile(mu: EmpiricalMeasure, center: Optional[Any], radii: Sequence[float]) -> List[Tuple[float, float]]:
    """Mass of the closed ball B(center, r) for each radius r (ascending)."""
    radii = [float(r) for r in radii]
    if any(r < 0 for r in radii) or any(b < a for a, b in zip(radii, radii[1:])):
        raise ValueError("Radii must be nonnegative and sorted ascending")
    center = np.zeros(mu.dimension) if center is None else np.asarray(center, dtype=np.float64).reshape(-1)
    if center.shape[0] != mu.dimension:
        raise DimensionMismatchError(f"Center has dimension {center.shape[0]}, measure has {mu.dimension}")
    distances = np.linalg.norm(mu.atoms - center, axis=1)
    profile = []
    mass = 0.0
    for r in radii:
        # running max keeps the profile monotone under rounding
        mass = max(mass, min(1.0, float(mu.weights[distances <= r].sum())))
        profile.append((r, mass))
    return profile
