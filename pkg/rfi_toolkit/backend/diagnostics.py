"""
Convergence diagnostics over trajectory logs and ensemble histories.
"""
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .engine import CoupledPairProfile, EnsembleHistory, cesaro_pool
from .measures import EmpiricalMeasure, moment, tightness_profile, wasserstein
from .operators import BaseOperator, as_point
from ..shared import logger
from ..shared.errors import InsufficientDataError, OrbitEscapeError
from ..shared.models import (
    BoundedExpectationReport,
    CesaroCheckpoint,
    Histogram,
    HistogramSpec,
    MonotonicityReport,
    RateFit,
    ResidualBound,
)

# Fraction of the horizon skipped by the default rate-fit window
TRANSIENT_FRACTION = 0.1
# Upper limit on the number of histogram bins; rules that ask for more fall back to it
MAX_BINS = 10_000
ESCAPE_TOL = 1e-12


def _indexed_measures(snapshots: Any) -> List[Tuple[int, EmpiricalMeasure]]:
    if isinstance(snapshots, EnsembleHistory):
        return list(snapshots)
    items = list(snapshots)
    if items and isinstance(items[0], tuple):
        return [(int(k), m) for k, m in items]
    return list(enumerate(items))


def geometric_rate_fit(snapshots: Any, reference: EmpiricalMeasure,
                       window: Optional[Tuple[int, int]] = None, p: float = 2.0) -> RateFit:
    """
    Fit W_p(mu_k, reference) ~ C r^k by least squares on log W_p over ``window``.

    ``snapshots`` is an EnsembleHistory, a list of (k, measure) pairs or a plain list
    indexed by k. The default window skips the first 10% of the horizon. If a distance in
    the window is zero the window is cut just before it and the fit is marked ``shrunk``.

    Raises:
        InsufficientDataError: if fewer than three iterations remain in the window.
    """
    indexed = _indexed_measures(snapshots)
    if not indexed:
        raise InsufficientDataError("No snapshots to fit")
    horizon = indexed[-1][0]
    if window is None:
        window = (math.ceil(TRANSIENT_FRACTION * horizon), horizon)
    start, end = int(window[0]), int(window[1])
    if start > end:
        raise ValueError(f"Rate-fit window ({start}, {end}) is empty")
    selected = [(k, m) for k, m in indexed if start <= k <= end]

    iterations: List[int] = []
    distances: List[float] = []
    shrunk = False
    for k, measure in selected:
        value = wasserstein(measure, reference, p).value
        if value == 0.0:
            shrunk = True
            logger.warning(f"W_{p:g} to the reference vanishes at k={k}; rate-fit window cut to end at k={k - 1}")
            break
        iterations.append(k)
        distances.append(value)
    if len(iterations) < 3:
        raise InsufficientDataError(
            f"Rate fit needs at least 3 iterations with positive distance, got {len(iterations)}"
        )

    ks = np.asarray(iterations, dtype=np.float64)
    logs = np.log(np.asarray(distances))
    slope, intercept = np.polyfit(ks, logs, 1)
    predicted = slope * ks + intercept
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    ss_res = float(np.sum((logs - predicted) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateFit(
        fitted_rate=float(np.exp(slope)),
        r_squared=r_squared,
        window=(iterations[0], iterations[-1]),
        iterations=iterations,
        distances=distances,
        shrunk=shrunk,
        reference_measure=reference,
    )


def cesaro_convergence_check(history: EnsembleHistory, checkpoints: Sequence[int],
                             reference: Optional[EmpiricalMeasure] = None,
                             p: float = 1.0) -> List[CesaroCheckpoint]:
    """
    W_p between nu_k and nu_{2k} for each checkpoint k, or between nu_k and ``reference``
    when one is given.

    Raises:
        InsufficientDataError: if the history is too short for a checkpoint.
    """
    results = []
    for k in sorted(int(k) for k in checkpoints):
        if k < 1:
            raise ValueError(f"Checkpoints must be positive, got {k}")
        if reference is None and 2 * k > history.last_k:
            raise InsufficientDataError(
                f"Checkpoint {k} needs history up to {2 * k}, have {history.last_k}"
            )
        pooled = cesaro_pool(history, k).compressed()
        target = reference if reference is not None else cesaro_pool(history, 2 * k).compressed()
        distance = wasserstein(pooled, target, p).value
        logger.debug(f"Cesaro checkpoint k={k}: W_{p:g} = {distance:.6e}")
        results.append(CesaroCheckpoint(k=k, distance=distance))
    return results


def relaxation_bound(diameter: float, cumulative: float) -> float:
    """diam / sqrt(pi * sum_j lambda_j (1 - lambda_j))."""
    return diameter / math.sqrt(math.pi * cumulative)


def asymptotic_regularity_check(operator: BaseOperator, lam: Union[float, Sequence[float]], x0: Any,
                                iterations: int, diameter: float,
                                center: Optional[Any] = None) -> List[ResidualBound]:
    """
    Run x_m = (1 - lambda_m) x_{m-1} + lambda_m T x_{m-1} and compare ||x_m - T x_m|| with
    diam / sqrt(pi sum_{j<=m} lambda_j (1 - lambda_j)).

    ``lam`` is a constant in (0, 1) or a sequence of at least ``iterations`` values.
    The orbit must stay within diam / 2 of ``center`` (the origin by default).

    Raises:
        OrbitEscapeError: if an iterate leaves the declared region; ``report`` holds the
            records computed so far.
    """
    if iterations < 1:
        raise ValueError(f"Need at least one iteration, got {iterations}")
    if not diameter > 0.0:
        raise ValueError(f"Diameter must be positive, got {diameter}")
    if isinstance(lam, (int, float)):
        lambdas = np.full(iterations, float(lam))
    else:
        lambdas = np.asarray(lam, dtype=np.float64)
        if lambdas.shape[0] < iterations:
            raise ValueError(f"Got {lambdas.shape[0]} relaxation parameters for {iterations} iterations")
    if np.any(lambdas[:iterations] <= 0.0) or np.any(lambdas[:iterations] >= 1.0):
        raise ValueError("Relaxation parameters must lie in (0, 1)")

    x = as_point(x0, operator.dimension)
    center = np.zeros(operator.dimension) if center is None else as_point(center, operator.dimension)
    radius = diameter / 2.0
    report: List[ResidualBound] = []
    tx = operator(x)
    cumulative = 0.0
    for m in range(1, iterations + 1):
        lam_m = float(lambdas[m - 1])
        x = (1.0 - lam_m) * x + lam_m * tx
        if np.linalg.norm(x - center) > radius + ESCAPE_TOL:
            raise OrbitEscapeError(
                f"Iterate {m} left the ball of diameter {diameter} around {center.tolist()}", report
            )
        tx = operator(x)
        cumulative += lam_m * (1.0 - lam_m)
        residual = float(np.linalg.norm(x - tx))
        bound = relaxation_bound(diameter, cumulative)
        report.append(ResidualBound(m=m, residual=residual, bound=bound, holds=residual < bound))
    failures = sum(not r.holds for r in report)
    if failures:
        logger.warning(f"Asymptotic regularity bound failed at {failures} of {iterations} iterations")
    return report


def bounded_expectation_check(history: EnsembleHistory, cap: float) -> BoundedExpectationReport:
    """sup_k of the ensemble-mean norm and whether it stays below ``cap``."""
    if not history.summaries:
        raise InsufficientDataError("History is empty")
    norms = [s.mean_norm for s in history.summaries]
    best = int(np.argmax(norms))
    sup = float(norms[best])
    return BoundedExpectationReport(
        sup_mean_norm=sup, argmax_k=history.summaries[best].k, cap=float(cap), passed=sup <= cap
    )


def _histogram_edges(data: np.ndarray, spec: HistogramSpec) -> np.ndarray:
    low, high = float(data.min()), float(data.max())
    if spec.value_range is not None:
        low, high = min(low, spec.value_range[0]), max(high, spec.value_range[1])
    if low == high:
        half = spec.width / 2.0 if spec.rule == "fixed_width" else 0.5
        return np.array([low - half, high + half])
    if spec.rule == "fixed_width":
        bins = math.ceil((high - low) / spec.width)
        if bins > MAX_BINS:
            logger.warning(f"Bin width {spec.width} needs {bins} bins; using {MAX_BINS} bins")
            return np.linspace(low, high, MAX_BINS + 1)
        edges = low + spec.width * np.arange(max(bins, 1) + 1)
        if edges[-1] < high:
            edges = np.append(edges, edges[-1] + spec.width)
        return edges
    if spec.rule == "fixed_count":
        return np.linspace(low, high, spec.count + 1)
    edges = np.histogram_bin_edges(data, bins="fd", range=(low, high))
    if edges.size - 1 > MAX_BINS:
        logger.warning(f"Freedman-Diaconis asks for {edges.size - 1} bins; using {MAX_BINS} bins")
        edges = np.linspace(low, high, MAX_BINS + 1)
    return edges


def _window_residuals(log: Any, window: Optional[Tuple[int, int]]) -> Tuple[np.ndarray, Tuple[int, int]]:
    residuals = np.asarray(getattr(log, "residuals", log), dtype=np.float64).reshape(-1)
    if window is None:
        window = (0, residuals.shape[0])
    start, end = int(window[0]), int(window[1])
    if start < 0 or end > residuals.shape[0]:
        raise ValueError(f"Window ({start}, {end}) lies outside the {residuals.shape[0]} logged residuals")
    data = residuals[start:end]
    data = data[np.isfinite(data)]
    if data.size == 0:
        raise InsufficientDataError(f"Window ({start}, {end}) holds no residuals")
    return data, (start, end)


def residual_histogram(log: Any, window: Optional[Tuple[int, int]] = None,
                       spec: Optional[HistogramSpec] = None,
                       edges: Optional[Sequence[float]] = None) -> Histogram:
    """
    Histogram of the step lengths ||x_{k+1} - x_k|| for k in [window[0], window[1]).

    ``log`` is a TrajectoryLog or anything with a ``residuals`` array (or the array itself).
    Explicit ``edges`` override the binning rule; they must cover the data.

    Raises:
        InsufficientDataError: if the window is empty.
    """
    spec = spec or HistogramSpec()
    data, window = _window_residuals(log, window)
    if edges is None:
        edges = _histogram_edges(data, spec)
        rule = spec.rule
    else:
        edges = np.asarray(edges, dtype=np.float64)
        if data.min() < edges[0] or data.max() > edges[-1]:
            raise ValueError("Histogram edges do not cover the residuals")
        rule = "explicit"
    counts, _ = np.histogram(data, bins=edges)
    if int(counts.sum()) != data.size:
        raise ValueError(f"Histogram lost samples: {int(counts.sum())} of {data.size} binned")
    return Histogram(edges=edges.tolist(), counts=counts.tolist(), window=window, rule=rule)


def histogram_measure(histogram: Histogram) -> EmpiricalMeasure:
    """Empirical measure with the bin midpoints as atoms, weighted by the counts."""
    pairs = [(m, c) for m, c in zip(histogram.midpoints, histogram.counts) if c > 0]
    if not pairs:
        raise ValueError("An empty histogram has no measure")
    atoms, counts = zip(*pairs)
    return EmpiricalMeasure.from_counts(np.array(atoms).reshape(-1, 1), counts)


def histogram_wasserstein(first: Histogram, second: Histogram) -> float:
    """
    W_1 between two histograms on the same edges, with mass spread uniformly within bins.

    W_1 is the integral of |F_1 - F_2|; both CDFs are piecewise linear on the common edges.
    """
    if not np.array_equal(first.edges, second.edges):
        raise ValueError("Histograms must share their edges")
    if first.total == 0 or second.total == 0:
        raise InsufficientDataError("Cannot compare an empty histogram")
    edges = np.asarray(first.edges)
    widths = np.diff(edges)
    cdf_gap = np.concatenate([[0.0], np.cumsum(first.counts) / first.total - np.cumsum(second.counts) / second.total])
    left, right = cdf_gap[:-1], cdf_gap[1:]
    same_sign = left * right >= 0.0
    total = np.where(
        same_sign,
        widths * (np.abs(left) + np.abs(right)) / 2.0,
        widths * (left ** 2 + right ** 2) / (2.0 * np.maximum(np.abs(left) + np.abs(right), 1e-300)),
    )
    return float(total.sum())


def split_window_histograms(log: Any, window: Optional[Tuple[int, int]] = None,
                            spec: Optional[HistogramSpec] = None) -> Dict[str, Any]:
    """
    Histograms of the two halves of ``window`` on common edges, their W_1 distance and
    the median residual over the whole window.
    """
    spec = spec or HistogramSpec()
    data, (start, end) = _window_residuals(log, window)
    if end - start < 2:
        raise InsufficientDataError("A split window needs at least two residuals")
    edges = _histogram_edges(data, spec)
    middle = start + (end - start) // 2
    first = residual_histogram(log, (start, middle), edges=edges)
    second = residual_histogram(log, (middle, end), edges=edges)
    return {
        "first": first,
        "second": second,
        "wasserstein_1": histogram_wasserstein(first, second),
        "median_residual": float(np.median(data)),
    }


def coupled_monotonicity_check(profile: CoupledPairProfile, alpha: Optional[float] = None,
                               tolerance: float = 1e-9) -> MonotonicityReport:
    """
    Check that ||X_k^x - X_k^y|| never increases along a coupled pair and, given ``alpha``,
    that each step satisfies the averaged inequality up to a relative ``tolerance``.
    """
    distances = profile.distances
    increases = distances[1:] - distances[:-1]
    allowed = tolerance * distances[:-1] + 1e-12
    violations = [int(k) for k in np.flatnonzero(increases > allowed)]
    min_slack = None
    if alpha is not None:
        slack = profile.averaged_slack(alpha)
        scale = tolerance * (distances[:-1] ** 2 + distances[1:] ** 2 + profile.discrepancies) + 1e-12
        min_slack = float(slack.min())
        violations = sorted(set(violations) | {int(k) for k in np.flatnonzero(slack < -scale)})
    return MonotonicityReport(
        holds=not violations,
        worst_increase=float(max(increases.max(), 0.0)),
        violations=violations,
        min_averaged_slack=min_slack,
    )


def tightness_summary(history: EnsembleHistory, radii: Sequence[float],
                      center: Optional[Any] = None) -> Dict[str, Any]:
    """
    Smallest mass of B(center, r) over all stored snapshots for each radius.

    A family is tight when this mass tends to 1 as r grows.
    """
    worst = {float(r): 1.0 for r in radii}
    for _, measure in history:
        for r, mass in tightness_profile(measure, center, radii):
            worst[r] = min(worst[r], mass)
    return {"radii": list(worst.keys()), "min_mass": list(worst.values())}


def moment_summary(history: EnsembleHistory, orders: Sequence[float],
                   center: Optional[Any] = None) -> Dict[str, Any]:
    """Moments of the final measure and their supremum over stored snapshots."""
    final = history.final
    result = {"orders": [float(p) for p in orders], "final": [], "sup": []}
    for p in orders:
        result["final"].append(moment(final, p, center))
        result["sup"].append(max(moment(measure, p, center) for _, measure in history))
    return result
