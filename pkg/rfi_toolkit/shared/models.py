"""
Data models and schemas used throughout the toolkit.
These Pydantic models define experiment configurations, diagnostic reports and run manifests.
"""
from enum import Enum
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_serializer, model_validator


OUTPUT_SCHEMA_VERSION = "1"


class NoiseSpec(BaseModel):
    """Noise law for one random component (vector ξ or scalar ζ)."""
    kind: Literal["none", "gaussian", "uniform", "ball"] = "none"
    scale: float = Field(default=0.0, ge=0.0)
    # location shift added to every coordinate
    mean: float = 0.0


class HistogramSpec(BaseModel):
    """Binning rule for residual histograms."""
    rule: Literal["fixed_width", "fixed_count", "freedman_diaconis"] = "freedman_diaconis"
    width: Optional[float] = Field(default=None, gt=0.0)
    count: Optional[int] = Field(default=None, ge=1)
    # None means the observed data range; an explicit range is widened to cover the data
    value_range: Optional[Tuple[float, float]] = None

    @model_validator(mode="after")
    def _check_rule(self):
        if self.rule == "fixed_width" and self.width is None:
            raise ValueError("fixed_width histograms need 'width'")
        if self.rule == "fixed_count" and self.count is None:
            raise ValueError("fixed_count histograms need 'count'")
        if self.value_range is not None and self.value_range[0] > self.value_range[1]:
            raise ValueError("value_range must be (low, high) with low <= high")
        return self


class DistanceMethod(str, Enum):
    """Algorithm that produced a distance value."""
    ASSIGNMENT = "assignment"
    SORTED_1D = "sorted_1d"
    NETWORK_SIMPLEX = "network_simplex"
    PROKHOROV_GRID = "prokhorov_grid"
    PROKHOROV_BOUND = "prokhorov_bound"


class DistanceReport(BaseModel):
    """Value of a distance between two measures with its method tag and optional coupling."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    value: float = Field(ge=0.0)
    method: DistanceMethod
    p: Optional[float] = None
    coupling: Optional[np.ndarray] = None

    @field_serializer("coupling")
    def _serialize_coupling(self, coupling: Optional[np.ndarray]):
        return None if coupling is None else coupling.tolist()


class AveragedCheck(BaseModel):
    """Outcome of an averaged (or nonexpansive) inequality check at one pair of points."""
    holds: bool
    slack: float
    tolerance: float


class RateFit(BaseModel):
    """Least-squares geometric rate fitted to log W2(mu_k, reference)."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    fitted_rate: float = Field(gt=0.0)
    r_squared: float
    window: Tuple[int, int]
    iterations: List[int] = Field(default_factory=list)
    distances: List[float] = Field(default_factory=list)
    shrunk: bool = False
    reference_measure: Optional[Any] = Field(default=None, exclude=True)


class CesaroCheckpoint(BaseModel):
    """Distance of the pooled measure nu_k to its comparison measure."""
    k: int
    distance: float


class ResidualBound(BaseModel):
    """Relaxed-iteration residual against the universal asymptotic regularity bound."""
    m: int
    residual: float
    bound: float
    holds: bool


class BoundedExpectationReport(BaseModel):
    """Largest ensemble-mean norm over a history."""
    sup_mean_norm: float
    argmax_k: int
    cap: float
    passed: bool


class Histogram(BaseModel):
    """Binned residual counts."""
    edges: List[float]
    counts: List[int]
    window: Tuple[int, int]
    rule: str

    @property
    def total(self) -> int:
        return int(sum(self.counts))

    @property
    def midpoints(self) -> List[float]:
        return [(a + b) / 2.0 for a, b in zip(self.edges[:-1], self.edges[1:])]


class MonotonicityReport(BaseModel):
    """Whether distances along a coupled pair of chains never increase."""
    holds: bool
    worst_increase: float
    violations: List[int] = Field(default_factory=list)
    # smallest slack of the averaged inequality when an alpha was supplied
    min_averaged_slack: Optional[float] = None


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------

class AffineMapConfig(BaseModel):
    """One deterministic affine map x -> M x + offset."""
    matrix: List[List[float]]
    offset: Optional[List[float]] = None


class AffineMapsProblem(BaseModel):
    """Finite family of affine maps selected with fixed probabilities."""
    kind: Literal["affine_maps"] = "affine_maps"
    maps: List[AffineMapConfig] = Field(min_length=1)
    weights: Optional[List[float]] = None


class NoisyHyperplaneProblem(BaseModel):
    """Exact projections onto randomly perturbed hyperplanes through an anchor."""
    kind: Literal["noisy_hyperplane"] = "noisy_hyperplane"
    normal: List[float]
    anchor: List[float]
    xi_noise: NoiseSpec = Field(default_factory=NoiseSpec)
    zeta_noise: NoiseSpec = Field(default_factory=NoiseSpec)


class AffineFeasibilityProblemConfig(BaseModel):
    """Noisy cyclic (or randomized) projections for a consistent linear system."""
    kind: Literal["affine_feasibility"] = "affine_feasibility"
    rows: int = Field(ge=1)
    matrix: Optional[List[List[float]]] = None
    rhs: Optional[List[float]] = None
    generator_seed: int = Field(default=0, ge=0)
    # generated systems use a solution A^T w with w ~ N(0, solution_scale^2)
    solution_scale: float = Field(default=1.0, gt=0.0)
    # anchors are projections of (solution + anchor_spread * N(0, I)) onto each row
    anchor_spread: float = Field(default=1.0, ge=0.0)
    xi_noise: NoiseSpec = Field(default_factory=NoiseSpec)
    zeta_noise: NoiseSpec = Field(default_factory=NoiseSpec)
    sweep: Literal["cyclic", "uniform_random"] = "cyclic"


class SgdProblemConfig(BaseModel):
    """Gradient steps on 1/2 x^T Q x with linear noise eta . x."""
    kind: Literal["sgd"] = "sgd"
    q_diagonal: Optional[List[float]] = None
    q_matrix: Optional[List[List[float]]] = None
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    step: float = Field(gt=0.0)
    allow_outside_theory: bool = False

    @model_validator(mode="after")
    def _check_quadratic(self):
        if (self.q_diagonal is None) == (self.q_matrix is None):
            raise ValueError("exactly one of 'q_diagonal' or 'q_matrix' is required")
        return self


class HalfspaceConfig(BaseModel):
    """Halfspace {<a + xi, x> <= b + zeta} with optional noise."""
    normal: List[float]
    offset: float
    xi_noise: NoiseSpec = Field(default_factory=NoiseSpec)
    zeta_noise: NoiseSpec = Field(default_factory=NoiseSpec)


class DouglasRachfordProblemConfig(BaseModel):
    """Stochastic Douglas-Rachford for two noisy halfspace indicators."""
    kind: Literal["douglas_rachford"] = "douglas_rachford"
    f: HalfspaceConfig
    g: HalfspaceConfig


class ProxConfig(BaseModel):
    """Backward part of a forward-backward step."""
    kind: Literal["zero", "l1", "halfspace", "ball"] = "zero"
    weight: float = Field(default=1.0, gt=0.0)
    normal: Optional[List[float]] = None
    offset: Optional[float] = None
    center: Optional[List[float]] = None
    radius: Optional[float] = Field(default=None, gt=0.0)


class ForwardBackwardProblemConfig(BaseModel):
    """Stochastic forward-backward splitting with a noisy quadratic smooth part."""
    kind: Literal["forward_backward"] = "forward_backward"
    q_diagonal: List[float]
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    step: float = Field(gt=0.0)
    prox: ProxConfig = Field(default_factory=ProxConfig)


ProblemConfig = Annotated[
    Union[
        AffineMapsProblem,
        NoisyHyperplaneProblem,
        AffineFeasibilityProblemConfig,
        SgdProblemConfig,
        DouglasRachfordProblemConfig,
        ForwardBackwardProblemConfig,
    ],
    Field(discriminator="kind"),
]


class DiracLawConfig(BaseModel):
    kind: Literal["dirac"] = "dirac"
    # None means the origin
    point: Optional[List[float]] = None


class GaussianLawConfig(BaseModel):
    kind: Literal["gaussian"] = "gaussian"
    mean: Optional[List[float]] = None
    scale: float = Field(default=1.0, gt=0.0)


class UniformBoxLawConfig(BaseModel):
    kind: Literal["uniform_box"] = "uniform_box"
    low: float = -1.0
    high: float = 1.0

    @model_validator(mode="after")
    def _check_bounds(self):
        if not self.low < self.high:
            raise ValueError("uniform_box needs low < high")
        return self


InitialLawConfig = Annotated[
    Union[DiracLawConfig, GaussianLawConfig, UniformBoxLawConfig],
    Field(discriminator="kind"),
]


class CesaroDiagnosticConfig(BaseModel):
    kind: Literal["cesaro"] = "cesaro"
    checkpoints: List[int] = Field(min_length=1)
    reference_atoms: Optional[List[List[float]]] = None
    reference_weights: Optional[List[float]] = None


class RateFitDiagnosticConfig(BaseModel):
    kind: Literal["rate_fit"] = "rate_fit"
    window: Optional[Tuple[int, int]] = None
    reference_factor: int = Field(default=10, ge=1)
    p: float = Field(default=2.0, ge=1.0)


class BoundedExpectationDiagnosticConfig(BaseModel):
    kind: Literal["bounded_expectation"] = "bounded_expectation"
    cap: float = Field(gt=0.0)


class ResidualHistogramDiagnosticConfig(BaseModel):
    kind: Literal["residual_histogram"] = "residual_histogram"
    window: Optional[Tuple[int, int]] = None
    histogram: HistogramSpec = Field(default_factory=HistogramSpec)
    split_halves: bool = True


class TightnessDiagnosticConfig(BaseModel):
    kind: Literal["tightness"] = "tightness"
    radii: List[float] = Field(min_length=1)
    center: Optional[List[float]] = None


class MomentDiagnosticConfig(BaseModel):
    kind: Literal["moments"] = "moments"
    orders: List[float] = Field(default_factory=lambda: [1.0, 2.0])
    center: Optional[List[float]] = None


class NoiseConstantsDiagnosticConfig(BaseModel):
    kind: Literal["noise_constants"] = "noise_constants"
    sphere_samples: int = Field(default=2000, ge=1)
    noise_samples: int = Field(default=20000, ge=1)


class ContractionRateDiagnosticConfig(BaseModel):
    kind: Literal["contraction_rate"] = "contraction_rate"
    pair_samples: int = Field(default=50, ge=1)
    noise_samples: int = Field(default=2000, ge=1)


DiagnosticConfig = Annotated[
    Union[
        CesaroDiagnosticConfig,
        RateFitDiagnosticConfig,
        BoundedExpectationDiagnosticConfig,
        ResidualHistogramDiagnosticConfig,
        TightnessDiagnosticConfig,
        MomentDiagnosticConfig,
        NoiseConstantsDiagnosticConfig,
        ContractionRateDiagnosticConfig,
    ],
    Field(discriminator="kind"),
]


class OutputConfig(BaseModel):
    """Where and how run artifacts are written."""
    directory: str = "results"
    formats: List[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv", "json"])
    # 0 writes only the final ensemble snapshot
    snapshot_every: int = Field(default=0, ge=0)


class ExperimentConfig(BaseModel):
    """Complete experiment configuration."""
    model_config = ConfigDict(extra="forbid")

    name: str = "Untitled Experiment"
    description: str = ""
    # Philox keys are unsigned 64-bit integers
    seed: int = Field(ge=0, lt=2 ** 64)
    dimension: int = Field(ge=1)
    particles: int = Field(default=1, ge=1)
    iterations: int = Field(ge=1)
    thinning: int = Field(default=1, ge=1)
    max_snapshots: Optional[int] = Field(default=None, ge=1)
    coupled: bool = False
    threads: int = Field(default=1, ge=1)
    time_budget: Optional[float] = Field(default=None, gt=0.0)
    problem: ProblemConfig
    initial: InitialLawConfig
    diagnostics: List[DiagnosticConfig] = Field(default_factory=list)
    output: OutputConfig = Field(default_factory=OutputConfig)


class RunManifest(BaseModel):
    """Record of one experiment run and the checksums of everything it wrote."""
    schema_version: str = OUTPUT_SCHEMA_VERSION
    experiment: str
    config_hash: str
    library_version: str
    outputs: Dict[str, str] = Field(default_factory=dict)
    wall_clock: float = 0.0
    status: Literal["complete", "partial"] = "complete"
    errors: List[str] = Field(default_factory=list)
    time_budget_exceeded: bool = False
