"""
Experiment pipeline: configuration -> operator family -> ensemble run -> diagnostics.
"""
import os
import re
import time

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from .artifacts import ArtifactWriter, dumps_json
from .diagnostics import (
    bounded_expectation_check,
    cesaro_convergence_check,
    geometric_rate_fit,
    moment_summary,
    residual_histogram,
    split_window_histograms,
    tightness_summary,
)
from .engine import EnsembleHistory, initial_law_from_config, run_ensemble
from .measures import EmpiricalMeasure
from .problems import (
    AffineFeasibilityProblem,
    NoisyHyperplaneFamily,
    NoisySgdProblem,
    ProblemRegistry,
    contraction_rate_estimate,
    cyclic_contraction_bound,
    estimate_c,
    estimate_d,
)
from .sampling import SEED_LIMIT, IndexSampler
from .. import __version__
from ..shared import logger
from ..shared.errors import ConfigError, RFIError
from ..shared.models import OUTPUT_SCHEMA_VERSION, ExperimentConfig, RunManifest

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")
# Offset between the seed of a run and the seed of its long reference run
REFERENCE_SEED_OFFSET = 0x9E3779B97F4A7C15

_TOML_LINE = re.compile(r"at line (\d+)")


def list_examples() -> List[str]:
    """Names of the bundled example configurations."""
    if not os.path.isdir(CONFIG_DIR):
        return []
    return sorted(name[:-5] for name in os.listdir(CONFIG_DIR) if name.endswith(".toml"))


def resolve_config(name_or_path: str) -> str:
    """Path of a config file, or of the bundled example with that name."""
    if os.path.isfile(name_or_path):
        return name_or_path
    bundled = os.path.join(CONFIG_DIR, f"{name_or_path}.toml")
    if os.path.isfile(bundled):
        return bundled
    raise ConfigError(
        f"No config file or bundled example named '{name_or_path}' "
        f"(examples: {', '.join(list_examples())})"
    )


def _locate(text: str, loc: Tuple[Any, ...]) -> Optional[int]:
    """Best line number for a validation error location; None when no key matches."""
    lines = text.splitlines()
    position = 0
    found = None
    for part in loc:
        if not isinstance(part, str):
            continue
        pattern = re.compile(
            rf"^\s*(\[\[?[^\]]*\b{re.escape(part)}\b[^\]]*\]\]?|{re.escape(part)}\s*=)"
        )
        for number in range(position, len(lines)):
            if pattern.match(lines[number]):
                found = number + 1
                position = number
                break
    return found


def parse_config(text: str, path: Optional[str] = None) -> ExperimentConfig:
    """
    Parse and validate TOML config text.

    Raises:
        ConfigError: with the offending line when it can be located.
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        match = _TOML_LINE.search(str(e))
        raise ConfigError(f"Invalid TOML: {str(e)}", int(match.group(1)) if match else None, path) from e
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        loc = tuple(first["loc"])
        where = ".".join(str(part) for part in loc) or "config"
        message = f"{where}: {first['msg']}"
        if e.error_count() > 1:
            message += f" (and {e.error_count() - 1} more error(s))"
        raise ConfigError(message, _locate(text, loc), path) from e


def load_config(name_or_path: str) -> ExperimentConfig:
    """Load a config file or bundled example by name."""
    path = resolve_config(name_or_path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"Cannot read config: {str(e)}", path=path) from e
    return parse_config(text, path)


@dataclass
class ExperimentResult:
    """Everything one run produced."""
    config: ExperimentConfig
    history: Optional[EnsembleHistory] = None
    diagnostics: List[Dict[str, Any]] = field(default_factory=list)
    errors: List[str] = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def time_budget_exceeded(self) -> bool:
        return self.history is not None and self.history.time_budget_exceeded


class ExperimentRunner:
    """
    Runs one experiment described by an ExperimentConfig.
    Diagnostics are run independently; a failing diagnostic is recorded and the others
    still run.
    """
    def __init__(self, config: Union[ExperimentConfig, Dict[str, Any]]):
        """
        Initialize the runner with an experiment configuration.
        The configuration can be a dictionary or an ExperimentConfig object.
        """
        if isinstance(config, dict):
            try:
                self.config = ExperimentConfig.model_validate(config)
            except ValidationError as e:
                raise ConfigError(f"Invalid experiment configuration: {str(e)}") from e
        elif isinstance(config, ExperimentConfig):
            self.config = config
        else:
            raise TypeError("config must be a dict or ExperimentConfig object")

        self.family = None
        self.sampler = None
        self.initial_law = None
        self._load_problem()

    def _load_problem(self):
        """Build the operator family, sampler and initial law from the configuration."""
        config = self.config
        try:
            self.family = ProblemRegistry.create(config.problem, config.dimension)
            self.initial_law = initial_law_from_config(config.initial, config.dimension)
            self.sampler = IndexSampler.for_family(config.seed, self.family, config.coupled)
        except (ValueError, RFIError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"Error building problem '{config.problem.kind}': {str(e)}") from e

    @property
    def center(self) -> Optional[np.ndarray]:
        """Center of the second-moment summaries: the minimizer for SGD, else the origin."""
        if isinstance(self.family, NoisySgdProblem):
            return self.family.minimizer
        return None

    def execute(self, threads: Optional[int] = None) -> ExperimentResult:
        """Run the ensemble and all configured diagnostics."""
        config = self.config
        started = time.monotonic()
        result = ExperimentResult(config=config)
        logger.info(f"Starting experiment '{config.name}'")
        result.history = run_ensemble(
            self.initial_law,
            config.particles,
            config.iterations,
            self.sampler,
            self.family,
            thinning=config.thinning,
            max_snapshots=config.max_snapshots,
            threads=threads or config.threads,
            center=self.center,
            time_budget=config.time_budget,
        )
        for diagnostic in config.diagnostics:
            try:
                value = self._run_diagnostic(diagnostic, result.history)
                result.diagnostics.append({"kind": diagnostic.kind, "result": value})
            except Exception as e:
                logger.error(f"Diagnostic '{diagnostic.kind}' failed: {str(e)}")
                result.errors.append(f"{diagnostic.kind}: {type(e).__name__}: {str(e)}")
                result.diagnostics.append({"kind": diagnostic.kind, "error": str(e)})
        result.wall_clock = time.monotonic() - started
        logger.info(f"Experiment '{config.name}' finished in {result.wall_clock:.2f}s")
        return result

    def reference_measure(self, factor: int) -> EmpiricalMeasure:
        """Final measure of an independent run ``factor`` times longer than the experiment."""
        config = self.config
        seed = (config.seed + REFERENCE_SEED_OFFSET) % SEED_LIMIT
        sampler = IndexSampler(seed, self.sampler.distribution, config.coupled)
        iterations = factor * config.iterations
        history = run_ensemble(
            self.initial_law, config.particles, iterations, sampler, self.family,
            thinning=iterations, threads=config.threads,
        )
        return history.final

    def _run_diagnostic(self, diagnostic, history: EnsembleHistory) -> Any:
        kind = diagnostic.kind
        if kind == "cesaro":
            reference = None
            if diagnostic.reference_atoms is not None:
                reference = EmpiricalMeasure(diagnostic.reference_atoms, diagnostic.reference_weights)
            return cesaro_convergence_check(history, diagnostic.checkpoints, reference)
        if kind == "rate_fit":
            reference = self.reference_measure(diagnostic.reference_factor)
            fit = geometric_rate_fit(history, reference, diagnostic.window, diagnostic.p)
            return fit.model_dump(mode="json")
        if kind == "bounded_expectation":
            return bounded_expectation_check(history, diagnostic.cap)
        if kind == "residual_histogram":
            residuals = history.summary_arrays()["mean_residual"][1:]
            if diagnostic.split_halves:
                split = split_window_histograms(residuals, diagnostic.window, diagnostic.histogram)
                median = split["median_residual"]
                split["relative_wasserstein_1"] = split["wasserstein_1"] / median if median > 0 else 0.0
                return split
            return residual_histogram(residuals, diagnostic.window, diagnostic.histogram)
        if kind == "tightness":
            return tightness_summary(history, diagnostic.radii, diagnostic.center)
        if kind == "moments":
            return moment_summary(history, diagnostic.orders, diagnostic.center)
        if kind == "noise_constants":
            return self._noise_constants(diagnostic)
        if kind == "contraction_rate":
            rate = contraction_rate_estimate(
                self.family, self.sampler, diagnostic.pair_samples, diagnostic.noise_samples, self.config.seed
            )
            return {"rate": rate}
        raise ValueError(f"Unknown diagnostic kind '{kind}'")

    def _noise_constants(self, diagnostic) -> Dict[str, Any]:
        family = self.family
        if not isinstance(family, (NoisyHyperplaneFamily, AffineFeasibilityProblem)):
            raise ValueError(f"Noise constants are defined for hyperplane problems, not '{family.kind}'")
        seed = self.config.seed
        c = estimate_c(family, diagnostic.sphere_samples, diagnostic.noise_samples, seed)
        result = {"c": c, "rate_bound": float(np.sqrt(max(1.0 - c, 0.0)))}
        if isinstance(family, NoisyHyperplaneFamily):
            result["d"] = estimate_d(family, diagnostic.noise_samples, seed)
        elif family.sweep == "cyclic":
            result["d"] = [estimate_d(row, diagnostic.noise_samples, seed + j) for j, row in enumerate(family.rows)]
            result["cyclic_contraction_bound"] = cyclic_contraction_bound(c, len(family.rows))
        return result

    def problem_summary(self, history: Optional[EnsembleHistory]) -> Dict[str, Any]:
        """Family description plus the boundedness check for SGD problems."""
        info = self.family.describe()
        if isinstance(self.family, NoisySgdProblem) and history is not None and history.summaries:
            summaries = history.summaries
            bound = self.family.second_moment_bound(summaries[0].second_moment)
            worst = max(summaries, key=lambda s: s.second_moment - 3.0 * s.second_moment_se)
            info["second_moment"] = {
                "bound": bound,
                "optimal_value": self.family.optimal_value,
                "max": max(s.second_moment for s in summaries),
                "worst_k": worst.k,
                "within_bound": worst.second_moment - 3.0 * worst.second_moment_se <= bound,
            }
        return info

    def diagnostics_document(self, result: ExperimentResult) -> Dict[str, Any]:
        history = result.history
        return {
            "schema_version": OUTPUT_SCHEMA_VERSION,
            "experiment": self.config.name,
            "iterations_completed": history.last_k if history is not None else 0,
            "problem": self.problem_summary(history),
            "diagnostics": result.diagnostics,
        }

    def run_to_directory(self, directory: Optional[str] = None,
                         threads: Optional[int] = None) -> Tuple[RunManifest, ExperimentResult]:
        """
        Run the experiment and write its artifacts and manifest.

        A runtime failure still writes a manifest, flagged ``partial``, before the error
        propagates.
        """
        config = self.config
        writer = ArtifactWriter(directory or config.output.directory)
        started = time.monotonic()
        result = ExperimentResult(config=config)
        try:
            result = self.execute(threads)
            writer.write_history(result.history, config.output.formats, config.output.snapshot_every)
            writer.write_text("diagnostics.json", dumps_json(self.diagnostics_document(result)))
        except Exception as e:
            result.errors.append(f"run: {type(e).__name__}: {str(e)}")
            writer.write_manifest(config, __version__, time.monotonic() - started, result.errors,
                                  result.time_budget_exceeded)
            raise
        manifest = writer.write_manifest(config, __version__, time.monotonic() - started, result.errors,
                                         result.time_budget_exceeded)
        return manifest, result
