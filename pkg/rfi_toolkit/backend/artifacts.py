"""
Artifact writing and measure files.

Every file written through an ArtifactWriter is checksummed into the run manifest.
Floats are written with 17 significant digits so that values round-trip exactly.
"""
import csv
import hashlib
import io
import json
import math
import os
from typing import Any, Dict, List, Optional

import numpy as np

from .engine import EnsembleHistory
from .measures import EmpiricalMeasure
from ..shared import logger
from ..shared.errors import ConfigError
from ..shared.models import OUTPUT_SCHEMA_VERSION, ExperimentConfig, RunManifest

MEASURE_SCHEMA = "rfi-measure/1"
MANIFEST_NAME = "manifest.json"


def format_float(value: float) -> str:
    """17 significant digits; NaN is written as an empty field."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return format(float(value), ".17g")


def _plain(value: Any) -> Any:
    """Convert numpy containers and scalars to JSON-compatible values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return _plain(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if hasattr(value, "model_dump"):
        return _plain(value.model_dump(mode="json"))
    return value


def dumps_json(data: Any) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(_plain(data), indent=2, sort_keys=True, allow_nan=False) + "\n"


def config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def trajectory_csv(history: EnsembleHistory) -> str:
    """Columns k, residual, mean_norm; the residual at k = 0 is empty."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["k", "residual", "mean_norm"])
    for summary in history.summaries:
        writer.writerow([summary.k, format_float(summary.mean_residual), format_float(summary.mean_norm)])
    return buffer.getvalue()


def measure_to_json(measure: EmpiricalMeasure, **extra: Any) -> str:
    data = {"schema": MEASURE_SCHEMA, **measure.to_dict(), **extra}
    return dumps_json(data)


def measure_to_csv(measure: EmpiricalMeasure) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["weight"] + [f"x{i + 1}" for i in range(measure.dimension)])
    for weight, atom in zip(measure.weights, measure.atoms):
        writer.writerow([format_float(weight)] + [format_float(v) for v in atom])
    return buffer.getvalue()


def save_measure(measure: EmpiricalMeasure, path: str) -> str:
    """Write ``measure`` as JSON or CSV depending on the file extension."""
    text = measure_to_csv(measure) if path.lower().endswith(".csv") else measure_to_json(measure)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    return path


def load_measure(path: str) -> EmpiricalMeasure:
    """
    Read a measure file.

    JSON files hold ``{"schema", "dimension", "atoms", "weights"}``; CSV files have a
    ``weight, x1, ..., xn`` header and one atom per row.

    Raises:
        ConfigError: if the file cannot be parsed as a measure.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"Cannot read measure file: {str(e)}", path=path) from e

    if path.lower().endswith(".csv"):
        rows = [row for row in csv.reader(io.StringIO(text)) if row]
        if len(rows) < 2 or rows[0][0].strip() != "weight":
            raise ConfigError("Measure CSV needs a 'weight, x1, ..., xn' header and at least one row", 1, path)
        try:
            values = np.array([[float(v) for v in row] for row in rows[1:]])
        except ValueError as e:
            raise ConfigError(f"Non-numeric entry in measure CSV: {str(e)}", path=path) from e
        if values.ndim != 2 or values.shape[1] != len(rows[0]):
            raise ConfigError("Measure CSV rows have inconsistent lengths", path=path)
        data = {"atoms": values[:, 1:], "weights": values[:, 0]}
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Invalid JSON: {e.msg}", e.lineno, path) from e
        if not isinstance(data, dict) or "atoms" not in data:
            raise ConfigError("Measure JSON needs an 'atoms' array", path=path)
        schema = data.get("schema", MEASURE_SCHEMA)
        if schema != MEASURE_SCHEMA:
            raise ConfigError(f"Unsupported measure schema '{schema}'", path=path)
    try:
        return EmpiricalMeasure.from_dict(data)
    except ValueError as e:
        raise ConfigError(str(e), path=path) from e


class ArtifactWriter:
    """
    Writes run outputs under one directory and records their SHA-256 checksums.
    """
    def __init__(self, directory: str):
        self.directory = directory
        os.makedirs(self.directory, exist_ok=True)
        self.outputs: Dict[str, str] = {}

    def write_text(self, relative_path: str, text: str) -> str:
        """Write ``text`` to ``relative_path`` (POSIX separators) and checksum it."""
        path = os.path.join(self.directory, *relative_path.split("/"))
        os.makedirs(os.path.dirname(path), exist_ok=True)
        payload = text.encode("utf-8")
        with open(path, "wb") as f:
            f.write(payload)
        self.outputs[relative_path] = hashlib.sha256(payload).hexdigest()
        logger.debug(f"Wrote {path}")
        return path

    def write_json(self, relative_path: str, data: Any) -> str:
        return self.write_text(relative_path, dumps_json(data))

    def write_history(self, history: EnsembleHistory, formats: List[str], snapshot_every: int = 0):
        """Trajectory CSV plus snapshot files; ``snapshot_every=0`` writes only the final one."""
        if "csv" in formats:
            self.write_text("trajectory.csv", trajectory_csv(history))
        stored = history.stored_iterations
        if snapshot_every > 0:
            chosen = [k for k in stored if k % snapshot_every == 0]
            if stored[-1] not in chosen:
                chosen.append(stored[-1])
        else:
            chosen = [stored[-1]]
        for k in chosen:
            measure = history[k]
            if "json" in formats:
                self.write_text(f"snapshots/k{k:08d}.json", measure_to_json(measure, k=k))
            if "csv" in formats:
                self.write_text(f"snapshots/k{k:08d}.csv", measure_to_csv(measure))

    def write_manifest(self, config: ExperimentConfig, library_version: str, wall_clock: float,
                       errors: Optional[List[str]] = None, time_budget_exceeded: bool = False) -> RunManifest:
        errors = list(errors or [])
        manifest = RunManifest(
            schema_version=OUTPUT_SCHEMA_VERSION,
            experiment=config.name,
            config_hash=config_hash(config),
            library_version=library_version,
            outputs=dict(sorted(self.outputs.items())),
            wall_clock=wall_clock,
            status="partial" if errors else "complete",
            errors=errors,
            time_budget_exceeded=time_budget_exceeded,
        )
        path = os.path.join(self.directory, MANIFEST_NAME)
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(dumps_json(manifest))
        return manifest
