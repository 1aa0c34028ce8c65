"""Noise-aware configuration tuning.

Thin wrapper over the C++ core. Structured results are returned as dicts.
"""
import json

from . import _tuna
from ._tuna import (
    DegenerateInputError,
    DomainError,
    StateError,
    TunaError,
    UsageError,
    ValidationError,
    aggregate,
    apply_penalty,
    binomial,
    cluster_detection,
    detection_probability,
    min_cluster_size,
    relative_range,
)

__all__ = [
    "DegenerateInputError",
    "DomainError",
    "StateError",
    "TunaError",
    "UsageError",
    "ValidationError",
    "aggregate",
    "analyze_run",
    "apply_penalty",
    "binomial",
    "classify",
    "cluster_detection",
    "default_run_config",
    "detection_probability",
    "min_cluster_size",
    "relative_range",
    "tune",
]


def classify(samples, threshold=0.30):
    """Stability verdict for one configuration's samples."""
    return json.loads(_tuna.classify(list(samples), threshold))


def default_run_config():
    return json.loads(_tuna.default_run_config())


def tune(out_dir=None, **options):
    """Runs a tuning session. Keyword names follow the run.json fields (mode, env, seed, trials, ...)."""
    config = default_run_config()
    unknown = set(options) - set(config)
    if unknown:
        raise TypeError(f"unknown options: {sorted(unknown)}")
    config.update(options)
    config["out_dir"] = None if out_dir is None else str(out_dir)
    return json.loads(_tuna.tune(json.dumps(config)))


def analyze_run(run_dir):
    return json.loads(_tuna.analyze_run(str(run_dir)))
