"""Synthetic registration benchmarks."""

from .config import ExperimentConfig, load_config
from .perturb import PerturbationSpec, perturb, random_rotation, synthesize_partial_view
from .runner import BenchReport, TrialRecord, run_experiment
from .shapes import primitive_cloud, primitive_mesh

__all__ = [
    "ExperimentConfig",
    "load_config",
    "PerturbationSpec",
    "perturb",
    "random_rotation",
    "synthesize_partial_view",
    "BenchReport",
    "TrialRecord",
    "run_experiment",
    "primitive_cloud",
    "primitive_mesh",
]
