"""Experiment configs, the percentile-bound pipeline and the command-line interface."""

from .algorithm1 import Algorithm1Result, level_with_tail, run_algorithm1
from .experiment import ExperimentConfig, ExperimentReport, run_experiment
from .specs import build_classifier, build_generator, class_distribution, evaluate_bound, parse_grid

__all__ = ["Algorithm1Result", "level_with_tail", "run_algorithm1", "ExperimentConfig", "ExperimentReport",
           "run_experiment", "build_classifier", "build_generator", "class_distribution", "evaluate_bound",
           "parse_grid"]
