"""Experiment orchestration: configs, sweeps, threshold bisection, recipes and the CLI."""

from .config import ConfigError, ExperimentConfig
from .recipes import RECIPES, RecipeResult, run_recipe
from .sweep import PhaseDiagramResult, run_phase_diagram, wilson
from .threshold import ExponentFit, ThresholdEstimate, estimate_lambda_c, fit_alpha_exponent

__all__ = ["ConfigError", "ExperimentConfig", "ExponentFit", "PhaseDiagramResult", "RECIPES",
           "RecipeResult", "ThresholdEstimate", "estimate_lambda_c", "fit_alpha_exponent",
           "run_phase_diagram", "run_recipe", "wilson"]
