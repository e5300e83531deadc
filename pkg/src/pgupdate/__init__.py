"""Pluri-Gaussian rapid updating of geological domain and grade models."""

from .config import PipelineConfig, ProjectConfig, load_config
from .ensemble import Ensemble, read_ensemble, write_ensemble
from .errors import ConfigError, DataError, FormatError, PgupdateError
from .esmda import AssimilationProblem, MdaSchedule, gaspari_cohn, kalman_gain, mda_update
from .gibbs import GibbsSampler
from .grid import GridSpec, extract_neighbourhood
from .gsim import simulate_conditional, simulate_prior_ensemble
from .kriging import simple_krige
from .metrics import confusion, mse_reduction, probability_and_accuracy_maps, r2
from .observations import ObservationSet, load_observations, write_observations
from .pipeline import PeriodResult, run_sequence, update_domains_period, update_grades_period
from .rbig import IterativeGaussianizer, MarginalGaussianizer, fit_forward, inverse
from .thresholds import ScoreWeights, ThresholdSearchSpace, classification_score, optimise_thresholds
from .truncation import TruncationRule, rule_proportions, thresholds_from_proportions, truncate
from .variogram import Structure, VariogramModel

__version__ = "0.1.0"

__all__ = [
    "AssimilationProblem",
    "ConfigError",
    "DataError",
    "Ensemble",
    "FormatError",
    "GibbsSampler",
    "GridSpec",
    "IterativeGaussianizer",
    "MarginalGaussianizer",
    "MdaSchedule",
    "ObservationSet",
    "PeriodResult",
    "PgupdateError",
    "PipelineConfig",
    "ProjectConfig",
    "ScoreWeights",
    "Structure",
    "ThresholdSearchSpace",
    "TruncationRule",
    "VariogramModel",
    "classification_score",
    "confusion",
    "extract_neighbourhood",
    "fit_forward",
    "gaspari_cohn",
    "inverse",
    "kalman_gain",
    "load_config",
    "load_observations",
    "mda_update",
    "mse_reduction",
    "optimise_thresholds",
    "probability_and_accuracy_maps",
    "r2",
    "read_ensemble",
    "rule_proportions",
    "run_sequence",
    "simple_krige",
    "simulate_conditional",
    "simulate_prior_ensemble",
    "thresholds_from_proportions",
    "truncate",
    "update_domains_period",
    "update_grades_period",
    "write_ensemble",
    "write_observations",
]
