"""Robust joint-block-sparse Bayesian recovery and subject ranking."""

from .baselines import L1Config, rank_isr, rank_src, solve_l1, solve_reweighted_l1
from .errors import (
    DimensionMismatchError,
    InvalidInputError,
    NumericalError,
    RSMError,
    SubjectAbsentError,
)
from .gallery import Gallery, ProbeSet, build_gallery, remove_subject, select_subject
from .inference import Hyperparams, InferenceConfig, PosteriorState, init_state, run_inference
from .ranking import RankingConfig, RankingResult, classify_src, rank_subjects
from .synth import GeneratorConfig, compute_cmc, generate_instance, run_experiment

__version__ = "0.1.0"

__all__ = [
    "DimensionMismatchError",
    "Gallery",
    "GeneratorConfig",
    "Hyperparams",
    "InferenceConfig",
    "InvalidInputError",
    "L1Config",
    "NumericalError",
    "PosteriorState",
    "ProbeSet",
    "RSMError",
    "RankingConfig",
    "RankingResult",
    "SubjectAbsentError",
    "build_gallery",
    "classify_src",
    "compute_cmc",
    "generate_instance",
    "init_state",
    "rank_isr",
    "rank_src",
    "rank_subjects",
    "remove_subject",
    "run_experiment",
    "run_inference",
    "select_subject",
    "solve_l1",
    "solve_reweighted_l1",
]
