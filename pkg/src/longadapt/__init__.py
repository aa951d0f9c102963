"""Longitudinal personalization of affect classifiers by supervised domain adaptation."""

from .adaptation import AdaptationConfig, select_alpha, train_personalized, train_personalized_uda
from .classifiers import ModelSpec, TrainedModel, train_classifier
from .dataset import FeatureSchema, SessionData, StudyManifest, load_manifest, load_session
from .preprocess import WindowConfig, preprocess_study
from .protocol import plan_round, run_experiment, run_study, weighted_average
from .synthgen import SynthConfig, bayes_auroc, generate_study

__version__ = "0.1.0"

__all__ = [
    "AdaptationConfig", "FeatureSchema", "ModelSpec", "SessionData", "StudyManifest", "SynthConfig",
    "TrainedModel", "WindowConfig", "bayes_auroc", "generate_study", "load_manifest", "load_session",
    "plan_round", "preprocess_study", "run_experiment", "run_study", "select_alpha", "train_classifier",
    "train_personalized", "train_personalized_uda", "weighted_average",
]
