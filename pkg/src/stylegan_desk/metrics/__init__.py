from .features import extract_features
from .fid import fid, frechet_distance, gaussian_fit
from .ppl import PathLengthConfig, path_length_samples, perceptual_path_length
from .report import MetricReport, config_hash
from .separability import (ClassifierConfig, LinearSVM, SeparabilityConfig, SeparabilityResult,
                           conditional_entropy, fit_linear_svm, separability_from_logits,
                           separability_score, train_attribute_classifier)

__all__ = [
    "extract_features", "fid", "frechet_distance", "gaussian_fit", "PathLengthConfig",
    "path_length_samples", "perceptual_path_length", "MetricReport", "config_hash",
    "ClassifierConfig", "LinearSVM", "SeparabilityConfig", "SeparabilityResult",
    "conditional_entropy", "fit_linear_svm", "separability_from_logits", "separability_score",
    "train_attribute_classifier",
]
