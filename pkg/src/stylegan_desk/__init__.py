"""Style-based GAN generator, training loop and disentanglement metrics at toy scale."""

from .latent import TruncationParams, lerp, sample_z, slerp, truncate_w
from .mapping import MappingNetwork
from .synthesis import Generator, GeneratorConfig, SynthesisNetwork, adain
from .training import Trainer, TrainConfig

__version__ = "0.1.0"
__all__ = ["TruncationParams", "lerp", "sample_z", "slerp", "truncate_w", "MappingNetwork", "Generator",
           "GeneratorConfig", "SynthesisNetwork", "adain", "Trainer", "TrainConfig"]
