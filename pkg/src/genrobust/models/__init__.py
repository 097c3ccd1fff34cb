"""Generators, classifiers and training utilities."""

from .classifiers import (ArcClassifier, CheckerboardLatent, Classifier, HalfSpaceLatent,
                          LatentClassifier, LinearClassifier, MlpClassifier, classify)
from .generators import (CircleGenerator, FunctionGenerator, Generator, IdentityGenerator,
                         LinearGenerator, MlpGenerator, generate, generator_jvp)
from .nearest import NearestNeighborWrapped, ProjectionConfig, nearest_neighbor_wrap, project_to_latent
from .serialization import load_model, model_from_dict, model_to_dict, save_model
from .training import (ArgmaxLinearOracle, CheckerboardOracle, SignOracle, TrainingConfig,
                       TrainingResult, WavyOracle, oracle_from_dict, train_mlp_classifier)

__all__ = [
    "ArcClassifier", "CheckerboardLatent", "Classifier", "HalfSpaceLatent", "LatentClassifier",
    "LinearClassifier", "MlpClassifier", "classify",
    "CircleGenerator", "FunctionGenerator", "Generator", "IdentityGenerator", "LinearGenerator",
    "MlpGenerator", "generate", "generator_jvp",
    "NearestNeighborWrapped", "ProjectionConfig", "nearest_neighbor_wrap", "project_to_latent",
    "load_model", "model_from_dict", "model_to_dict", "save_model",
    "ArgmaxLinearOracle", "CheckerboardOracle", "SignOracle", "TrainingConfig", "TrainingResult",
    "WavyOracle", "oracle_from_dict", "train_mlp_classifier",
]
