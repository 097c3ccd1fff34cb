"""JSON round-tripping for generators and classifiers.

Document layout: ``{"kind", "dims", "weights", "activation", "version"}``;
composite models nest their parts under named keys.  Arrays are stored as
nested row-major lists, so floats round-trip exactly through ``json``.
"""

import json

from ..errors import ConfigError
from . import mlp
from .classifiers import (ArcClassifier, CheckerboardLatent, HalfSpaceLatent, LinearClassifier,
                          MlpClassifier)
from .generators import CircleGenerator, IdentityGenerator, LinearGenerator, MlpGenerator
from .nearest import NearestNeighborWrapped, ProjectionConfig

VERSION = 1


def model_to_dict(model):
    d = model.to_dict()
    d["version"] = VERSION
    return d


def model_from_dict(d):
    if d.get("version", VERSION) != VERSION:
        raise ConfigError(f"unsupported model version {d.get('version')}")
    kind = d.get("kind")
    w = d.get("weights", {})
    if kind == "identity":
        return IdentityGenerator(d["dims"][0], d.get("scale", 1.0))
    if kind == "linear" and "A" in w:
        return LinearGenerator(w["A"], w["b"])
    if kind == "circle":
        return CircleGenerator()
    if kind == "mlp" and d.get("role") == "generator":
        return MlpGenerator(mlp.params_from_lists(w))
    if kind == "mlp":
        return MlpClassifier(mlp.params_from_lists(w))
    if kind == "linear":
        return LinearClassifier(w["W"], w["b"])
    if kind == "halfspace_latent":
        return HalfSpaceLatent(w["normal"], w["threshold"], model_from_dict(d["generator"]))
    if kind == "checkerboard_latent":
        return CheckerboardLatent(w["dim"], model_from_dict(d["generator"]))
    if kind == "arc":
        return ArcClassifier(w["thresholds"], w["arc_labels"])
    if kind == "nearest_neighbor":
        return NearestNeighborWrapped(model_from_dict(d["inner"]), model_from_dict(d["generator"]),
                                      ProjectionConfig(**d.get("projection", {})))
    raise ConfigError(f"unknown model kind {kind!r}")


def save_model(path, model):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))
