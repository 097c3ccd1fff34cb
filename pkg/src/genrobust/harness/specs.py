"""Builders that turn JSON-style specs (dicts) into models, distributions and bound reports."""

import math

import numpy as np

from .. import bounds as B
from .. import rng as _rng
from ..errors import ConfigError
from ..modulus import IdentityModulus, modulus_from_dict, parse_modulus
from ..models import (ArcClassifier, CheckerboardLatent, CircleGenerator, HalfSpaceLatent,
                      IdentityGenerator, LinearClassifier, LinearGenerator, MlpGenerator,
                      TrainingConfig, load_model, model_from_dict, nearest_neighbor_wrap,
                      oracle_from_dict, train_mlp_classifier)
from ..models.nearest import ProjectionConfig


def parse_grid(text):
    """``"a:b:step"`` (inclusive of b up to rounding) or a comma-separated list."""
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    text = str(text).strip()
    if ":" in text:
        try:
            a, b, step = (float(v) for v in text.split(":"))
        except ValueError as exc:
            raise ConfigError(f"bad range {text!r}; expected a:b:step") from exc
        if not step > 0 or b < a:
            raise ConfigError(f"bad range {text!r}")
        n = int(math.floor((b - a) / step + 1e-9)) + 1
        return [round(a + i * step, 12) for i in range(n)]
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad list {text!r}") from exc


def _need(spec, key, where):
    if key not in spec:
        raise ConfigError(f"{where} spec is missing {key!r}")
    return spec[key]


def build_generator(spec):
    if "path" in spec:
        return load_model(spec["path"])
    kind = _need(spec, "kind", "generator")
    if kind == "identity":
        return IdentityGenerator(int(_need(spec, "dim", "generator")), float(spec.get("scale", 1.0)))
    if kind == "linear":
        if "A" in spec:
            return LinearGenerator(spec["A"], spec.get("b"))
        dim = int(_need(spec, "dim", "generator"))
        return LinearGenerator(float(spec.get("scale", 1.0)) * np.eye(dim))
    if kind == "circle":
        return CircleGenerator()
    if kind == "mlp":
        if "weights" in spec:
            return model_from_dict({**spec, "role": "generator"})
        return MlpGenerator.random(_need(spec, "widths", "generator"), int(spec.get("seed", 0)),
                                   float(spec.get("gain", 1.0)))
    raise ConfigError(f"unknown generator kind {kind!r}")


def build_classifier(spec, g):
    """Classifier from a spec; trained kinds return (model, train_accuracy)."""
    if "path" in spec:
        return load_model(spec["path"]), None
    kind = _need(spec, "kind", "classifier")
    if kind == "halfspace_latent":
        normal = spec.get("normal") or np.eye(g.latent_dim)[0]
        return HalfSpaceLatent(normal, float(spec.get("threshold", 0.0)), g), None
    if kind == "checkerboard_latent":
        return CheckerboardLatent(g.latent_dim, g), None
    if kind == "arc":
        return ArcClassifier(_need(spec, "thresholds", "classifier"), spec.get("arc_labels")), None
    if kind == "linear":
        return LinearClassifier(_need(spec, "W", "classifier"), _need(spec, "b", "classifier")), None
    if kind == "mlp_trained":
        labels = dict(_need(spec, "labels", "classifier"))
        labels.setdefault("dim", g.latent_dim)
        tcfg = TrainingConfig(**spec.get("training", {}))
        res = train_mlp_classifier(g, oracle_from_dict(labels), tcfg, tuple(spec.get("hidden", (32, 32))))
        return res.model, res.train_accuracy
    raise ConfigError(f"unknown classifier kind {kind!r}")


def wrap_nearest(f, g, spec):
    return nearest_neighbor_wrap(f, g, ProjectionConfig(**spec) if isinstance(spec, dict) else None)


def build_modulus(spec):
    if spec is None:
        return IdentityModulus()
    if isinstance(spec, str):
        return parse_modulus(spec)
    return modulus_from_dict(spec)


def class_distribution(spec, f=None, g=None, seed=0):
    """``{"kind": "equiprobable", "K"}``, ``{"kind": "probs", "probs"}`` or
    ``{"kind": "empirical", "n"}`` (label frequencies of f(g(z)))."""
    kind = spec.get("kind", "equiprobable")
    if kind == "equiprobable":
        return B.ClassDistribution.equiprobable(int(_need(spec, "K", "class_distribution")))
    if kind == "probs":
        return B.ClassDistribution(tuple(_need(spec, "probs", "class_distribution")))
    if kind == "empirical":
        if f is None or g is None:
            raise ConfigError("empirical class distribution needs a model")
        n = int(spec.get("n", 10_000))
        Z = _rng.keyed_normals(seed, _rng.NORM_MC, 0, n, g.latent_dim)
        counts = np.bincount(f.predict(g.forward(Z)), minlength=f.num_classes).astype(float)
        return B.ClassDistribution(tuple(counts / counts.sum()))
    raise ConfigError(f"unknown class distribution kind {kind!r}")


def _dist_from(spec):
    if "probs" in spec:
        return B.ClassDistribution(tuple(float(p) for p in spec["probs"]))
    return B.ClassDistribution.equiprobable(int(_need(spec, "classes", "bound")))


BOUND_KINDS = ("general", "balanced", "equiprobable", "invert", "expectation", "expectation-k",
               "checkerboard", "kappa")


def evaluate_bound(spec):
    """Evaluate one bound request, e.g. ``{"kind": "balanced", "omega": "identity", "eta": 2}``."""
    kind = _need(spec, "kind", "bound")
    omega = build_modulus(spec.get("omega"))
    inputs = {k: v for k, v in spec.items()}
    norm = {}
    if kind == "general":
        value = B.fooling_prob_general(_dist_from(spec), omega, float(_need(spec, "eta", "bound")))
        rep = B.BoundReport(B.BoundKind.GENERAL, inputs, value)
    elif kind == "balanced":
        value = B.fooling_prob_balanced(omega, float(_need(spec, "eta", "bound")))
        rep = B.BoundReport(B.BoundKind.BALANCED, inputs, value)
    elif kind == "equiprobable":
        value = B.fooling_prob_equiprobable(int(_need(spec, "classes", "bound")), omega,
                                            float(_need(spec, "eta", "bound")),
                                            spec.get("variant", "derived"))
        rep = B.BoundReport(B.BoundKind.EQUIPROBABLE, inputs, value)
    elif kind == "invert":
        value = B.invert_bound_for_radius(_dist_from(spec), omega, float(_need(spec, "target", "bound")))
        rep = B.BoundReport(B.BoundKind.GENERAL, inputs, value, quantity="radius")
    elif kind == "expectation":
        value = B.expected_robustness_bound(_dist_from(spec), omega, float(spec.get("delta", 0.0)))
        rep = B.BoundReport(B.BoundKind.EXPECTATION_GENERAL, inputs, value)
    elif kind == "expectation-k":
        value = B.expected_robustness_bound_equiprobable(int(_need(spec, "classes", "bound")), omega,
                                                         float(spec.get("delta", 0.0)))
        rep = B.BoundReport(B.BoundKind.EXPECTATION_K, inputs, value)
    elif kind == "checkerboard":
        value = B.checkerboard_bound(int(_need(spec, "d", "bound")), float(_need(spec, "eta", "bound")))
        rep = B.BoundReport(B.BoundKind.CHECKERBOARD, inputs, value)
    elif kind == "kappa":
        value = B.kappa_adjusted_failure_prob(_dist_from(spec), spec.get("omega_value"),
                                              float(_need(spec, "delta", "bound")),
                                              float(_need(spec, "kappa", "bound")))
        rep = B.BoundReport(B.BoundKind.KAPPA_ADJUSTED, inputs, value)
    else:
        raise ConfigError(f"unknown bound kind {kind!r}; choose from {', '.join(BOUND_KINDS)}")
    if spec.get("normalize_d") and rep.quantity != "probability":
        m = B.gaussian_norm_mean(int(spec["normalize_d"]))
        norm = {"latent_norm_mean": m, "normalized_value": rep.value / m}
    if spec.get("image_norm_mean") and rep.quantity != "probability":
        norm["image_norm_mean"] = float(spec["image_norm_mean"])
        norm["normalized_value"] = rep.value / norm["image_norm_mean"]
    rep.normalization = norm
    return rep


__all__ = ["parse_grid", "build_generator", "build_classifier", "wrap_nearest", "build_modulus",
           "class_distribution", "evaluate_bound", "BOUND_KINDS"]
