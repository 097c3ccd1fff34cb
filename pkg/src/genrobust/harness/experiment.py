"""JSON experiment configs and the end-to-end runner.

A config is a single JSON document::

    {
      "seed": 0,
      "generator": {"kind": "identity", "dim": 100},
      "classifier": {"kind": "halfspace_latent"},
      "class_distribution": {"kind": "equiprobable", "K": 10},
      "bounds": [{"kind": "invert", "classes": 10, "target": 0.25, "normalize_d": 100}],
      "attacks": {"which": ["rZ", "rIn"], "n": 200, "config": {}},
      "modulus": {"delta_grid": [0.1, 0.2], "kappa": 0.05, "samples": 100},
      "algorithm1": {"delta_grid": "0.05:1.0:0.05", "samples": 100},
      "nearest_neighbor": {"n": 1000},
      "oracle": {"n": 20, "grid": {"extent": 3.0, "resolution": 256}},
      "target_percentile": 0.25
    }

Only ``seed`` and ``generator`` are required.  Every stage records its errors
under its own label instead of aborting the rest of the run.
"""

import json
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import rng as _rng
from ..attacks import (AttackConfig, image_attack, in_distribution_attack, latent_attack, norm_means,
                       robustness_survey)
from ..bounds import gaussian_norm_mean
from ..errors import ConfigError, GenRobustError
from ..modulus import InnerOptConfig, fit_modulus_table
from ..oracle import GridSpec, brute_force_latent_robustness
from .algorithm1 import run_algorithm1
from .specs import (build_classifier, build_generator, class_distribution, evaluate_bound, parse_grid,
                    wrap_nearest)

_KNOWN_KEYS = {"seed", "generator", "classifier", "class_distribution", "bounds", "attacks", "modulus",
               "algorithm1", "nearest_neighbor", "oracle", "target_percentile", "name"}


@dataclass
class ExperimentConfig:
    seed: int
    generator: dict
    classifier: dict = None
    class_distribution: dict = None
    bounds: list = field(default_factory=list)
    attacks: dict = None
    modulus: dict = None
    algorithm1: dict = None
    nearest_neighbor: dict = None
    oracle: dict = None
    target_percentile: float = 0.25
    name: str = ""

    def __post_init__(self):
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("config needs an explicit non-negative integer seed")
        if not 0.0 < self.target_percentile < 1.0:
            raise ConfigError("target_percentile must lie in (0, 1)")
        for spec in (self.generator, self.classifier or {}):
            if "path" in spec and not os.path.exists(spec["path"]):
                raise ConfigError(f"model file {spec['path']!r} does not exist")
        needs_f = self.attacks or self.nearest_neighbor or self.oracle
        if needs_f and not self.classifier:
            raise ConfigError("attack, nearest-neighbour and oracle stages need a classifier")

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - _KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if "seed" not in d or "generator" not in d:
            raise ConfigError("config requires 'seed' and 'generator'")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                return cls.from_json(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}") from exc

    def to_dict(self):
        return asdict(self)


@dataclass
class ExperimentReport:
    name: str = ""
    bound_rows: list = field(default_factory=list)
    empirical_rows: list = field(default_factory=list)
    modulus: dict = None
    algorithm1: dict = None
    nearest_neighbor_rows: list = field(default_factory=list)
    oracle_rows: list = field(default_factory=list)
    normalization: dict = field(default_factory=dict)
    non_convergence: dict = field(default_factory=dict)
    train_accuracy: float = None
    errors: list = field(default_factory=list)
    wall_clock: dict = field(default_factory=dict)

    def to_dict(self, timings=True):
        d = asdict(self)
        if not timings:
            d.pop("wall_clock")
        return d

    def to_json(self, timings=True):
        return json.dumps(self.to_dict(timings), indent=2, sort_keys=True)

    @property
    def ok(self):
        return not self.errors


class _Stage:
    """Context manager timing a stage and recording package errors under its label."""

    def __init__(self, report, name):
        self.report, self.name = report, name

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.report.wall_clock[self.name] = time.perf_counter() - self.t0
        if exc is not None and isinstance(exc, GenRobustError) and not isinstance(exc, ConfigError):
            self.report.errors.append({"stage": self.name, "type": type(exc).__name__, "message": str(exc)})
            return True
        return False


def run_experiment(cfg):
    """Run every stage the config requests and collect an ExperimentReport."""
    if isinstance(cfg, dict):
        cfg = ExperimentConfig.from_dict(cfg)
    rep = ExperimentReport(name=cfg.name)
    g = build_generator(cfg.generator)
    f = None
    if cfg.classifier:
        with _Stage(rep, "classifier"):
            f, rep.train_accuracy = build_classifier(cfg.classifier, g)

    with _Stage(rep, "normalization"):
        ez, egz = norm_means(g, 10_000, cfg.seed)
        rep.normalization = {"latent_norm_mean": gaussian_norm_mean(g.latent_dim),
                             "latent_norm_mean_mc": ez, "image_norm_mean": egz}

    with _Stage(rep, "bounds"):
        for spec in cfg.bounds:
            rep.bound_rows.append(evaluate_bound(spec).to_dict())

    if cfg.modulus:
        with _Stage(rep, "modulus"):
            m = cfg.modulus
            est = fit_modulus_table(g, parse_grid(m["delta_grid"]), float(m.get("kappa", 0.05)),
                                    int(m.get("samples", 100)), InnerOptConfig(**m.get("inner_opt", {})),
                                    cfg.seed)
            rep.modulus = json.loads(est.to_json())

    if cfg.algorithm1:
        with _Stage(rep, "algorithm1"):
            a = cfg.algorithm1
            dist = class_distribution(cfg.class_distribution or {"kind": "empirical"}, f, g, cfg.seed)
            res = run_algorithm1(g, dist, parse_grid(a["delta_grid"]), cfg.target_percentile,
                                 int(a.get("samples", 100)), InnerOptConfig(**a.get("inner_opt", {})),
                                 cfg.seed)
            rep.algorithm1 = res.to_dict()
            rep.algorithm1["class_probs"] = list(dist.probs)
            rep.bound_rows.append({"bound_kind": "KappaAdjustedEq8", "quantity": "radius",
                                   "inputs": {"algorithm1": True, "target": cfg.target_percentile},
                                   "value": res.alpha,
                                   "normalization": {"image_norm_mean": egz,
                                                     "normalized_value": res.alpha / egz}})

    if cfg.attacks and f is not None:
        with _Stage(rep, "attacks"):
            a = cfg.attacks
            acfg = AttackConfig(**{"seed": cfg.seed, **a.get("config", {})})
            survey = robustness_survey(f, g, int(a.get("n", 100)), tuple(a.get("which", ("rZ",))), acfg,
                                       cfg.seed)
            rep.non_convergence["attacks"] = survey.summary["non_converged"]
            q = f"{round(100 * cfg.target_percentile)}"
            for w in survey.summary["which"]:
                radii = survey.radii(w)
                radii = radii[np.isfinite(radii)]
                if len(radii) == 0:
                    continue
                raw = float(np.quantile(radii, cfg.target_percentile))
                scale = ez if w == "rZ" else egz
                row = {"radius": w, "percentile": q, "raw": raw, "normalized": raw / scale,
                       "n": int(len(radii)), "compared_bound": None}
                if w == "rIn" and rep.algorithm1:
                    row["compared_bound"] = rep.algorithm1["alpha"]
                rep.empirical_rows.append(row)

    if cfg.nearest_neighbor and f is not None:
        with _Stage(rep, "nearest_neighbor"):
            nn = cfg.nearest_neighbor
            n = int(nn.get("n", 1000))
            acfg = AttackConfig(**{"seed": cfg.seed, **nn.get("config", {})})
            ft = wrap_nearest(f, g, nn.get("projection"))
            Z = _rng.sample_latent(g.latent_dim, n, cfg.seed)
            rin = in_distribution_attack(f, g, Z, acfg).radius
            runc = image_attack(ft, g.forward(Z), acfg).radius
            ratio = runc / rin
            ok = np.isfinite(ratio)
            rep.nearest_neighbor_rows.append({
                "n": n, "valid": int(ok.sum()),
                "ratio_min": float(ratio[ok].min()) if ok.any() else None,
                "ratio_max": float(ratio[ok].max()) if ok.any() else None,
                "fraction_ratio_at_least_half": float(np.mean(runc[ok] >= rin[ok] / 2 - 1e-6)) if ok.any() else None,
            })
            rep.non_convergence["nearest_neighbor"] = int(n - ok.sum())

    if cfg.oracle and f is not None:
        with _Stage(rep, "oracle"):
            o = cfg.oracle
            grid = GridSpec(**o.get("grid", {}))
            n = int(o.get("n", 20))
            acfg = AttackConfig(seed=cfg.seed)
            Z = _rng.sample_latent(g.latent_dim, n, cfg.seed)
            att = latent_attack(f, g, Z, acfg).radius
            for i in range(n):
                val, err = brute_force_latent_robustness(f, g, Z[i], grid)
                rep.oracle_rows.append({"sample_index": i, "oracle": val, "grid_error": err,
                                        "attack": float(att[i])})
    return rep
