"""Command-line interface: ``genrobust <subcommand> ...``.

Exit codes: 0 success, 1 configuration or usage error, 2 numerical failure.
Numbers are printed with six significant digits.
"""

import argparse
import csv
import io
import json
import math
import sys

import numpy as np

from .. import bounds as B
from ..attacks import (RADII, AttackConfig, fmt, image_attack, in_distribution_attack, latent_attack,
                       robustness_survey)
from ..errors import ConfigError, DomainError, GenRobustError, HypothesisViolation
from ..gaussian import std_normal_cdf
from ..modulus import IdentityModulus, InnerOptConfig, fit_modulus_table
from ..models import (ArcClassifier, CheckerboardLatent, CircleGenerator, HalfSpaceLatent, IdentityGenerator,
                      MlpGenerator, load_model, nearest_neighbor_wrap)
from ..oracle import (GridSpec, brute_force_latent_robustness, exact_fooling_cdf_halfspace,
                      mc_fooling_fraction)
from .experiment import ExperimentConfig, run_experiment
from .specs import BOUND_KINDS, evaluate_bound, parse_grid

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_CONFIG)


# -- output helpers ----------------------------------------------------------

def _write_rows(header, rows, out):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, float) else v for v in row])
    text = buf.getvalue()
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_json(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _parse_generator(text):
    """``identity:D[,scale]``, ``circle``, ``mlp:W0,W1,...[@seed]`` or a model JSON path."""
    if text == "circle":
        return CircleGenerator()
    if text.startswith("identity:"):
        parts = text.split(":", 1)[1].split(",")
        return IdentityGenerator(int(parts[0]), float(parts[1]) if len(parts) > 1 else 1.0)
    if text.startswith("mlp:"):
        body = text.split(":", 1)[1]
        seed = 0
        if "@" in body:
            body, s = body.split("@")
            seed = int(s)
        return MlpGenerator.random([int(w) for w in body.split(",")], seed)
    try:
        return load_model(text)
    except OSError as exc:
        raise ConfigError(f"cannot read generator {text!r}: {exc}") from exc


def _parse_classifier(text, g):
    """``halfspace[:t]``, ``checkerboard``, ``arc:th1,th2,...`` or a model JSON path."""
    if text.startswith("halfspace"):
        t = float(text.split(":", 1)[1]) if ":" in text else 0.0
        return HalfSpaceLatent(np.eye(g.latent_dim)[0], t, g)
    if text == "checkerboard":
        return CheckerboardLatent(g.latent_dim, g)
    if text.startswith("arc:"):
        return ArcClassifier(parse_grid(text.split(":", 1)[1]))
    try:
        return load_model(text)
    except OSError as exc:
        raise ConfigError(f"cannot read classifier {text!r}: {exc}") from exc


# -- subcommands ---------------------------------------------------------------

def cmd_bound(args):
    spec = {"kind": args.kind, "omega": args.omega}
    for key in ("eta", "target", "delta", "kappa", "d", "normalize_d", "variant"):
        v = getattr(args, key)
        if v is not None:
            spec[key] = v
    if args.probs:
        spec["probs"] = parse_grid(args.probs)
    elif args.classes is not None:
        spec["classes"] = args.classes
    rep = evaluate_bound(spec)
    if args.json or args.out:
        _write_json(rep.to_dict(), args.out)
    else:
        value = rep.normalization.get("normalized_value", rep.value)
        print(fmt(value))
    return EXIT_OK


def cmd_estimate_omega(args):
    g = _parse_generator(args.generator)
    est = fit_modulus_table(g, parse_grid(args.deltas), args.kappa, args.samples,
                            InnerOptConfig(steps=args.steps), args.seed)
    if args.out and args.out.endswith(".json"):
        with open(args.out, "w") as fh:
            fh.write(est.to_json() + "\n")
        return EXIT_OK
    rows = [(float(d), float(r), float(v)) for d, r, v in zip(est.delta_grid, est.raw_values, est.values)]
    _write_rows(("delta", "omega_raw", "omega_fit"), rows, args.out)
    return EXIT_OK


def cmd_attack(args):
    g = _parse_generator(args.generator)
    f = _parse_classifier(args.classifier, g)
    which = tuple(w.strip() for w in args.which.split(",") if w.strip())
    cfg = AttackConfig(max_iters=args.max_iters, restarts=args.restarts, seed=args.seed, workers=args.workers)
    survey = robustness_survey(f, g, args.n, which, cfg, args.seed)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(survey.to_csv())
    print(survey.to_json())
    return EXIT_OK


def cmd_experiment(args):
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    rep = run_experiment(cfg)
    _write_json(rep.to_dict(timings=not args.no_timings), args.out)
    if rep.errors:
        for e in rep.errors:
            sys.stderr.write(f"stage {e['stage']}: {e['type']}: {e['message']}\n")
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_checkerboard(args):
    g = IdentityGenerator(args.d)
    f = CheckerboardLatent(args.d, g)
    etas = parse_grid(args.etas)
    bad = [e for e in etas if not 0.0 <= e <= 0.5]
    if bad:
        raise HypothesisViolation(f"checkerboard etas must lie in [0, 1/2], got {bad}")
    frac, se = mc_fooling_fraction(f, g, etas, args.n, "checkerboard", args.seed)
    rows = []
    two = B.ClassDistribution.equiprobable(2)
    ident = IdentityModulus()
    for e, fr, s in zip(etas, frac, se):
        rows.append((float(e), B.fooling_prob_general(two, ident, e), B.checkerboard_bound(args.d, e),
                     float(fr), float(s)))
    _write_rows(("eta", "theorem1_bound", "checkerboard_bound", "mc_fraction", "mc_std_error"), rows, args.out)
    return EXIT_OK


def _selftest_cases():
    ident = IdentityModulus()
    eq = B.ClassDistribution.equiprobable

    def bound_values():
        return (abs(B.fooling_prob_balanced(ident, 2.0) - 0.830381) < 1e-5
                and abs(B.invert_bound_for_radius(eq(10), ident, 0.25) / B.gaussian_norm_mean(100) - 0.0158) < 5e-4
                and abs(B.fooling_prob_general(eq(2), ident, 1.0) - exact_fooling_cdf_halfspace(1.0)) < 1e-12)

    def halfspace_attack():
        g = IdentityGenerator(5)
        f = HalfSpaceLatent(np.eye(5)[0], 0.0, g)
        Z = np.zeros((3, 5))
        Z[:, 0] = [0.8, -0.3, 1.7]
        return np.allclose(latent_attack(f, g, Z).radius, np.abs(Z[:, 0]), atol=1e-5)

    def grid_oracle():
        g = IdentityGenerator(2)
        val, err = brute_force_latent_robustness(CheckerboardLatent(2, g), g, [0.3, 0.4], GridSpec(2.0, 256))
        return 0.3 - 1e-9 <= val <= 0.3 + err

    def nearest_neighbor_ratio():
        g = CircleGenerator()
        f = ArcClassifier([0.0, math.pi])
        Z = np.linspace(-0.49, 0.49, 50)[:, None]
        rin = in_distribution_attack(f, g, Z).radius
        runc = image_attack(nearest_neighbor_wrap(f, g), g.forward(Z)).radius
        return bool(np.all(runc >= rin / 2 - 1e-6))

    def checkerboard_mc():
        g = IdentityGenerator(5)
        frac, se = mc_fooling_fraction(CheckerboardLatent(5, g), g, 0.1, 4000, "checkerboard", 0)
        return frac >= B.checkerboard_bound(5, 0.1) - 3 * se

    def gaussian_cdf():
        return abs(float(std_normal_cdf(-8.0)) - 6.22096057427178e-16) < 1e-28

    return [("bound_values", bound_values), ("halfspace_attack", halfspace_attack),
            ("grid_oracle", grid_oracle), ("nearest_neighbor_ratio", nearest_neighbor_ratio),
            ("checkerboard_mc", checkerboard_mc), ("gaussian_cdf", gaussian_cdf)]


def cmd_selftest(args):
    failed = 0
    for name, fn in _selftest_cases():
        ok = bool(fn())
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return EXIT_OK if failed == 0 else EXIT_NUMERIC


# -- parser ----------------------------------------------------------------

def build_parser():
    p = _Parser(prog="genrobust", description="Robustness bounds, attacks and oracles for generated data.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("bound", help="evaluate or invert a closed-form bound")
    b.add_argument("--kind", required=True, choices=BOUND_KINDS)
    b.add_argument("--omega", default="identity", help="identity | linear:L[,b]")
    b.add_argument("--eta", type=float)
    b.add_argument("--classes", type=int, help="number of equiprobable classes")
    b.add_argument("--probs", help="comma-separated class probabilities")
    b.add_argument("--target", type=float)
    b.add_argument("--delta", type=float, help="Wasserstein slack or latent radius (kappa kind)")
    b.add_argument("--kappa", type=float)
    b.add_argument("--d", type=int, help="latent dimension for the checkerboard bound")
    b.add_argument("--normalize-d", dest="normalize_d", type=int,
                   help="divide radius/expectation results by E||z|| in this dimension")
    b.add_argument("--variant", choices=("derived", "literal"))
    b.add_argument("--json", action="store_true", help="print the full JSON report")
    b.add_argument("--out")
    b.set_defaults(func=cmd_bound)

    e = sub.add_parser("estimate-omega", help="estimate a modulus of continuity on a grid")
    e.add_argument("--generator", required=True)
    e.add_argument("--deltas", required=True, help="a:b:step or comma list")
    e.add_argument("--kappa", type=float, default=0.05)
    e.add_argument("--samples", type=int, default=100)
    e.add_argument("--steps", type=int, default=200)
    e.add_argument("--seed", type=int, required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_estimate_omega)

    a = sub.add_parser("attack", help="robustness survey over latent samples")
    a.add_argument("--generator", required=True)
    a.add_argument("--classifier", required=True)
    a.add_argument("--which", default="rZ", help=f"comma list from {', '.join(RADII)}")
    a.add_argument("--n", type=int, default=100)
    a.add_argument("--max-iters", dest="max_iters", type=int, default=50)
    a.add_argument("--restarts", type=int, default=8)
    a.add_argument("--workers", type=int, default=1)
    a.add_argument("--seed", type=int, required=True)
    a.add_argument("--out", help="CSV path for per-sample records")
    a.set_defaults(func=cmd_attack)

    x = sub.add_parser("experiment", help="run a JSON experiment config")
    x.add_argument("config")
    x.add_argument("--seed", type=int, help="override the config seed")
    x.add_argument("--no-timings", dest="no_timings", action="store_true")
    x.add_argument("--out")
    x.set_defaults(func=cmd_experiment)

    c = sub.add_parser("checkerboard", help="checkerboard fooling fraction vs bounds (CSV)")
    c.add_argument("--d", type=int, required=True)
    c.add_argument("--etas", required=True, help="a:b:step or comma list, each in [0, 1/2]")
    c.add_argument("--n", type=int, default=10_000)
    c.add_argument("--seed", type=int, required=True)
    c.add_argument("--out")
    c.set_defaults(func=cmd_checkerboard)

    s = sub.add_parser("selftest", help="run the built-in oracle checks")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if exc.code in (0, None) else EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, DomainError, HypothesisViolation) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except GenRobustError as exc:
        sys.stderr.write(f"numerical failure: {type(exc).__name__}: {exc}\n")
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
