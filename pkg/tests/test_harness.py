import csv
import io
import json
import math

import numpy as np
import pytest

from genrobust.bounds import ClassDistribution, fooling_prob_general, invert_bound_for_radius
from genrobust.errors import ConfigError, DomainError, InfeasibleTargetError, NonConvergenceError, RangeError
from genrobust.harness import (ExperimentConfig, level_with_tail, parse_grid, run_algorithm1,
                               run_experiment)
from genrobust.harness import cli
from genrobust.harness.cli import main
from genrobust.harness.specs import build_classifier, build_generator, class_distribution, evaluate_bound
from genrobust.models import IdentityGenerator, LinearGenerator, MlpGenerator, save_model
from genrobust.modulus import IdentityModulus, InnerOptConfig

FAST = InnerOptConfig(steps=40, restarts=2)


class TestGridParsing:
    def test_range(self):
        assert parse_grid("0.1:0.5:0.1") == [0.1, 0.2, 0.3, 0.4, 0.5]
        assert parse_grid("1,2.5") == [1.0, 2.5]
        assert parse_grid([1, 2]) == [1.0, 2.0]

    @pytest.mark.parametrize("bad", ["1:0:0.1", "0:1:0", "a:b:c", "1,x"])
    def test_bad(self, bad):
        with pytest.raises(ConfigError):
            parse_grid(bad)


class TestAlgorithm1:
    def test_level_with_tail(self):
        s = np.arange(1.0, 11.0)
        alpha = level_with_tail(s, 0.25)
        assert alpha == np.nextafter(8.0, np.inf)
        assert np.sum(s >= alpha) <= math.floor(0.25 * 10)
        assert level_with_tail(s, 0.01) == np.nextafter(10.0, np.inf)
        assert level_with_tail(s, 1.0) == 0.0

    def test_identity_generator_reduces_to_latent_inversion(self):
        # sphere suprema equal delta, so alpha is the first grid point with F(delta) > target
        dist = ClassDistribution.equiprobable(10)
        grid = np.arange(0.01, 0.5, 0.01)
        res = run_algorithm1(IdentityGenerator(3), dist, grid, 0.25, 30, FAST, seed=0)
        star = invert_bound_for_radius(dist, IdentityModulus(), 0.25)
        expected = grid[np.argmax(grid > star)]
        np.testing.assert_allclose(res.alpha, expected, rtol=1e-12)
        assert all(r["alpha"] is None for r in res.rows if r["slack"] <= 0)

    def test_linear_generator_scales(self):
        dist = ClassDistribution.equiprobable(2)
        grid = [0.4, 0.8, 1.2]
        a = run_algorithm1(LinearGenerator(np.eye(2) * 3.0), dist, grid, 0.25, 20, FAST, seed=0)
        b = run_algorithm1(IdentityGenerator(2), dist, grid, 0.25, 20, FAST, seed=0)
        np.testing.assert_allclose(a.alpha, 3.0 * b.alpha, rtol=1e-9)

    def test_infeasible(self):
        with pytest.raises(InfeasibleTargetError):
            run_algorithm1(IdentityGenerator(2), ClassDistribution.equiprobable(10), [0.01, 0.02], 0.25, 20, FAST)

    def test_validation(self):
        with pytest.raises(DomainError):
            run_algorithm1(IdentityGenerator(2), ClassDistribution.equiprobable(2), [0.1], 1.5, 20)

    def test_workers_do_not_change_alpha(self):
        g = MlpGenerator.random([3, 16, 5], seed=1)
        dist = ClassDistribution.equiprobable(4)
        a = run_algorithm1(g, dist, [0.3, 0.6], 0.25, 40, InnerOptConfig(steps=30, chunk_size=9, workers=1), 2)
        b = run_algorithm1(g, dist, [0.3, 0.6], 0.25, 40, InnerOptConfig(steps=30, chunk_size=9, workers=3), 2)
        assert a.to_dict() == b.to_dict()


class TestSpecs:
    def test_generators(self):
        assert build_generator({"kind": "identity", "dim": 3}).latent_dim == 3
        assert build_generator({"kind": "mlp", "widths": [2, 4, 3]}).image_dim == 3
        with pytest.raises(ConfigError):
            build_generator({"kind": "vae"})
        with pytest.raises(ConfigError):
            build_generator({"kind": "identity"})

    def test_trained_classifier(self):
        g = IdentityGenerator(2)
        f, acc = build_classifier({"kind": "mlp_trained", "labels": {"kind": "sign"}, "hidden": [8],
                                   "training": {"epochs": 5, "samples_per_epoch": 1000}}, g)
        assert f.num_classes == 2 and acc > 0.95

    def test_empirical_distribution(self):
        g = IdentityGenerator(2)
        f, _ = build_classifier({"kind": "halfspace_latent"}, g)
        d = class_distribution({"kind": "empirical", "n": 20000}, f, g)
        np.testing.assert_allclose(d.probs, [0.5, 0.5], atol=0.02)

    def test_bound_normalization(self):
        rep = evaluate_bound({"kind": "invert", "classes": 10, "target": 0.25, "normalize_d": 100})
        assert rep.quantity == "radius"
        np.testing.assert_allclose(rep.normalization["normalized_value"], 0.0158375, rtol=1e-5)
        with pytest.raises(ConfigError):
            evaluate_bound({"kind": "nope"})


def small_config(**extra):
    cfg = {"seed": 0, "generator": {"kind": "identity", "dim": 4},
           "classifier": {"kind": "halfspace_latent"},
           "bounds": [{"kind": "balanced", "eta": 2.0}, {"kind": "invert", "classes": 2, "target": 0.25}],
           "attacks": {"which": ["rZ", "rIn"], "n": 20}}
    cfg.update(extra)
    return cfg


class TestExperiment:
    def test_config_validation(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"generator": {"kind": "identity", "dim": 2}})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"seed": 0, "generator": {}, "colour": 1})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"seed": -1, "generator": {}})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"seed": 0, "generator": {"path": "/does/not/exist.json"}})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json("{not json")

    def test_run(self):
        rep = run_experiment(small_config(
            modulus={"delta_grid": [0.2, 0.4], "samples": 20, "inner_opt": {"steps": 20}},
            algorithm1={"delta_grid": "0.1:1.0:0.1", "samples": 20, "inner_opt": {"steps": 20}},
            class_distribution={"kind": "equiprobable", "K": 2}))
        assert rep.ok, rep.errors
        np.testing.assert_allclose(rep.bound_rows[0]["value"], 1 - math.sqrt(math.pi / 2) * math.exp(-2), rtol=1e-14)
        np.testing.assert_allclose(rep.modulus["values"], [0.2, 0.4], rtol=1e-9)
        rows = {r["radius"]: r for r in rep.empirical_rows}
        assert rows["rIn"]["compared_bound"] == rep.algorithm1["alpha"]
        assert rows["rIn"]["raw"] <= rep.algorithm1["alpha"]

    def test_stage_errors_are_collected(self):
        rep = run_experiment(small_config(bounds=[{"kind": "equiprobable", "classes": 3, "eta": 2.0}]))
        assert not rep.ok and rep.errors[0]["stage"] == "bounds"
        assert rep.empirical_rows

    def test_reproducible(self):
        a = run_experiment(small_config()).to_json(timings=False)
        b = run_experiment(small_config()).to_json(timings=False)
        assert a == b


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestCli:
    def test_bound(self, capsys):
        code, out, _ = run_cli(capsys, "bound", "--kind", "balanced", "--eta", "2")
        assert code == 0 and out.strip() == "0.830382"
        code, out, _ = run_cli(capsys, "bound", "--kind", "invert", "--classes", "10", "--target", "0.25",
                               "--normalize-d", "100")
        assert code == 0 and out.strip() == "0.0158375"
        code, out, _ = run_cli(capsys, "bound", "--kind", "general", "--probs", "0.5,0.3,0.2", "--eta", "1",
                               "--json")
        assert json.loads(out)["bound_kind"] == "GeneralEq2"

    @pytest.mark.parametrize("argv", [
        ("bound", "--kind", "equiprobable", "--classes", "3", "--eta", "2"),
        ("bound", "--kind", "balanced"),
        ("bound", "--kind", "wrong"),
        ("attack", "--generator", "identity:2", "--classifier", "halfspace"),
        ("attack", "--generator", "/no/such/file.json", "--classifier", "halfspace", "--seed", "0"),
        ("frobnicate",),
    ])
    def test_config_errors_exit_1(self, capsys, argv):
        code, _, err = run_cli(capsys, *argv)
        assert code == 1 and err

    @pytest.mark.parametrize("exc,code", [(RangeError("r"), 2), (NonConvergenceError("n"), 2),
                                          (DomainError("d"), 1), (ConfigError("c"), 1)])
    def test_error_mapping(self, capsys, monkeypatch, exc, code):
        def boom(spec):
            raise exc
        monkeypatch.setattr(cli, "evaluate_bound", boom)
        assert run_cli(capsys, "bound", "--kind", "balanced", "--eta", "1")[0] == code

    def test_checkerboard_csv(self, capsys, tmp_path):
        path = tmp_path / "cb.csv"
        code, _, _ = run_cli(capsys, "checkerboard", "--d", "5", "--etas", "0.1,0.25", "--n", "4000",
                             "--seed", "0", "--out", str(path))
        rows = list(csv.DictReader(io.StringIO(path.read_text())))
        assert code == 0 and len(rows) == 2
        assert list(rows[0]) == ["eta", "theorem1_bound", "checkerboard_bound", "mc_fraction", "mc_std_error"]
        for r in rows:
            assert float(r["mc_fraction"]) >= float(r["checkerboard_bound"]) - 3 * float(r["mc_std_error"])

    def test_attack_csv(self, capsys, tmp_path):
        path = tmp_path / "a.csv"
        code, out, _ = run_cli(capsys, "attack", "--generator", "identity:3", "--classifier", "halfspace",
                               "--which", "rZ,rUnc", "--n", "10", "--seed", "1", "--out", str(path))
        assert code == 0
        assert json.loads(out)["n"] == 10
        header = path.read_text().splitlines()[0]
        assert header == "sample_index,label,r_z,r_in,r_unc,iterations,converged"

    def test_estimate_omega(self, capsys, tmp_path):
        code, out, _ = run_cli(capsys, "estimate-omega", "--generator", "identity:2,2", "--deltas", "0.5,1",
                               "--samples", "10", "--steps", "5", "--seed", "0")
        rows = list(csv.reader(io.StringIO(out)))
        assert code == 0 and rows[0] == ["delta", "omega_raw", "omega_fit"]
        np.testing.assert_allclose([float(r[2]) for r in rows[1:]], [1.0, 2.0], rtol=1e-9)

    def test_experiment(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(small_config()))
        code, out, _ = run_cli(capsys, "experiment", str(cfg), "--no-timings")
        rep = json.loads(out)
        assert code == 0 and "wall_clock" not in rep
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(small_config(bounds=[{"kind": "checkerboard", "d": 3, "eta": 0.9}])))
        code, _, err = run_cli(capsys, "experiment", str(bad))
        assert code == 2 and "HypothesisViolation" in err
        code, _, _ = run_cli(capsys, "experiment", str(tmp_path / "missing.json"))
        assert code == 1

    def test_model_file_arguments(self, capsys, tmp_path):
        path = tmp_path / "g.json"
        save_model(path, MlpGenerator.random([2, 4, 3], seed=0))
        code, out, _ = run_cli(capsys, "estimate-omega", "--generator", str(path), "--deltas", "0.5",
                               "--samples", "10", "--steps", "5", "--seed", "0")
        assert code == 0

    def test_selftest(self, capsys):
        code, out, _ = run_cli(capsys, "selftest")
        assert code == 0 and "FAIL" not in out and out.count("PASS") == 6
