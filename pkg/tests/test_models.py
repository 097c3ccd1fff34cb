import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from genrobust.errors import CapabilityError, ConfigError, DomainError, ProjectionError, TrainingError
from genrobust.models import (ArcClassifier, ArgmaxLinearOracle, CheckerboardLatent, CheckerboardOracle,
                              CircleGenerator, FunctionGenerator, HalfSpaceLatent, IdentityGenerator,
                              LinearClassifier, LinearGenerator, MlpClassifier, MlpGenerator, ProjectionConfig,
                              SignOracle, TrainingConfig, WavyOracle, classify, generate, generator_jvp,
                              load_model, model_from_dict, model_to_dict, nearest_neighbor_wrap,
                              oracle_from_dict, project_to_latent, save_model, train_mlp_classifier)

finite = st.floats(-3, 3)


def fd_jacobian(fn, x, h=1e-6):
    cols = []
    for j in range(x.shape[1]):
        e = np.zeros_like(x)
        e[:, j] = h
        cols.append((fn(x + e) - fn(x - e)) / (2 * h))
    return np.stack(cols, axis=2)


class TestGenerators:
    def test_identity_and_linear(self):
        z = np.array([1.0, -2.0])
        np.testing.assert_allclose(generate(IdentityGenerator(2, 3.0), z), [3.0, -6.0])
        g = LinearGenerator([[1.0, 2.0], [0.0, 1.0], [1.0, 0.0]], [0.5, 0.0, 0.0])
        np.testing.assert_allclose(generate(g, z), [-2.5, -2.0, 1.0])
        np.testing.assert_allclose(generator_jvp(g, z, [1.0, 0.0]), [1.0, 0.0, 1.0])

    def test_circle(self):
        g = CircleGenerator()
        np.testing.assert_allclose(generate(g, [0.25]), [0.0, 1.0], atol=1e-15)
        np.testing.assert_allclose(g.project(np.array([[0.0, -2.0]])), [[-0.25]])

    def test_batch_shapes(self):
        g = MlpGenerator.random([3, 8, 5], seed=0)
        assert generate(g, np.zeros(3)).shape == (5,)
        assert generate(g, np.zeros((7, 3))).shape == (7, 5)
        with pytest.raises(DomainError):
            generate(g, np.zeros(4))
        with pytest.raises(DomainError):
            generate(g, np.array([np.nan, 0.0, 0.0]))
        with pytest.raises(DomainError):
            generator_jvp(g, np.zeros(3), [np.inf, 0, 0])

    @pytest.mark.parametrize("g", [MlpGenerator.random([3, 16, 16, 5], seed=1), CircleGenerator(),
                                   LinearGenerator(np.arange(6.0).reshape(3, 2))])
    def test_jacobian_matches_finite_differences(self, g):
        Z = np.random.default_rng(0).standard_normal((6, g.latent_dim))
        np.testing.assert_allclose(g.jacobian(Z), fd_jacobian(g.forward, Z), rtol=1e-5, atol=1e-7)

    @given(arrays(float, 3, elements=finite), arrays(float, 3, elements=finite), arrays(float, 4, elements=finite))
    def test_jvp_vjp_adjoint(self, z, v, u):
        g = MlpGenerator.random([3, 12, 4], seed=2)
        lhs = u @ g.jvp(z[None], v[None])[0]
        rhs = g.vjp(z[None], u[None])[0] @ v
        np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10)

    def test_function_generator(self):
        g = FunctionGenerator(lambda Z: np.sin(Z), 2, 2)
        z = np.array([[0.3, -1.0]])
        np.testing.assert_allclose(g.jacobian(z)[0], np.diag(np.cos(z[0])), atol=1e-6)
        with pytest.raises(CapabilityError):
            g.to_dict()


class TestClassifiers:
    def test_linear_ties_break_low(self):
        f = LinearClassifier(np.zeros((3, 2)), np.zeros(3))
        assert classify(f, [1.0, 1.0]) == 0
        f = LinearClassifier([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])
        np.testing.assert_array_equal(classify(f, np.array([[2.0, 1.0], [1.0, 2.0]])), [0, 1])

    def test_halfspace(self):
        f = HalfSpaceLatent([2.0, 0.0], threshold=1.0)
        np.testing.assert_allclose(f.signed_distance(np.array([[1.5, 7.0]])), [1.0])
        assert classify(f, [0.4, 0.0]) == 1 and classify(f, [0.5, 0.0]) == 0

    def test_checkerboard_parity(self):
        f = CheckerboardLatent(2)
        np.testing.assert_array_equal(f.predict(np.array([[0.5, 0.5], [1.5, 0.5], [-0.5, 0.5], [-0.5, -0.5]])),
                                      [0, 1, 1, 0])

    def test_arc_sectors(self):
        f = ArcClassifier([0.0, math.pi / 2, math.pi])
        pts = np.array([[1.0, 0.1], [-0.1, 1.0], [0.0, -1.0]])
        np.testing.assert_array_equal(f.predict(pts), [0, 1, 2])
        f2 = ArcClassifier([0.0, math.pi], arc_labels=[1, 0])
        np.testing.assert_array_equal(f2.predict(pts), [1, 1, 0])

    @pytest.mark.parametrize("f", [MlpClassifier.__new__(MlpClassifier), ArcClassifier([0.3, 2.0, 4.0]),
                                   LinearClassifier([[1.0, 2.0], [-1.0, 0.5]], [0.1, 0.0])])
    def test_score_jacobian(self, f):
        if isinstance(f, MlpClassifier):
            f.__init__(MlpGenerator.random([2, 16, 3], seed=0).params)
        X = np.random.default_rng(1).standard_normal((5, 2)) + 0.1
        np.testing.assert_allclose(f.score_jacobian(X), fd_jacobian(f.scores, X), rtol=1e-5, atol=1e-7)

    def test_latent_classifier_uses_generator_projection(self):
        g = LinearGenerator(np.array([[2.0, 0.0], [0.0, 1.0], [0.0, 0.0]]))
        f = HalfSpaceLatent([1.0, 0.0], 0.0, g)
        np.testing.assert_array_equal(f.predict(g.forward(np.array([[0.3, 1.0], [-0.3, 1.0]]))), [0, 1])


class TestNearestNeighbor:
    def test_closed_form_projection(self):
        g = CircleGenerator()
        X = np.array([[0.0, 3.0], [-2.0, 0.0]])
        np.testing.assert_allclose(project_to_latent(g, X)[:, 0], [0.25, 0.5])

    def test_iterative_projection(self):
        g = MlpGenerator.random([2, 16, 4], seed=3)
        Z = np.random.default_rng(0).standard_normal((5, 2)) * 0.5
        Zp = project_to_latent(g, g.forward(Z), ProjectionConfig(steps=2000))
        np.testing.assert_allclose(g.forward(Zp), g.forward(Z), atol=1e-4)

    def test_projection_failure_is_reported(self):
        g = MlpGenerator.random([2, 16, 4], seed=3)
        with pytest.raises(ProjectionError) as info:
            project_to_latent(g, np.ones((1, 4)) * 5, ProjectionConfig(steps=1, fail_tol=1e-12))
        assert info.value.best_z.shape == (2,)

    def test_wrapped_classifier_on_manifold(self):
        g = CircleGenerator()
        f = ArcClassifier([0.0, math.pi])
        ft = nearest_neighbor_wrap(f, g)
        X = np.array([[0.5, 0.2], [3.0, -0.1]])
        np.testing.assert_array_equal(ft.predict(X), [0, 1])
        np.testing.assert_allclose(ft.score_jacobian(X), fd_jacobian(ft.scores, X), rtol=1e-5, atol=1e-7)


class TestSerialization:
    @pytest.mark.parametrize("model", [
        IdentityGenerator(3, 2.0), LinearGenerator(np.eye(2) * 3), CircleGenerator(),
        MlpGenerator.random([2, 5, 3], seed=0), LinearClassifier([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.5]),
        HalfSpaceLatent([1.0, 1.0], 0.2), CheckerboardLatent(3), ArcClassifier([0.1, 2.0], [1, 0]),
        MlpClassifier(MlpGenerator.random([2, 5, 3], seed=4).params),
        nearest_neighbor_wrap(ArcClassifier([0.0, 3.0]), CircleGenerator()),
    ])
    def test_round_trip(self, model, tmp_path):
        path = tmp_path / "m.json"
        save_model(path, model)
        back = load_model(path)
        assert type(back) is type(model)
        assert model_to_dict(back) == model_to_dict(model)
        if hasattr(model, "forward"):
            Z = np.random.default_rng(0).standard_normal((4, model.latent_dim))
            np.testing.assert_allclose(back.forward(Z), model.forward(Z), rtol=1e-15)
        else:
            X = np.random.default_rng(0).standard_normal((4, model.input_dim))
            np.testing.assert_array_equal(back.predict(X), model.predict(X))

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            model_from_dict({"kind": "gan"})


class TestTraining:
    def test_oracles(self):
        Z = np.array([[0.5, 0.0], [-0.5, 0.0], [1.5, 0.5]])
        np.testing.assert_array_equal(SignOracle()(Z), [0, 1, 0])
        np.testing.assert_array_equal(CheckerboardOracle()(Z), [0, 1, 1])
        np.testing.assert_array_equal(WavyOracle(0.0)(Z), [0, 1, 0])
        o = ArgmaxLinearOracle.random(4, 2, seed=0)
        back = oracle_from_dict(o.to_dict())
        np.testing.assert_array_equal(back(Z), o(Z))
        with pytest.raises(DomainError):
            oracle_from_dict({"kind": "spiral"})

    def test_sign_rule_is_learned(self):
        g = IdentityGenerator(2)
        res = train_mlp_classifier(g, SignOracle(), TrainingConfig(epochs=10, samples_per_epoch=2000),
                                   hidden=(16,))
        assert res.train_accuracy >= 0.99
        assert res.losses[-1] < res.losses[0]

    def test_deterministic(self):
        g = IdentityGenerator(2)
        cfg = TrainingConfig(epochs=2, samples_per_epoch=500, seed=7)
        a = train_mlp_classifier(g, WavyOracle(), cfg, hidden=(8,))
        b = train_mlp_classifier(g, WavyOracle(), cfg, hidden=(8,))
        for (Wa, ba), (Wb, bb) in zip(a.model.params, b.model.params):
            np.testing.assert_array_equal(Wa, Wb)
            np.testing.assert_array_equal(ba, bb)

    def test_divergence_raises(self):
        # images with mixed-sign infinities make the logits NaN on the first batch
        g = FunctionGenerator(lambda Z: np.where(Z > 0, np.inf, -np.inf), 2, 2)
        with pytest.raises(TrainingError) as info, np.errstate(invalid="ignore"):
            train_mlp_classifier(g, SignOracle(), TrainingConfig(epochs=1, samples_per_epoch=100))
        assert info.value.epoch == 0

    @pytest.mark.slow
    def test_checkerboard_with_sharper_init(self):
        cfg = TrainingConfig(learning_rate=0.02, epochs=300, samples_per_epoch=5000, init_gain=2.0)
        res = train_mlp_classifier(IdentityGenerator(2), CheckerboardOracle(), cfg)
        assert res.train_accuracy >= 0.90

    @pytest.mark.parametrize("kw", [dict(learning_rate=0.0), dict(batch_size=0), dict(epochs=0),
                                    dict(init_gain=-1.0)])
    def test_config_validation(self, kw):
        with pytest.raises(DomainError):
            TrainingConfig(**kw)
