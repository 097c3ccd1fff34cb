import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from genrobust import rng
from genrobust.attacks import (CSV_COLUMNS, AttackConfig, find_transfer_perturbation, fmt, image_attack,
                               in_distribution_attack, in_distribution_robustness, latent_attack,
                               latent_robustness, robustness_survey, transfer_attack, unconstrained_robustness)
from genrobust.errors import DomainError, NonConvergenceError
from genrobust.models import (ArcClassifier, CircleGenerator, HalfSpaceLatent, IdentityGenerator,
                              LinearClassifier, LinearGenerator, MlpClassifier, MlpGenerator,
                              nearest_neighbor_wrap)


def linear_distance(W, b, X):
    """Exact distance to the complement of the predicted cell of an argmax-linear classifier."""
    S = X @ W.T + b
    c = np.argmax(S, axis=1)
    out = np.full(len(X), np.inf)
    for j in range(W.shape[0]):
        dw = W[c] - W[j]
        nrm = np.linalg.norm(dw, axis=1)
        # identical rows never beat the lowest-index argmax, so their half-space is empty
        dj = np.where((c == j) | (nrm == 0), np.inf, (S[np.arange(len(X)), c] - S[:, j]) / np.where(nrm > 0, nrm, 1))
        out = np.minimum(out, dj)
    return out


@pytest.fixture(scope="module")
def mlp_pair():
    g = MlpGenerator.random([3, 16, 6], seed=0)
    f = MlpClassifier(MlpGenerator.random([6, 16, 4], seed=1).params)
    return f, g


class TestLinearTargets:
    def test_binary_distance(self):
        W = np.array([[1.0, 2.0], [0.0, 0.0]])
        b = np.array([0.5, 0.0])
        X = rng.sample_latent(2, 50, seed=3)
        res = image_attack(LinearClassifier(W, b), X)
        np.testing.assert_allclose(res.radius, linear_distance(W, b, X), rtol=1e-5)

    @given(arrays(float, (4, 3), elements=st.floats(-2, 2)), st.integers(0, 1000))
    @settings(max_examples=25)
    def test_multiclass_distance(self, W, seed):
        # rows closer than this make the decision cells numerically degenerate
        gaps = [np.linalg.norm(W[i] - W[j]) for i in range(4) for j in range(i)]
        assume(min(gaps) > 0.05)
        b = np.zeros(4)
        X = rng.sample_latent(3, 20, seed)
        exact = linear_distance(W, b, X)
        res = image_attack(LinearClassifier(W, b), X)
        ok = np.isfinite(exact)
        np.testing.assert_allclose(res.radius[ok], exact[ok], rtol=1e-4, atol=1e-9)

    def test_witness_is_adversarial(self):
        f = LinearClassifier(np.array([[1.0, -1.0, 0.5], [0.2, 0.3, -1.0], [0.0, 0.0, 0.0]]), np.zeros(3))
        X = rng.sample_latent(3, 40, seed=0)
        res = image_attack(f, X)
        assert np.all(f.predict(res.witness) != f.predict(X))
        np.testing.assert_allclose(np.linalg.norm(res.witness - X, axis=1), res.radius, rtol=1e-12)

    def test_halfspace_latent(self):
        g = IdentityGenerator(10)
        f = HalfSpaceLatent(np.eye(10)[0], 0.3, g)
        Z = rng.sample_latent(10, 200, seed=1)
        res = latent_attack(f, g, Z)
        np.testing.assert_allclose(res.radius, np.abs(Z[:, 0] - 0.3), rtol=1e-6, atol=1e-9)

    def test_in_distribution_linear_generator(self):
        # r_in equals the image distance to the class boundary along the range of A
        A = np.diag([2.0, 0.5])
        g = LinearGenerator(A)
        f = HalfSpaceLatent([1.0, 1.0], 0.0, g)
        Z = rng.sample_latent(2, 50, seed=2)
        rz = np.abs(Z.sum(axis=1)) / math.sqrt(2)
        # the boundary in image space is x0 / 2 + 2 x1 = 0
        X = g.forward(Z)
        rin = np.abs(X[:, 0] / 2 + 2 * X[:, 1]) / math.hypot(0.5, 2.0)
        res = in_distribution_attack(f, g, Z)
        np.testing.assert_allclose(latent_attack(f, g, Z).radius, rz, rtol=1e-6)
        np.testing.assert_allclose(res.radius, rin, rtol=1e-4)
        assert np.all(res.radius <= 2.0 * rz + 1e-9)


class TestCircle:
    def test_in_distribution_is_chord(self):
        g = CircleGenerator()
        f = ArcClassifier([0.0, math.pi])
        Z = np.linspace(0.01, 0.49, 25)[:, None]
        theta = 2 * math.pi * Z[:, 0]
        gap = np.minimum(theta, math.pi - theta)
        res = in_distribution_attack(f, g, Z)
        np.testing.assert_allclose(res.radius, 2 * np.sin(gap / 2), rtol=1e-6)

    def test_wrapped_unconstrained(self):
        g = CircleGenerator()
        f = ArcClassifier([0.0, math.pi])
        ft = nearest_neighbor_wrap(f, g)
        Z = np.linspace(0.02, 0.48, 12)[:, None]
        theta = 2 * math.pi * Z[:, 0]
        res = image_attack(ft, g.forward(Z))
        np.testing.assert_allclose(res.radius, np.sin(np.minimum(theta, math.pi - theta)), rtol=1e-5)


class TestOrdering:
    def test_unc_below_in_below_modulus(self, mlp_pair):
        f, g = mlp_pair
        lip = np.prod([np.linalg.norm(W, 2) for W, _ in g.params])
        s = robustness_survey(f, g, 60, seed=4, norm_samples=500)
        rz, rin, runc = s.radii("rZ"), s.radii("rIn"), s.radii("rUnc")
        ok = np.isfinite(rz) & np.isfinite(rin) & np.isfinite(runc)
        assert ok.mean() > 0.9
        assert np.all(runc[ok] <= rin[ok] + 1e-9)
        assert np.all(rin[ok] <= lip * rz[ok] + 1e-6)


class TestSingle:
    def test_wrappers(self):
        g = IdentityGenerator(2)
        f = HalfSpaceLatent([1.0, 0.0], 0.0, g)
        np.testing.assert_allclose(latent_robustness(f, g, [0.7, 3.0]), 0.7, rtol=1e-6)
        np.testing.assert_allclose(in_distribution_robustness(f, g, [0.7, 3.0]), 0.7, rtol=1e-6)
        f2 = LinearClassifier([[1.0, 0.0], [-1.0, 0.0]], [0, 0])
        np.testing.assert_allclose(unconstrained_robustness(f2, [0.5, 1.0]), 0.5, rtol=1e-6)

    def test_constant_classifier_does_not_converge(self):
        f = LinearClassifier(np.zeros((2, 2)), np.array([1.0, 0.0]))
        with pytest.raises(NonConvergenceError):
            unconstrained_robustness(f, [0.0, 0.0])
        res = image_attack(f, np.zeros((3, 2)))
        assert np.all(np.isnan(res.radius)) and not np.any(res.converged)

    @pytest.mark.parametrize("kw", [dict(max_iters=0), dict(bisection_tol=0.0), dict(restarts=-1), dict(workers=0)])
    def test_config_validation(self, kw):
        with pytest.raises(DomainError):
            AttackConfig(**kw)


class TestTransfer:
    def test_same_classifier(self):
        g = IdentityGenerator(5)
        f = HalfSpaceLatent(np.eye(5)[0], 0.0, g)
        res = find_transfer_perturbation(f, f, g, [1.01, 0, 0, 0, 0], 2.0)
        assert res.success
        np.testing.assert_allclose(res.norm, 1.01, rtol=1e-5)
        fail = find_transfer_perturbation(f, f, g, [1.01, 0, 0, 0, 0], 0.5)
        assert not fail.success

    def test_two_halfspaces(self):
        # f splits at x0 = 0, h at x0 = t; both flip once x0 crosses the far threshold
        t = 0.3
        f = LinearClassifier([[1.0, 0.0], [-1.0, 0.0]], [0.0, 0.0])
        h = LinearClassifier([[1.0, 0.0], [-1.0, 0.0]], [-t, t])
        X = np.array([[1.0, 0.0], [-1.0, 0.5], [0.1, 0.0]])
        V, ff, fh = transfer_attack(f, h, X, 5.0)
        np.testing.assert_array_equal(ff & fh, [True, True, False])
        np.testing.assert_allclose(np.linalg.norm(V[:2], axis=1), [1.0, 1.0 + t], rtol=1e-4)


class TestSurvey:
    def test_csv_schema(self, mlp_pair):
        f, g = mlp_pair
        s = robustness_survey(f, g, 12, which=("rZ", "rUnc"), seed=0, norm_samples=200)
        rows = list(csv.reader(io.StringIO(s.to_csv())))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert len(rows) == 13
        assert all(r[3] == "" for r in rows[1:])
        assert set(json.loads(s.to_json())["percentiles"]) == {"rZ", "rUnc"}

    def test_thread_count_invariance(self, mlp_pair):
        f, g = mlp_pair
        a = robustness_survey(f, g, 40, cfg=AttackConfig(chunk_size=9, workers=1), seed=3, norm_samples=200)
        b = robustness_survey(f, g, 40, cfg=AttackConfig(chunk_size=9, workers=4), seed=3, norm_samples=200)
        assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()

    def test_normalization(self):
        g = IdentityGenerator(4)
        f = HalfSpaceLatent(np.eye(4)[0], 0.0, g)
        s = robustness_survey(f, g, 30, which=("rZ",), seed=0, norm_samples=1000)
        p = s.summary["percentiles"]["rZ"]["50"]
        np.testing.assert_allclose(s.summary["normalized_percentiles"]["rZ"]["50"],
                                   p / s.summary["latent_norm_mean"], rtol=1e-15)

    def test_rejects_unknown_radius(self, mlp_pair):
        with pytest.raises(DomainError):
            robustness_survey(*mlp_pair, 5, which=("rX",))

    def test_fmt(self):
        assert fmt(None) == "" and fmt(float("nan")) == "" and fmt(1 / 3) == "0.333333"
