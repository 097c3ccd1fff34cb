"""Classifiers f: R^m -> {0, ..., K-1}.

Every classifier exposes batched per-class ``scores`` and their Jacobian;
``predict`` is the argmax with ties resolved to the lowest class index.
Labels are 0-based throughout the package.

Latent-defined classifiers (``HalfSpaceLatent``, ``CheckerboardLatent``)
carry their generator and additionally expose ``latent_scores`` so that the
composite f(g(z)) is evaluated exactly in latent space, without inverting g.
"""

import math

import numpy as np

from .. import _kernels
from ..errors import DomainError
from . import mlp
from .generators import IdentityGenerator, _as_batch


class Classifier:
    num_classes: int
    input_dim: int
    kind = "abstract"

    def scores(self, X):
        raise NotImplementedError

    def score_jacobian(self, X):
        raise NotImplementedError

    def predict(self, X):
        return np.argmax(self.scores(X), axis=1)

    def __call__(self, X):
        return self.predict(X)


class LinearClassifier(Classifier):
    """scores = W x + b.  A single-row W is read as the binary score [s, -s]."""

    kind = "linear"

    def __init__(self, W, b):
        W = np.atleast_2d(np.asarray(W, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if W.shape[0] == 1:
            W, b = np.vstack([W, -W]), np.concatenate([b, -b])
        self.W, self.b = W, b
        self.num_classes, self.input_dim = W.shape

    def scores(self, X):
        return _as_batch(X, self.input_dim, "image") @ self.W.T + self.b

    def score_jacobian(self, X):
        n = _as_batch(X, self.input_dim, "image").shape[0]
        return np.broadcast_to(self.W, (n,) + self.W.shape)

    def to_dict(self):
        return {"kind": self.kind, "dims": [self.input_dim, self.num_classes],
                "weights": {"W": self.W.tolist(), "b": self.b.tolist()}}


class LatentClassifier(Classifier):
    """Classifier whose partition is defined on the latent codes of ``generator``."""

    def __init__(self, generator):
        if generator.project(np.zeros((1, generator.image_dim))) is None:
            raise DomainError("latent-defined classifiers need a generator with closed-form projection")
        self.generator = generator
        self.input_dim = generator.image_dim

    def latent_scores(self, Z):
        raise NotImplementedError

    def latent_score_jacobian(self, Z):
        raise NotImplementedError

    def latent_predict(self, Z):
        return np.argmax(self.latent_scores(Z), axis=1)

    def scores(self, X):
        return self.latent_scores(self.generator.project(X))

    def score_jacobian(self, X):
        Z = self.generator.project(X)
        return self.latent_score_jacobian(Z) @ self.generator.project_jacobian(X)

    def predict(self, X):
        return self.latent_predict(self.generator.project(X))


class HalfSpaceLatent(LatentClassifier):
    """Class 0 where w.z >= t in latent space, class 1 otherwise."""

    kind = "halfspace_latent"
    num_classes = 2

    def __init__(self, normal, threshold=0.0, generator=None):
        w = np.asarray(normal, dtype=float).ravel()
        norm = np.linalg.norm(w)
        if not norm > 0:
            raise DomainError("half-space normal must be nonzero")
        super().__init__(generator or IdentityGenerator(len(w)))
        if self.generator.latent_dim != len(w):
            raise DomainError("normal length must equal the latent dimension")
        # leave already-normalised vectors alone so reloading is exact
        if abs(norm - 1.0) < 1e-12:
            norm = 1.0
        self.normal = w / norm
        self.threshold = float(threshold) / norm

    def signed_distance(self, Z):
        return _as_batch(Z, len(self.normal)) @ self.normal - self.threshold

    def latent_scores(self, Z):
        s = self.signed_distance(Z)
        return np.stack([s, -s], axis=1)

    def latent_score_jacobian(self, Z):
        n = _as_batch(Z, len(self.normal)).shape[0]
        J = np.stack([self.normal, -self.normal])
        return np.broadcast_to(J, (n,) + J.shape)

    def to_dict(self):
        from .serialization import model_to_dict
        return {"kind": self.kind, "dims": [self.input_dim, 2],
                "weights": {"normal": self.normal.tolist(), "threshold": self.threshold},
                "generator": model_to_dict(self.generator)}


class CheckerboardLatent(LatentClassifier):
    """Class = (sum_i floor(z_i)) mod 2.

    The smooth score prod_i sin(pi z_i) has the sign of (-1)^(sum floor z_i),
    so it supplies gradients; ``predict`` uses the exact parity.
    """

    kind = "checkerboard_latent"
    num_classes = 2

    def __init__(self, dim, generator=None):
        super().__init__(generator or IdentityGenerator(dim))
        self.dim = int(dim)
        if self.generator.latent_dim != self.dim:
            raise DomainError("checkerboard dimension must equal the latent dimension")

    def latent_scores(self, Z):
        Z = _as_batch(Z, self.dim)
        s = np.prod(np.sin(math.pi * Z), axis=1)
        return np.stack([s, -s], axis=1)

    def latent_score_jacobian(self, Z):
        Z = _as_batch(Z, self.dim)
        S = np.sin(math.pi * Z)
        C = math.pi * np.cos(math.pi * Z)
        grad = np.empty_like(Z)
        for j in range(self.dim):
            others = np.prod(np.delete(S, j, axis=1), axis=1) if self.dim > 1 else 1.0
            grad[:, j] = C[:, j] * others
        return np.stack([grad, -grad], axis=1)

    def latent_predict(self, Z):
        return _kernels.checkerboard_parity(_as_batch(Z, self.dim))

    def to_dict(self):
        from .serialization import model_to_dict
        return {"kind": self.kind, "dims": [self.input_dim, 2], "weights": {"dim": self.dim},
                "generator": model_to_dict(self.generator)}


class ArcClassifier(Classifier):
    """Labels points of the plane by the angular sector they fall in.

    ``thresholds`` are the sector boundaries (radians); sector j spans
    [theta_j, theta_{j+1}) counter-clockwise, wrapping around.  ``arc_labels``
    assigns a class to each sector (default: sector index).  The regions are
    wedges from the origin; their scores are the signed distances to the
    bounding half-planes, combined by min (sector <= pi) or max (> pi).
    """

    kind = "arc"
    input_dim = 2

    def __init__(self, thresholds, arc_labels=None):
        th = np.mod(np.asarray(thresholds, dtype=float).ravel(), 2 * math.pi)
        order = np.argsort(th)
        th = th[order]
        if len(th) < 2 or np.any(np.diff(th) <= 0):
            raise DomainError("need at least two distinct thresholds")
        labels = np.arange(len(th)) if arc_labels is None else np.asarray(arc_labels, int)[order]
        self.thresholds = th
        self.arc_labels = labels
        self.num_classes = int(labels.max()) + 1
        if self.num_classes < 2:
            raise DomainError("an arc classifier needs at least two classes")
        ends = np.append(th[1:], th[0] + 2 * math.pi)
        self._widths = ends - th
        # inward normals of the two bounding rays of each sector
        self._na = np.stack([-np.sin(th), np.cos(th)], axis=1)
        self._nb = np.stack([np.sin(ends), -np.cos(ends)], axis=1)

    def _arc_scores(self, X):
        a = X @ self._na.T
        b = X @ self._nb.T
        narrow = self._widths <= math.pi
        S = np.where(narrow, np.minimum(a, b), np.maximum(a, b))
        pick_a = np.where(narrow, a <= b, a >= b)
        return S, pick_a

    def arc_index(self, X):
        X = _as_batch(X, 2, "image")
        ang = np.mod(np.arctan2(X[:, 1], X[:, 0]), 2 * math.pi)
        idx = np.searchsorted(self.thresholds, ang, side="right") - 1
        return np.mod(idx, len(self.thresholds))

    def scores(self, X):
        S, _ = self._arc_scores(_as_batch(X, 2, "image"))
        out = np.full((S.shape[0], self.num_classes), -np.inf)
        for k in range(self.num_classes):
            out[:, k] = S[:, self.arc_labels == k].max(axis=1)
        return out

    def score_jacobian(self, X):
        X = _as_batch(X, 2, "image")
        S, pick_a = self._arc_scores(X)
        n = X.shape[0]
        J = np.empty((n, self.num_classes, 2))
        for k in range(self.num_classes):
            arcs = np.flatnonzero(self.arc_labels == k)
            best = arcs[np.argmax(S[:, arcs], axis=1)]
            J[:, k] = np.where(pick_a[np.arange(n), best][:, None], self._na[best], self._nb[best])
        return J

    def predict(self, X):
        return self.arc_labels[self.arc_index(X)]

    def to_dict(self):
        return {"kind": self.kind, "dims": [2, self.num_classes],
                "weights": {"thresholds": self.thresholds.tolist(), "arc_labels": self.arc_labels.tolist()}}


class MlpClassifier(Classifier):
    kind = "mlp"
    activation = "tanh"

    def __init__(self, params):
        self.params = [(np.asarray(W, float), np.asarray(b, float)) for W, b in params]
        widths = mlp.widths_of(self.params)
        self.input_dim, self.num_classes = widths[0], widths[-1]
        if self.num_classes < 2:
            raise DomainError("a classifier needs at least two classes")

    @property
    def widths(self):
        return mlp.widths_of(self.params)

    def scores(self, X):
        return mlp.forward(self.params, _as_batch(X, self.input_dim, "image"))[0]

    def score_jacobian(self, X):
        return mlp.jacobian(self.params, _as_batch(X, self.input_dim, "image"))

    def to_dict(self):
        return {"kind": self.kind, "dims": [self.input_dim, self.num_classes],
                "activation": self.activation, "weights": mlp.params_to_lists(self.params)}


def classify(f, x):
    """Label of a single image (or labels of a batch)."""
    x = np.asarray(x, dtype=float)
    out = f.predict(x)
    return int(out[0]) if x.ndim == 1 else out
