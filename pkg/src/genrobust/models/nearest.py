"""Nearest-neighbour robustification: classify the closest generated image.

``f_tilde(x) = f(g(z*))`` with ``z* = argmin_z ||g(z) - x||``.  On the range of
g it agrees with f; off the range its unconstrained robustness is at least
half the in-distribution robustness of f.
"""

from dataclasses import asdict, dataclass

import numpy as np

from .. import rng as _rng
from ..errors import ProjectionError
from .classifiers import Classifier
from .generators import _as_batch


@dataclass(frozen=True)
class ProjectionConfig:
    restarts: int = 8
    steps: int = 500
    step_size: float = 0.05
    grad_tol: float = 1e-7
    fail_tol: float = 1e-3
    seed: int = 0
    use_closed_form: bool = True


def project_to_latent(g, X, cfg=None):
    """Approximate argmin_z ||g(z) - x|| for each row of X."""
    cfg = cfg or ProjectionConfig()
    X = _as_batch(X, g.image_dim, "image")
    if cfg.use_closed_form:
        Z = g.project(X)
        if Z is not None:
            return Z
    n, d = X.shape[0], g.latent_dim
    starts = np.concatenate([
        np.zeros((1, d)),
        _rng.keyed_normals(cfg.seed, _rng.PROJECTION, 0, max(cfg.restarts - 1, 0), d),
    ])
    R = len(starts)
    Z = np.repeat(starts[:, None, :], n, axis=1).reshape(R * n, d)
    Xr = np.tile(X, (R, 1))

    def objective(Z):
        diff = g.forward(Z) - Xr
        return 0.5 * np.einsum("ij,ij->i", diff, diff), g.vjp(Z, diff)

    val, grad = objective(Z)
    step = np.full(R * n, cfg.step_size)
    for _ in range(cfg.steps):
        gnorm = np.linalg.norm(grad, axis=1)
        active = gnorm > cfg.grad_tol
        if not np.any(active):
            break
        cand = Z - step[:, None] * grad
        cval, cgrad = objective(cand)
        better = active & (cval < val)
        Z = np.where(better[:, None], cand, Z)
        val = np.where(better, cval, val)
        grad = np.where(better[:, None], cgrad, grad)
        step = np.where(better, step * 1.2, step * 0.5)
    val = val.reshape(R, n)
    best = np.argmin(val, axis=0)
    Zb = Z.reshape(R, n, d)[best, np.arange(n)]
    gb = np.linalg.norm(grad.reshape(R, n, d)[best, np.arange(n)], axis=1)
    bad = gb > cfg.fail_tol
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ProjectionError(f"projection did not converge for row {i} (gradient norm {gb[i]:.3g})",
                              Zb[i], float(np.sqrt(2 * val[best[i], i])))
    return Zb


class NearestNeighborWrapped(Classifier):
    kind = "nearest_neighbor"

    def __init__(self, inner, generator, proj=None):
        self.inner = inner
        self.generator = generator
        self.proj = proj or ProjectionConfig()
        self.num_classes = inner.num_classes
        self.input_dim = generator.image_dim

    def project(self, X):
        return project_to_latent(self.generator, X, self.proj)

    def scores(self, X):
        return self.inner.scores(self.generator.forward(self.project(X)))

    def predict(self, X):
        return self.inner.predict(self.generator.forward(self.project(X)))

    def score_jacobian(self, X):
        X = _as_batch(X, self.input_dim, "image")
        Jp = self.generator.project_jacobian(X) if self.proj.use_closed_form else None
        if Jp is not None:
            Z = self.generator.project(X)
            G = self.generator.forward(Z)
            return self.inner.score_jacobian(G) @ self.generator.jacobian(Z) @ Jp
        h = 1e-5 * np.maximum(1.0, np.linalg.norm(X, axis=1))
        cols = []
        for j in range(self.input_dim):
            E = np.zeros_like(X)
            E[:, j] = h
            cols.append((self.scores(X + E) - self.scores(X - E)) / (2 * h[:, None]))
        return np.stack(cols, axis=2)

    def to_dict(self):
        from .serialization import model_to_dict
        return {"kind": self.kind, "dims": [self.input_dim, self.num_classes],
                "inner": model_to_dict(self.inner), "generator": model_to_dict(self.generator),
                "projection": asdict(self.proj)}


def nearest_neighbor_wrap(f, g, proj=None):
    return NearestNeighborWrapped(f, g, proj)
