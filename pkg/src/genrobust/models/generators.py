"""Generators g: R^d -> R^m with a standard normal latent prior.

All methods are batched: ``forward`` maps (n, d) to (n, m), ``jacobian``
returns (n, m, d).  Single points (1-D arrays) are accepted by the
module-level helpers ``generate`` and ``generator_jvp``.
"""

import math

import numpy as np

from ..errors import CapabilityError, DomainError
from ..modulus import IdentityModulus, LinearModulus, TabulatedModulus
from . import mlp

FD_STEP = 1e-5


def _as_batch(Z, dim, what="latent"):
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[None, :]
    if Z.ndim != 2 or Z.shape[1] != dim:
        raise DomainError(f"{what} dimension mismatch: expected {dim}, got shape {Z.shape}")
    if not np.all(np.isfinite(Z)):
        raise DomainError(f"{what} input must be finite")
    return Z


class Generator:
    latent_dim: int
    image_dim: int
    gradient_capability = "analytic"
    kind = "abstract"

    def forward(self, Z):
        raise NotImplementedError

    def jacobian(self, Z):
        raise NotImplementedError

    def jvp(self, Z, V):
        return np.einsum("nmd,nd->nm", self.jacobian(Z), V)

    def vjp(self, Z, U):
        return np.einsum("nmd,nm->nd", self.jacobian(Z), U)

    def project(self, X):
        """Closed-form nearest latent code, or None if the generator has none."""
        return None

    def project_jacobian(self, X):
        return None

    def known_modulus(self):
        return None

    def __call__(self, Z):
        return self.forward(Z)


class IdentityGenerator(Generator):
    kind = "identity"

    def __init__(self, dim, scale=1.0):
        if dim < 1 or not scale > 0:
            raise DomainError("IdentityGenerator needs dim >= 1 and scale > 0")
        self.latent_dim = self.image_dim = int(dim)
        self.scale = float(scale)

    def forward(self, Z):
        return self.scale * _as_batch(Z, self.latent_dim)

    def jacobian(self, Z):
        n = _as_batch(Z, self.latent_dim).shape[0]
        return np.broadcast_to(self.scale * np.eye(self.latent_dim), (n, self.latent_dim, self.latent_dim))

    def jvp(self, Z, V):
        return self.scale * np.asarray(V, dtype=float)

    def vjp(self, Z, U):
        return self.scale * np.asarray(U, dtype=float)

    def project(self, X):
        return _as_batch(X, self.image_dim, "image") / self.scale

    def project_jacobian(self, X):
        n = _as_batch(X, self.image_dim, "image").shape[0]
        return np.broadcast_to(np.eye(self.latent_dim) / self.scale, (n, self.latent_dim, self.latent_dim))

    def known_modulus(self):
        return IdentityModulus() if self.scale == 1.0 else LinearModulus(self.scale)

    def to_dict(self):
        return {"kind": self.kind, "dims": [self.latent_dim, self.image_dim], "scale": self.scale}


class LinearGenerator(Generator):
    """g(z) = A z + b."""

    kind = "linear"

    def __init__(self, A, b=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        self.A = A
        self.image_dim, self.latent_dim = A.shape
        self.b = np.zeros(self.image_dim) if b is None else np.asarray(b, dtype=float)
        if self.b.shape != (self.image_dim,):
            raise DomainError("offset must have length m")
        self._pinv = np.linalg.pinv(A)

    def forward(self, Z):
        return _as_batch(Z, self.latent_dim) @ self.A.T + self.b

    def jacobian(self, Z):
        n = _as_batch(Z, self.latent_dim).shape[0]
        return np.broadcast_to(self.A, (n,) + self.A.shape)

    def jvp(self, Z, V):
        return np.asarray(V, dtype=float) @ self.A.T

    def vjp(self, Z, U):
        return np.asarray(U, dtype=float) @ self.A

    def project(self, X):
        return (_as_batch(X, self.image_dim, "image") - self.b) @ self._pinv.T

    def project_jacobian(self, X):
        n = _as_batch(X, self.image_dim, "image").shape[0]
        return np.broadcast_to(self._pinv, (n,) + self._pinv.shape)

    def known_modulus(self):
        return LinearModulus(float(np.linalg.norm(self.A, 2)))

    def to_dict(self):
        return {"kind": self.kind, "dims": [self.latent_dim, self.image_dim],
                "weights": {"A": self.A.tolist(), "b": self.b.tolist()}}


class CircleGenerator(Generator):
    """g(z) = (cos 2 pi z, sin 2 pi z), d = 1, m = 2."""

    kind = "circle"
    latent_dim = 1
    image_dim = 2

    def forward(self, Z):
        t = 2.0 * math.pi * _as_batch(Z, 1)[:, 0]
        return np.stack([np.cos(t), np.sin(t)], axis=1)

    def jacobian(self, Z):
        t = 2.0 * math.pi * _as_batch(Z, 1)[:, 0]
        return (2.0 * math.pi * np.stack([-np.sin(t), np.cos(t)], axis=1))[:, :, None]

    def project(self, X):
        """Angle of x over 2 pi, in (-1/2, 1/2]; the origin maps to 0."""
        X = _as_batch(X, 2, "image")
        return (np.arctan2(X[:, 1], X[:, 0]) / (2.0 * math.pi))[:, None]

    def project_jacobian(self, X):
        X = _as_batch(X, 2, "image")
        r2 = np.maximum(np.einsum("ij,ij->i", X, X), 1e-300)
        return (np.stack([-X[:, 1], X[:, 0]], axis=1) / (2.0 * math.pi * r2[:, None]))[:, None, :]

    def known_modulus(self):
        # chord length 2 sin(pi t) is increasing and concave up to t = 1/2
        t = np.linspace(0.0, 0.5, 257)
        return TabulatedModulus(tuple(zip(t.tolist(), (2.0 * np.sin(math.pi * t)).tolist())))

    def to_dict(self):
        return {"kind": self.kind, "dims": [1, 2]}


class MlpGenerator(Generator):
    """tanh network with an affine output layer."""

    kind = "mlp"
    activation = "tanh"

    def __init__(self, params):
        self.params = [(np.asarray(W, float), np.asarray(b, float)) for W, b in params]
        widths = mlp.widths_of(self.params)
        self.latent_dim, self.image_dim = widths[0], widths[-1]
        if not all(np.all(np.isfinite(W)) and np.all(np.isfinite(b)) for W, b in self.params):
            raise DomainError("MLP weights must be finite")

    @classmethod
    def random(cls, widths, seed, gain=1.0):
        from .. import rng as _rng
        return cls(mlp.init_params(widths, _rng.substream(seed, _rng.INIT, 0), gain))

    @property
    def widths(self):
        return mlp.widths_of(self.params)

    def forward(self, Z):
        return mlp.forward(self.params, _as_batch(Z, self.latent_dim))[0]

    def jacobian(self, Z):
        return mlp.jacobian(self.params, _as_batch(Z, self.latent_dim))

    def jvp(self, Z, V):
        return mlp.jvp(self.params, _as_batch(Z, self.latent_dim), np.atleast_2d(V))

    def vjp(self, Z, U):
        return mlp.vjp(self.params, _as_batch(Z, self.latent_dim), np.atleast_2d(U))

    def to_dict(self):
        return {"kind": self.kind, "role": "generator", "dims": [self.latent_dim, self.image_dim],
                "activation": self.activation, "weights": mlp.params_to_lists(self.params)}


class FunctionGenerator(Generator):
    """Wraps a plain batched callable; derivatives by central differences."""

    kind = "function"
    gradient_capability = "finite-difference"

    def __init__(self, fn, latent_dim, image_dim, fd_step=FD_STEP):
        self.fn = fn
        self.latent_dim, self.image_dim = int(latent_dim), int(image_dim)
        self.fd_step = fd_step

    def forward(self, Z):
        return np.asarray(self.fn(_as_batch(Z, self.latent_dim)), dtype=float)

    def jacobian(self, Z):
        Z = _as_batch(Z, self.latent_dim)
        cols = []
        for j in range(self.latent_dim):
            E = np.zeros_like(Z)
            E[:, j] = self.fd_step
            cols.append((self.forward(Z + E) - self.forward(Z - E)) / (2 * self.fd_step))
        return np.stack(cols, axis=2)

    def jvp(self, Z, V):
        Z = _as_batch(Z, self.latent_dim)
        V = np.atleast_2d(V)
        h = self.fd_step
        return (self.forward(Z + h * V) - self.forward(Z - h * V)) / (2 * h)

    def to_dict(self):
        raise CapabilityError("function generators cannot be serialized")


def generate(g, z):
    """g(z) for a single latent point or a batch."""
    z = np.asarray(z, dtype=float)
    out = g.forward(z)
    return out[0] if z.ndim == 1 else out


def generator_jvp(g, z, direction):
    """J_g(z) @ direction for a single point."""
    direction = np.asarray(direction, dtype=float)
    if not np.all(np.isfinite(direction)):
        raise DomainError("direction must be finite")
    z = np.atleast_2d(np.asarray(z, dtype=float))
    return np.asarray(g.jvp(z, direction.reshape(1, -1)))[0]
