"""Moduli of continuity for generators, and their empirical estimation.

A modulus omega bounds how far apart two generated images can be given the
latent distance of their codes: ``||g(z) - g(z')|| <= omega(||z - z'||_2)``.
Three representations are supported (identity, affine, tabulated piecewise
linear), all monotone and invertible on their range.

The estimator works with the probabilistic variant omega_kappa(delta): the
smallest alpha such that the supremum of ``||g(z) - g(z')||`` over the
delta-ball around a random latent z exceeds alpha with probability at most
kappa.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, rng as _rng
from .errors import CapabilityError, DomainError, HypothesisViolation, NoLatentRadiusError, RangeError


class ModulusOfContinuity:
    """Base class; subclasses implement ``__call__``, ``inverse`` and ``is_concave``."""

    floor = 0.0

    def __call__(self, delta):
        raise NotImplementedError

    def inverse(self, eta):
        raise NotImplementedError

    def is_concave(self):
        raise NotImplementedError

    def upper_limit(self):
        """Largest delta at which the modulus is defined."""
        return math.inf

    def to_dict(self):
        raise NotImplementedError


@dataclass(frozen=True)
class IdentityModulus(ModulusOfContinuity):
    def __call__(self, delta):
        _check_delta(delta)
        return float(delta)

    def inverse(self, eta):
        _check_eta(eta)
        return float(eta)

    def is_concave(self):
        return True

    def to_dict(self):
        return {"kind": "identity"}


@dataclass(frozen=True)
class LinearModulus(ModulusOfContinuity):
    """omega(t) = slope * t + offset.  offset > 0 models disconnected support."""

    slope: float
    offset: float = 0.0

    def __post_init__(self):
        if not self.slope > 0 or not self.offset >= 0:
            raise DomainError("LinearModulus needs slope > 0 and offset >= 0")

    @property
    def floor(self):
        return self.offset

    def __call__(self, delta):
        _check_delta(delta)
        return self.slope * float(delta) + self.offset

    def inverse(self, eta):
        _check_eta(eta)
        if eta < self.offset:
            raise NoLatentRadiusError(f"eta={eta} is below omega(0)={self.offset}")
        return (float(eta) - self.offset) / self.slope

    def is_concave(self):
        return True

    def to_dict(self):
        return {"kind": "linear", "slope": self.slope, "offset": self.offset}


@dataclass(frozen=True)
class TabulatedModulus(ModulusOfContinuity):
    """Piecewise-linear modulus through ``points`` [(delta, value), ...]."""

    points: tuple

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise DomainError("TabulatedModulus needs at least two (delta, value) points")
        if np.any(pts < 0) or not np.all(np.isfinite(pts)):
            raise DomainError("tabulated points must be finite and nonnegative")
        if np.any(np.diff(pts[:, 0]) <= 0) or np.any(np.diff(pts[:, 1]) <= 0):
            raise DomainError("tabulated points must be strictly increasing in both coordinates")
        object.__setattr__(self, "points", tuple(map(tuple, pts.tolist())))

    @property
    def deltas(self):
        return np.array([p[0] for p in self.points])

    @property
    def values(self):
        return np.array([p[1] for p in self.points])

    @property
    def floor(self):
        return self.points[0][1]

    def upper_limit(self):
        return self.points[-1][0]

    def __call__(self, delta):
        _check_delta(delta)
        lo, hi = self.points[0][0], self.points[-1][0]
        if not lo <= delta <= hi:
            raise RangeError(f"delta={delta} outside tabulated range [{lo}, {hi}]")
        return float(np.interp(delta, self.deltas, self.values))

    def inverse(self, eta):
        _check_eta(eta)
        vals = self.values
        if eta < vals[0]:
            raise NoLatentRadiusError(f"eta={eta} is below omega({self.points[0][0]})={vals[0]}")
        if eta > vals[-1]:
            raise RangeError(f"eta={eta} above tabulated range (max {vals[-1]})")
        # both coordinates strictly increase, so swapping axes inverts exactly
        return float(np.interp(eta, vals, self.deltas))

    def is_concave(self):
        d = np.diff(self.deltas)
        slopes = np.diff(self.values) / d
        return bool(np.all(np.diff(slopes) <= 1e-12 * np.maximum(1.0, np.abs(slopes[:-1]))))

    def to_dict(self):
        return {"kind": "tabulated", "points": [list(p) for p in self.points]}


def _check_delta(delta):
    if not delta >= 0 or not math.isfinite(delta):
        raise DomainError(f"modulus argument must be finite and >= 0, got {delta}")


def _check_eta(eta):
    if not eta >= 0 or not math.isfinite(eta):
        raise DomainError(f"image distance must be finite and >= 0, got {eta}")


def modulus_eval(omega, delta):
    return omega(delta)


def modulus_inverse(omega, eta):
    return omega.inverse(eta)


def modulus_from_dict(d):
    kind = d.get("kind")
    if kind == "identity":
        return IdentityModulus()
    if kind == "linear":
        return LinearModulus(float(d["slope"]), float(d.get("offset", 0.0)))
    if kind == "tabulated":
        return TabulatedModulus(tuple(map(tuple, d["points"])))
    raise DomainError(f"unknown modulus kind {kind!r}")


def parse_modulus(text):
    """Parse CLI shorthand: ``identity``, ``linear:L`` or ``linear:L,b``."""
    text = text.strip()
    if text == "identity":
        return IdentityModulus()
    if text.startswith("linear:"):
        parts = [float(v) for v in text[len("linear:"):].split(",")]
        return LinearModulus(*parts)
    raise DomainError(f"cannot parse modulus {text!r}")


# -- estimation ----------------------------------------------------------------

@dataclass(frozen=True)
class InnerOptConfig:
    """Projected gradient ascent on the sphere ||z' - z|| = delta."""

    steps: int = 200
    restarts: int = 3
    step_size: float = 0.5
    allow_finite_difference: bool = True
    fd_rel_step: float = 1e-4
    chunk_size: int = 64
    workers: int = 1


@dataclass
class ModulusEstimate:
    delta_grid: list
    kappa: float
    values: list
    samples_per_point: int
    inner_opt_steps: int = 0
    raw_values: list = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.kappa < 1.0:
            raise DomainError("kappa must lie in [0, 1)")
        if self.samples_per_point < 1:
            raise DomainError("samples_per_point must be >= 1")

    def to_modulus(self):
        """Tabulated modulus through (0, 0) and the estimate.

        Ties left by the isotonic fit are collapsed to their first point, which
        can only overstate omega inside a tie run.
        """
        pts = [(0.0, 0.0)]
        for d, v in zip(self.delta_grid, self.values):
            if d > pts[-1][0] and v > pts[-1][1]:
                pts.append((float(d), float(v)))
        return TabulatedModulus(tuple(pts))

    def to_json(self):
        return json.dumps({
            "delta_grid": list(map(float, self.delta_grid)),
            "kappa": float(self.kappa),
            "values": list(map(float, self.values)),
            "samples_per_point": int(self.samples_per_point),
            "inner_opt_steps": int(self.inner_opt_steps),
        }, indent=2)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(d["delta_grid"], d["kappa"], d["values"], d["samples_per_point"],
                   d.get("inner_opt_steps", 0))


def _objective_and_grad(g, Z, G0, U, fd, fd_step):
    X = g.forward(Z + U)
    diff = X - G0
    val = np.einsum("ij,ij->i", diff, diff)
    if not fd:
        return val, 2.0 * g.vjp(Z + U, diff)
    grad = np.empty_like(U)
    for j in range(U.shape[1]):
        E = np.zeros_like(U)
        E[:, j] = fd_step
        dp = g.forward(Z + U + E) - G0
        dm = g.forward(Z + U - E) - G0
        grad[:, j] = (np.einsum("ij,ij->i", dp, dp) - np.einsum("ij,ij->i", dm, dm)) / (2 * fd_step)
    return val, grad


def _sphere_suprema(g, Z, delta, opt, starts):
    """Batched projected ascent; ``starts`` has shape (restarts, n, d)."""
    fd = getattr(g, "gradient_capability", "analytic") != "analytic"
    if fd and not opt.allow_finite_difference:
        raise CapabilityError("generator has no analytic gradients and finite differences are disabled")
    R, n, d = starts.shape
    Zr = np.repeat(Z[None], R, axis=0).reshape(R * n, d)
    G0 = g.forward(Zr)
    U = starts.reshape(R * n, d)
    U = delta * U / np.linalg.norm(U, axis=1, keepdims=True)
    fd_step = opt.fd_rel_step * delta
    val, grad = _objective_and_grad(g, Zr, G0, U, fd, fd_step)
    step = np.full(R * n, opt.step_size)
    for _ in range(opt.steps):
        gn = np.linalg.norm(grad, axis=1, keepdims=True)
        active = (gn[:, 0] > 0) & (step > 1e-10)
        if not np.any(active):
            break
        dirn = np.where(gn > 0, grad / np.where(gn > 0, gn, 1.0), 0.0)
        cand = U + (step * delta)[:, None] * dirn
        cand = delta * cand / np.linalg.norm(cand, axis=1, keepdims=True)
        cval, cgrad = _objective_and_grad(g, Zr, G0, cand, fd, fd_step)
        better = active & (cval > val)
        U = np.where(better[:, None], cand, U)
        val = np.where(better, cval, val)
        grad = np.where(better[:, None], cgrad, grad)
        step = np.where(better, np.minimum(step * 1.5, 2.0), step * 0.5)
    return np.sqrt(val).reshape(R, n).max(axis=0)


def sample_suprema(g, delta, n_samples, opt, seed):
    """Per-sample approximate sup over the delta-ball of ||g(z) - g(z')||.

    Latent centres and restart directions come from keyed substreams and chunk
    boundaries depend only on the sample index, so ``opt.workers`` does not
    change the result.
    """
    if not delta > 0:
        raise DomainError("delta must be > 0")
    d = g.latent_dim
    Z = _rng.sample_latent(d, n_samples, seed)
    dirs = _rng.keyed_normals(seed, _rng.MODULUS, 0, n_samples * opt.restarts, d)
    dirs = dirs.reshape(n_samples, opt.restarts, d).transpose(1, 0, 2)
    bounds = list(range(0, n_samples, opt.chunk_size)) + [n_samples]
    chunks = list(zip(bounds[:-1], bounds[1:]))

    def run(lo_hi):
        lo, hi = lo_hi
        return _sphere_suprema(g, Z[lo:hi], delta, opt, dirs[:, lo:hi])

    if opt.workers > 1:
        with ThreadPoolExecutor(opt.workers) as ex:
            parts = list(ex.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return np.concatenate(parts)


def upper_quantile(samples, kappa):
    """Empirical (1 - kappa)-quantile, 'higher' convention (ceiling index)."""
    return float(np.quantile(np.asarray(samples), 1.0 - kappa, method="higher"))


def estimate_modulus(g, delta, kappa, n_samples, opt=None, seed=0):
    """omega_kappa(delta) from ``n_samples`` latent draws.

    The supremum is approached from below by the inner optimizer, so the
    estimate (and any bound built on it) errs on the optimistic side.
    """
    opt = opt or InnerOptConfig()
    if n_samples < 10:
        raise DomainError("estimate_modulus needs n_samples >= 10")
    if not 0.0 <= kappa < 1.0:
        raise DomainError("kappa must lie in [0, 1)")
    return upper_quantile(sample_suprema(g, delta, n_samples, opt, seed), kappa)


def fit_modulus_table(g, delta_grid, kappa, n_samples, opt=None, seed=0):
    """Estimate omega_kappa on a grid and make it monotone by isotonic regression."""
    opt = opt or InnerOptConfig()
    grid = np.asarray(delta_grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0 or np.any(np.diff(grid) <= 0) or grid[0] <= 0:
        raise DomainError("delta_grid must be positive and strictly increasing")
    raw = np.array([estimate_modulus(g, float(dlt), kappa, n_samples, opt, seed) for dlt in grid])
    fitted = _kernels.pava(raw)
    return ModulusEstimate(grid.tolist(), float(kappa), fitted.tolist(), int(n_samples),
                           opt.steps, raw.tolist())


def require_concave(omega):
    if not omega.is_concave():
        raise HypothesisViolation("expectation bound requires a concave modulus")
