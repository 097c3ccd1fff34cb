"""Independent ground truth for small instances.

``brute_force_latent_robustness`` scans a latent offset grid (d <= 2) and
reports its discretisation error next to the value; the Monte Carlo helper
checks fooling-probability bounds against exact or attack-based distances.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels, rng as _rng
from .attacks import AttackConfig, _LatentSpace, _first_crossing, latent_attack
from .errors import CapabilityError, DomainError
from .gaussian import std_normal_cdf
from .models.generators import _as_batch

MAX_GRID_POINTS = 10**7
_CHUNK = 1 << 18


@dataclass(frozen=True)
class GridSpec:
    extent: float = 3.0
    resolution: int = 256

    def __post_init__(self):
        if self.resolution < 16:
            raise DomainError("grid resolution must be >= 16")
        if not self.extent > 0:
            raise DomainError("grid extent must be > 0")

    @property
    def spacing(self):
        return 2.0 * self.extent / (self.resolution - 1)

    def axis(self):
        return np.linspace(-self.extent, self.extent, self.resolution)


class OracleValue(NamedTuple):
    value: float
    grid_error: float


def _offsets(grid, d):
    ax = grid.axis()
    if d == 1:
        return ax[:, None]
    A, B = np.meshgrid(ax, ax, indexing="ij")
    return np.stack([A.ravel(), B.ravel()], axis=1)


def brute_force_latent_robustness(f, g, z, grid=None, refine_top=32):
    """Grid minimum of ||r|| with f(g(z + r)) != f(g(z)), for d <= 2.

    The best ``refine_top`` grid hits are refined by bisection along the ray
    from z, so the value is the length of a genuine label-changing offset.
    ``grid_error`` is the grid diagonal: the true minimum lies in
    [value - grid_error, value] whenever the boundary lies inside the grid.
    An empty grid (no label change within the extent) gives ``inf``.
    """
    grid = grid or GridSpec()
    d = g.latent_dim
    if d > 2:
        raise CapabilityError("brute-force oracle supports latent dimension <= 2 only")
    if grid.resolution ** d > MAX_GRID_POINTS:
        raise DomainError(f"grid of {grid.resolution ** d} points exceeds {MAX_GRID_POINTS}")
    z = _as_batch(z, d)
    space = _LatentSpace(f, g)
    ref = int(space.predict(z)[0])
    offsets = _offsets(grid, d)
    norms = np.empty(len(offsets))
    for lo in range(0, len(offsets), _CHUNK):
        off = offsets[lo:lo + _CHUNK]
        labels = space.predict(z + off)
        norms[lo:lo + _CHUNK] = _kernels.masked_norms(off, labels, ref)
    err = grid.spacing * math.sqrt(d)
    if not np.any(np.isfinite(norms)):
        return OracleValue(math.inf, err)
    k = min(refine_top, int(np.sum(np.isfinite(norms))))
    top = np.argpartition(norms, k - 1)[:k]
    ends = z + offsets[top]
    starts = np.repeat(z, k, axis=0)
    cfg = AttackConfig(scan_points=64, bisection_tol=1e-9)
    t = _first_crossing(space, starts, ends, np.full(k, ref), cfg)
    refined = np.where(np.isfinite(t), t, 1.0) * norms[top]
    return OracleValue(float(min(refined.min(), norms.min())), err)


def exact_fooling_cdf_halfspace(eta):
    """P(r_Z <= eta) for a half-space through the origin under N(0, I)."""
    if not eta >= 0:
        raise DomainError("eta must be >= 0")
    return float(2.0 * (std_normal_cdf(float(eta)) - 0.5))


# -- distance oracles for Monte Carlo ------------------------------------------

def checkerboard_distance_oracle(Z):
    """Exact distance to the opposite checkerboard cell: min_i dist(z_i, Z)."""
    return _kernels.checkerboard_distance(Z)


def halfspace_distance_oracle(f):
    def oracle(Z):
        return np.abs(f.signed_distance(Z))
    return oracle


def attack_distance_oracle(f, g, cfg=None):
    """Upper bound on the latent distance via the latent attack (inf if none found)."""
    def oracle(Z):
        r = latent_attack(f, g, Z, cfg).radius
        return np.where(np.isfinite(r), r, np.inf)
    return oracle


def _resolve_oracle(f, g, distance_oracle):
    if callable(distance_oracle):
        return distance_oracle
    if distance_oracle == "checkerboard":
        return checkerboard_distance_oracle
    if distance_oracle == "halfspace":
        return halfspace_distance_oracle(f)
    if distance_oracle == "attack":
        return attack_distance_oracle(f, g)
    raise DomainError(f"unknown distance oracle {distance_oracle!r}")


def mc_fooling_fraction(f, g, eta, n, distance_oracle, seed, chunk=50_000):
    """Fraction of n latent samples within eta of another class, and its binomial SE.

    ``eta`` may be a scalar or an array; the samples are shared across values.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    oracle = _resolve_oracle(f, g, distance_oracle)
    etas = np.atleast_1d(np.asarray(eta, dtype=float))
    hits = np.zeros(len(etas))
    for lo in range(0, n, chunk):
        m = min(chunk, n - lo)
        dist = np.asarray(oracle(_rng.sample_latent(g.latent_dim, m, seed, start=lo)))
        hits += (dist[None, :] <= etas[:, None]).sum(axis=1)
    frac = hits / n
    se = np.sqrt(frac * (1.0 - frac) / n)
    if np.ndim(eta) == 0:
        return float(frac[0]), float(se[0])
    return frac, se
