"""Numerical upper bound on a robustness percentile from an estimated modulus.

For each latent radius delta on a grid:

* ``F(delta)`` is the general fooling-probability bound in latent space, a
  lower bound on P(r_Z <= delta);
* the slack ``p = F(delta) - p_t`` is what may be spent on the modulus
  failure probability; grid points with ``p <= 0`` are skipped;
* ``alpha(delta)`` is the smallest level with at most ``floor(p n)`` of the
  ``n`` sampled suprema ``s_i = sup_{||u|| = delta} ||g(z_i + u) - g(z_i)||``
  at or above it.

Then P(r_in <= alpha) >= p_t up to sampling error, i.e. the p_t-quantile of
r_in is at most alpha.  The reported bound is the minimum over the grid.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..bounds import fooling_prob_general
from ..errors import DomainError, InfeasibleTargetError
from ..modulus import IdentityModulus, InnerOptConfig, sample_suprema

_IDENTITY = IdentityModulus()


@dataclass
class Algorithm1Result:
    alpha: float
    delta: float
    target: float
    rows: list = field(default_factory=list)
    n_samples: int = 0

    def to_dict(self):
        return {"alpha": self.alpha, "delta": self.delta, "target": self.target,
                "n_samples": self.n_samples, "rows": self.rows}


def level_with_tail(samples, p):
    """Smallest alpha with #{s_i >= alpha} <= floor(p n)."""
    s = np.sort(np.asarray(samples, dtype=float))
    n = len(s)
    m = int(math.floor(p * n + 1e-12))
    if m >= n:
        return 0.0
    return float(np.nextafter(s[n - m - 1], np.inf))


def run_algorithm1(g, dist, delta_grid, target=0.25, n_samples=100, opt=None, seed=0):
    """Upper bound alpha on the ``target``-quantile of in-distribution robustness."""
    if not 0.0 < target < 1.0:
        raise DomainError("target must lie in (0, 1)")
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    opt = opt or InnerOptConfig()
    rows = []
    best = None
    for k, delta in enumerate(float(d) for d in delta_grid):
        if not delta > 0:
            raise DomainError("delta grid must be positive")
        F = fooling_prob_general(dist, _IDENTITY, delta)
        p = F - target
        row = {"delta": delta, "latent_bound": F, "slack": p, "alpha": None}
        if p > 0:
            s = sample_suprema(g, delta, n_samples, opt, seed + k)
            row["alpha"] = level_with_tail(s, p)
            if best is None or row["alpha"] < best[0]:
                best = (row["alpha"], delta)
        rows.append(row)
    if best is None:
        raise InfeasibleTargetError(f"no grid radius reaches latent fooling probability above {target}")
    return Algorithm1Result(best[0], best[1], target, rows, n_samples)
