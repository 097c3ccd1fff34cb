"""Counter-based random substreams.

Every stochastic quantity is keyed by ``(seed, purpose, index)`` so that the
value drawn for sample ``i`` never depends on how many other samples were drawn
before it, on chunking, or on the number of worker threads.
"""

import numpy as np

# Rows per Philox counter block.  Changing this changes every sample.
BLOCK = 1024

# Stream tags; values are part of the on-disk reproducibility contract.
LATENT = 0
RESTART = 1
MODULUS = 2
TRAIN = 3
NORM_MC = 4
INIT = 5
PROJECTION = 6


def _check_seed(seed):
    seed = int(seed)
    if not 0 <= seed < 2**63:
        raise ValueError(f"seed must be in [0, 2**63), got {seed}")
    return seed


def block_generator(seed, purpose, block):
    """Generator for one counter block of the ``(seed, purpose)`` stream."""
    key = (int(purpose) << 64) | _check_seed(seed)
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, int(block)]))


def keyed_normals(seed, purpose, start, n, d):
    """Rows ``start .. start+n-1`` of an infinite N(0, I_d) matrix keyed by seed."""
    out = np.empty((n, d))
    if n == 0:
        return out
    first, last = start // BLOCK, (start + n - 1) // BLOCK
    for b in range(first, last + 1):
        rows = block_generator(seed, purpose, b).standard_normal((BLOCK, d))
        lo = max(start, b * BLOCK)
        hi = min(start + n, (b + 1) * BLOCK)
        out[lo - start:hi - start] = rows[lo - b * BLOCK:hi - b * BLOCK]
    return out


def sample_latent(d, n, seed, start=0):
    """Draw ``n`` latent points z ~ N(0, I_d); row i depends only on (seed, start + i)."""
    if d < 1 or n < 0:
        raise ValueError("need d >= 1 and n >= 0")
    return keyed_normals(seed, LATENT, start, n, d)


def substream(seed, purpose, index):
    """Independent generator for a single (seed, purpose, index) triple."""
    return np.random.default_rng([_check_seed(seed), int(purpose), int(index)])
