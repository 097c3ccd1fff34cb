"""Hot inner loops, each with a numba kernel and a pure-numpy twin.

The numba path is used when numba imports and ``GENROBUST_NUMBA`` is not set
to ``0``.  Both paths return identical values (tests/test_kernels.py), so the
flag only changes speed.  ``benchmarks/bench_kernels.py`` times both.
"""

import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
else:
    # the bundled TBB is often too old; the portable layer avoids the warning
    if "NUMBA_THREADING_LAYER" not in os.environ:
        numba.config.THREADING_LAYER = "workqueue"

USE_NUMBA = numba is not None and os.environ.get("GENROBUST_NUMBA", "1") not in ("0", "false", "no")

_JIT = dict(nogil=True, cache=True)


# -- numpy reference implementations ---------------------------------------

def masked_norms_numpy(offsets, labels, ref):
    """Euclidean norms of ``offsets`` rows whose label differs from ``ref``; inf elsewhere."""
    out = np.sqrt(np.einsum("ij,ij->i", offsets, offsets))
    out[labels == ref] = np.inf
    return out


def checkerboard_distance_numpy(Z):
    frac = Z - np.floor(Z)
    return np.minimum(frac, 1.0 - frac).min(axis=1)


def checkerboard_parity_numpy(Z):
    return (np.floor(Z).sum(axis=1).astype(np.int64) % 2).astype(np.int64)


def pava_numpy(y, w):
    """Weighted isotonic (nondecreasing) regression by pool-adjacent-violators."""
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    vals, wts, sizes = [], [], []
    for yi, wi in zip(y, w):
        vals.append(yi)
        wts.append(wi)
        sizes.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            wsum = wts[-2] + wts[-1]
            merged = (vals[-2] * wts[-2] + vals[-1] * wts[-1]) / wsum
            size = sizes[-2] + sizes[-1]
            del vals[-1], wts[-1], sizes[-1]
            vals[-1], wts[-1], sizes[-1] = merged, wsum, size
    return np.repeat(np.array(vals), sizes)


# -- numba kernels -----------------------------------------------------------

if numba is not None:

    @numba.njit(parallel=True, **_JIT)
    def masked_norms_numba(offsets, labels, ref):
        n, d = offsets.shape
        out = np.empty(n)
        for i in numba.prange(n):
            if labels[i] == ref:
                out[i] = np.inf
            else:
                s = 0.0
                for j in range(d):
                    s += offsets[i, j] * offsets[i, j]
                out[i] = math.sqrt(s)
        return out

    @numba.njit(parallel=True, **_JIT)
    def checkerboard_distance_numba(Z):
        n, d = Z.shape
        out = np.empty(n)
        for i in numba.prange(n):
            best = np.inf
            for j in range(d):
                frac = Z[i, j] - math.floor(Z[i, j])
                dist = min(frac, 1.0 - frac)
                if dist < best:
                    best = dist
            out[i] = best
        return out

    @numba.njit(parallel=True, **_JIT)
    def checkerboard_parity_numba(Z):
        n, d = Z.shape
        out = np.empty(n, dtype=np.int64)
        for i in numba.prange(n):
            s = 0.0
            for j in range(d):
                s += math.floor(Z[i, j])
            out[i] = np.int64(s) % 2
        return out

    @numba.njit(**_JIT)
    def pava_numba(y, w):
        n = y.shape[0]
        vals = np.empty(n)
        wts = np.empty(n)
        sizes = np.empty(n, dtype=np.int64)
        top = -1
        for i in range(n):
            top += 1
            vals[top] = y[i]
            wts[top] = w[i]
            sizes[top] = 1
            while top > 0 and vals[top - 1] > vals[top]:
                wsum = wts[top - 1] + wts[top]
                vals[top - 1] = (vals[top - 1] * wts[top - 1] + vals[top] * wts[top]) / wsum
                wts[top - 1] = wsum
                sizes[top - 1] += sizes[top]
                top -= 1
        out = np.empty(n)
        k = 0
        for b in range(top + 1):
            for _ in range(sizes[b]):
                out[k] = vals[b]
                k += 1
        return out


def _pick(name):
    if USE_NUMBA:
        return globals()[name + "_numba"]
    return globals()[name + "_numpy"]


def masked_norms(offsets, labels, ref):
    offsets = np.ascontiguousarray(offsets, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    return _pick("masked_norms")(offsets, labels, np.int64(ref))


def checkerboard_distance(Z):
    """Distance from each row of ``Z`` to the opposite checkerboard cell."""
    return _pick("checkerboard_distance")(np.ascontiguousarray(Z, dtype=np.float64))


def checkerboard_parity(Z):
    """``sum(floor(z_i)) mod 2`` per row (0 or 1)."""
    return _pick("checkerboard_parity")(np.ascontiguousarray(Z, dtype=np.float64))


def pava(y, w=None):
    y = np.ascontiguousarray(y, dtype=np.float64)
    w = np.ones_like(y) if w is None else np.ascontiguousarray(w, dtype=np.float64)
    return _pick("pava")(y, w)
