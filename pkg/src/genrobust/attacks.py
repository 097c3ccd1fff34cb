"""Minimal-perturbation searches for latent, in-distribution and unconstrained robustness.

All attacks are batched over rows and return upper estimates of the minimal
radius together with a replayable witness.  The shared engine is:

1. DeepFool: step to the nearest linearised decision boundary, with
   overshoot, until the label changes;
2. first-crossing search on the segment from the start point: a coarse scan
   followed by bisection to a relative tolerance;
3. tangent-plane refinement: project the start point onto the linearised
   boundary at the current witness and keep the result when it is closer.

Random restarts perturb the DeepFool starting point with keyed noise, so the
result for a row depends only on (cfg.seed, row index).
"""

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import rng as _rng
from .errors import DomainError, NonConvergenceError
from .models.classifiers import LatentClassifier
from .models.generators import _as_batch


@dataclass(frozen=True)
class AttackConfig:
    max_iters: int = 50
    overshoot: float = 0.02
    bisection_tol: float = 1e-6
    restarts: int = 8
    step_size: float = 0.1
    seed: int = 0
    refine_iters: int = 10
    scan_points: int = 16
    penalty_steps: int = 60
    chunk_size: int = 256
    workers: int = 1

    def __post_init__(self):
        if self.max_iters < 1:
            raise DomainError("max_iters must be >= 1")
        if not self.bisection_tol > 0:
            raise DomainError("bisection_tol must be > 0")
        if self.restarts < 0 or self.scan_points < 1 or self.chunk_size < 1 or self.workers < 1:
            raise DomainError("restarts >= 0, scan_points >= 1, chunk_size >= 1, workers >= 1 required")


class AttackResult(NamedTuple):
    """Per-row radii (nan when no label change was found) and witness points."""

    radius: np.ndarray
    witness: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray


@dataclass
class RobustnessRecord:
    sample_index: int
    z: list
    label: int
    r_z: Optional[float] = None
    r_in: Optional[float] = None
    r_unc: Optional[float] = None
    iterations: int = 0
    converged: bool = True


@dataclass
class TransferResult:
    v: np.ndarray
    norm: float
    fools_f: bool
    fools_h: bool
    eta: float = math.inf

    @property
    def success(self):
        return self.fools_f and self.fools_h and self.norm <= self.eta


# -- evaluation spaces -------------------------------------------------------

class _ImageSpace:
    def __init__(self, f):
        self.f = f
        self.dim = f.input_dim

    def scores(self, X):
        return self.f.scores(X)

    def jac(self, X):
        return self.f.score_jacobian(X)

    def predict(self, X):
        return self.f.predict(X)


class _LatentSpace:
    """The composite f(g(z)) seen as a classifier on latent codes."""

    def __init__(self, f, g):
        self.f, self.g = f, g
        self.dim = g.latent_dim
        self.native = isinstance(f, LatentClassifier) and f.generator is g

    def scores(self, Z):
        return self.f.latent_scores(Z) if self.native else self.f.scores(self.g.forward(Z))

    def jac(self, Z):
        if self.native:
            return self.f.latent_score_jacobian(Z)
        return self.f.score_jacobian(self.g.forward(Z)) @ self.g.jacobian(Z)

    def predict(self, Z):
        return self.f.latent_predict(Z) if self.native else self.f.predict(self.g.forward(Z))


def _rows(n):
    return np.arange(n)


def _deepfool_step(space, X, labels):
    """Offset to the nearest linearised boundary for each row of X."""
    S = space.scores(X)
    J = np.asarray(space.jac(X))
    n, K = S.shape
    r = _rows(n)
    fc = S[r, labels]
    Jc = J[r, labels]
    F = S - fc[:, None]                       # <= 0 for the true class region
    W = J - Jc[:, None, :]
    wn = np.linalg.norm(W, axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        dist = np.abs(F) / wn
    dist[r, labels] = np.inf
    dist[~np.isfinite(dist)] = np.inf
    j = np.argmin(dist, axis=1)
    wj = W[r, j]
    fj = np.abs(F[r, j])
    nrm2 = np.einsum("ij,ij->i", wj, wj)
    ok = np.isfinite(dist[r, j]) & (nrm2 > 0)
    step = np.zeros_like(X)
    step[ok] = ((fj[ok] + 1e-12) / nrm2[ok])[:, None] * wj[ok]
    return step, ok


def _deepfool(space, X0, labels, cfg, start=None):
    """Accumulated DeepFool perturbation from ``start`` (default X0)."""
    n = X0.shape[0]
    base = X0 if start is None else start
    R = np.zeros_like(X0)
    X = base.copy()
    iters = np.zeros(n, dtype=np.int64)
    active = space.predict(X) == labels
    for _ in range(cfg.max_iters):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        step, ok = _deepfool_step(space, X[idx], labels[idx])
        R[idx] += step
        X[idx] = base[idx] + (1.0 + cfg.overshoot) * R[idx]
        iters[idx] += 1
        still = space.predict(X[idx]) == labels[idx]
        active[idx] = still & ok
    flipped = space.predict(X) != labels
    return X, iters, flipped


def _first_crossing(space, X0, X1, labels, cfg):
    """Smallest t in (0, 1] (to bisection tolerance) where the label along
    X0 + t (X1 - X0) differs from ``labels``; nan if the scan finds none."""
    n = X0.shape[0]
    D = X1 - X0
    M = cfg.scan_points
    first = np.full(n, -1)
    for k in range(1, M + 1):
        todo = first < 0
        if not np.any(todo):
            break
        idx = np.flatnonzero(todo)
        flip = space.predict(X0[idx] + (k / M) * D[idx]) != labels[idx]
        first[idx[flip]] = k
    t = np.full(n, np.nan)
    found = first > 0
    if not np.any(found):
        return t
    idx = np.flatnonzero(found)
    lo = (first[idx] - 1) / M
    hi = first[idx] / M
    while True:
        open_ = hi - lo > cfg.bisection_tol * hi
        if not np.any(open_):
            break
        mid = 0.5 * (lo + hi)
        flip = space.predict(X0[idx] + mid[:, None] * D[idx]) != labels[idx]
        upd = open_ & flip
        hi = np.where(upd, mid, hi)
        lo = np.where(open_ & ~flip, mid, lo)
    t[idx] = hi
    return t


def _tangent_refine(space, X0, W, best, labels, cfg, dist_fn):
    """Project X0 onto the linearised boundary at each witness; keep improvements.

    ``best`` holds the current witness distances (inf where there is none).
    """
    W, best = W.copy(), best.copy()
    live = np.isfinite(best)
    for _ in range(cfg.refine_iters):
        if not np.any(live):
            break
        idx = np.flatnonzero(live)
        S = space.scores(W[idx])
        J = np.asarray(space.jac(W[idx]))
        r = _rows(len(idx))
        c = labels[idx]
        j = space.predict(W[idx])
        j = np.where(j == c, np.argmax(np.where(np.arange(S.shape[1]) == c[:, None], -np.inf, S), axis=1), j)
        m = S[r, c] - S[r, j]
        w = J[r, c] - J[r, j]
        nrm2 = np.einsum("ij,ij->i", w, w)
        good = nrm2 > 0
        mlin = m + np.einsum("ij,ij->i", w, X0[idx] - W[idx])
        P = X0[idx] - np.where(good, mlin / np.where(good, nrm2, 1.0), 0.0)[:, None] * w
        cand = X0[idx] + (1.0 + cfg.overshoot) * (P - X0[idx])
        t = _first_crossing(space, X0[idx], cand, c, cfg)
        ok = np.isfinite(t)
        newW = X0[idx] + np.where(ok, t, 1.0)[:, None] * (cand - X0[idx])
        newd = np.where(ok, dist_fn(X0[idx], newW), np.inf)
        better = ok & (newd < best[idx] * (1.0 - 1e-9))
        W[idx[better]] = newW[better]
        best[idx[better]] = newd[better]
        live[idx[~better]] = False
    return W, best


def _euclid(A, B):
    return np.linalg.norm(B - A, axis=1)


def _restart_noise(cfg, purpose, indices, dim):
    """(n, restarts, dim) keyed noise; row i uses counters i*restarts onwards."""
    R = cfg.restarts
    if R == 0 or len(indices) == 0:
        return np.zeros((len(indices), R, dim))
    lo = int(indices[0])
    if np.array_equal(indices, np.arange(lo, lo + len(indices))):
        flat = _rng.keyed_normals(cfg.seed, purpose, lo * R, len(indices) * R, dim)
        return flat.reshape(len(indices), R, dim)
    return np.stack([_rng.keyed_normals(cfg.seed, purpose, int(i) * R, R, dim) for i in indices])


def _attack(space, X0, labels, cfg, indices, purpose, dist_fn=_euclid, extra=None):
    """Restarted DeepFool + first crossing + refinement; min over candidates."""
    n, dim = X0.shape
    best = np.full(n, np.inf)
    bestW = X0.copy()
    iters = np.zeros(n, dtype=np.int64)

    def consider(W, d):
        nonlocal best, bestW
        upd = np.isfinite(d) & (d < best)
        best = np.where(upd, d, best)
        bestW = np.where(upd[:, None], W, bestW)

    def from_endpoint(X1):
        t = _first_crossing(space, X0, X1, labels, cfg)
        ok = np.isfinite(t)
        W = X0 + np.where(ok, t, 1.0)[:, None] * (X1 - X0)
        d = np.where(ok, dist_fn(X0, W), np.inf)
        return W, d

    noise = _restart_noise(cfg, purpose, indices, dim)
    for k in range(cfg.restarts + 1):
        start = None if k == 0 else X0 + cfg.step_size * noise[:, k - 1]
        X1, it, flipped = _deepfool(space, X0, labels, cfg, start)
        iters += it
        W, d = from_endpoint(np.where(flipped[:, None], X1, X0))
        consider(W, d)
    if extra is not None:
        for X1 in extra:
            consider(*from_endpoint(X1))
    # the opposite side of the best witness is a cheap second guess
    found = np.isfinite(best)
    if np.any(found):
        mirror = np.where(found[:, None], 2.0 * X0 - bestW, X0)
        consider(*from_endpoint(mirror))
    W, d = _tangent_refine(space, X0, bestW, best, labels, cfg, dist_fn)
    consider(W, d)
    radius = np.where(np.isfinite(best), best, np.nan)
    return AttackResult(radius, bestW, iters, np.isfinite(best))


# -- public batched attacks -------------------------------------------------

def _indices(indices, n):
    return np.arange(n) if indices is None else np.asarray(indices, dtype=np.int64)


def latent_attack(f, g, Z, cfg=None, indices=None):
    """Batched r_Z: minimal latent l2 perturbation changing f(g(z))."""
    cfg = cfg or AttackConfig()
    Z = _as_batch(Z, g.latent_dim)
    space = _LatentSpace(f, g)
    labels = space.predict(Z)
    return _attack(space, Z, labels, cfg, _indices(indices, len(Z)), _rng.RESTART)


def image_attack(f, X, cfg=None, indices=None, extra=None):
    """Batched r_unc: minimal image-space l2 perturbation changing f(x)."""
    cfg = cfg or AttackConfig()
    X = _as_batch(X, f.input_dim, "image")
    space = _ImageSpace(f)
    labels = space.predict(X)
    return _attack(space, X, labels, cfg, _indices(indices, len(X)), _rng.RESTART, extra=extra)


def _margin_grad(space, U, labels):
    """m = s_c - max_{j != c} s_j and its gradient (lowest index at ties)."""
    S = space.scores(U)
    J = np.asarray(space.jac(U))
    r = _rows(len(U))
    other = np.where(np.arange(S.shape[1]) == labels[:, None], -np.inf, S)
    j = np.argmax(other, axis=1)
    return S[r, labels] - S[r, j], J[r, labels] - J[r, j]


def _penalty_refine(space, g, Z0, U, labels, cfg):
    """Pull a label-changing latent point towards g(z0) in image space.

    Minimises lam * ||g(u) - g(z0)||^2 / 2 + max(0, m(u) + eps)^2 / 2 for a
    decreasing schedule of lam, by gradient descent with Armijo backtracking.
    """
    X0 = g.forward(Z0)
    m0, _ = _margin_grad(space, Z0, labels)
    eps = 1e-3 * np.maximum(np.abs(m0), 1e-6)

    def objective(U, lam):
        G = g.forward(U)
        diff = G - X0
        m, gm = _margin_grad(space, U, labels)
        h = np.maximum(0.0, m + eps)
        val = 0.5 * lam * np.einsum("ij,ij->i", diff, diff) + 0.5 * h * h
        grad = lam * g.vjp(U, diff) + h[:, None] * gm
        return val, grad

    step = np.full(len(U), cfg.step_size)
    for lam in (1.0, 0.3, 0.1, 0.03, 0.01):
        val, grad = objective(U, lam)
        for _ in range(cfg.penalty_steps):
            gg = np.einsum("ij,ij->i", grad, grad)
            cand = U - step[:, None] * grad
            cval, cgrad = objective(cand, lam)
            ok = cval <= val - 1e-4 * step * gg
            U = np.where(ok[:, None], cand, U)
            val = np.where(ok, cval, val)
            grad = np.where(ok[:, None], cgrad, grad)
            step = np.where(ok, np.minimum(step * 1.5, 10.0 * cfg.step_size), step * 0.5)
    return U


def in_distribution_attack(f, g, Z, cfg=None, indices=None, seed_result=None):
    """Batched r_in: minimal ||g(z') - g(z)|| over label-changing latent z'.

    Seeds from the latent attack witness, refines with a penalty method and
    localises the boundary along the latent ray from z.  The seed is kept
    whenever refinement does not improve on it.
    """
    cfg = cfg or AttackConfig()
    Z = _as_batch(Z, g.latent_dim)
    space = _LatentSpace(f, g)
    labels = space.predict(Z)
    idx = _indices(indices, len(Z))
    seed_result = seed_result or _attack(space, Z, labels, cfg, idx, _rng.RESTART)
    X0 = g.forward(Z)

    def img_dist(A, B):
        return np.linalg.norm(g.forward(B) - g.forward(A), axis=1)

    found = seed_result.converged
    best = np.full(len(Z), np.inf)
    bestW = seed_result.witness.copy()
    best[found] = np.linalg.norm(g.forward(seed_result.witness[found]) - X0[found], axis=1)
    if np.any(found):
        fi = np.flatnonzero(found)
        U = _penalty_refine(space, g, Z[fi], seed_result.witness[fi].copy(), labels[fi], cfg)
        flipped = space.predict(U) != labels[fi]
        cands = [U]
        # the penalty optimum sits just short of the boundary, so scan the ray past it
        far = Z[fi] + 2.0 * (U - Z[fi])
        t = _first_crossing(space, Z[fi], far, labels[fi], cfg)
        ok = np.isfinite(t)
        cands.append(Z[fi] + np.where(ok, t, 1.0)[:, None] * (far - Z[fi]))
        valid = [flipped, ok]
        for W, v in zip(cands, valid):
            d = np.where(v, img_dist(Z[fi], W), np.inf)
            upd = d < best[fi]
            best[fi[upd]] = d[upd]
            bestW[fi[upd]] = W[upd]
        W, d = _tangent_refine(space, Z[fi], bestW[fi], best[fi], labels[fi], cfg, img_dist)
        upd = d < best[fi]
        best[fi[upd]] = d[upd]
        bestW[fi[upd]] = W[upd]
    radius = np.where(np.isfinite(best), best, np.nan)
    return AttackResult(radius, bestW, seed_result.iterations, np.isfinite(best))


# -- single-point wrappers -----------------------------------------------------

def _single(result, what):
    if not result.converged[0]:
        raise NonConvergenceError(f"{what}: no label change found")
    return float(result.radius[0])


def latent_robustness(f, g, z, cfg=None):
    return _single(latent_attack(f, g, np.atleast_2d(z), cfg), "latent robustness")


def in_distribution_robustness(f, g, z, cfg=None):
    return _single(in_distribution_attack(f, g, np.atleast_2d(z), cfg), "in-distribution robustness")


def unconstrained_robustness(f, x, cfg=None):
    return _single(image_attack(f, np.atleast_2d(x), cfg), "unconstrained robustness")


# -- transferability ---------------------------------------------------------

def _joint_margin(f, h, X, cf, ch):
    mf, gf = _margin_grad(_ImageSpace(f), X, cf)
    mh, gh = _margin_grad(_ImageSpace(h), X, ch)
    use_f = mf >= mh
    return np.maximum(mf, mh), np.where(use_f[:, None], gf, gh)


def transfer_attack(f, h, X, eta, cfg=None):
    """Batched joint DeepFool on max(m_f, m_h); returns perturbations and flags."""
    cfg = cfg or AttackConfig()
    X = _as_batch(X, f.input_dim, "image")
    cf, ch = f.predict(X), h.predict(X)
    R = np.zeros_like(X)
    Xc = X.copy()

    def both(Y, rows=slice(None)):
        return (f.predict(Y) != cf[rows]) & (h.predict(Y) != ch[rows])

    active = ~both(Xc)
    for _ in range(cfg.max_iters):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        m, w = _joint_margin(f, h, Xc[idx], cf[idx], ch[idx])
        nrm2 = np.einsum("ij,ij->i", w, w)
        ok = nrm2 > 0
        R[idx] -= np.where(ok, (np.maximum(m, 0.0) + 1e-12) / np.where(ok, nrm2, 1.0), 0.0)[:, None] * w
        Xc[idx] = X[idx] + (1.0 + cfg.overshoot) * R[idx]
        active[idx] = ok & ~both(Xc[idx], idx)
        # stop rows that have wandered far past the budget
        active &= np.linalg.norm(Xc - X, axis=1) <= 4.0 * eta + 1.0
    hit = both(Xc)
    V = Xc - X
    if np.any(hit):
        # shrink along the segment while both labels stay flipped
        idx = np.flatnonzero(hit)
        lo, hi = np.zeros(len(idx)), np.ones(len(idx))
        while True:
            open_ = hi - lo > cfg.bisection_tol * hi
            if not np.any(open_):
                break
            mid = 0.5 * (lo + hi)
            ok = both(X[idx] + mid[:, None] * V[idx], idx)
            hi = np.where(open_ & ok, mid, hi)
            lo = np.where(open_ & ~ok, mid, lo)
        V[idx] *= hi[:, None]
    Y = X + V
    return V, f.predict(Y) != cf, h.predict(Y) != ch


def find_transfer_perturbation(f, h, g, z, eta, cfg=None):
    """Search v with ||v|| <= eta fooling both f and h at g(z)."""
    x = g.forward(np.atleast_2d(z))
    V, ff, fh = transfer_attack(f, h, x, eta, cfg)
    return TransferResult(V[0], float(np.linalg.norm(V[0])), bool(ff[0]), bool(fh[0]), float(eta))


# -- surveys -----------------------------------------------------------------

RADII = ("rZ", "rIn", "rUnc")
CSV_COLUMNS = ("sample_index", "label", "r_z", "r_in", "r_unc", "iterations", "converged")


@dataclass
class SurveyResult:
    records: list
    summary: dict = field(default_factory=dict)

    def radii(self, name):
        key = {"rZ": "r_z", "rIn": "r_in", "rUnc": "r_unc"}.get(name, name)
        vals = [getattr(r, key) for r in self.records]
        return np.array([np.nan if v is None else v for v in vals], dtype=float)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow([r.sample_index, r.label, fmt(r.r_z), fmt(r.r_in), fmt(r.r_unc),
                        r.iterations, int(r.converged)])
        return buf.getvalue()

    def to_json(self):
        return json.dumps(self.summary, indent=2)


def fmt(v):
    """Six significant digits; empty for absent values."""
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.6g}"


def norm_means(g, n=10_000, seed=0):
    """Monte Carlo E||z||_2 and E||g(z)||_2 from a dedicated stream."""
    Z = _rng.keyed_normals(seed, _rng.NORM_MC, 0, n, g.latent_dim)
    return float(np.linalg.norm(Z, axis=1).mean()), float(np.linalg.norm(g.forward(Z), axis=1).mean())


def _survey_chunk(f, g, Z, idx, which, cfg):
    n = len(Z)
    out = {"r_z": np.full(n, np.nan), "r_in": np.full(n, np.nan), "r_unc": np.full(n, np.nan)}
    iters = np.zeros(n, dtype=np.int64)
    conv = np.ones(n, dtype=bool)
    labels = _LatentSpace(f, g).predict(Z) if n else np.zeros(0, dtype=np.int64)
    seed_res = None
    if "rZ" in which or "rIn" in which:
        seed_res = latent_attack(f, g, Z, cfg, idx)
        iters += seed_res.iterations
        if "rZ" in which:
            out["r_z"] = seed_res.radius
            conv &= seed_res.converged
    rin_w = None
    if "rIn" in which:
        res = in_distribution_attack(f, g, Z, cfg, idx, seed_res)
        out["r_in"] = res.radius
        conv &= res.converged
        rin_w = g.forward(res.witness)
    if "rUnc" in which:
        X = g.forward(Z)
        extra = None
        if rin_w is not None:
            extra = [np.where(res.converged[:, None], rin_w, X)]
        res_u = image_attack(f, X, cfg, idx, extra=extra)
        out["r_unc"] = res_u.radius
        iters += res_u.iterations
        conv &= res_u.converged
    return labels, out, iters, conv


def _percentiles(v):
    v = v[np.isfinite(v)]
    if len(v) == 0:
        return None
    return {str(q): float(np.percentile(v, q)) for q in (25, 50, 75)}


def robustness_survey(f, g, n, which=RADII, cfg=None, seed=0, norm_samples=10_000):
    """Attack n latent samples; records plus raw and normalized percentiles."""
    cfg = cfg or AttackConfig()
    which = tuple(which)
    bad = set(which) - set(RADII)
    if bad:
        raise DomainError(f"unknown radii {sorted(bad)}")
    if n < 1:
        raise DomainError("n must be >= 1")
    Z = _rng.sample_latent(g.latent_dim, n, seed)
    bounds = list(range(0, n, cfg.chunk_size)) + [n]
    chunks = list(zip(bounds[:-1], bounds[1:]))

    def run(lo_hi):
        lo, hi = lo_hi
        return _survey_chunk(f, g, Z[lo:hi], np.arange(lo, hi), which, cfg)

    if cfg.workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            parts = list(ex.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    labels = np.concatenate([p[0] for p in parts])
    radii = {k: np.concatenate([p[1][k] for p in parts]) for k in ("r_z", "r_in", "r_unc")}
    iters = np.concatenate([p[2] for p in parts])
    conv = np.concatenate([p[3] for p in parts])

    def val(k, i):
        return None if k not in wanted or not np.isfinite(radii[k][i]) else float(radii[k][i])

    wanted = {{"rZ": "r_z", "rIn": "r_in", "rUnc": "r_unc"}[w] for w in which}
    records = [RobustnessRecord(i, Z[i].tolist(), int(labels[i]), val("r_z", i), val("r_in", i),
                                val("r_unc", i), int(iters[i]), bool(conv[i] or not which))
               for i in range(n)]
    ez, egz = norm_means(g, norm_samples, seed)
    summary = {"n": n, "seed": seed, "which": list(which),
               "non_converged": int(np.sum(~conv)) if which else 0,
               "latent_norm_mean": ez, "image_norm_mean": egz,
               "percentiles": {}, "normalized_percentiles": {}}
    for w in which:
        key = {"rZ": "r_z", "rIn": "r_in", "rUnc": "r_unc"}[w]
        p = _percentiles(radii[key])
        summary["percentiles"][w] = p
        scale = ez if w == "rZ" else egz
        summary["normalized_percentiles"][w] = None if p is None else {q: v / scale for q, v in p.items()}
    return SurveyResult(records, summary)
