"""Standard normal CDF machinery and the auxiliary Gaussian tail inequalities.

All functions accept Python floats; ``std_normal_cdf`` and
``std_normal_cdf_inv`` also accept numpy arrays and then return arrays.
"""

import math
from typing import NamedTuple

import numpy as np
from scipy.special import erf, erfc, erfcx

from .errors import DomainError, UnboundedQuantileError

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)


class CdfSandwich(NamedTuple):
    lower: float
    upper: float


def _unwrap(arr, scalar):
    return float(arr) if scalar else arr


def _split_gauss(x):
    """exp(-x^2/2) with x^2 split so the exponent carries no rounding error."""
    xs = np.round(x * 16.0) / 16.0
    return np.exp(-0.5 * xs * xs) * np.exp(-0.5 * (x - xs) * (x + xs))


def std_normal_cdf(x):
    """Phi(x).

    For x < 0 the scaled complementary error function is combined with an
    exactly split Gaussian factor, which keeps the relative error of the lower
    tail near machine precision (rounding of x/sqrt(2) inside a plain erfc
    would cost a factor x^2).
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("std_normal_cdf requires finite input")
    neg = np.minimum(arr, 0.0)
    lower = 0.5 * erfcx(-neg / SQRT2) * _split_gauss(neg)
    out = np.where(arr < 0.0, lower, 1.0 - 0.5 * erfc(arr / SQRT2))
    # near zero the product above loses a few ulps; erf is odd, so this is also symmetric
    centre = np.abs(arr) < 0.5
    out = np.where(centre, 0.5 + 0.5 * erf(np.where(centre, arr, 0.0) / SQRT2), out)
    return _unwrap(out, arr.ndim == 0)


def std_normal_tail(x):
    """Upper tail 1 - Phi(x) without cancellation."""
    return std_normal_cdf(np.negative(x))


def std_normal_pdf(x):
    arr = np.asarray(x, dtype=float)
    return _unwrap(np.exp(-0.5 * arr * arr) / SQRT2PI, arr.ndim == 0)


# Rational approximation coefficients (Acklam); ~1e-9 relative before refinement.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _initial_guess_lower(q):
    """Rational guess for Phi^{-1}(q), q in (0, 1/2]."""
    out = np.empty_like(q)
    tail = q < _P_LOW
    if np.any(tail):
        t = np.sqrt(-2.0 * np.log(q[tail]))
        num = ((((_C[0] * t + _C[1]) * t + _C[2]) * t + _C[3]) * t + _C[4]) * t + _C[5]
        den = (((_D[0] * t + _D[1]) * t + _D[2]) * t + _D[3]) * t + 1.0
        out[tail] = num / den
    mid = ~tail
    if np.any(mid):
        u = q[mid] - 0.5
        r = u * u
        num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * u
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        out[mid] = num / den
    return out


def std_normal_cdf_inv(p):
    """Phi^{-1}(p) for p in (0, 1).

    A rational initial guess is refined by two Newton steps on Phi.  Work is
    done on the lower half (q = min(p, 1-p)), where both ``1 - p`` and Phi are
    exact enough that the round trip error stays below 1e-10.

    Raises
    ------
    UnboundedQuantileError
        If any p is exactly 0 or 1.
    DomainError
        If any p is NaN or outside [0, 1].
    """
    arr = np.asarray(p, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if np.any(np.isnan(arr)) or np.any((arr < 0.0) | (arr > 1.0)):
        raise DomainError("std_normal_cdf_inv requires p in (0, 1)")
    edge = (arr == 0.0) | (arr == 1.0)
    if np.any(edge):
        raise UnboundedQuantileError(float(arr[edge][0]))
    upper = arr > 0.5
    q = np.where(upper, 1.0 - arr, arr)
    x = _initial_guess_lower(q)
    for _ in range(2):
        resid = std_normal_cdf(x) - q
        x = x - resid * SQRT2PI * np.exp(0.5 * x * x)
    x = np.where(upper, -x, x)
    return _unwrap(x[0] if scalar else x, scalar)


def cdf_sandwich(x):
    """Elementary lower/upper bounds on Phi(x) for x >= 0."""
    x = float(x)
    if not x >= 0.0 or not math.isfinite(x):
        raise DomainError("cdf_sandwich requires finite x >= 0")
    dens = math.exp(-0.5 * x * x) / SQRT2PI
    lower = 1.0 - dens * 2.0 / (x + math.sqrt(x * x + 8.0 / math.pi))
    upper = 1.0 - dens * 2.0 / (x + math.sqrt(x * x + 4.0))
    return CdfSandwich(lower, upper)


def tail_shift_lower_bound(p, eta, quantile=None):
    """Lower bound on Phi(Phi^{-1}(p) + eta) for p in [1/2, 1].

    ``quantile`` replaces Phi^{-1}(p) in the exponent; any value in
    [0, Phi^{-1}(p)] keeps the bound valid (pass ``phi_inv_class_lb(K)`` for
    the class-count form).  The result is clamped at 0.
    """
    p, eta = float(p), float(eta)
    if not 0.5 <= p <= 1.0:
        raise DomainError(f"tail_shift_lower_bound requires p in [1/2, 1], got {p}")
    if not eta > 0.0:
        raise DomainError("tail_shift_lower_bound requires eta > 0")
    if p == 1.0:
        return 1.0
    a = std_normal_cdf_inv(p) if quantile is None else float(quantile)
    value = 1.0 - (1.0 - p) * math.sqrt(math.pi / 2.0) * math.exp(-0.5 * eta * eta - eta * a)
    return max(0.0, value)


def phi_inv_class_lb(K):
    """sqrt(log(K^2 / (4 pi log K))), a lower bound on Phi^{-1}(1 - 1/K) for K >= 5."""
    if int(K) != K or K < 5:
        raise DomainError(f"phi_inv_class_lb requires an integer K >= 5, got {K}")
    K = int(K)
    return math.sqrt(math.log(K * K / (4.0 * math.pi * math.log(K))))
