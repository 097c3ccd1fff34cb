"""Closed-form robustness bounds and their inversion for percentile radii.

Every probability-valued bound is clamped to [0, 1].  Latent radii enter as
``rho = omega^{-1}(eta)``; class masses enter through the complement
quantiles ``a_i = Phi^{-1}(1 - P(C_i))``.
"""

import enum
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import DegenerateDistributionError, DomainError, HypothesisViolation, RangeError
from .gaussian import (SQRT2PI, phi_inv_class_lb, std_normal_cdf, std_normal_cdf_inv,
                       std_normal_tail)
from .modulus import IdentityModulus, require_concave

_IDENTITY = IdentityModulus()


@dataclass(frozen=True)
class ClassDistribution:
    """Masses P(C_0), ..., P(C_{K-1}) of the latent class partition."""

    probs: tuple

    def __post_init__(self):
        p = tuple(float(v) for v in self.probs)
        object.__setattr__(self, "probs", p)
        if len(p) < 2:
            raise DomainError("a class distribution needs K >= 2")
        if any(not 0.0 <= v <= 1.0 for v in p):
            raise DomainError("class probabilities must lie in [0, 1]")
        if abs(math.fsum(p) - 1.0) > 1e-9:
            raise DomainError(f"class probabilities sum to {math.fsum(p)}, not 1")

    @classmethod
    def equiprobable(cls, K):
        if int(K) != K or K < 2:
            raise DomainError("K must be an integer >= 2")
        return cls((1.0 / K,) * int(K))

    @property
    def K(self):
        return len(self.probs)

    def complement_quantiles(self):
        """a_i = Phi^{-1}(1 - P(C_i)); +inf for empty classes."""
        if 1.0 in self.probs:
            raise DegenerateDistributionError("a class with probability 1 has no complement quantile")
        # equal masses share one quantile; matters for large equiprobable K
        cache = {p: math.inf if p == 0.0 else float(std_normal_cdf_inv(1.0 - p)) for p in set(self.probs)}
        return np.array([cache[p] for p in self.probs])

    def is_balanced(self):
        return max(self.probs) <= 0.5


class BoundKind(str, enum.Enum):
    GENERAL = "GeneralEq2"
    BALANCED = "BalancedEq3"
    EQUIPROBABLE = "EquiprobableEq4"
    CHECKERBOARD = "CheckerboardAppB"
    EXPECTATION_GENERAL = "ExpectationThm4General"
    EXPECTATION_K = "ExpectationThm4K"
    KAPPA_ADJUSTED = "KappaAdjustedEq8"


PROBABILITY_KINDS = {BoundKind.GENERAL, BoundKind.BALANCED, BoundKind.EQUIPROBABLE,
                     BoundKind.CHECKERBOARD, BoundKind.KAPPA_ADJUSTED}


@dataclass
class BoundReport:
    """A bound value with the arguments that produced it.

    ``quantity`` is "probability" for fooling probabilities, "radius" for
    inverted bounds and "expectation" for mean-robustness bounds.
    """

    bound_kind: BoundKind
    inputs: dict
    value: float
    normalization: dict = field(default_factory=dict)
    quantity: str = ""

    def __post_init__(self):
        self.bound_kind = BoundKind(self.bound_kind)
        if not self.quantity:
            self.quantity = "probability" if self.bound_kind in PROBABILITY_KINDS else "expectation"
        if self.quantity not in ("probability", "radius", "expectation"):
            raise DomainError(f"unknown quantity {self.quantity!r}")
        hi_ok = self.value <= 1.0 or self.quantity != "probability"
        if not (self.value >= 0.0 and hi_ok):
            raise DomainError(f"{self.bound_kind.value} value {self.value} out of range")

    def to_dict(self):
        d = asdict(self)
        d["bound_kind"] = self.bound_kind.value
        return d

    def to_json(self):
        return json.dumps(self.to_dict())


def _clamp01(x):
    return min(1.0, max(0.0, float(x)))


def _shift_mass(a, rho):
    """Phi(a + rho) - Phi(a), evaluated through whichever tail avoids cancellation."""
    if math.isinf(a):
        return 0.0
    if a >= 0.0:
        return float(std_normal_tail(a) - std_normal_tail(a + rho))
    return float(std_normal_cdf(a + rho) - std_normal_cdf(a))


def _general_from_rho(a, rho):
    return _clamp01(math.fsum(_shift_mass(ai, rho) for ai in a))


def fooling_prob_general(dist, omega, eta):
    """Lower bound on P(r_in <= eta) for an arbitrary class distribution."""
    if not eta >= 0.0:
        raise DomainError("eta must be >= 0")
    return _general_from_rho(dist.complement_quantiles(), omega.inverse(eta))


def fooling_prob_balanced(omega, eta):
    """Lower bound valid when no class has mass above 1/2."""
    rho = omega.inverse(eta)
    return _clamp01(1.0 - math.sqrt(math.pi / 2.0) * math.exp(-0.5 * rho * rho))


def fooling_prob_equiprobable(K, omega, eta, variant="derived"):
    """Class-count form for K >= 5 equiprobable classes.

    ``variant="derived"`` uses omega^{-1}(eta) in both exponential factors;
    ``variant="literal"`` uses plain eta in the second one.
    """
    if int(K) != K or K < 5:
        raise HypothesisViolation(f"equiprobable bound needs integer K >= 5, got {K}")
    if variant not in ("derived", "literal"):
        raise DomainError(f"unknown variant {variant!r}")
    rho = omega.inverse(eta)
    if rho < 1.0:
        raise HypothesisViolation(f"equiprobable bound needs omega^-1(eta) >= 1, got {rho}")
    second = rho if variant == "derived" else float(eta)
    raw = 1.0 - math.sqrt(math.pi / 2.0) * math.exp(-0.5 * rho * rho - second * phi_inv_class_lb(K))
    return _clamp01(raw)


def invert_bound_for_radius(dist, omega, target, tol=1e-8):
    """Smallest eta with fooling_prob_general(dist, omega, eta) >= target.

    Bisects on the latent radius rho and maps the result through omega.
    """
    if not 0.0 < target < 1.0:
        raise DomainError("target must lie in (0, 1)")
    a = dist.complement_quantiles()
    rho_max = omega.upper_limit()
    hi = 1.0
    while _general_from_rho(a, hi) < target:
        if hi >= rho_max:
            raise RangeError(f"target {target} not reached within the modulus range")
        hi = min(2.0 * hi, rho_max)
        if hi > 1e6:
            raise RangeError(f"target {target} unreachable")
    lo = 0.0
    # tolerance is on eta; for moduli with slope > 1 tighten the latent one
    eta_hi = omega(hi)
    scale = max(1.0, (eta_hi - omega(0.0)) / hi) if hi > 0 else 1.0
    while hi - lo > tol / scale:
        mid = 0.5 * (lo + hi)
        if _general_from_rho(a, mid) >= target:
            hi = mid
        else:
            lo = mid
    return float(omega(hi))


def _mean_excess(a):
    """E[(Z - a)^+] = phi(a) - a Phi(-a) for standard normal Z."""
    if math.isinf(a):
        return 0.0
    return math.exp(-0.5 * a * a) / SQRT2PI - a * float(std_normal_tail(a))


def expected_robustness_bound(dist, omega, wasserstein_delta=0.0):
    """Upper bound on E[r_in] for a concave modulus."""
    require_concave(omega)
    if not wasserstein_delta >= 0.0:
        raise DomainError("wasserstein_delta must be >= 0")
    total = math.fsum(_mean_excess(ai) for ai in dist.complement_quantiles())
    return float(omega(total)) + float(wasserstein_delta)


def expected_robustness_bound_equiprobable(K, omega, wasserstein_delta=0.0):
    if int(K) != K or K < 5:
        raise HypothesisViolation(f"closed-form expectation bound needs integer K >= 5, got {K}")
    require_concave(omega)
    if not wasserstein_delta >= 0.0:
        raise DomainError("wasserstein_delta must be >= 0")
    logK = math.log(K)
    return float(omega(math.log(4.0 * math.pi * logK) / math.sqrt(2.0 * logK))) + float(wasserstein_delta)


def checkerboard_bound(d, eta):
    """Fooling probability 1 - (1 - eta)^d of the checkerboard partition."""
    if int(d) != d or d < 1:
        raise DomainError("d must be an integer >= 1")
    if not 0.0 <= eta <= 0.5:
        raise HypothesisViolation(f"checkerboard bound needs eta in [0, 1/2], got {eta}")
    return _clamp01(-math.expm1(d * math.log1p(-eta)))


def kappa_adjusted_failure_prob(dist, modulus_estimate_value, delta, kappa):
    """Bound on P(r_in >= omega_kappa(delta)).

    ``modulus_estimate_value`` is the omega_kappa(delta) the probability refers
    to; it does not enter the value.
    """
    if not delta > 0.0:
        raise DomainError("delta must be > 0")
    if not 0.0 <= kappa <= 1.0:
        raise DomainError("kappa must lie in [0, 1]")
    return _clamp01(kappa + 1.0 - fooling_prob_general(dist, _IDENTITY, delta))


def gaussian_norm_mean(d):
    """E||z||_2 for z ~ N(0, I_d)."""
    if int(d) != d or d < 1:
        raise DomainError("d must be an integer >= 1")
    return math.sqrt(2.0) * math.exp(gammaln((d + 1) / 2.0) - gammaln(d / 2.0))
