"""Privacy policy, Gaussian-mechanism calibration constant, and filter
sensitivity.

The calibration constant kappa(delta, epsilon) converts an l2 sensitivity
into the standard deviation of the white Gaussian noise that makes a linear
release (epsilon, delta)-differentially private under the single-time
adjacency relation.  For an LTI prefilter G the l2 sensitivity is
d * ||g||_2 with d the adjacency level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .lti import RationalTransferFunction, TwoSidedFir, h2_norm, lp_norm


@dataclass(frozen=True)
class PrivacyParams:
    """(epsilon, delta) policy plus adjacency level d (event-count units)."""

    epsilon: float
    delta: float
    d: int = 1

    def __post_init__(self):
        if not (self.epsilon > 0):
            raise ValueError("epsilon must be positive")
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")
        if self.d < 1:
            raise ValueError("adjacency level d must be >= 1")


@dataclass(frozen=True)
class NoiseCalibration:
    """Calibrated noise: sigma = d * kappa * ||g||_2 (the l2 sensitivity
    times the Gaussian-mechanism constant)."""

    kappa: float
    sigma: float
    sensitivity: float


def q_function(x: float) -> float:
    """Gaussian tail probability Q(x) = P(N(0,1) > x)."""
    return 0.5 * erfc(x / math.sqrt(2.0))


def q_function_inv(p: float, tol: float = 1e-13) -> float:
    """Inverse of the Gaussian tail function, |Q(x) - p| <= tol.

    Bisection brackets the root, Newton polishes it; Q is strictly
    decreasing so the bracket is straightforward.
    """
    if not (0.0 < p < 1.0):
        raise ValueError("p must lie strictly in (0, 1)")
    lo, hi = -40.0, 40.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if q_function(mid) > p:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    for _ in range(40):
        err = q_function(x) - p
        if abs(err) <= tol:
            break
        slope = -math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        if slope == 0.0:
            break
        x -= err / slope
    return x


def kappa(params: PrivacyParams) -> float:
    """Calibration constant (1/2 eps)(K + sqrt(K^2 + 2 eps)), K = Q^-1(delta)."""
    k = q_function_inv(params.delta)
    return (k + math.sqrt(k * k + 2.0 * params.epsilon)) / (2.0 * params.epsilon)


def _impulse_of(g):
    if isinstance(g, RationalTransferFunction):
        from .lti import _full_impulse

        return _full_impulse(g)
    if isinstance(g, TwoSidedFir):
        return g.taps
    return np.asarray(g, dtype=float)


def filter_sensitivity(g, p: float, d: int) -> float:
    """l_p sensitivity d * ||g||_p of an LTI system under single-time
    adjacency; g may be an impulse response, FIR, or rational system."""
    if d < 1:
        raise ValueError("adjacency level d must be >= 1")
    imp = _impulse_of(g)
    if not np.all(np.isfinite(imp)):
        raise ValueError("impulse response must be finite")
    return float(d) * lp_norm(imp, p)


def calibrate(g, params: PrivacyParams) -> NoiseCalibration:
    """Noise level for the prefilter G: sigma = d * kappa * ||G||_2.

    This is the unique white-Gaussian level making v = G u + n
    (epsilon, delta)-differentially private at adjacency level d.  Note the
    calibration depends only on G and the policy, never on source
    statistics.
    """
    if isinstance(g, (RationalTransferFunction, TwoSidedFir)):
        norm2 = h2_norm(g)
    else:
        norm2 = float(np.linalg.norm(np.asarray(g, dtype=float)))
        if not np.isfinite(norm2):
            raise ValueError("impulse response must be finite")
    kap = kappa(params)
    sensitivity = params.d * norm2
    return NoiseCalibration(kappa=kap, sigma=params.d * kap * norm2,
                            sensitivity=sensitivity)
