"""Discrete-time SISO LTI systems: rational and two-sided FIR representations.

Conventions: a rational transfer function is a ratio of polynomials in z^-1
with real coefficients and a normalized leading denominator coefficient
(a0 = 1).  A two-sided FIR stores taps together with the time index of the
first tap, so anti-causal support (start_index < 0) is representable; such a
filter is realizable in streaming form by delaying the output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.signal import lfilter

UNIT_CIRCLE_TOL = 1e-9
MAX_IMPULSE_HORIZON = 1_000_000


class UnstableSystemError(ValueError):
    """Raised when an operation requires a stable system and gets poles on
    or outside the unit circle."""


def _as_coeffs(c) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(c, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("coefficient vector must be non-empty and 1-D")
    if not np.all(np.isfinite(arr)):
        raise ValueError("coefficients must be finite")
    return arr


@dataclass
class RationalTransferFunction:
    """Causal rational system b(z^-1)/a(z^-1), normalized so a[0] = 1."""

    num: np.ndarray
    den: np.ndarray

    def __init__(self, num, den=(1.0,)):
        num = _as_coeffs(num)
        den = _as_coeffs(den)
        if den[0] == 0.0:
            raise ValueError("leading denominator coefficient must be nonzero")
        self.num = num / den[0]
        self.den = den / den[0]
        self._poles_cache = None

    def poles(self) -> np.ndarray:
        if self._poles_cache is None:
            if self.den.size == 1:
                self._poles_cache = np.zeros(0, dtype=complex)
            else:
                # roots in z of a0 z^n + a1 z^(n-1) + ... + an
                self._poles_cache = np.roots(self.den)
        return self._poles_cache

    def zeros(self) -> np.ndarray:
        if self.num.size == 1:
            return np.zeros(0, dtype=complex)
        return np.roots(self.num)

    def spectral_radius(self) -> float:
        p = self.poles()
        return float(np.max(np.abs(p))) if p.size else 0.0

    def is_stable(self, tol: float = UNIT_CIRCLE_TOL) -> bool:
        return self.spectral_radius() < 1.0 - tol

    def require_stable(self) -> None:
        p = self.poles()
        bad = p[np.abs(p) >= 1.0 - UNIT_CIRCLE_TOL]
        if bad.size:
            moduli = ", ".join(f"{m:.12g}" for m in np.abs(bad))
            raise UnstableSystemError(
                f"system has poles with moduli [{moduli}] on or outside the "
                f"unit circle (tolerance {UNIT_CIRCLE_TOL:g})"
            )

    def gain_at_one(self) -> float:
        """Static gain H(z=1)."""
        return float(np.sum(self.num) / np.sum(self.den))

    def cascade(self, other: "RationalTransferFunction") -> "RationalTransferFunction":
        return RationalTransferFunction(
            np.convolve(self.num, other.num), np.convolve(self.den, other.den)
        )

    def __repr__(self):
        return f"RationalTransferFunction(num={self.num.tolist()}, den={self.den.tolist()})"


@dataclass
class TwoSidedFir:
    """FIR filter with taps at time indices start_index .. start_index+len-1."""

    taps: np.ndarray
    start_index: int = 0

    def __init__(self, taps, start_index: int = 0):
        self.taps = _as_coeffs(taps)
        self.start_index = int(start_index)

    @property
    def latency(self) -> int:
        """Samples of output delay needed for streaming realization."""
        return max(0, -self.start_index)

    @property
    def end_index(self) -> int:
        return self.start_index + self.taps.size - 1

    def is_causal(self) -> bool:
        return self.start_index >= 0

    def energy(self) -> float:
        return float(np.dot(self.taps, self.taps))

    def __repr__(self):
        return f"TwoSidedFir(n={self.taps.size}, start_index={self.start_index})"


@dataclass
class FrequencyGrid:
    """Strictly increasing frequencies covering [0, pi]."""

    omegas: np.ndarray

    def __init__(self, omegas):
        w = np.asarray(omegas, dtype=float)
        if w.size < 3:
            raise ValueError("grid needs at least 3 points")
        if w[0] != 0.0 or abs(w[-1] - np.pi) > 1e-15:
            raise ValueError("grid must start at 0 and end at pi")
        if np.any(np.diff(w) <= 0):
            raise ValueError("grid frequencies must be strictly increasing")
        self.omegas = w

    @classmethod
    def uniform(cls, n: int) -> "FrequencyGrid":
        """omega_i = i*pi/n for i = 0..n."""
        if n < 2:
            raise ValueError("n must be >= 2")
        return cls(np.linspace(0.0, np.pi, n + 1))

    @classmethod
    def refined(cls, n: int = 4096, min_spacing: float = 1e-6,
                ratio: float = 1.2) -> "FrequencyGrid":
        """Uniform grid plus geometrically spaced points near omega = 0.

        Near-unit-circle poles produce spectral peaks at DC that a uniform
        grid under-resolves; the geometric points keep the first panel at
        min_spacing.
        """
        base = np.linspace(0.0, np.pi, n + 1)
        h = np.pi / n
        extra = []
        step = min_spacing
        w = step
        while w < h:
            extra.append(w)
            step *= ratio
            w += step
        merged = np.unique(np.concatenate([base, np.asarray(extra)]))
        return cls(merged)

    @property
    def n_points(self) -> int:
        return self.omegas.size

    def trapezoid_weights(self) -> np.ndarray:
        """Weights w_i with sum_i w_i f(omega_i) ~ (1/pi) * int_0^pi f."""
        w = np.zeros_like(self.omegas)
        dw = np.diff(self.omegas)
        w[:-1] += dw / 2.0
        w[1:] += dw / 2.0
        return w / np.pi


def freq_response(sys, grid) -> np.ndarray:
    """Frequency response on a grid (FrequencyGrid or plain omega array).

    Rational systems are evaluated by polynomial evaluation at e^{-j omega};
    a pole within 1e-9 of the unit circle is rejected.  Two-sided FIRs are
    evaluated by the discrete-time Fourier sum.
    """
    omegas = grid.omegas if isinstance(grid, FrequencyGrid) else np.asarray(grid, dtype=float)
    z = np.exp(-1j * omegas)
    if isinstance(sys, RationalTransferFunction):
        p = sys.poles()
        if p.size and np.any(np.abs(np.abs(p) - 1.0) < UNIT_CIRCLE_TOL):
            raise ValueError("pole within 1e-9 of the unit circle; frequency "
                             "response undefined there")
        return npoly.polyval(z, sys.num) / npoly.polyval(z, sys.den)
    if isinstance(sys, TwoSidedFir):
        return npoly.polyval(z, sys.taps) * np.exp(-1j * omegas * sys.start_index)
    taps = _as_coeffs(sys)
    return npoly.polyval(z, taps)


def _auto_horizon(rho: float, rel_tol: float = 1e-12) -> int:
    """Horizon so the geometric l2 tail of a rho-decaying response is below
    rel_tol relative to a unit-scale response."""
    if rho <= 0.0:
        return 8
    n = int(np.ceil(np.log(rel_tol * (1.0 - rho)) / np.log(rho))) + 64
    return min(max(n, 8), MAX_IMPULSE_HORIZON)


def impulse_response(sys: RationalTransferFunction, horizon: int):
    """First `horizon` impulse-response samples and an l2 bound on the tail.

    The tail bound is geometric from the largest pole modulus, scaled by the
    observed response near the end of the computed window.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    sys.require_stable()
    x = np.zeros(horizon)
    x[0] = 1.0
    g = lfilter(sys.num, sys.den, x)
    rho = sys.spectral_radius()
    if rho == 0.0:
        return g, 0.0
    k = min(64, horizon)
    scale = np.max(np.abs(g[-k:]) * rho ** np.arange(k - 1, -1, -1))
    tail = scale * rho / np.sqrt(1.0 - rho * rho)
    return g, float(tail)


def _full_impulse(sys: RationalTransferFunction, rel_tol: float = 1e-12) -> np.ndarray:
    """Impulse response long enough that the certified l2 tail is below
    rel_tol relative; raises if MAX_IMPULSE_HORIZON cannot achieve it."""
    sys.require_stable()
    rho = sys.spectral_radius()
    n = _auto_horizon(rho, rel_tol * 1e-3)
    g, tail = impulse_response(sys, n)
    total = float(np.linalg.norm(g))
    while tail > rel_tol * max(total, np.finfo(float).tiny):
        if n >= MAX_IMPULSE_HORIZON:
            raise UnstableSystemError(
                f"impulse response tail bound {tail:.3g} not below "
                f"{rel_tol:g} relative within {MAX_IMPULSE_HORIZON} taps"
            )
        n = min(2 * n, MAX_IMPULSE_HORIZON)
        g, tail = impulse_response(sys, n)
        total = float(np.linalg.norm(g))
    return g


def h2_norm(sys) -> float:
    """H2 norm: sqrt(sum_t g_t^2), with certified truncation for rational
    systems (l2 tail below 1e-12 relative)."""
    if isinstance(sys, TwoSidedFir):
        return float(np.linalg.norm(sys.taps))
    if isinstance(sys, RationalTransferFunction):
        return float(np.linalg.norm(_full_impulse(sys)))
    return float(np.linalg.norm(_as_coeffs(sys)))


def lp_norm(impulse, p: float) -> float:
    """l_p norm of a finite sequence, 1 <= p <= inf."""
    if p < 1:
        raise ValueError("p must be >= 1")
    x = np.abs(_as_coeffs(impulse))
    if np.isinf(p):
        return float(np.max(x))
    return float(np.sum(x ** p) ** (1.0 / p))


class FilterState:
    """Single-sample streaming evaluation of a filter.

    Rational systems use the transposed direct-form II recurrence (matching
    scipy.signal.lfilter).  A TwoSidedFir with start_index < 0 emits its
    output delayed by `latency` samples; early outputs are computed against
    a zero-padded past.
    """

    def __init__(self, system):
        self.system = system
        if isinstance(system, RationalTransferFunction):
            n = max(system.num.size, system.den.size)
            self._b = np.zeros(n)
            self._b[: system.num.size] = system.num
            self._a = np.zeros(n)
            self._a[: system.den.size] = system.den
            self._z = np.zeros(n - 1) if n > 1 else np.zeros(0)
            self._mode = "rational"
        elif isinstance(system, TwoSidedFir):
            self._taps = system.taps
            self._off = max(system.start_index, 0)
            self._buf = np.zeros(system.taps.size + self._off)
            self._mode = "fir"
        else:
            raise TypeError("FilterState wants a RationalTransferFunction or TwoSidedFir")

    @property
    def latency(self) -> int:
        if self._mode == "fir":
            return self.system.latency
        return 0

    def step(self, x: float) -> float:
        if not np.isfinite(x):
            raise ValueError("non-finite input sample")
        if self._mode == "rational":
            b, a, z = self._b, self._a, self._z
            if z.size == 0:
                return float(b[0] * x)
            y = b[0] * x + z[0]
            for i in range(z.size - 1):
                z[i] = b[i + 1] * x + z[i + 1] - a[i + 1] * y
            z[-1] = b[-1] * x - a[-1] * y
            return float(y)
        # FIR: buffer holds the most recent inputs, newest first.  At step t
        # the emitted output is for time t - latency, which needs
        # u[(t - latency) - (start_index + i)] = buf[i + max(start_index, 0)].
        buf = self._buf
        buf[1:] = buf[:-1]
        buf[0] = x
        off = self._off
        return float(np.dot(self._taps, buf[off:off + self._taps.size]))


def apply_fir(fir: TwoSidedFir, u: np.ndarray) -> np.ndarray:
    """Filter a whole sequence; output index t estimates the result at
    t - latency (same alignment as repeated FilterState.step calls)."""
    u = np.asarray(u, dtype=float)
    full = np.convolve(u, fir.taps)
    # full[k] is the output for time k + start_index; streaming emits output
    # time t - latency at step t, i.e. full index t - max(start_index, 0).
    out = np.zeros_like(u)
    shift = max(fir.start_index, 0)
    n = u.size - shift
    if n > 0:
        out[shift:] = full[:n]
    return out
