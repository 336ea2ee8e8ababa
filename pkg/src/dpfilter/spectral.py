"""Power spectral densities and spectral factorization.

A PSD is written gamma^2 * Q(z) Q(z^-1) with Q monic, causal and minimum
phase (the canonical factor).  Rational PSDs factor exactly by assigning
each stored inside-circle root to Q; gridded PSDs factor approximately by
the real-cepstrum method.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lti import (
    UNIT_CIRCLE_TOL,
    FrequencyGrid,
    RationalTransferFunction,
    TwoSidedFir,
)

PW_FLOOR = 1e-300
ROOT_CHECK_MAX_LEN = 2049


@dataclass
class RationalPsd:
    """PSD gain * prod |1 - r e^{-jw}|^2 (numerator roots) over the same
    product for denominator roots; roots are the inside-circle
    representatives of para-conjugate pairs."""

    gain: float
    numerator_roots: np.ndarray
    denominator_roots: np.ndarray

    def __init__(self, gain, numerator_roots=(), denominator_roots=()):
        if gain <= 0:
            raise ValueError("gain must be positive")
        self.gain = float(gain)
        self.numerator_roots = np.atleast_1d(np.asarray(numerator_roots, dtype=complex)) \
            if len(np.atleast_1d(numerator_roots)) else np.zeros(0, dtype=complex)
        self.denominator_roots = np.atleast_1d(np.asarray(denominator_roots, dtype=complex)) \
            if len(np.atleast_1d(denominator_roots)) else np.zeros(0, dtype=complex)
        for r in self.numerator_roots:
            if abs(r) >= 1.0:
                raise ValueError("numerator roots must lie strictly inside the unit circle")
        for r in self.denominator_roots:
            if abs(r) >= 1.0 - UNIT_CIRCLE_TOL:
                raise ValueError("denominator roots must lie strictly inside the unit circle")

    def value(self, omegas) -> np.ndarray:
        w = omegas.omegas if isinstance(omegas, FrequencyGrid) else np.asarray(omegas, dtype=float)
        z = np.exp(-1j * w)
        out = np.full(w.shape, self.gain)
        for r in self.numerator_roots:
            out = out * np.abs(1.0 - r * z) ** 2
        for r in self.denominator_roots:
            out = out / np.abs(1.0 - r * z) ** 2
        return out

    def variance(self) -> float:
        """r(0) of the underlying process, by quadrature."""
        grid = FrequencyGrid.refined(4096)
        return float(np.sum(grid.trapezoid_weights() * self.value(grid)))


@dataclass
class GridPsd:
    """PSD sampled on a [0, pi] grid; even symmetry on [-pi, 0] is implied."""

    grid: FrequencyGrid
    values: np.ndarray

    def __init__(self, grid: FrequencyGrid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.omegas.shape:
            raise ValueError("values must match the grid shape")
        if not np.all(np.isfinite(values)):
            raise ValueError("PSD values must be finite")
        if np.any(values < 0):
            raise ValueError("PSD values must be nonnegative")
        self.grid = grid
        self.values = values


@dataclass
class SpectralFactor:
    """Canonical factorization psd = gamma_sq * Q(z) Q(z^-1)."""

    gamma_sq: float
    q: object  # RationalTransferFunction or causal TwoSidedFir, monic
    recon_error: float | None = None


def paley_wiener_check(psd: GridPsd):
    """(finite?, value) of the log-spectrum integral (1/2pi) int log psd.

    Grid values at or below the representable floor make the integral -inf,
    which is a failure, not an error.
    """
    vals = psd.values
    w = psd.grid.trapezoid_weights()
    if np.any(vals <= PW_FLOOR):
        return False, -np.inf
    # weights give (1/pi) int_0^pi, which by evenness is (1/2pi) over [-pi,pi]
    integral = float(np.sum(w * np.log(vals)))
    return np.isfinite(integral), integral


def factor_rational(psd: RationalPsd) -> SpectralFactor:
    """Exact canonical factor of a rational PSD.

    Each stored inside-circle root contributes its (1 - r z^-1) factor to Q;
    the gain carries gamma^2 directly.
    """
    for r in np.concatenate([psd.numerator_roots, psd.denominator_roots]):
        if abs(abs(r) - 1.0) < UNIT_CIRCLE_TOL:
            raise ValueError("root within 1e-9 of the unit circle; factorization rejected")
    num = _poly_from_roots(psd.numerator_roots)
    den = _poly_from_roots(psd.denominator_roots)
    q = RationalTransferFunction(num, den)
    grid = FrequencyGrid.refined(1024)
    from .lti import freq_response

    recon = psd.gain * np.abs(freq_response(q, grid)) ** 2
    target = psd.value(grid)
    err = float(np.max(np.abs(recon - target) / np.maximum(target, 1e-300)))
    return SpectralFactor(gamma_sq=psd.gain, q=q, recon_error=err)


def _poly_from_roots(roots: np.ndarray) -> np.ndarray:
    """Monic coefficient vector of prod (1 - r z^-1), real by conjugate pairing."""
    c = np.array([1.0 + 0j])
    for r in roots:
        c = np.convolve(c, np.array([1.0, -r]))
    if np.max(np.abs(c.imag)) > 1e-9 * max(1.0, np.max(np.abs(c.real))):
        raise ValueError("roots must come in conjugate pairs (real PSD)")
    return c.real


def _minimum_phase_spectrum(log_psd_full: np.ndarray) -> np.ndarray:
    """Impulse response of the canonical amplitude factor from log PSD
    sampled on the full circle (length-n FFT grid, n even)."""
    n = log_psd_full.size
    cep = np.fft.ifft(0.5 * log_psd_full).real
    folded = np.zeros(n)
    folded[0] = cep[0]
    folded[1 : n // 2] = 2.0 * cep[1 : n // 2]
    folded[n // 2] = cep[n // 2]
    return np.fft.ifft(np.exp(np.fft.fft(folded))).real


def _reflect_outside_roots(taps: np.ndarray, nfft: int) -> np.ndarray:
    """Move zeros outside the unit circle to their conjugate reciprocals.

    The correction is applied as an all-pass product in the frequency
    domain, which preserves the magnitude response and is stable even for
    high polynomial degrees.
    """
    if taps.size > ROOT_CHECK_MAX_LEN:
        return taps
    roots = np.roots(taps)
    outside = roots[np.abs(roots) > 1.0]
    if outside.size == 0:
        return taps
    nfft = max(nfft, 8 * taps.size)
    resp = np.fft.fft(taps, nfft)
    z = np.exp(-1j * 2.0 * np.pi * np.arange(nfft) / nfft)
    for r in outside:
        resp *= np.abs(r) * (1.0 - z / np.conj(r)) / (1.0 - r * z)
    fixed = np.fft.ifft(resp).real
    return fixed[: taps.size].copy()


def factor_grid(psd: GridPsd, fir_length: int, nfft: int | None = None,
                floor_rel: float = 1e-12, interp: str = "log-linear") -> SpectralFactor:
    """Approximate canonical factor of a gridded PSD as a monic min-phase FIR.

    Real-cepstrum method: the half grid is evenly extended to the full
    circle on an FFT grid of size >= 8 * fir_length, the log magnitude is
    folded to its causal part and exponentiated.  Values below floor_rel
    relative to the peak are clamped so the log stays finite; the clamping
    level bounds how deep a spectral null the FIR can represent.
    """
    if fir_length < 1:
        raise ValueError("fir_length must be >= 1")
    ok, _ = paley_wiener_check(psd)
    if not ok:
        raise ValueError("Paley-Wiener condition fails; PSD has a log "
                         "divergence and admits no spectral factorization")
    if nfft is None:
        nfft = max(1 << 16, _next_pow2(8 * fir_length))
    if nfft < 8 * fir_length:
        raise ValueError("nfft must be at least 8 * fir_length")
    wfull = np.linspace(0.0, 2.0 * np.pi, nfft, endpoint=False)
    whalf = np.minimum(wfull, 2.0 * np.pi - wfull)
    floor = floor_rel * float(np.max(psd.values))
    if interp == "log-linear":
        logv = np.interp(whalf, psd.grid.omegas, np.log(np.maximum(psd.values, floor)))
    elif interp == "linear":
        logv = np.log(np.maximum(np.interp(whalf, psd.grid.omegas, psd.values), floor))
    else:
        raise ValueError(f"unknown interpolation mode {interp!r}")
    amp = _minimum_phase_spectrum(logv)
    taps = amp[:fir_length].copy()
    taps = _reflect_outside_roots(taps, nfft)
    gamma = taps[0]
    if gamma <= 0:
        raise ValueError("cepstral factorization produced a nonpositive leading tap")
    q = TwoSidedFir(taps / gamma, start_index=0)
    from .lti import freq_response

    recon = gamma ** 2 * np.abs(freq_response(q, psd.grid)) ** 2
    denom = np.maximum(psd.values, floor)
    err = float(np.max(np.abs(recon - np.maximum(psd.values, floor)) / denom))
    return SpectralFactor(gamma_sq=float(gamma ** 2), q=q, recon_error=err)


def _next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p <<= 1
    return p


def min_phase_fir_from_magnitude(mag: GridPsd, fir_length: int, **kwargs):
    """Causal minimum-phase FIR g with |G|^2 matching `mag` (interpreted as
    a magnitude-squared profile).  Returns (taps, reconstruction_error)."""
    fac = factor_grid(mag, fir_length, **kwargs)
    taps = np.sqrt(fac.gamma_sq) * fac.q.taps
    return taps, fac.recon_error


def causal_part(two_sided: TwoSidedFir) -> TwoSidedFir:
    """Drop taps with time index < 0; indices >= 0 are preserved exactly.

    A fully anti-causal input yields the zero filter (single zero tap).
    """
    if two_sided.start_index >= 0:
        return TwoSidedFir(two_sided.taps.copy(), two_sided.start_index)
    n_drop = -two_sided.start_index
    if n_drop >= two_sided.taps.size:
        return TwoSidedFir(np.zeros(1), 0)
    return TwoSidedFir(two_sided.taps[n_drop:].copy(), 0)


def psd_autocovariance(psd, max_lag: int, nfft: int = 1 << 17) -> np.ndarray:
    """r(0..max_lag) of a process with the given PSD, by inverse DFT on a
    dense full-circle grid."""
    wfull = np.linspace(0.0, 2.0 * np.pi, nfft, endpoint=False)
    if isinstance(psd, RationalPsd):
        vals = psd.value(wfull)
    elif isinstance(psd, GridPsd):
        whalf = np.minimum(wfull, 2.0 * np.pi - wfull)
        vals = np.interp(whalf, psd.grid.omegas, psd.values)
    else:
        raise TypeError("psd must be RationalPsd or GridPsd")
    r = np.fft.ifft(vals).real
    if max_lag >= nfft // 2:
        raise ValueError("max_lag too large for the FFT size")
    return r[: max_lag + 1].copy()
