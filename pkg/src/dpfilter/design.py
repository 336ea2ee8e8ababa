"""Design-time construction of private filtering mechanisms.

Three reconstruction strategies share the same release structure
v = G(u - mu) + n with calibrated white Gaussian noise:

* zero-forcing: G shaped so |G|^2 tracks |F|, reconstruction H = F G^-1
  (exact inversion, no source statistics needed);
* Wiener: G from a water-filling allocation of |G|^2/||G||_2^2 across
  frequency, reconstruction by the non-causal (delayed FIR) or causal
  Wiener filter;
* decision feedback: forward filter + symbol decisions + strictly causal
  feedback, designed under the correct-past-decisions assumption.

All prefilters are normalized to ||G||_2 = 1; the error functionals are
invariant to that gauge and the noise level is then sigma = d * kappa.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve, toeplitz

from .lti import (
    FrequencyGrid,
    RationalTransferFunction,
    TwoSidedFir,
    freq_response,
    h2_norm,
)
from .privacy import NoiseCalibration, PrivacyParams, calibrate, kappa
from .spectral import (
    GridPsd,
    RationalPsd,
    factor_grid,
    factor_rational,
    min_phase_fir_from_magnitude,
    paley_wiener_check,
    psd_autocovariance,
)

DEFAULT_GRID_N = 4096
WATERFILL_ITERS = 200
UNIT_ROOT_REJECT = 1e-9


def default_grid() -> FrequencyGrid:
    return FrequencyGrid.refined(DEFAULT_GRID_N, min_spacing=1e-6)


# ---------------------------------------------------------------------------
# decision devices

@dataclass(frozen=True)
class DecisionDevice:
    """Detector mapping a noisy symbol estimate to the symbol alphabet.

    kind="sign" outputs +-amplitude; kind="quantizer" rounds to the nearest
    point of offset + step * Z.
    """

    kind: str = "sign"
    amplitude: float = 1.0
    step: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sign", "quantizer"):
            raise ValueError(f"unknown decision device kind {self.kind!r}")
        if self.kind == "quantizer" and self.step <= 0:
            raise ValueError("quantizer step must be positive")

    def decide(self, x):
        if self.kind == "sign":
            return np.where(np.asarray(x) >= 0, self.amplitude, -self.amplitude)
        return self.offset + self.step * np.round((np.asarray(x) - self.offset) / self.step)


# ---------------------------------------------------------------------------
# water-filling

@dataclass
class WaterfillProblem:
    """Discretized prefilter-power allocation data.

    alpha_i = P_u |F|^2 and beta_i = P_u / (d^2 kappa^2) at the grid
    frequencies; weights are trapezoidal with sum(weights) = 1 so the
    normalization constraint reads sum(w x) = 1.
    """

    alpha: np.ndarray
    beta: np.ndarray
    weights: np.ndarray

    def __init__(self, alpha, beta, weights):
        self.alpha = np.asarray(alpha, dtype=float)
        self.beta = np.asarray(beta, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        if not (self.alpha.shape == self.beta.shape == self.weights.shape):
            raise ValueError("alpha, beta, weights must have equal shapes")
        if np.any(self.alpha < 0) or np.any(self.beta < 0):
            raise ValueError("alpha and beta must be nonnegative")

    @classmethod
    def from_design_data(cls, F: RationalTransferFunction, psd, params: PrivacyParams,
                         grid: FrequencyGrid) -> "WaterfillProblem":
        fmag2 = np.abs(freq_response(F, grid)) ** 2
        pu = psd.value(grid) if isinstance(psd, RationalPsd) else psd.values
        kap = kappa(params)
        return cls(alpha=pu * fmag2, beta=pu / (params.d ** 2 * kap ** 2),
                   weights=grid.trapezoid_weights())


def _bisect_multiplier(fn, lo=1e-18, hi=1e18, iters=WATERFILL_ITERS):
    """Find t with fn(t) ~ 0 for fn decreasing in t, by log-scale bisection."""
    llo, lhi = np.log(lo), np.log(hi)
    for _ in range(iters):
        mid = 0.5 * (llo + lhi)
        if fn(np.exp(mid)) > 0.0:
            llo = mid
        else:
            lhi = mid
    return np.exp(0.5 * (llo + lhi))


def solve_waterfill_lmmse(prob: WaterfillProblem) -> np.ndarray:
    """Minimize sum w a/(b x + 1) s.t. sum w x = 1, x >= 0.

    KKT closed form x_i = max(0, (sqrt(a_i b_i / lambda) - 1)/b_i) with the
    multiplier fixed by the normalization.
    """
    a, b, w = prob.alpha, prob.beta, prob.weights
    if np.sum(w * b) <= 0 and np.any(a > 0):
        raise ValueError("no useful allocation: beta vanishes where alpha > 0")

    def x_of(lam):
        with np.errstate(divide="ignore", invalid="ignore"):
            x = (np.sqrt(a * b / lam) - 1.0) / b
        return np.maximum(np.where(b > 0, x, 0.0), 0.0)

    lam = _bisect_multiplier(lambda t: np.sum(w * x_of(t)) - 1.0)
    x = x_of(lam)
    s = np.sum(w * x)
    if s > 0:
        x = x / s  # absorb the last bisection gap exactly
    return x


def solve_waterfill_df(prob: WaterfillProblem) -> np.ndarray:
    """Maximize sum w ln(b x + 1) s.t. sum w x = 1, x >= 0.

    Classic water level: x_i = max(0, mu - 1/b_i).
    """
    b, w = prob.beta, prob.weights
    if np.sum(w * b) <= 0:
        raise ValueError("no useful allocation: beta is identically zero")

    def x_of(mu):
        with np.errstate(divide="ignore"):
            x = mu - 1.0 / b
        return np.maximum(np.where(b > 0, x, 0.0), 0.0)

    # sum w x is increasing in mu, so flip the comparison
    mu = _bisect_multiplier(lambda t: 1.0 - np.sum(w * x_of(t)))
    x = x_of(mu)
    s = np.sum(w * x)
    if s > 0:
        x = x / s
    return x


# ---------------------------------------------------------------------------
# theoretical error functionals (refined quadrature)

def _refine_until(eval_on_grid, start_n: int, rel_tol: float = 1e-6,
                  max_n: int = 1 << 17):
    n = start_n
    prev = eval_on_grid(FrequencyGrid.refined(n))
    while True:
        n *= 2
        if n > max_n:
            raise ValueError(
                f"quadrature did not converge to {rel_tol:g} relative below "
                f"grid size {max_n}; last value {prev:.6g}"
            )
        cur = eval_on_grid(FrequencyGrid.refined(n))
        if abs(cur - prev) <= rel_tol * max(abs(cur), 1e-300):
            return cur
        prev = cur


def lzf_theoretical_mse(F: RationalTransferFunction, params: PrivacyParams,
                        grid_n: int = DEFAULT_GRID_N) -> float:
    """Zero-forcing error floor d^2 kappa^2 ((1/2pi) int |F|)^2.

    The quadrature refines the grid (keeping the geometric points near
    omega = 0) until two successive refinements agree to 1e-6 relative.
    """
    F.require_stable()

    def mean_abs_f(grid):
        return float(np.sum(grid.trapezoid_weights() * np.abs(freq_response(F, grid))))

    m = _refine_until(mean_abs_f, grid_n)
    kap = kappa(params)
    return (params.d * kap * m) ** 2


def lmmse_theoretical_mse(F: RationalTransferFunction, psd, x, params: PrivacyParams,
                          grid: FrequencyGrid | None = None) -> float:
    """Wiener-reconstruction error (1/2pi) int Pu |F|^2 / (beta x + 1).

    `x` is either a normalized power profile on `grid` (array matching the
    grid) or prefilter taps, in which case the profile |G|^2/||G||_2^2 is
    evaluated directly and the quadrature is refined as for the
    zero-forcing value.
    """
    kap = kappa(params)

    def value_on(g: FrequencyGrid, profile: np.ndarray) -> float:
        w = g.trapezoid_weights()
        fmag2 = np.abs(freq_response(F, g)) ** 2
        pu = psd.value(g) if isinstance(psd, RationalPsd) else psd.values
        alpha = pu * fmag2
        beta = pu / (params.d ** 2 * kap ** 2)
        return float(np.sum(w * alpha / (beta * profile + 1.0)))

    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("x must be a 1-D profile or tap vector")
    if grid is not None and x.shape == grid.omegas.shape:
        # normalized power profile sampled on the given grid
        if isinstance(psd, GridPsd) and psd.grid.omegas.shape != grid.omegas.shape:
            raise ValueError("profile grid does not match the PSD grid")
        return value_on(grid, x)
    # prefilter taps: refine the quadrature, recomputing the response
    if isinstance(psd, GridPsd):
        raise ValueError("grid mismatch: tap-based evaluation needs a RationalPsd")
    taps = x
    norm_sq = float(np.dot(taps, taps))

    def eval_grid(g: FrequencyGrid) -> float:
        prof = np.abs(freq_response(taps, g)) ** 2 / norm_sq
        return value_on(g, prof)

    return _refine_until(eval_grid, DEFAULT_GRID_N)


def df_limit_mse(F: RationalTransferFunction, psd, x, params: PrivacyParams,
                 grid: FrequencyGrid) -> float:
    """Infinite-length decision-feedback error approximation
    gamma_u^2 gamma_F^2 / gamma^2 under correct past decisions, by
    log-integral quadrature of the three factor gains."""
    w = grid.trapezoid_weights()
    pu = psd.value(grid) if isinstance(psd, RationalPsd) else psd.values
    kap = kappa(params)
    beta = pu / (params.d ** 2 * kap ** 2)
    fmag2 = np.abs(freq_response(F, grid)) ** 2
    gamma_u2 = np.exp(np.sum(w * np.log(pu)))
    gamma_f2 = np.exp(np.sum(w * np.log(fmag2)))
    gamma2 = np.exp(np.sum(w * np.log(beta * np.asarray(x) + 1.0)))
    return float(gamma_u2 * gamma_f2 / gamma2)


# ---------------------------------------------------------------------------
# reconstruction stage descriptors

@dataclass
class LzfReconstruction:
    h: RationalTransferFunction  # F / G, exact inversion
    release_delay: int = 0


@dataclass
class WienerReconstruction:
    h: object  # TwoSidedFir (delayed non-causal) or RationalTransferFunction (causal)
    release_delay: int = 0
    truncation_energy: float | None = None


@dataclass
class DfReconstruction:
    h1: TwoSidedFir              # forward filter, support -delay .. n_forward-delay-1
    h2: np.ndarray               # feedback taps at lags 1..n_feedback (strictly causal)
    decision: DecisionDevice
    output_mode: str = "soft"    # publish F(utilde) or F(decisions)
    delay: int = 5
    detector_mmse: float | None = None

    @property
    def release_delay(self) -> int:
        return self.delay


@dataclass
class MechanismDesign:
    """A complete mechanism: prefilter, calibrated noise, reconstruction.

    theoretical_mse is the designed error of the reconstruction stage
    (error floor for zero-forcing, Wiener functional at the achieved
    prefilter for the Wiener mechanisms, None for decision feedback whose
    correct-decision detector error is stored on the reconstruction).
    ideal_mse, when present, is the unconstrained-optimum value of the same
    functional.
    """

    kind: str
    F: RationalTransferFunction
    prefilter_g: np.ndarray
    calibration: NoiseCalibration
    reconstruction: object
    theoretical_mse: float | None = None
    ideal_mse: float | None = None
    realized_mse: float | None = None

    @property
    def release_delay(self) -> int:
        return self.reconstruction.release_delay

    @property
    def sigma(self) -> float:
        return self.calibration.sigma


# ---------------------------------------------------------------------------
# designs

def _normalized_prefilter(profile: GridPsd, fir_length: int,
                          floor_rel: float = 1e-12):
    # Water-filling profiles are exactly zero on the inactive band, which no
    # FIR can realize (log divergence); synthesize the floored profile.
    vals = np.maximum(profile.values, floor_rel * float(np.max(profile.values)))
    taps, recon_err = min_phase_fir_from_magnitude(GridPsd(profile.grid, vals),
                                                   fir_length)
    taps = taps / np.linalg.norm(taps)
    return taps, recon_err


def design_lzf(F: RationalTransferFunction, params: PrivacyParams,
               fir_length: int = 512, grid: FrequencyGrid | None = None) -> MechanismDesign:
    """Zero-forcing mechanism: |G|^2 proportional to |F|, H = F G^-1.

    The proportionality constant is a free gauge (the error is invariant),
    so G is normalized to unit H2 norm.  G is synthesized minimum-phase; a
    zero within 1e-9 of the unit circle would make the inversion
    unrealizable and is rejected.
    """
    F.require_stable()
    grid = grid or default_grid()
    fmag = np.abs(freq_response(F, grid))
    profile = GridPsd(grid, fmag)
    ok, _ = paley_wiener_check(profile)
    if not ok:
        raise ValueError("|F| violates the Paley-Wiener condition; no "
                         "minimum-phase prefilter exists")
    g, _ = _normalized_prefilter(profile, fir_length)
    roots = np.roots(g)
    if roots.size and np.max(np.abs(roots)) >= 1.0 - UNIT_ROOT_REJECT:
        raise ValueError("prefilter has zeros within 1e-9 of the unit "
                         "circle; inversion rejected")
    h = RationalTransferFunction(F.num, np.convolve(F.den, g))
    cal = calibrate(g, params)
    theo = lzf_theoretical_mse(F, params)
    realized = cal.sigma ** 2 * h2_norm(h) ** 2
    return MechanismDesign(
        kind="lzf", F=F, prefilter_g=g, calibration=cal,
        reconstruction=LzfReconstruction(h=h),
        theoretical_mse=theo, ideal_mse=theo, realized_mse=realized,
    )


def noncausal_wiener(F: RationalTransferFunction, psd, g, sigma: float,
                     fir_half_length: int = 800, nfft: int = 1 << 17):
    """Two-sided Wiener filter H = Pu F G(z^-1) / (Pu |G|^2 + sigma^2).

    Sampled on the full circle, inverse-DFT'd and truncated to taps
    -fir_half_length..fir_half_length.  Returns (TwoSidedFir, truncation
    energy share); a share above 1e-4 raises a warning.
    """
    g = np.asarray(g, dtype=float)
    if 2 * fir_half_length + 1 > nfft:
        raise ValueError("nfft too small for the requested support")
    wfull = np.linspace(0.0, 2.0 * np.pi, nfft, endpoint=False)
    G = freq_response(g, wfull)
    Fr = freq_response(F, wfull)
    pu = psd.value(wfull) if isinstance(psd, RationalPsd) else _grid_psd_on(psd, wfull)
    H = pu * Fr * np.conj(G) / (pu * np.abs(G) ** 2 + sigma ** 2)
    h = np.fft.ifft(H).real
    taps = np.concatenate([h[-fir_half_length:], h[: fir_half_length + 1]])
    total = float(np.sum(h * h))
    trunc = 1.0 - float(np.sum(taps * taps)) / total if total > 0 else 0.0
    if trunc > 1e-4:
        warnings.warn(f"non-causal Wiener truncation keeps only "
                      f"{1 - trunc:.6f} of the energy; increase fir_half_length",
                      RuntimeWarning)
    return TwoSidedFir(taps, start_index=-fir_half_length), trunc


def _grid_psd_on(psd: GridPsd, wfull: np.ndarray) -> np.ndarray:
    whalf = np.minimum(wfull, 2.0 * np.pi - wfull)
    return np.interp(whalf, psd.grid.omegas, psd.values)


def causal_wiener(F: RationalTransferFunction, psd, g, sigma: float,
                  q_length: int = 1024, fir_length: int = 4096,
                  nfft: int = 1 << 17):
    """Causal Wiener filter via spectral factorization of P_v.

    H = (1/gamma_v^2) Q_v^-1 [P_yv / Q_v(z^-1)]_+ realized as a single
    rational system: the causal-part FIR over the monic minimum-phase
    denominator gamma_v^2 Q_v.
    """
    g = np.asarray(g, dtype=float)
    wfull = np.linspace(0.0, 2.0 * np.pi, nfft, endpoint=False)
    G = freq_response(g, wfull)
    Fr = freq_response(F, wfull)
    pu = psd.value(wfull) if isinstance(psd, RationalPsd) else _grid_psd_on(psd, wfull)
    pv = pu * np.abs(G) ** 2 + sigma ** 2
    if np.min(pv) <= 0:
        raise ValueError("P_v must be positive on the unit circle")
    # factor P_v directly on the FFT grid (already positive and smooth)
    from .spectral import _minimum_phase_spectrum

    amp = _minimum_phase_spectrum(np.log(pv))
    gamma_v2 = amp[0] ** 2
    qv = amp[:q_length] / amp[0]
    qv_tail = 1.0 - np.sum(amp[:q_length] ** 2) / np.sum(amp ** 2)
    Qv = freq_response(qv, wfull)
    pyv = pu * Fr * np.conj(G)
    l_imp = np.fft.ifft(pyv / np.conj(Qv)).real
    lc = l_imp[: nfft // 2][:fir_length]
    h = RationalTransferFunction(lc, gamma_v2 * qv)
    anticausal = float(np.sum(l_imp[nfft // 2:] ** 2) / np.sum(l_imp ** 2))
    return h, {"gamma_v_sq": float(gamma_v2), "qv_truncation": float(qv_tail),
               "anticausal_energy_share": anticausal}


def design_lmmse(F: RationalTransferFunction, psd, params: PrivacyParams,
                 fir_length: int = 512, grid: FrequencyGrid | None = None,
                 causal: bool = False, fir_half_length: int = 800) -> MechanismDesign:
    """Wiener mechanism: water-filled prefilter + (non-)causal Wiener
    reconstruction.  theoretical_mse is the Wiener functional at the
    achieved prefilter; ideal_mse is its value at the water-filling
    optimum."""
    F.require_stable()
    grid = grid or default_grid()
    prob = WaterfillProblem.from_design_data(F, psd, params, grid)
    x_opt = solve_waterfill_lmmse(prob)
    ideal = lmmse_theoretical_mse(F, psd, x_opt, params, grid)
    g, _ = _normalized_prefilter(GridPsd(grid, x_opt), fir_length)
    cal = calibrate(g, params)
    x_ach = np.abs(freq_response(g, grid)) ** 2
    achieved = lmmse_theoretical_mse(F, psd, x_ach, params, grid)
    if causal:
        h, info = causal_wiener(F, psd, g, cal.sigma)
        recon = WienerReconstruction(h=h, release_delay=0,
                                     truncation_energy=info["anticausal_energy_share"])
    else:
        fir, trunc = noncausal_wiener(F, psd, g, cal.sigma, fir_half_length)
        recon = WienerReconstruction(h=fir, release_delay=fir.latency,
                                     truncation_energy=trunc)
    return MechanismDesign(
        kind="lmmse-causal" if causal else "lmmse-noncausal",
        F=F, prefilter_g=g, calibration=cal, reconstruction=recon,
        theoretical_mse=achieved, ideal_mse=ideal,
    )


def design_df_prefilter_variants(F: RationalTransferFunction, psd,
                                 params: PrivacyParams,
                                 grid: FrequencyGrid | None = None,
                                 fir_length: int = 512):
    """(G from the log water-filling, G from the Wiener water-filling),
    both unit-norm minimum-phase FIRs."""
    grid = grid or default_grid()
    prob = WaterfillProblem.from_design_data(F, psd, params, grid)
    x_df = solve_waterfill_df(prob)
    x_lm = solve_waterfill_lmmse(prob)
    g_df, _ = _normalized_prefilter(GridPsd(grid, x_df), fir_length)
    g_lm, _ = _normalized_prefilter(GridPsd(grid, x_lm), fir_length)
    return g_df, g_lm


def _autocov_fn(psd, max_lag: int):
    r = psd_autocovariance(psd, max_lag)

    def r_u(k: int) -> float:
        return float(r[abs(k)])

    return r_u


def design_df(F: RationalTransferFunction, psd, g, sigma: float | None = None,
              delay: int = 5, n_forward: int = 30, n_feedback: int = 10,
              decision: DecisionDevice | None = None, output_mode: str = "soft",
              params: PrivacyParams | None = None,
              ridge: float = 1e-12) -> MechanismDesign:
    """Finite-length delay-constrained MMSE decision-feedback design.

    Forward taps f (applied to v_t .. v_{t-n_forward+1}, estimating
    u_{t-delay}) and strictly causal feedback taps b (applied to decisions
    about u_{t-delay-1} ..) jointly minimize the mean-square symbol error
    under the standard assumption that past decisions are correct.  The
    normal equations are synthesized from the source autocovariance, the
    prefilter, and the noise level.
    """
    if delay < 0:
        raise ValueError("delay must be >= 0")
    if n_forward < 1 or n_feedback < 1:
        raise ValueError("n_forward and n_feedback must be >= 1")
    if output_mode not in ("soft", "hard"):
        raise ValueError("output_mode must be 'soft' or 'hard'")
    F.require_stable()
    g = np.asarray(g, dtype=float)
    if params is not None:
        cal = calibrate(g, params)
        sigma = cal.sigma
    else:
        if sigma is None:
            raise ValueError("either sigma or params must be given")
        norm = float(np.linalg.norm(g))
        cal = NoiseCalibration(kappa=sigma / max(norm, 1e-300), sigma=float(sigma),
                               sensitivity=norm)
    decision = decision or DecisionDevice(kind="sign", amplitude=1.0)

    nf, nb = n_forward, n_feedback
    lg = g.size
    r_u = _autocov_fn(psd, lg + nf + nb + delay + 4)
    cgg = np.correlate(g, g, "full")
    lags = np.arange(-(lg - 1), lg)

    def r_v(k: int) -> float:
        acc = float(np.sum(cgg * np.array([r_u(k - j) for j in lags])))
        return acc + (sigma ** 2 if k == 0 else 0.0)

    def r_vu(k: int) -> float:
        m = np.arange(lg)
        return float(np.sum(g * np.array([r_u(k - mm) for mm in m])))

    rvv = toeplitz([r_v(i) for i in range(nf)])
    rvu = np.array([[r_vu(delay + j - i) for j in range(1, nb + 1)] for i in range(nf)])
    ruu = toeplitz([r_u(j) for j in range(nb)])
    a = np.block([[rvv, -rvu], [-rvu.T, ruu]])
    rhs = np.concatenate([
        [r_vu(delay - i) for i in range(nf)],
        [-r_u(j) for j in range(1, nb + 1)],
    ])
    a = a + ridge * np.eye(a.shape[0])
    try:
        theta = solve(a, rhs, assume_a="sym")
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"singular decision-feedback normal equations: {exc}") from exc
    f_taps = theta[:nf]
    b_taps = theta[nf:]
    mmse = float(r_u(0) - theta @ rhs)
    h1 = TwoSidedFir(f_taps, start_index=-delay)
    recon = DfReconstruction(h1=h1, h2=b_taps, decision=decision,
                             output_mode=output_mode, delay=delay,
                             detector_mmse=mmse)
    return MechanismDesign(kind="df", F=F, prefilter_g=g, calibration=cal,
                           reconstruction=recon, theoretical_mse=None,
                           ideal_mse=None)


def df_whitening_b(F: RationalTransferFunction, psd, x, params: PrivacyParams,
                   grid: FrequencyGrid, fir_length: int = 256) -> RationalTransferFunction:
    """Monic whitening target B = Q / (Q_u Q_F) composed from the canonical
    factors of P_u, |F|^2 and the regularized noise spectrum beta x + 1."""
    w_pu = psd.value(grid) if isinstance(psd, RationalPsd) else psd.values
    kap = kappa(params)
    beta = w_pu / (params.d ** 2 * kap ** 2)
    denom_psd = GridPsd(grid, beta * np.asarray(x) + 1.0)
    q = factor_grid(denom_psd, fir_length).q.taps
    if isinstance(psd, RationalPsd):
        qu = factor_rational(psd).q  # rational: num/den both monic
        qu_num, qu_den = qu.num, qu.den
    else:
        qu_num = factor_grid(GridPsd(grid, w_pu), fir_length).q.taps
        qu_den = np.array([1.0])
    fmag2 = np.abs(freq_response(F, grid)) ** 2
    qf = factor_grid(GridPsd(grid, fmag2), fir_length).q.taps
    # B = Q qu_den / (qu_num Q_F); every factor is monic, so b0 = 1
    return RationalTransferFunction(np.convolve(q, qu_den), np.convolve(qu_num, qf))
