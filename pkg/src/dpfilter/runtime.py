"""Per-sample execution of a designed mechanism.

The privacy boundary is structural: the prefilter-plus-noise stage is the
only code that touches the raw input, the reconstruction stage consumes the
released signal v only, and the consumer-facing view exposes (v, y_hat)
alone.  Exactly one noise sample is drawn per input sample; a mismatch
between the noise-draw count and the sample clock aborts the run.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .design import (
    DfReconstruction,
    LzfReconstruction,
    MechanismDesign,
    WienerReconstruction,
)
from .lti import FilterState, RationalTransferFunction, TwoSidedFir, apply_fir


class NoiseSource:
    """Seeded Gaussian generator with a draw counter.

    Scalar and vectorized draws from the same seed produce the same stream,
    so stepwise and batch execution inject identical noise.
    """

    def __init__(self, sigma: float, rng: np.random.Generator):
        self.sigma = float(sigma)
        self.rng = rng
        self.draws = 0

    def draw(self) -> float:
        self.draws += 1
        return float(self.rng.normal(0.0, self.sigma)) if self.sigma > 0 else 0.0

    def draw_block(self, n: int) -> np.ndarray:
        self.draws += n
        if self.sigma > 0:
            return self.rng.normal(0.0, self.sigma, n)
        return np.zeros(n)


@dataclass
class ReleaseView:
    """Consumer-facing stream: released signal and published output only."""

    v: np.ndarray
    y_hat: np.ndarray


@dataclass
class StreamReport:
    """Full evaluation trace with aligned error statistics.

    y_hat[t] estimates y[t - release_delay]; entries before the delay is
    filled are NaN.  The MSE window drops `discard` warm-up samples.
    """

    label: str
    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    y_hat: np.ndarray
    y_ref: np.ndarray
    noise: np.ndarray
    release_delay: int
    discard: int
    seed: object = None
    mse: float = float("nan")
    rmse: float = float("nan")
    n_error_samples: int = 0


class MechanismInstance:
    """Stateful single-stream executor for a MechanismDesign."""

    def __init__(self, design: MechanismDesign, mean: float = 0.0,
                 seed=None, rng: np.random.Generator | None = None,
                 sigma_override: float | None = None):
        self.design = design
        self.mean = float(mean)
        self.seed = seed
        if rng is None:
            rng = np.random.default_rng(seed)
        sigma = design.calibration.sigma if sigma_override is None else sigma_override
        self.noise = NoiseSource(sigma, rng)
        self.clock = 0
        self._gain_f1 = design.F.gain_at_one()
        self._prefilter = FilterState(TwoSidedFir(design.prefilter_g, 0))
        recon = design.reconstruction
        if isinstance(recon, (LzfReconstruction, WienerReconstruction)):
            h = recon.h
            self._h_state = FilterState(h)
            self._mode = "linear"
        elif isinstance(recon, DfReconstruction):
            self._mode = "df"
            self._fwd_state = FilterState(recon.h1)
            self._f_state = FilterState(design.F)
            self._dec_hist = [0.0] * recon.h2.size
            self._df_count = 0
        else:
            raise TypeError(f"unknown reconstruction {type(recon).__name__}")
        self._released_v: list[float] = []
        self._released_y: list[float] = []

    @property
    def release_delay(self) -> int:
        return self.design.release_delay

    def _check_clock(self):
        if self.noise.draws != self.clock:
            raise RuntimeError(
                f"internal invariant violated: {self.noise.draws} noise draws "
                f"for {self.clock} samples"
            )

    def process(self, u_t: float):
        """Advance one sample: returns (v_t, y_hat or None during delay)."""
        if not np.isfinite(u_t):
            raise ValueError("non-finite input sample")
        v_t = self._prefilter.step(u_t - self.mean) + self.noise.draw()
        self.clock += 1
        self._check_clock()
        y = self._reconstruct(v_t)
        self._released_v.append(v_t)
        if y is not None:
            self._released_y.append(y)
        return v_t, y

    def _reconstruct(self, v_t: float):
        delay = self.release_delay
        t = self.clock - 1
        if self._mode == "linear":
            y = self._h_state.step(v_t)
            if t < delay:
                return None
            return y + self._gain_f1 * self.mean
        # decision feedback
        recon = self.design.reconstruction
        fwd = self._fwd_state.step(v_t)  # (H1 v) for estimated time t - delay
        if t < delay:
            return None
        fb = 0.0
        for j, b in enumerate(recon.h2, start=1):
            if j <= self._df_count:
                fb += b * self._dec_hist[j - 1]
        utilde = fwd - fb
        dec = float(recon.decision.decide(utilde))
        self._dec_hist.insert(0, dec)
        self._dec_hist.pop()
        self._df_count += 1
        pub = utilde if recon.output_mode == "soft" else dec
        return self._f_state.step(pub) + self._gain_f1 * self.mean

    def released(self) -> ReleaseView:
        return ReleaseView(v=np.asarray(self._released_v),
                           y_hat=np.asarray(self._released_y))


def release_stream(instance: MechanismInstance) -> ReleaseView:
    """View carrying only (v, y_hat); no path back to the raw input."""
    return instance.released()


def _default_discard(design: MechanismDesign) -> int:
    orders = np.asarray(design.prefilter_g).size
    recon = design.reconstruction
    if isinstance(recon, LzfReconstruction):
        orders += recon.h.den.size
    elif isinstance(recon, WienerReconstruction):
        h = recon.h
        orders += h.taps.size if isinstance(h, TwoSidedFir) else h.den.size
    elif isinstance(recon, DfReconstruction):
        orders += recon.h1.taps.size + recon.h2.size + design.F.den.size
    return 10 * int(orders)


def run(instance: MechanismInstance, u, y_ref=None, discard: int | None = None,
        label: str = "") -> StreamReport:
    """Execute a full sequence through the mechanism (vectorized where the
    reconstruction allows) and compute the aligned post-transient MSE."""
    u = np.asarray(u, dtype=float)
    design = instance.design
    t0 = instance.clock
    if t0 != 0:
        raise RuntimeError("run() wants a fresh instance")
    T = u.size
    delay = instance.release_delay
    if T == 0:
        empty = np.zeros(0)
        return StreamReport(label=label or design.kind, t=np.zeros(0, dtype=int),
                            u=empty, v=empty, y_hat=empty, y_ref=empty,
                            noise=empty, release_delay=delay, discard=0,
                            seed=instance.seed)
    if not np.all(np.isfinite(u)):
        raise ValueError("input stream contains non-finite samples")
    noise = instance.noise.draw_block(T)
    instance.clock += T
    instance._check_clock()
    v = lfilter(design.prefilter_g, [1.0], u - instance.mean) + noise
    comp = instance._gain_f1 * instance.mean
    recon = design.reconstruction
    if isinstance(recon, (LzfReconstruction, WienerReconstruction)):
        h = recon.h
        if isinstance(h, RationalTransferFunction):
            y_full = lfilter(h.num, h.den, v) + comp
        else:
            y_full = apply_fir(h, v) + comp
        y_hat = y_full.copy()
    else:
        y_hat = _run_df(design, v, comp, T)
    if delay > 0:
        y_hat[:delay] = np.nan
    if y_ref is None:
        y_ref = lfilter(design.F.num, design.F.den, u)
    else:
        y_ref = np.asarray(y_ref, dtype=float)
    if discard is None:
        discard = _default_discard(design)
    discard = int(min(discard, max(T - delay - 1, 0)))
    start = discard + delay
    if start < T:
        err = y_ref[start - delay : T - delay] - y_hat[start:]
        mse = float(np.mean(err ** 2)) if err.size else float("nan")
    else:
        err = np.zeros(0)
        mse = float("nan")
    instance._released_v = list(v)
    instance._released_y = list(y_hat[delay:])
    return StreamReport(
        label=label or design.kind, t=np.arange(T), u=u, v=v, y_hat=y_hat,
        y_ref=y_ref, noise=noise, release_delay=delay, discard=discard,
        seed=instance.seed, mse=mse, rmse=float(np.sqrt(mse)) if np.isfinite(mse) else float("nan"),
        n_error_samples=int(err.size),
    )


def _run_df(design: MechanismDesign, v: np.ndarray, comp: float, T: int) -> np.ndarray:
    """Sequential decision-feedback loop (decisions are inherently serial);
    the forward convolution and final F filtering are vectorized."""
    recon = design.reconstruction
    delay = recon.delay
    fwd = apply_fir(recon.h1, v)  # fwd[t] targets u[t - delay]
    nb = recon.h2.size
    b = recon.h2
    dec = np.zeros(T)            # dec[k]: decision about u[k]
    utilde = np.zeros(T)         # utilde[k]: soft estimate of u[k]
    n_est = T - delay
    decide = recon.decision.decide
    sign_mode = recon.decision.kind == "sign"
    amp = recon.decision.amplitude
    for k in range(n_est):
        acc = 0.0
        jmax = min(nb, k)
        for j in range(1, jmax + 1):
            acc += b[j - 1] * dec[k - j]
        ut = fwd[k + delay] - acc
        utilde[k] = ut
        if sign_mode:
            dec[k] = amp if ut >= 0 else -amp
        else:
            dec[k] = decide(ut)
    seq = utilde if recon.output_mode == "soft" else dec
    y_est = lfilter(design.F.num, design.F.den, seq) + comp  # indexed by estimated time
    y_hat = np.full(T, np.nan)
    y_hat[delay:] = y_est[: T - delay]
    return y_hat


def trace_to_csv(report: StreamReport, path) -> None:
    """Write the trace as CSV: t, u, v, y_ref, y_hat with 17 significant
    digits and LF line endings; unpublished samples leave y_hat empty."""
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "u", "v", "y_ref", "y_hat"])
        for i in range(report.t.size):
            y = report.y_hat[i]
            writer.writerow([
                int(report.t[i]),
                _fmt(report.u[i]),
                _fmt(report.v[i]),
                _fmt(report.y_ref[i]),
                "" if np.isnan(y) else _fmt(y),
            ])


def _fmt(x: float) -> str:
    return f"{x:.17g}"
