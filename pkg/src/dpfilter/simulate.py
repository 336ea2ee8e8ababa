"""Input-signal sources, Monte Carlo evaluation, and brute-force oracles.

Replications use independent child seeds derived from (base_seed, rep), so
runs are bit-reproducible and embarrassingly parallel.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .design import MechanismDesign, WaterfillProblem
from .lti import RationalTransferFunction, TwoSidedFir
from .runtime import MechanismInstance, run
from .spectral import RationalPsd


# ---------------------------------------------------------------------------
# sources

@dataclass
class MarkovSource:
    """Two-state Markov chain started from its stationary distribution."""

    transition: np.ndarray
    state_values: tuple = (-1.0, 1.0)
    seed: int | None = None

    def __init__(self, transition, state_values=(-1.0, 1.0), seed=None):
        P = np.asarray(transition, dtype=float)
        if P.shape != (2, 2):
            raise ValueError("transition must be a 2x2 matrix")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("transition rows must be nonnegative and sum to 1")
        self.transition = P
        self.state_values = (float(state_values[0]), float(state_values[1]))
        self.seed = seed

    @classmethod
    def symmetric(cls, p_stay: float = 0.75, state_values=(-1.0, 1.0), seed=None):
        if not (0.0 < p_stay < 1.0):
            raise ValueError("p_stay must lie in (0, 1)")
        q = 1.0 - p_stay
        return cls([[p_stay, q], [q, p_stay]], state_values, seed)

    def stationary(self) -> np.ndarray:
        P = self.transition
        # solve pi P = pi with sum(pi) = 1 for the 2-state chain
        a, b = P[0, 1], P[1, 0]
        if a + b == 0:
            return np.array([0.5, 0.5])
        return np.array([b / (a + b), a / (a + b)])

    def sample(self, T: int, rng: np.random.Generator | None = None) -> np.ndarray:
        rng = rng if rng is not None else np.random.default_rng(self.seed)
        pi = self.stationary()
        P = self.transition
        uni = rng.random(T)
        states = np.empty(T, dtype=np.int64)
        s = 0 if uni[0] < pi[0] else 1
        # first uniform picks the stationary start; fresh ones drive moves
        moves = rng.random(T)
        for t in range(T):
            states[t] = s
            s = 0 if moves[t] < P[s, 0] else 1
        vals = np.asarray(self.state_values)
        return vals[states]

    def psd(self) -> RationalPsd:
        return psd_of_markov(self)


def markov_sample(source: MarkovSource, T: int,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    return source.sample(T, rng)


def psd_of_markov(source: MarkovSource) -> RationalPsd:
    """AR(1)-form PSD of a symmetric two-state chain with values +-s:
    pole parameter 2p-1 and gain matching the variance."""
    P = source.transition
    v0, v1 = source.state_values
    if abs(P[0, 0] - P[1, 1]) > 1e-12 or abs(v0 + v1) > 1e-12:
        raise ValueError("PSD form requires a symmetric chain with values +-s")
    p = float(P[0, 0])
    a = 2.0 * p - 1.0
    variance = v1 * v1
    if a == 0.0:
        return RationalPsd(gain=variance)
    return RationalPsd(gain=variance * (1.0 - a * a), denominator_roots=[a])


@dataclass
class ArSource:
    """Gaussian AR(1): x_t = a x_{t-1} + e_t."""

    a: float
    noise_std: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        if not (abs(self.a) < 1.0):
            raise ValueError("AR coefficient must satisfy |a| < 1")

    def sample(self, T: int, rng: np.random.Generator | None = None) -> np.ndarray:
        rng = rng if rng is not None else np.random.default_rng(self.seed)
        e = rng.normal(0.0, self.noise_std, T)
        x = lfilter([1.0], [1.0, -self.a], e)
        # stationary start
        x0 = rng.normal(0.0, self.noise_std / np.sqrt(1.0 - self.a ** 2))
        return x + x0 * self.a ** np.arange(1, T + 1)

    def psd(self) -> RationalPsd:
        if self.a == 0.0:
            return RationalPsd(gain=self.noise_std ** 2)
        return RationalPsd(gain=self.noise_std ** 2, denominator_roots=[self.a])


@dataclass
class IidSource:
    """Iid picks from a finite value set."""

    values: tuple = (-1.0, 1.0)
    probs: tuple | None = None
    seed: int | None = None

    def sample(self, T: int, rng: np.random.Generator | None = None) -> np.ndarray:
        rng = rng if rng is not None else np.random.default_rng(self.seed)
        vals = np.asarray(self.values, dtype=float)
        return rng.choice(vals, size=T, p=self.probs)

    def psd(self) -> RationalPsd:
        vals = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float) if self.probs is not None \
            else np.full(vals.size, 1.0 / vals.size)
        mean = float(np.sum(p * vals))
        var = float(np.sum(p * (vals - mean) ** 2))
        return RationalPsd(gain=var)


def psd_of_source(source) -> RationalPsd:
    return source.psd()


# ---------------------------------------------------------------------------
# Monte Carlo

@dataclass
class SimulationReport:
    label: str
    theoretical_mse: float | None
    empirical_mse: float
    std_error: float
    per_rep_mse: np.ndarray
    T: int
    replications: int
    base_seed: int
    discard: int
    release_delay: int

    @property
    def empirical_rmse(self) -> float:
        return float(np.sqrt(self.empirical_mse))

    def rmse_ci95(self):
        """95% normal-approximation CI for the RMSE."""
        lo = self.empirical_mse - 1.96 * self.std_error
        hi = self.empirical_mse + 1.96 * self.std_error
        return float(np.sqrt(max(lo, 0.0))), float(np.sqrt(hi))


def _one_rep(design: MechanismDesign, source, T, discard, mean, base_seed, rep):
    src_rng = np.random.default_rng([base_seed, rep, 0])
    u = source.sample(T, src_rng)
    inst = MechanismInstance(design, mean=mean, seed=(base_seed, rep),
                             rng=np.random.default_rng([base_seed, rep, 1]))
    rep_out = run(inst, u, discard=discard)
    return rep_out.mse


def monte_carlo(design: MechanismDesign, source, T: int = 100_000,
                replications: int = 20, seed: int = 0,
                discard: int = 10_000, mean: float = 0.0,
                jobs: int = 1, label: str | None = None) -> SimulationReport:
    """Independent replications with child seeds (seed, rep); reports the
    mean empirical MSE and its standard error across replications."""
    if T <= discard:
        raise ValueError("T must exceed the transient discard window")
    args = [(design, source, T, discard, mean, seed, rep)
            for rep in range(replications)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            mses = list(pool.map(_one_rep_star, args))
    else:
        mses = [_one_rep(*a) for a in args]
    mses = np.asarray(mses, dtype=float)
    std_err = float(mses.std(ddof=1) / np.sqrt(replications)) if replications > 1 else 0.0
    return SimulationReport(
        label=label or design.kind,
        theoretical_mse=design.theoretical_mse,
        empirical_mse=float(mses.mean()),
        std_error=std_err,
        per_rep_mse=mses,
        T=T, replications=replications, base_seed=seed, discard=discard,
        release_delay=design.release_delay,
    )


def _one_rep_star(a):
    return _one_rep(*a)


def report_to_text(report: SimulationReport) -> str:
    lines = [
        f"label: {report.label}",
        f"T: {report.T}",
        f"replications: {report.replications}",
        f"base_seed: {report.base_seed}",
        f"discard: {report.discard}",
        f"release_delay: {report.release_delay}",
        f"theoretical_mse: {_fmt_opt(report.theoretical_mse)}",
        f"theoretical_rmse: {_fmt_opt(None if report.theoretical_mse is None else float(np.sqrt(report.theoretical_mse)))}",
        f"empirical_mse: {report.empirical_mse:.17g}",
        f"empirical_rmse: {report.empirical_rmse:.17g}",
        f"std_error: {report.std_error:.17g}",
    ]
    return "\n".join(lines) + "\n"


def report_to_csv(report: SimulationReport, path) -> None:
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rep", "mse", "rmse"])
        for i, m in enumerate(report.per_rep_mse):
            writer.writerow([i, f"{m:.17g}", f"{np.sqrt(m):.17g}"])


def _fmt_opt(x) -> str:
    return "" if x is None else f"{x:.17g}"


# ---------------------------------------------------------------------------
# oracles for the test suite

def adjacency_oracle(g, d: int, trials: int = 200, T: int = 256,
                     seed: int = 0) -> float:
    """Brute-force max of ||G u - G u'||_2 over random adjacent pairs
    u' = u + k delta_{t0}, |k| <= d, integer k != 0.

    Both streams are actually filtered (no reuse of the norm identity) and
    the level |k| = d is always sampled so the sensitivity bound can be
    attained, not just approached.
    """
    rng = np.random.default_rng(seed)
    if isinstance(g, RationalTransferFunction):
        num, den = g.num, g.den
        from .lti import _full_impulse

        horizon = _full_impulse(g).size
    elif isinstance(g, TwoSidedFir):
        num, den = g.taps, np.array([1.0])
        horizon = g.taps.size
    else:
        num, den = np.asarray(g, dtype=float), np.array([1.0])
        horizon = num.size
    total = T + horizon
    best = 0.0
    for trial in range(trials):
        t0 = int(rng.integers(0, T))
        if trial < max(2, trials // 10):
            k = d if trial % 2 == 0 else -d
        else:
            k = 0
            while k == 0:
                k = int(rng.integers(-d, d + 1))
        u = rng.integers(-4, 5, total) / 2.0  # half-integer event stream
        u[T:] = 0.0
        u2 = u.copy()
        u2[t0] += k
        diff = lfilter(num, den, u) - lfilter(num, den, u2)
        best = max(best, float(np.linalg.norm(diff)))
    return best


def waterfill_oracle(prob: WaterfillProblem, objective: str = "lmmse",
                     iters: int = 100_000, step: float | None = None,
                     tol: float = 1e-14) -> np.ndarray:
    """Projected-gradient reference solver for the water-filling programs.

    Deliberately independent of the KKT closed forms: (accelerated)
    gradient steps on the smooth objective followed by exact projection
    onto the weighted simplex {x >= 0, sum w x = 1}.
    """
    a, b, w = prob.alpha, prob.beta, prob.weights
    n = a.size
    if objective == "lmmse":
        def grad_fn(x):
            return -w * a * b / (b * x + 1.0) ** 2
        lip = float(np.max(w * 2.0 * a * b ** 2) + 1e-300)
    elif objective == "df":
        def grad_fn(x):
            return -w * b / (b * x + 1.0)  # descent on the negated objective
        lip = float(np.max(w * b ** 2) + 1e-300)
    else:
        raise ValueError(f"unknown objective {objective!r}")
    if step is None:
        step = 1.0 / lip
    x = _project_weighted_simplex(np.full(n, 1.0), w)
    z = x.copy()
    t_acc = 1.0
    for it in range(iters):
        x_new = _project_weighted_simplex(z - step * grad_fn(z), w)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_acc * t_acc))
        z = x_new + ((t_acc - 1.0) / t_new) * (x_new - x)
        moved = float(np.max(np.abs(x_new - x)))
        x, t_acc = x_new, t_new
        if moved < tol and it > 50:
            break
    return x


def _project_weighted_simplex(y: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum w x = 1}.

    x = max(y - tau w, 0) with s(tau) = sum w x piecewise linear and
    decreasing; the knot interval containing s = 1 gives tau in closed form.
    """
    pos = w > 0
    if not np.any(pos):
        return np.maximum(y, 0.0)
    knots = np.unique(y[pos] / w[pos])
    lo_idx, hi_idx = 0, knots.size - 1

    def s_of(tau):
        return float(np.sum(w * np.maximum(y - tau * w, 0.0)))

    if s_of(knots[lo_idx]) <= 1.0:
        tau_hi = knots[lo_idx]
        tau_lo = tau_hi - max(1.0, abs(tau_hi))
        while s_of(tau_lo) < 1.0:
            tau_lo -= max(1.0, abs(tau_lo))
    else:
        # binary search for the knot interval with s crossing 1
        while hi_idx - lo_idx > 1:
            mid = (lo_idx + hi_idx) // 2
            if s_of(knots[mid]) > 1.0:
                lo_idx = mid
            else:
                hi_idx = mid
        tau_lo, tau_hi = knots[lo_idx], knots[hi_idx]
    # on [tau_lo, tau_hi] the active set is fixed: s(tau) = c0 - c1 tau
    active = (y - tau_hi * w) > 0
    if not np.any(active):
        active = (y - tau_lo * w) > 0
    c0 = float(np.sum(w[active] * y[active]))
    c1 = float(np.sum(w[active] ** 2))
    tau = (c0 - 1.0) / c1 if c1 > 0 else tau_lo
    x = np.maximum(y - tau * w, 0.0)
    s = float(np.sum(w * x))
    return x / s if s > 0 else x


def empirical_psd(samples: np.ndarray, n_segments: int = 32) -> tuple:
    """Averaged periodogram on [0, pi]; returns (omegas, psd values)."""
    x = np.asarray(samples, dtype=float)
    seg = x.size // n_segments
    if seg < 8:
        raise ValueError("not enough samples for the requested segments")
    acc = None
    for i in range(n_segments):
        chunk = x[i * seg : (i + 1) * seg]
        spec = np.abs(np.fft.rfft(chunk)) ** 2 / seg
        acc = spec if acc is None else acc + spec
    acc /= n_segments
    omegas = np.linspace(0.0, np.pi, acc.size)
    return omegas, acc
