"""Scikit-learn style front end for the private filtering mechanisms.

Each mechanism is a transformer: hyperparameters (the target filter, the
privacy policy, design knobs) go to ``__init__``, ``fit`` runs the
design-time construction (no training data is consumed; the designs depend
on declared statistics, not samples), and ``transform`` privatizes an event
stream, returning the published output aligned to the input clock.
``transform`` is stochastic by construction; seed it through
``random_state``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted, check_random_state

from .design import (
    DecisionDevice,
    design_df,
    design_df_prefilter_variants,
    design_lmmse,
    design_lzf,
)
from .lti import RationalTransferFunction
from .privacy import PrivacyParams
from .runtime import MechanismInstance, run


def _as_stream(X) -> np.ndarray:
    x = np.asarray(X, dtype=float)
    if x.ndim == 2 and x.shape[1] == 1:
        x = x[:, 0]
    if x.ndim != 1:
        raise ValueError("expected a 1-D event stream (or a (T, 1) column)")
    if not np.all(np.isfinite(x)):
        raise ValueError("stream contains non-finite values")
    return x


class _BasePrivateFilter(TransformerMixin, BaseEstimator):
    """Shared fit/transform plumbing; subclasses build self.design_."""

    def __init__(self, filter_num=(1.0,), filter_den=(1.0,), epsilon=1.0,
                 delta=0.05, d=1, mean=0.0, random_state=None):
        self.filter_num = filter_num
        self.filter_den = filter_den
        self.epsilon = epsilon
        self.delta = delta
        self.d = d
        self.mean = mean
        self.random_state = random_state

    def _params(self) -> PrivacyParams:
        return PrivacyParams(epsilon=self.epsilon, delta=self.delta, d=self.d)

    def _target(self) -> RationalTransferFunction:
        return RationalTransferFunction(self.filter_num, self.filter_den)

    def fit(self, X=None, y=None):
        """Run the design stage.  X is accepted for pipeline compatibility
        and ignored: the construction uses declared statistics only."""
        self.design_ = self._build_design()
        self.sigma_ = self.design_.calibration.sigma
        self.kappa_ = self.design_.calibration.kappa
        self.release_delay_ = self.design_.release_delay
        self.theoretical_mse_ = self.design_.theoretical_mse
        # keep one generator across transform calls for a reproducible stream
        rs = check_random_state(self.random_state)
        self._rng = np.random.default_rng(rs.randint(0, 2**31 - 1))
        return self

    def transform(self, X):
        """Privatize a stream; element t estimates y_{t - release_delay_},
        with NaN during the initial delay."""
        check_is_fitted(self, "design_")
        u = _as_stream(X)
        inst = MechanismInstance(self.design_, mean=self.mean, rng=self._rng)
        report = run(inst, u)
        return report.y_hat

    def release(self, X):
        """(v, y_hat): the released noisy intermediate and published output."""
        check_is_fitted(self, "design_")
        u = _as_stream(X)
        inst = MechanismInstance(self.design_, mean=self.mean, rng=self._rng)
        report = run(inst, u)
        return report.v, report.y_hat

    def _build_design(self):
        raise NotImplementedError


class LzfMechanism(_BasePrivateFilter):
    """Zero-forcing private approximation of the target filter.

    Needs no source statistics; the reconstruction inverts the prefilter
    exactly, so with the noise disabled the pipeline reproduces the target
    output.
    """

    def __init__(self, filter_num=(1.0,), filter_den=(1.0,), epsilon=1.0,
                 delta=0.05, d=1, mean=0.0, fir_length=512, random_state=None):
        super().__init__(filter_num, filter_den, epsilon, delta, d, mean,
                         random_state)
        self.fir_length = fir_length

    def _build_design(self):
        return design_lzf(self._target(), self._params(), fir_length=self.fir_length)


class LmmseMechanism(_BasePrivateFilter):
    """Wiener-reconstruction mechanism for a declared rational source PSD."""

    def __init__(self, filter_num=(1.0,), filter_den=(1.0,), epsilon=1.0,
                 delta=0.05, d=1, mean=0.0, psd=None, fir_length=512,
                 causal=False, fir_half_length=800, random_state=None):
        super().__init__(filter_num, filter_den, epsilon, delta, d, mean,
                         random_state)
        self.psd = psd
        self.fir_length = fir_length
        self.causal = causal
        self.fir_half_length = fir_half_length

    def _build_design(self):
        if self.psd is None:
            raise ValueError("LmmseMechanism needs the source PSD")
        return design_lmmse(self._target(), self.psd, self._params(),
                            fir_length=self.fir_length, causal=self.causal,
                            fir_half_length=self.fir_half_length)


class DecisionFeedbackMechanism(_BasePrivateFilter):
    """Decision-feedback mechanism for discrete-valued streams."""

    def __init__(self, filter_num=(1.0,), filter_den=(1.0,), epsilon=1.0,
                 delta=0.05, d=1, mean=0.0, psd=None, prefilter="lmmse",
                 fir_length=512, delay=5, n_forward=30, n_feedback=10,
                 decision_kind="sign", decision_amplitude=1.0,
                 decision_step=1.0, decision_offset=0.0,
                 output_mode="soft", random_state=None):
        super().__init__(filter_num, filter_den, epsilon, delta, d, mean,
                         random_state)
        self.psd = psd
        self.prefilter = prefilter
        self.fir_length = fir_length
        self.delay = delay
        self.n_forward = n_forward
        self.n_feedback = n_feedback
        self.decision_kind = decision_kind
        self.decision_amplitude = decision_amplitude
        self.decision_step = decision_step
        self.decision_offset = decision_offset
        self.output_mode = output_mode

    def _build_design(self):
        if self.psd is None:
            raise ValueError("DecisionFeedbackMechanism needs the source PSD")
        if self.prefilter not in ("lmmse", "df-optimized"):
            raise ValueError("prefilter must be 'lmmse' or 'df-optimized'")
        F = self._target()
        params = self._params()
        g_df, g_lm = design_df_prefilter_variants(F, self.psd, params,
                                                  fir_length=self.fir_length)
        g = g_lm if self.prefilter == "lmmse" else g_df
        decision = DecisionDevice(kind=self.decision_kind,
                                  amplitude=self.decision_amplitude,
                                  step=self.decision_step,
                                  offset=self.decision_offset)
        return design_df(F, self.psd, g, params=params, delay=self.delay,
                         n_forward=self.n_forward, n_feedback=self.n_feedback,
                         decision=decision, output_mode=self.output_mode)
