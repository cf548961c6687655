"""Estimator-style wrappers around the precoder algorithms.

Each aligner is fitted on the channel set the transmitters believe in
(possibly distorted CSI) and scored on the channel set that is actually
realized::

    ia = MinLeakageIA(max_iters=2000, tol=1e-12, seed=3).fit(report.estimated_channels)
    rate = ia.score(true_channels)

``get_params`` / ``set_params`` / ``clone`` come from scikit-learn, so the
aligners drop into parameter sweeps like any other estimator.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import linkeval, precode
from .netmodel import ChannelSet
from .numkit import ContractViolation

__all__ = [
    "check_channel_set",
    "check_same_network",
    "ClosedFormIA",
    "MinLeakageIA",
    "MaxSINR",
    "WMMSE",
    "TDMA",
    "make_aligner",
]


def check_channel_set(channels):
    """Reject anything that is not a :class:`ChannelSet`."""
    if not isinstance(channels, ChannelSet):
        raise ContractViolation(f"expected a ChannelSet, got {type(channels).__name__}")
    return channels


def check_same_network(fitted, channels):
    a, b = fitted.config, channels.config
    if (a.K, a.nt, a.nr, a.d) != (b.K, b.nt, b.nr, b.d):
        raise ContractViolation("channels describe a different network than the one fitted")


class _Aligner(BaseEstimator):
    power_loaded = False

    def _check_fitted(self):
        if not hasattr(self, "precoders_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet; call fit(channels) first")

    def _opts(self):
        return precode.AlgoOptions(max_iters=self.max_iters, tol=self.tol, seed=self.seed,
                                   noise_cov=getattr(self, "noise_cov", None))

    def transform(self, channels):
        """Link metrics of the fitted transceivers on ``channels``."""
        self._check_fitted()
        check_channel_set(channels)
        check_same_network(self.channels_, channels)
        return linkeval.sum_rate(channels, self.precoders_, self.combiners_,
                                 noise_cov=getattr(self, "noise_cov", None), power_loaded=self.power_loaded)

    def score(self, channels):
        """Sum rate (bits/s/Hz) of the fitted transceivers on ``channels``."""
        return self.transform(channels).sum_rate

    def leakage(self, channels):
        self._check_fitted()
        return linkeval.leakage(channels, self.precoders_, self.combiners_, power_loaded=self.power_loaded)


class ClosedFormIA(_Aligner):
    """Closed-form three-user alignment (``nt = nr = 2d``)."""

    def fit(self, channels):
        check_channel_set(channels)
        self.precoders_, self.combiners_ = precode.closed_form_ia_3user(channels)
        self.channels_ = channels
        self.n_iter_ = 0
        return self


class MinLeakageIA(_Aligner):
    def __init__(self, max_iters=1000, tol=1e-10, seed=0):
        self.max_iters = max_iters
        self.tol = tol
        self.seed = seed

    def fit(self, channels):
        check_channel_set(channels)
        F, W, trace = precode.min_leakage(channels, self._opts())
        self.precoders_, self.combiners_, self.leakage_trace_ = F, W, trace
        self.channels_ = channels
        self.n_iter_ = len(trace)
        return self


class MaxSINR(_Aligner):
    def __init__(self, max_iters=1000, tol=1e-10, seed=0, noise_cov=None):
        self.max_iters = max_iters
        self.tol = tol
        self.seed = seed
        self.noise_cov = noise_cov

    def fit(self, channels):
        check_channel_set(channels)
        self.precoders_, self.combiners_ = precode.max_sinr(channels, self._opts())
        self.channels_ = channels
        return self


class WMMSE(_Aligner):
    power_loaded = True

    def __init__(self, max_iters=1000, tol=1e-10, seed=0, noise_cov=None):
        self.max_iters = max_iters
        self.tol = tol
        self.seed = seed
        self.noise_cov = noise_cov

    def fit(self, channels):
        check_channel_set(channels)
        V, W, trace = precode.wmmse_sum_rate(channels, self._opts())
        self.precoders_, self.combiners_, self.rate_trace_ = V, W, trace
        self.powers_ = precode.transmit_powers(V)
        self.channels_ = channels
        self.n_iter_ = len(trace)
        return self


class TDMA(_Aligner):
    """Round-robin single-user waterfilling.

    The transmit covariances come from the fitted (believed) direct
    channels; :meth:`score` evaluates them on the realized ones.
    """

    def fit(self, channels):
        check_channel_set(channels)
        self.schedule_ = precode.tdma_baseline(channels)
        self.precoders_ = self.schedule_.covariances
        self.channels_ = channels
        return self

    def transform(self, channels):
        self._check_fitted()
        check_channel_set(channels)
        check_same_network(self.channels_, channels)
        c = channels.config
        rates = np.zeros(c.K)
        for i, Q in enumerate(self.schedule_.covariances):
            H = channels.get(i, i)
            M = np.eye(c.nr[i]) + H @ Q @ H.conj().T / c.noise_var
            rates[i] = np.linalg.slogdet(M)[1] / np.log(2.0) / c.K
        return linkeval.LinkMetrics(leakage=0.0, per_user_rate=rates, sum_rate=float(rates.sum()))

    def leakage(self, channels):
        return 0.0


_REGISTRY = {
    "closed_form_ia": ClosedFormIA,
    "min_leakage": MinLeakageIA,
    "max_sinr": MaxSINR,
    "wmmse": WMMSE,
    "tdma": TDMA,
}


def make_aligner(name, opts=None):
    """Aligner for an algorithm name in :data:`iasim.precode.ALGORITHMS`."""
    try:
        cls = _REGISTRY[name]
    except KeyError:
        raise ContractViolation(f"unknown algorithm {name!r}; choose from {sorted(_REGISTRY)}") from None
    if cls in (ClosedFormIA, TDMA):
        return cls()
    opts = opts or precode.AlgoOptions()
    params = {"max_iters": opts.max_iters, "tol": opts.tol, "seed": opts.seed}
    if cls in (MaxSINR, WMMSE):
        params["noise_cov"] = opts.noise_cov
    return cls(**params)
