"""Link-level metrics for a (channels, precoders, combiners) triple."""

from dataclasses import dataclass, field

import numpy as np

from .numkit import ContractViolation

__all__ = ["LinkMetrics", "leakage", "interference_power", "sum_rate", "fit_dof_slope"]


@dataclass
class LinkMetrics:
    leakage: float
    per_user_rate: np.ndarray
    sum_rate: float
    per_stream_sinr: list = field(default_factory=list)

    def as_row(self):
        return {"sum_rate": self.sum_rate, "leakage": self.leakage}


def _stream_power(config, i, power_loaded):
    return 1.0 if power_loaded else config.tx_power[i] / config.d[i]


def _check_shapes(channels, F, W=None):
    c = channels.config
    if len(F) != c.K or (W is not None and len(W) != c.K):
        raise ContractViolation("need one precoder and combiner per user")
    for i in range(c.K):
        if F[i].shape[0] != c.nt[i]:
            raise ContractViolation(f"F[{i}] has {F[i].shape[0]} rows, expected nt={c.nt[i]}")
        if W is not None and W[i].shape[0] != c.nr[i]:
            raise ContractViolation(f"W[{i}] has {W[i].shape[0]} rows, expected nr={c.nr[i]}")


def leakage(channels, F, W, power_loaded=False):
    """Residual interference power left after combining, summed over receivers."""
    _check_shapes(channels, F, W)
    c = channels.config
    total = 0.0
    for i in range(c.K):
        for l, H in channels.cross_links(i):
            M = W[i].conj().T @ H @ F[l]
            total += _stream_power(c, l, power_loaded) * float(np.vdot(M, M).real)
    return total


def interference_power(channels, F, power_loaded=False):
    """Total interference power arriving at all receivers before combining."""
    _check_shapes(channels, F)
    c = channels.config
    total = 0.0
    for i in range(c.K):
        for l, H in channels.cross_links(i):
            M = H @ F[l]
            total += _stream_power(c, l, power_loaded) * float(np.vdot(M, M).real)
    return total


def _covariances(channels, F, i, noise_var, noise_cov, power_loaded):
    c = channels.config
    A = channels.get(i, i) @ F[i] * np.sqrt(_stream_power(c, i, power_loaded))
    Q_int = np.zeros((c.nr[i], c.nr[i]), dtype=complex)
    for l, H in channels.cross_links(i):
        B = H @ F[l]
        Q_int += _stream_power(c, l, power_loaded) * (B @ B.conj().T)
    if noise_cov is not None and noise_cov[i] is not None:
        N = np.asarray(noise_cov[i], dtype=complex)
    else:
        N = noise_var * np.eye(c.nr[i])
    return A, Q_int, N


def _logdet2(M):
    sign, logdet = np.linalg.slogdet(M)
    return float(logdet.real) / np.log(2.0)


def sum_rate(channels, F, W=None, noise_var=None, noise_cov=None, power_loaded=False):
    """Achievable rates treating interference as Gaussian noise.

    Parameters
    ----------
    channels : ChannelSet
    F : list of ndarray
        Precoders. With ``power_loaded=False`` (default) they are taken as
        orthonormal and each stream gets ``tx_power[i] / d[i]``; with
        ``power_loaded=True`` they already carry their transmit power.
    W : list of ndarray, optional
        Receive combiners. Without them the rate is that of an optimal
        (MMSE-SIC) receiver on the full receive space.
    noise_var : float, optional
        Defaults to ``channels.config.noise_var``.
    noise_cov : list of ndarray, optional
        Per-receiver noise-plus-uncoordinated-interference covariance,
        replacing ``noise_var * I`` where given.

    Returns
    -------
    LinkMetrics
    """
    _check_shapes(channels, F, W)
    c = channels.config
    noise_var = c.noise_var if noise_var is None else noise_var
    if not noise_var > 0:
        raise ContractViolation("noise_var must be positive")
    rates = np.zeros(c.K)
    sinrs = []
    for i in range(c.K):
        A, Q_int, N = _covariances(channels, F, i, noise_var, noise_cov, power_loaded)
        R_in = Q_int + N
        if W is not None:
            A = W[i].conj().T @ A
            R_in = W[i].conj().T @ R_in @ W[i]
        Q_sig = A @ A.conj().T
        n = Q_sig.shape[0]
        rates[i] = _logdet2(np.eye(n) + np.linalg.solve(R_in, Q_sig))
        sinrs.append(_stream_sinr(A, R_in, W is not None))
    leak = leakage(channels, F, W, power_loaded) if W is not None else float("nan")
    return LinkMetrics(leakage=leak, per_user_rate=rates, sum_rate=float(rates.sum()), per_stream_sinr=sinrs)


def _stream_sinr(A, R_in, combined):
    """Per-stream SINR; single-tap per stream after combining, MMSE otherwise."""
    out = np.zeros(A.shape[1])
    for s in range(A.shape[1]):
        others = np.delete(A, s, axis=1)
        B = R_in + others @ others.conj().T
        a = A[:, s]
        if combined:
            out[s] = abs(a[s]) ** 2 / max(float(B[s, s].real), 1e-300)
        else:
            out[s] = float(np.vdot(a, np.linalg.solve(B, a)).real)
    return out


def fit_dof_slope(snr_db_points, sum_rates):
    """Least-squares slope of sum rate against ``log2(SNR)``."""
    x = np.asarray(snr_db_points, dtype=float)
    y = np.asarray(sum_rates, dtype=float)
    if x.size < 2 or x.size != y.size:
        raise ContractViolation("need at least two (snr, rate) points of equal length")
    if np.any(np.diff(x) <= 0):
        raise ContractViolation("SNR points must be strictly ascending")
    if np.any(x < 20.0):
        raise ContractViolation("slope fit is a high-SNR estimate; all points must be >= 20 dB")
    log2_snr = x / (10.0 * np.log10(2.0))
    slope, _ = np.polyfit(log2_snr, y, 1)
    return float(slope)
