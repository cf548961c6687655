"""Network definition and block-fading channel generation."""

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .numkit import ContractViolation, hermitian_eig

__all__ = [
    "NetworkConfig",
    "FadingProcess",
    "ChannelSet",
    "exponential_correlation",
    "generate_channels",
    "pathloss",
    "pathloss_table",
    "derive_connectivity",
    "link_rng",
]


def _per_user(value, K, name, cast=int):
    if np.isscalar(value):
        return tuple(cast(value) for _ in range(K))
    value = tuple(cast(v) for v in value)
    if len(value) != K:
        raise ContractViolation(f"{name} has {len(value)} entries, expected K={K}")
    return value


@dataclass(frozen=True)
class NetworkConfig:
    """Static description of a K-pair MIMO interference network.

    ``nt``, ``nr``, ``d`` and ``tx_power`` accept a scalar (broadcast to all
    users) or a length-K sequence. ``positions`` maps to a ``(2, K, 2)``
    array: ``positions[0]`` holds transmitter and ``positions[1]`` receiver
    coordinates in meters. Per-symbol SNR is ``tx_power / noise_var``.
    """

    K: int
    nt: Sequence[int] = 2
    nr: Sequence[int] = 2
    d: Sequence[int] = 1
    tx_power: Sequence[float] = 1.0
    noise_var: float = 1.0
    positions: Optional[np.ndarray] = None
    pathloss_exponent: float = 0.0
    reference_distance: float = 1.0
    connectivity_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        K = int(self.K)
        if K < 1:
            raise ContractViolation("K must be >= 1")
        object.__setattr__(self, "K", K)
        for name in ("nt", "nr", "d"):
            vals = _per_user(getattr(self, name), K, name)
            if min(vals) < 1:
                raise ContractViolation(f"{name} entries must be >= 1")
            object.__setattr__(self, name, vals)
        object.__setattr__(self, "tx_power", _per_user(self.tx_power, K, "tx_power", float))
        for i in range(K):
            if self.d[i] > min(self.nt[i], self.nr[i]):
                raise ContractViolation(f"user {i}: d={self.d[i]} exceeds min(nt, nr)")
        if min(self.tx_power) < 0:
            raise ContractViolation("tx_power must be non-negative")
        if not self.noise_var > 0:
            raise ContractViolation("noise_var must be positive")
        if self.pathloss_exponent < 0 or not self.reference_distance > 0:
            raise ContractViolation("need pathloss_exponent >= 0 and reference_distance > 0")
        if self.positions is not None:
            pos = np.array(self.positions, dtype=float)
            if pos.shape != (2, K, 2):
                raise ContractViolation(f"positions must have shape (2, K, 2), got {pos.shape}")
            pos.setflags(write=False)
            object.__setattr__(self, "positions", pos)
        if self.connectivity_mask is None:
            mask = np.ones((K, K), dtype=bool)
        else:
            mask = np.array(self.connectivity_mask, dtype=bool)
            if mask.shape != (K, K):
                raise ContractViolation(f"connectivity_mask must be {K}x{K}")
            if not np.all(np.diag(mask)):
                raise ContractViolation("connectivity_mask diagonal must be all true")
        mask.setflags(write=False)
        object.__setattr__(self, "connectivity_mask", mask)

    @classmethod
    def symmetric(cls, K, nt, nr, d, snr_db=0.0, **kwargs):
        """Equal antennas/streams for all users, unit noise, power set by SNR."""
        return cls(K=K, nt=nt, nr=nr, d=d, tx_power=10.0 ** (snr_db / 10.0), noise_var=1.0, **kwargs)

    @property
    def is_symmetric(self):
        return len(set(self.nt)) == 1 and len(set(self.nr)) == 1 and len(set(self.d)) == 1

    @property
    def fully_connected(self):
        return bool(np.all(self.connectivity_mask))

    def with_snr_db(self, snr_db):
        """Copy with every user's power set for the given SNR in dB."""
        return replace(self, tx_power=self.noise_var * 10.0 ** (snr_db / 10.0))

    def subnetwork(self, users):
        """Config restricted to ``users`` (in the given order)."""
        users = list(users)
        pos = None if self.positions is None else self.positions[:, users, :]
        return NetworkConfig(
            K=len(users),
            nt=[self.nt[u] for u in users],
            nr=[self.nr[u] for u in users],
            d=[self.d[u] for u in users],
            tx_power=[self.tx_power[u] for u in users],
            noise_var=self.noise_var,
            positions=pos,
            pathloss_exponent=self.pathloss_exponent,
            reference_distance=self.reference_distance,
            connectivity_mask=self.connectivity_mask[np.ix_(users, users)],
        )

    def to_dict(self):
        out = {
            "K": self.K,
            "nt": list(self.nt),
            "nr": list(self.nr),
            "d": list(self.d),
            "tx_power": list(self.tx_power),
            "noise_var": self.noise_var,
            "pathloss_exponent": self.pathloss_exponent,
            "reference_distance": self.reference_distance,
        }
        if self.positions is not None:
            out["positions"] = self.positions.tolist()
        if not self.fully_connected:
            out["connectivity_mask"] = self.connectivity_mask.astype(int).tolist()
        return out

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


def exponential_correlation(n, rho):
    """``n x n`` correlation matrix with entries ``rho**|a-b|``."""
    idx = np.arange(n)
    return np.asarray(rho, dtype=float) ** np.abs(idx[:, None] - idx[None, :])


def _psd_sqrt(R, name):
    R = np.asarray(R, dtype=complex)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise ContractViolation(f"{name} must be square")
    if not np.allclose(np.diag(R), 1.0, atol=1e-12):
        raise ContractViolation(f"{name} must have unit diagonal")
    w, V = hermitian_eig(R)
    if w[0] < -1e-10:
        raise ContractViolation(f"{name} is not positive semidefinite (min eigenvalue {w[0]:.3e})")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.conj().T


@dataclass(frozen=True)
class FadingProcess:
    """Small-scale fading model.

    ``model`` is ``"iid_rayleigh"`` or ``"kronecker_correlated"``. For the
    Kronecker model, ``tx_corr`` / ``rx_corr`` are either explicit matrices
    or a float ``rho`` meaning the exponential profile ``rho**|a-b|``.
    """

    model: str = "iid_rayleigh"
    tx_corr: object = None
    rx_corr: object = None
    normalized_doppler: float = 0.0

    def __post_init__(self):
        if self.model not in ("iid_rayleigh", "kronecker_correlated"):
            raise ContractViolation(f"unknown fading model {self.model!r}")
        if not 0.0 <= self.normalized_doppler < 0.5:
            raise ContractViolation("normalized_doppler must be in [0, 0.5)")

    def correlation_roots(self, n_rx, n_tx):
        """Square roots ``(R_rx^{1/2}, R_tx^{1/2})``; ``None`` means identity."""
        if self.model == "iid_rayleigh":
            return None, None
        return _corr_root(self.rx_corr, n_rx, "rx_corr"), _corr_root(self.tx_corr, n_tx, "tx_corr")


def _corr_root(spec, n, name):
    if spec is None:
        return None
    R = exponential_correlation(n, spec) if np.isscalar(spec) else np.asarray(spec)
    if R.shape != (n, n):
        raise ContractViolation(f"{name} is {R.shape}, expected {(n, n)}")
    if np.array_equal(R, np.eye(n)):
        return None
    return _psd_sqrt(R, name)


class ChannelSet:
    """The K x K grid of channel matrices for one coherence block.

    ``H[i][l]`` is the ``nr[i] x nt[l]`` channel from transmitter ``l`` to
    receiver ``i``, or ``None`` when the link is masked out. Use :meth:`get`
    for a zero-filled view of masked links.
    """

    def __init__(self, config, H):
        K = config.K
        if len(H) != K or any(len(row) != K for row in H):
            raise ContractViolation(f"channel grid must be {K}x{K}")
        grid = []
        for i in range(K):
            row = []
            for l in range(K):
                h = H[i][l]
                if not config.connectivity_mask[i, l]:
                    row.append(None)
                    continue
                if h is None:
                    raise ContractViolation(f"missing channel for unmasked link ({i}, {l})")
                h = np.array(h, dtype=complex)
                if h.shape != (config.nr[i], config.nt[l]):
                    raise ContractViolation(
                        f"H[{i}][{l}] has shape {h.shape}, expected {(config.nr[i], config.nt[l])}"
                    )
                h.setflags(write=False)
                row.append(h)
            grid.append(tuple(row))
        self.config = config
        self.H = tuple(grid)

    @property
    def K(self):
        return self.config.K

    def get(self, i, l):
        h = self.H[i][l]
        if h is None:
            return np.zeros((self.config.nr[i], self.config.nt[l]), dtype=complex)
        return h

    def links(self):
        """Iterate over ``(i, l, H_il)`` for every modeled link."""
        for i in range(self.K):
            for l in range(self.K):
                if self.H[i][l] is not None:
                    yield i, l, self.H[i][l]

    def cross_links(self, i):
        """Modeled interfering links into receiver ``i`` as ``(l, H_il)``."""
        return [(l, h) for l, h in enumerate(self.H[i]) if l != i and h is not None]

    def map(self, fn):
        """New ChannelSet with ``fn(i, l, H_il)`` applied to every modeled link."""
        return ChannelSet(
            self.config,
            [[None if h is None else fn(i, l, h) for l, h in enumerate(row)] for i, row in enumerate(self.H)],
        )

    def scaled(self, c):
        return self.map(lambda i, l, h: c * h)

    def with_config(self, config):
        return ChannelSet(config, self.H)

    def subnetwork(self, users):
        users = list(users)
        sub = self.config.subnetwork(users)
        return ChannelSet(sub, [[self.H[i][l] for l in users] for i in users])

    def reciprocal(self):
        """Reverse network: link ``(i, l)`` becomes ``H[l][i]^*``."""
        c = self.config
        rev = replace(c, nt=c.nr, nr=c.nt, connectivity_mask=c.connectivity_mask.T)
        return ChannelSet(rev, [[None if self.H[l][i] is None else self.H[l][i].conj().T
                                 for l in range(self.K)] for i in range(self.K)])

    def array_equal(self, other):
        if self.K != other.K:
            return False
        for a_row, b_row in zip(self.H, other.H):
            for a, b in zip(a_row, b_row):
                if (a is None) != (b is None):
                    return False
                if a is not None and not np.array_equal(a, b):
                    return False
        return True


def link_rng(seed, block, i, l):
    """Independent generator for one (block, link) pair.

    Philox is counter-based; the stream depends only on the tuple, never on
    the order links are drawn or which worker draws them.
    """
    ss = np.random.SeedSequence(entropy=int(seed) % (1 << 64), spawn_key=(int(block), int(i), int(l)))
    return np.random.Generator(np.random.Philox(ss))


def _complex_gaussian(rng, shape):
    x = rng.standard_normal(shape)
    y = rng.standard_normal(shape)
    return (x + 1j * y) / np.sqrt(2.0)


def pathloss(config, i, l):
    """Large-scale gain of the link from transmitter ``l`` to receiver ``i``."""
    if config.positions is None:
        return 1.0
    dist = float(np.linalg.norm(config.positions[1, i] - config.positions[0, l]))
    if dist <= config.reference_distance:
        return 1.0
    return float((dist / config.reference_distance) ** (-config.pathloss_exponent))


def pathloss_table(config):
    """K x K array of pathloss gains (row = receiver, column = transmitter)."""
    K = config.K
    return np.array([[pathloss(config, i, l) for l in range(K)] for i in range(K)])


def generate_channels(config, fading=None, seed=0, block=0):
    """Draw one block-fading realization of every modeled link.

    Entries are i.i.d. CN(0, 1) scaled by ``sqrt(pathloss)``; the Kronecker
    model colors them as ``R_rx^{1/2} G R_tx^{1/2}``.
    """
    fading = fading or FadingProcess()
    K = config.K
    roots = {}
    H = [[None] * K for _ in range(K)]
    for i in range(K):
        for l in range(K):
            if not config.connectivity_mask[i, l]:
                continue
            shape = (config.nr[i], config.nt[l])
            if shape not in roots:
                roots[shape] = fading.correlation_roots(*shape)
            rx_root, tx_root = roots[shape]
            g = _complex_gaussian(link_rng(seed, block, i, l), shape)
            if rx_root is not None:
                g = rx_root @ g
            if tx_root is not None:
                g = g @ tx_root
            gain = pathloss(config, i, l)
            H[i][l] = g if gain == 1.0 else np.sqrt(gain) * g
    return ChannelSet(config, H)


def derive_connectivity(config, threshold_db):
    """Mask keeping links whose received SNR ``gain * p / noise`` clears a threshold."""
    if config.positions is None:
        raise ContractViolation("derive_connectivity needs node positions")
    K = config.K
    threshold = 10.0 ** (threshold_db / 10.0)
    mask = np.eye(K, dtype=bool)
    for i in range(K):
        for l in range(K):
            if i != l:
                mask[i, l] = pathloss(config, i, l) * config.tx_power[l] / config.noise_var >= threshold
    return mask
