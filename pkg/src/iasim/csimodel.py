"""CSI acquisition: perfect knowledge, analog feedback, or reciprocity iteration.

Every mechanism produces a :class:`CsiReport` that records what the
transmitters end up knowing and how many channel uses it cost. Overhead is
counted in symbols; modulation and coding of the feedback are not modeled.
"""

from dataclasses import dataclass

import numpy as np

from . import linkeval, precode
from .netmodel import ChannelSet
from .numkit import ContractViolation

__all__ = [
    "CsiReport",
    "CoherenceModel",
    "LEVEL_CROSSING_CONSTANT",
    "MAX_COHERENCE",
    "coherence_length",
    "perfect_csi",
    "analog_feedback_overhead",
    "analog_feedback_error_variance",
    "apply_analog_feedback",
    "run_reciprocity_loop",
    "effective_throughput",
    "CsiSpec",
    "LinkOutcome",
    "run_link",
]

LEVEL_CROSSING_CONSTANT = 0.423
MAX_COHERENCE = 10 ** 6
MECHANISMS = ("perfect", "analog_feedback", "reciprocity")


@dataclass(frozen=True)
class CsiReport:
    estimated_channels: ChannelSet
    overhead_symbols: int
    mechanism: str

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ContractViolation(f"unknown CSI mechanism {self.mechanism!r}")
        if self.overhead_symbols < 0:
            raise ContractViolation("overhead_symbols must be non-negative")
        if (self.overhead_symbols == 0) != (self.mechanism == "perfect"):
            raise ContractViolation("only perfect CSI comes for free")


@dataclass(frozen=True)
class CoherenceModel:
    normalized_doppler: float = 0.0
    constant: float = LEVEL_CROSSING_CONSTANT
    max_length: int = MAX_COHERENCE

    @property
    def block_length_symbols(self):
        return coherence_length(self.normalized_doppler, self.constant, self.max_length)


def coherence_length(normalized_doppler, constant=LEVEL_CROSSING_CONSTANT, max_length=MAX_COHERENCE):
    """Symbols per coherence block, ``floor(constant / (f_d T_s))``, at least 1."""
    fd = float(normalized_doppler)
    if not 0.0 <= fd < 0.5:
        raise ContractViolation(f"normalized Doppler must lie in [0, 0.5), got {fd}")
    if fd == 0.0:
        return int(max_length)
    # nudge by a few ulps so exact ratios such as 0.423/0.00423 are not floored below
    ratio = constant / fd
    return int(max(1, min(max_length, np.floor(ratio * (1 + 4 * np.finfo(float).eps)))))


def perfect_csi(channels):
    return CsiReport(estimated_channels=channels, overhead_symbols=0, mechanism="perfect")


def analog_feedback_error_variance(forward_snr, reverse_snr, training_reuse=1):
    """Per-entry CSI error variance: training noise plus feedback noise."""
    if not (forward_snr > 0 and reverse_snr > 0):
        raise ContractViolation("SNR values must be positive")
    if training_reuse < 1:
        raise ContractViolation("training_reuse must be >= 1")
    return 1.0 / (training_reuse * forward_snr) + 1.0 / (training_reuse * reverse_snr)


def analog_feedback_overhead(config, training_reuse=1):
    """Symbols spent on forward pilots, reverse pilots, and coefficient feedback."""
    pilots = sum(config.nt[i] + config.nr[i] for i in range(config.K)) * training_reuse
    mask = config.connectivity_mask
    coeffs = sum(config.nt[l] * config.nr[i] for i in range(config.K) for l in range(config.K) if mask[i, l])
    return int(pilots + training_reuse * coeffs)


def apply_analog_feedback(true_channels, forward_snr, reverse_snr, training_reuse=1, seed=0):
    """Channels as seen by the transmitters after training and analog feedback.

    Each modeled coefficient arrives with additive CN(0, sigma^2) error,
    ``sigma^2 = 1/(r * snr_fwd) + 1/(r * snr_rev)`` with ``r`` the number
    of training repetitions. Infinite SNRs give exact CSI.
    """
    var = analog_feedback_error_variance(forward_snr, reverse_snr, training_reuse)
    config = true_channels.config
    overhead = analog_feedback_overhead(config, training_reuse)
    if var == 0.0:
        est = true_channels
    else:
        sd = np.sqrt(var / 2.0)

        def distort(i, l, H):
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(0xFB, i, l))))
            return H + sd * (rng.standard_normal(H.shape) + 1j * rng.standard_normal(H.shape))

        est = true_channels.map(distort)
    return CsiReport(estimated_channels=est, overhead_symbols=overhead, mechanism="analog_feedback")


class _PilotEstimator:
    """Noisy estimates of the effective channels a node observes in training.

    Each effective channel ``H F`` is seen with additive CN(0, 1/pilot_snr)
    error per entry, before being scaled by the stream power.
    """

    def __init__(self, pilot_snr, seed):
        self.sd = np.sqrt(0.5 / pilot_snr)
        self.rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(0x9E,))))

    def __call__(self, direction, node, blocks):
        out = {}
        for key in sorted(blocks):
            B = blocks[key]
            out[key] = B + self.sd * (self.rng.standard_normal(B.shape) + 1j * self.rng.standard_normal(B.shape))
        return out


def run_reciprocity_loop(true_channels, opts=None, pilot_cost_per_round=0, rounds=1, pilot_snr=np.inf):
    """Over-the-air leakage minimization using channel reciprocity.

    Each round is one forward and one reverse training phase; nodes only
    ever see their own (possibly noisy) received interference. With
    ``pilot_snr = inf`` the iterates are exactly those of
    :func:`iasim.precode.min_leakage` run for the same number of rounds.

    Returns
    -------
    F, W : list of ndarray
    report : CsiReport
        ``estimated_channels`` is the true set (no channel matrices are
        exchanged); ``overhead_symbols = rounds * pilot_cost_per_round``.
    leakage_trace : list of float
        True leakage after every round (diagnostic only).
    """
    opts = opts or precode.AlgoOptions()
    if rounds < 0 or pilot_cost_per_round < 0:
        raise ContractViolation("rounds and pilot_cost_per_round must be non-negative")
    config = true_channels.config
    F0 = precode.random_precoders(config, opts.seed)
    if rounds == 0:
        F, W, trace = F0, precode.random_precoders(config, opts.seed, side="rx"), []
    else:
        estimator = None if np.isinf(pilot_snr) else _PilotEstimator(pilot_snr, opts.seed)
        F, W, trace = precode._leakage_iterations(true_channels, F0, rounds, opts.tol,
                                                  estimator=estimator, stop_early=False)
    overhead = int(rounds * pilot_cost_per_round)
    mechanism = "reciprocity" if overhead > 0 else "perfect"
    report = CsiReport(estimated_channels=true_channels, overhead_symbols=overhead, mechanism=mechanism)
    return F, W, report, trace


def effective_throughput(sum_rate, overhead_symbols, coherence_length):
    """Sum rate discounted by the fraction of each block spent on CSI."""
    if coherence_length < 1:
        raise ContractViolation("coherence_length must be >= 1")
    return max(0.0, 1.0 - overhead_symbols / coherence_length) * sum_rate


@dataclass(frozen=True)
class CsiSpec:
    """How the transmitters in a run learn their channels.

    For analog feedback, ``forward_snr`` / ``reverse_snr`` default to the
    data SNR ``tx_power / noise_var`` of user 0, so both links scale with
    it. For reciprocity, ``pilot_cost_per_round`` defaults to one pilot per
    stream in each direction, ``2 * sum(d)``.
    """

    mechanism: str = "perfect"
    forward_snr: float = None
    reverse_snr: float = None
    training_reuse: int = 1
    rounds: int = 100
    pilot_cost_per_round: int = None
    pilot_snr: float = np.inf

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ContractViolation(f"unknown CSI mechanism {self.mechanism!r}; choose from {MECHANISMS}")


@dataclass(frozen=True)
class LinkOutcome:
    sum_rate: float
    leakage: float
    overhead_symbols: int


def run_link(true_channels, algorithm, opts, csi=None, seed=0):
    """Acquire CSI, design transceivers on it, and score them on the true channels.

    TDMA is charged no overhead and uses exact direct-link CSI: a lone
    transmitter needs no cross-link knowledge, and direct-link training is
    a cost common to every strategy.
    """
    from .estimators import make_aligner

    csi = csi or CsiSpec()
    config = true_channels.config
    if algorithm == "tdma":
        est = make_aligner("tdma").fit(true_channels)
        return LinkOutcome(est.score(true_channels), 0.0, 0)
    if csi.mechanism == "reciprocity":
        if algorithm != "min_leakage":
            raise ContractViolation("reciprocity-based training runs the leakage-minimization iteration only")
        cost = csi.pilot_cost_per_round
        if cost is None:
            cost = 2 * sum(config.d)
        F, W, report, _ = run_reciprocity_loop(true_channels, opts, cost, csi.rounds, csi.pilot_snr)
        m = linkeval.sum_rate(true_channels, F, W)
        return LinkOutcome(m.sum_rate, m.leakage, report.overhead_symbols)
    if csi.mechanism == "analog_feedback":
        snr = config.tx_power[0] / config.noise_var
        fwd = snr if csi.forward_snr is None else csi.forward_snr
        rev = snr if csi.reverse_snr is None else csi.reverse_snr
        report = apply_analog_feedback(true_channels, fwd, rev, csi.training_reuse, seed)
    else:
        report = perfect_csi(true_channels)
    est = make_aligner(algorithm, opts).fit(report.estimated_channels)
    m = est.transform(true_channels)
    leak = est.leakage(true_channels)
    return LinkOutcome(m.sum_rate, leak, report.overhead_symbols)
