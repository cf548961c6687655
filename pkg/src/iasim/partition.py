"""Hybrid IA/TDMA: grouping users into alignment clusters served in turn.

A :class:`Partition` splits the users into groups; groups take equal turns
in time, and inside its turn a group aligns its members with the chosen
algorithm. A group is worth forming only if its rate gain beats the CSI
overhead it pays within a coherence block.
"""

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Tuple

import numpy as np

from . import csimodel, precode
from .numkit import ContractViolation

__all__ = [
    "Partition",
    "PartitionScore",
    "MAX_EXHAUSTIVE_K",
    "bell_number",
    "enumerate_partitions",
    "score_partition",
    "best_partition_exhaustive",
    "best_over_coherence",
    "group_seed",
    "proxy_score",
    "greedy_grouping",
    "geographic_grouping",
]

MAX_EXHAUSTIVE_K = 10
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class Partition:
    """Disjoint, non-empty groups of 0-based user indices in canonical order."""

    groups: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        groups = tuple(sorted(tuple(sorted(int(u) for u in g)) for g in self.groups))
        if any(len(g) == 0 for g in groups):
            raise ContractViolation("partition groups must be non-empty")
        members = [u for g in groups for u in g]
        if len(members) != len(set(members)):
            raise ContractViolation("partition groups must be disjoint")
        object.__setattr__(self, "groups", groups)

    @classmethod
    def singletons(cls, K):
        return cls(tuple((i,) for i in range(K)))

    @classmethod
    def full(cls, K):
        return cls((tuple(range(K)),))

    @property
    def K(self):
        return sum(len(g) for g in self.groups)

    @property
    def n_groups(self):
        return len(self.groups)

    @property
    def sizes(self):
        return [len(g) for g in self.groups]

    @property
    def mean_group_size(self):
        return self.K / self.n_groups

    def check_covers(self, K):
        if sorted(u for g in self.groups for u in g) != list(range(K)):
            raise ContractViolation(f"partition does not cover users 0..{K - 1}")

    def __str__(self):
        return "|".join("{" + ",".join(str(u + 1) for u in g) + "}" for g in self.groups)

    @classmethod
    def parse(cls, text):
        """Inverse of ``str``: ``"{1,2}|{3}"`` (1-based) to a Partition."""
        groups = []
        for part in text.split("|"):
            part = part.strip().strip("{}")
            groups.append(tuple(int(u) - 1 for u in part.split(",")))
        return cls(tuple(groups))


@dataclass
class PartitionScore:
    partition: Partition
    effective_sum_rate: float
    per_group_rate: list = field(default_factory=list)
    per_group_overhead: list = field(default_factory=list)
    per_group_fallback: list = field(default_factory=list)

    @property
    def n_fallback(self):
        """Groups of size >= 2 that fell back to TDMA."""
        return sum(self.per_group_fallback)


@lru_cache(maxsize=None)
def bell_number(n):
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def enumerate_partitions(K):
    """Every set partition of ``{0..K-1}``, in restricted-growth-string order."""
    if K > MAX_EXHAUSTIVE_K:
        raise ContractViolation(f"exhaustive enumeration limited to K <= {MAX_EXHAUSTIVE_K} (Bell({K}) partitions)")
    if K < 1:
        raise ContractViolation("K must be >= 1")
    out = []

    def rec(i, labels, n_blocks):
        if i == K:
            groups = [[] for _ in range(n_blocks)]
            for u, b in enumerate(labels):
                groups[b].append(u)
            out.append(Partition(tuple(tuple(g) for g in groups)))
            return
        for b in range(n_blocks + 1):
            labels.append(b)
            rec(i + 1, labels, max(n_blocks, b + 1))
            labels.pop()

    rec(0, [], 0)
    return out


def group_seed(seed, group):
    """Algorithm seed used for ``group``; the same group always gets the same seed."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(0x6A,) + tuple(group))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _group_outcome(channels, group, csi, algo, opts):
    """Rate, CSI overhead and fallback flag of one group in its own time slot."""
    sub = channels.subnetwork(group)
    if len(group) == 1:
        return precode.tdma_baseline(sub).sum_rate, 0, False
    if precode.check_feasibility(sub.config) == "infeasible":
        return precode.tdma_baseline(sub).sum_rate, 0, True
    seed = group_seed(opts.seed, group)
    sub_opts = precode.AlgoOptions(max_iters=opts.max_iters, tol=opts.tol, seed=seed)
    out = csimodel.run_link(sub, algo, sub_opts, csi, seed=seed)
    return out.sum_rate, out.overhead_symbols, False


def _combine(partition, outcomes, L):
    G = partition.n_groups
    rates = [outcomes[g][0] for g in partition.groups]
    overheads = [outcomes[g][1] for g in partition.groups]
    fallback = [outcomes[g][2] for g in partition.groups]
    total = sum(max(0.0, 1.0 - oh / L) * r for r, oh in zip(rates, overheads)) / G
    return PartitionScore(partition, float(total), rates, overheads, fallback)


def _coherence(coherence):
    if isinstance(coherence, csimodel.CoherenceModel):
        return coherence.block_length_symbols
    return int(coherence)


def score_partition(partition, channels, coherence, csi_mechanism=None, algo="min_leakage", opts=None, _cache=None):
    """Effective sum rate of a hybrid IA/TDMA schedule.

    Each of the ``G`` groups transmits for ``1/G`` of the time with the
    other users silent. Singletons use single-user waterfilling and pay no
    CSI overhead; a group failing the feasibility test falls back to TDMA
    inside its slot.

    Parameters
    ----------
    coherence : CoherenceModel or int
        Coherence model, or the block length in symbols directly.
    csi_mechanism : CsiSpec, optional
        Perfect CSI when omitted.
    algo : str
        Algorithm name used inside each group.
    """
    opts = opts or precode.AlgoOptions()
    partition.check_covers(channels.K)
    L = _coherence(coherence)
    cache = {} if _cache is None else _cache
    for g in partition.groups:
        if g not in cache:
            cache[g] = _group_outcome(channels, g, csi_mechanism, algo, opts)
    return _combine(partition, cache, L)


def best_partition_exhaustive(channels, coherence, csi_mechanism=None, algo="min_leakage", opts=None,
                              return_all=False):
    """Highest-scoring partition.

    Scores within a relative ``TIE_RTOL`` of the best count as ties. Ties go
    to fewer TDMA-fallback groups (an infeasible group of every user is the
    same schedule as all singletons), then fewer groups, then lexicographic
    order.
    """
    parts = enumerate_partitions(channels.K)
    cache = {}
    scores = [score_partition(p, channels, coherence, csi_mechanism, algo, opts, _cache=cache) for p in parts]
    best = _best_lexicographic(scores)
    return (best, scores) if return_all else best


def _best_lexicographic(scores):
    top = max(s.effective_sum_rate for s in scores)
    tied = [s for s in scores if s.effective_sum_rate >= top - TIE_RTOL * abs(top)]
    return min(tied, key=lambda s: (s.n_fallback, s.partition.n_groups, s.partition.groups))


def best_over_coherence(channels, coherences, csi_mechanism=None, algo="min_leakage", opts=None):
    """Exhaustive best partition for several block lengths, sharing the per-group work."""
    parts = enumerate_partitions(channels.K)
    cache = {}
    for p in parts:
        for g in p.groups:
            if g not in cache:
                cache[g] = _group_outcome(channels, g, csi_mechanism, algo, opts or precode.AlgoOptions())
    return [_best_lexicographic([_combine(p, cache, _coherence(L)) for p in parts]) for L in coherences]


# ---------------------------------------------------------------------------
# pathloss-only heuristics


def _proxy_rate(group, gains, config):
    """Expected-rate surrogate from long-term gains only.

    A singleton gets its direct gain spread evenly over min(nt, nr) modes;
    an aligned group gets interference-free streams; an infeasible group
    time-shares its singletons.
    """
    def solo(i):
        n = min(config.nt[i], config.nr[i])
        return n * np.log2(1.0 + config.tx_power[i] * gains[i, i] / (n * config.noise_var))

    if len(group) == 1:
        return solo(group[0])
    sub = config.subnetwork(group)
    if precode.check_feasibility(sub) == "infeasible":
        return float(np.mean([solo(i) for i in group]))
    return float(sum(config.d[i] * np.log2(1.0 + config.tx_power[i] * gains[i, i] / (config.d[i] * config.noise_var))
                     for i in group))


def _group_overhead(group, config, csi):
    if len(group) == 1:
        return 0
    sub = config.subnetwork(group)
    if precode.check_feasibility(sub) == "infeasible":
        return 0
    csi = csi or csimodel.CsiSpec("analog_feedback")
    if csi.mechanism == "perfect":
        return 0
    if csi.mechanism == "reciprocity":
        cost = csi.pilot_cost_per_round if csi.pilot_cost_per_round is not None else 2 * sum(sub.d)
        return csi.rounds * cost
    return csimodel.analog_feedback_overhead(sub, csi.training_reuse)


def proxy_score(partition, gains, coherence, config, csi=None):
    """Pathloss-only counterpart of :func:`score_partition`."""
    L = _coherence(coherence)
    G = partition.n_groups
    return sum(max(0.0, 1.0 - _group_overhead(g, config, csi) / L) * _proxy_rate(g, gains, config)
               for g in partition.groups) / G


def greedy_grouping(pathloss_table, coherence, config, csi=None):
    """Agglomerative grouping driven by long-term pathloss only.

    Starting from singletons, candidate merges are tried in order of
    decreasing coupling (sum of cross gains between the two groups, both
    directions). The first merge that keeps the group feasible and raises
    :func:`proxy_score` is applied; the search stops when none does.
    Uncoupled groups are never merged.
    """
    gains = np.asarray(pathloss_table, dtype=float)
    K = config.K
    groups = [(i,) for i in range(K)]
    current = proxy_score(Partition(tuple(groups)), gains, coherence, config, csi)
    while True:
        candidates = []
        for a in range(len(groups)):
            for b in range(a + 1, len(groups)):
                ga, gb = groups[a], groups[b]
                coupling = gains[np.ix_(ga, gb)].sum() + gains[np.ix_(gb, ga)].sum()
                if coupling > 0:
                    candidates.append((-coupling, ga, gb, a, b))
        candidates.sort(key=lambda c: (c[0], c[1], c[2]))
        merged = False
        for _, ga, gb, a, b in candidates:
            new_group = tuple(sorted(ga + gb))
            if precode.check_feasibility(config.subnetwork(new_group)) == "infeasible":
                continue
            trial = [g for k, g in enumerate(groups) if k not in (a, b)] + [new_group]
            score = proxy_score(Partition(tuple(trial)), gains, coherence, config, csi)
            if score > current:
                groups, current, merged = trial, score, True
                break
        if not merged:
            return Partition(tuple(groups))


def geographic_grouping(positions, group_size_target, seed=0, max_iters=100):
    """Cluster transmit-receive pairs by the midpoint of each pair.

    Uses ``ceil(K / target)`` centroids with a seeded farthest-point start,
    then alternates capacity-limited nearest-centroid assignment and
    centroid updates until the assignment stops changing.
    """
    pos = np.asarray(positions, dtype=float)
    mid = 0.5 * (pos[0] + pos[1])
    K = mid.shape[0]
    target = int(group_size_target)
    if target < 1:
        raise ContractViolation("group_size_target must be >= 1")
    G = -(-K // target)
    rng = np.random.default_rng(seed)
    centers = [mid[rng.integers(K)]]
    while len(centers) < G:
        dist = np.min([np.sum((mid - c) ** 2, axis=1) for c in centers], axis=0)
        centers.append(mid[int(np.argmax(dist))])
    centers = np.array(centers)
    labels = None
    for _ in range(max_iters):
        d2 = np.sum((mid[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new = -np.ones(K, dtype=int)
        load = np.zeros(G, dtype=int)
        # tightest pairs first, each to its nearest centroid with room left
        for flat in np.argsort(d2, axis=None, kind="stable"):
            u, g = divmod(int(flat), G)
            if new[u] < 0 and load[g] < target:
                new[u] = g
                load[g] += 1
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = np.array([mid[labels == g].mean(axis=0) if np.any(labels == g) else centers[g] for g in range(G)])
    return Partition(tuple(tuple(np.flatnonzero(labels == g)) for g in range(G) if np.any(labels == g)))
