"""Self-check suite behind the ``validate`` subcommand.

Every module's oracle and invariant checks at reduced sample counts. The
suite is deterministic: two runs produce the same report.

A mutation hook lets the suite check itself. ``mutation="leakage_sign"``
flips the subspace choice of the leakage iteration (most-interfered
directions instead of least), which must make the monotonicity check fail.
"""

import contextlib
import tempfile
from dataclasses import dataclass
from pathlib import Path
from unittest import mock

import numpy as np

from .. import csimodel, numkit, partition, precode
from ..netmodel import NetworkConfig, generate_channels, pathloss_table
from .config import parse_config
from .runner import rows_to_csv, run_experiment

__all__ = ["CheckResult", "ValidationReport", "validate_suite", "MUTATIONS"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def text(self):
        lines = [c.line() for c in self.checks]
        n_ok = sum(c.passed for c in self.checks)
        lines.append(f"{n_ok}/{len(self.checks)} checks passed")
        return "\n".join(lines)


def _rng(tag):
    return np.random.default_rng(np.random.SeedSequence(20120, spawn_key=(tag,)))


def _crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _check_numkit(n):
    rng = _rng(1)
    worst = {"hermitian_eig": 0.0, "orthonormalize": 0.0, "solve": 0.0, "svd": 0.0}
    for _ in range(n):
        m = int(rng.integers(1, 7))
        X = _crandn(rng, m, m)
        A = X + X.conj().T
        lam, V = numkit.hermitian_eig(A)
        r = np.linalg.norm(A @ V - V * lam) / (1e-9 * max(1.0, np.linalg.norm(A)))
        r = max(r, np.abs(V.conj().T @ V - np.eye(m)).max() / 1e-10)
        if np.any(np.diff(lam) < 0):
            r = np.inf
        worst["hermitian_eig"] = max(worst["hermitian_eig"], r)

        d = int(rng.integers(1, m + 1))
        B = _crandn(rng, m + 1, d)
        Q = numkit.orthonormalize(B, d)
        worst["orthonormalize"] = max(worst["orthonormalize"], np.abs(Q.conj().T @ Q - np.eye(d)).max() / 1e-10)

        M = _crandn(rng, m, m) + m * np.eye(m)
        y = _crandn(rng, m, 2)
        x = numkit.solve(M, y)
        worst["solve"] = max(worst["solve"], np.linalg.norm(M @ x - y) / (1e-8 * max(1.0, np.linalg.norm(y))))

        p, q = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        S = _crandn(rng, p, q)
        U, s, Vh = numkit.svd(S)
        k = s.size
        r = np.linalg.norm(S - (U[:, :k] * s) @ Vh[:, :k].conj().T) / (1e-9 * max(np.linalg.norm(S), 1e-300))
        r = max(r, np.abs(U.conj().T @ U - np.eye(U.shape[1])).max() / 1e-10,
                np.abs(Vh.conj().T @ Vh - np.eye(Vh.shape[1])).max() / 1e-10)
        if np.any(np.diff(s) > 0) or np.any(s < 0):
            r = np.inf
        worst["svd"] = max(worst["svd"], r)
    for name, r in worst.items():
        yield CheckResult(f"numkit.{name} residual", bool(r <= 1.0), f"{n} inputs, worst residual/bound = {r:.3g}")


def _monotone(trace, increasing=False, slack=0.0):
    t = np.asarray(trace)
    steps = np.diff(t)
    if increasing:
        steps = -steps
    return bool(np.all(steps <= slack))


def _check_leakage_monotone(n):
    bad = []
    for seed in range(n):
        net = NetworkConfig.symmetric(3, 2, 2, 1, snr_db=20)
        ch = generate_channels(net, seed=seed)
        _, _, trace = precode.min_leakage(ch, precode.AlgoOptions(max_iters=200, tol=1e-12, seed=seed))
        if not _monotone(trace, slack=1e-12 * max(trace[0], 1.0)):
            bad.append(seed)
    yield CheckResult("min_leakage trace non-increasing", not bad,
                      f"{n - len(bad)}/{n} seeds monotone" + (f", first failure seed {bad[0]}" if bad else ""))


def _check_wmmse(n):
    bad = []
    for seed in range(n):
        net = NetworkConfig.symmetric(3, 2, 2, 1, snr_db=10)
        ch = generate_channels(net, seed=seed)
        _, _, trace = precode.wmmse_sum_rate(ch, precode.AlgoOptions(max_iters=100, tol=1e-10, seed=seed))
        if not _monotone(trace, increasing=True, slack=1e-9):
            bad.append(seed)
    yield CheckResult("wmmse rate trace non-decreasing (1e-9)", not bad, f"{n - len(bad)}/{n} seeds monotone")

    worst = 0.0
    for seed in range(n):
        net = NetworkConfig.symmetric(1, 3, 2, 2, snr_db=float(5 * (seed % 5)))
        ch = generate_channels(net, seed=seed)
        _, _, trace = precode.wmmse_sum_rate(ch, precode.AlgoOptions(max_iters=2000, tol=1e-13, seed=seed))
        cap, _ = precode.waterfill(ch.get(0, 0), net.tx_power[0], net.noise_var)
        worst = max(worst, abs(trace[-1] - cap))
    yield CheckResult("wmmse K=1 matches waterfilling", worst <= 1e-6, f"max gap {worst:.3g} bits over {n} seeds")


def _check_reciprocity(n):
    bad = []
    for seed in range(n):
        net = NetworkConfig.symmetric(3, 2, 2, 1, snr_db=20)
        ch = generate_channels(net, seed=seed)
        opts = precode.AlgoOptions(max_iters=50, tol=1e-300, seed=seed)
        F1, W1, t1 = precode.min_leakage(ch, opts)
        F2, W2, _, t2 = csimodel.run_reciprocity_loop(ch, opts, pilot_cost_per_round=0, rounds=len(t1))
        same = t1 == t2 and all(np.array_equal(a, b) for a, b in zip(F1 + W1, F2 + W2))
        if not same:
            bad.append(seed)
    yield CheckResult("noiseless reciprocity loop equals min_leakage", not bad,
                      f"{n - len(bad)}/{n} seeds bit-identical")


def _check_bell():
    got = {K: len(partition.enumerate_partitions(K)) for K in (1, 3, 6)}
    ok = got == {1: 1, 3: 5, 6: 203} and all(partition.bell_number(K) == v for K, v in got.items())
    yield CheckResult("partition enumeration counts", ok, f"K=1,3,6 -> {got[1]}, {got[3]}, {got[6]}")


def _check_greedy(n):
    bad = []
    for seed in range(n):
        rng = _rng(100 + seed)
        tx = rng.uniform(0, 10, size=(6, 2))
        rx = tx + rng.uniform(-1.5, 1.5, size=(6, 2))
        net = NetworkConfig(K=6, nt=2, nr=2, d=1, tx_power=100.0, positions=np.stack([tx, rx]),
                            pathloss_exponent=3.0, reference_distance=1.0)
        ch = generate_channels(net, seed=seed)
        opts = precode.AlgoOptions(max_iters=200, tol=1e-6, seed=seed)
        L = csimodel.coherence_length(1e-3)
        csi = csimodel.CsiSpec("analog_feedback")
        cache = {}
        best = partition.best_partition_exhaustive(ch, L, csi, "min_leakage", opts)
        greedy = partition.greedy_grouping(pathloss_table(net), L, net, csi)
        g = partition.score_partition(greedy, ch, L, csi, "min_leakage", opts, _cache=cache)
        if g.effective_sum_rate > best.effective_sum_rate:
            bad.append(seed)
    yield CheckResult("greedy never beats exhaustive", not bad, f"{n - len(bad)}/{n} K=6 instances")


_DET_CONFIG = {
    "schema_version": 1,
    "network": {"K": 3, "nt": 2, "nr": 2, "d": 1},
    "algorithm": ["min_leakage", "tdma"],
    "options": {"max_iters": 100, "tol": 1e-8},
    "sweep": {"variable": "snr_db", "values": [0, 20]},
    "trials": 4,
    "seed": 7,
}


def _check_csv_determinism():
    cfg = parse_config(_DET_CONFIG)
    one = rows_to_csv(run_experiment(cfg.with_overrides(workers=1)))
    again = rows_to_csv(run_experiment(cfg.with_overrides(workers=1)))
    two = rows_to_csv(run_experiment(cfg.with_overrides(workers=2)))
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "a.csv"
        path.write_text(one)
        disk_ok = path.read_text() == one
    ok = one == again == two and disk_ok
    yield CheckResult("CSV determinism across runs and worker counts", ok, "workers 1 vs 2, repeated run")


def _most_eigvecs(Q, d):
    _, V = numkit.hermitian_eig(0.5 * (Q + Q.conj().T))
    return V[:, ::-1][:, :d]


def _stacked_most_eigvecs(Q, d):
    _, V = np.linalg.eigh(0.5 * (Q + np.conj(np.swapaxes(Q, -1, -2))))
    return V[..., ::-1][..., :d]


MUTATIONS = {
    "leakage_sign": (("_least_eigvecs", _most_eigvecs), ("_stacked_least_eigvecs", _stacked_most_eigvecs)),
}


def validate_suite(mutation=None, scale=1.0):
    """Run every check and return a :class:`ValidationReport`.

    Parameters
    ----------
    mutation : str, optional
        Name in :data:`MUTATIONS`; the suite runs against the mutated code.
    scale : float
        Multiplier on the per-check sample counts (minimum one sample).
    """
    if mutation is not None and mutation not in MUTATIONS:
        raise ValueError(f"unknown mutation {mutation!r}; choose from {sorted(MUTATIONS)}")

    def n(base):
        return max(1, int(round(base * scale)))

    with contextlib.ExitStack() as stack:
        for attr, fn in MUTATIONS.get(mutation, ()):
            stack.enter_context(mock.patch.object(precode, attr, fn))
        checks = []
        for group in (_check_numkit(n(200)), _check_leakage_monotone(n(100)), _check_wmmse(n(20)),
                      _check_reciprocity(n(20)), _check_bell(), _check_greedy(n(50)), _check_csv_determinism()):
            checks.extend(group)
    return ValidationReport(tuple(checks))
