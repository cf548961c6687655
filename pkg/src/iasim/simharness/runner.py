"""Deterministic Monte Carlo runner.

Work is split into independent (sweep point, trial) items. Each item draws
its channels from a seed derived only from ``(master seed, sweep index,
trial index)``, so results do not depend on worker count or scheduling.
Aggregation happens afterwards in trial-index order.
"""

import csv
import io
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .. import csimodel, partition, precode
from ..netmodel import generate_channels, pathloss_table
from ..numkit import NumericalFailureError, SingularMatrixError

__all__ = [
    "CSV_HEADER",
    "PARTITION_CSV_HEADER",
    "ResultRow",
    "PartitionRow",
    "trial_seed",
    "run_experiment",
    "run_partition_study",
    "rows_to_csv",
    "partition_rows_to_csv",
    "write_csv",
]

log = logging.getLogger(__name__)

CSV_HEADER = ("sweep_var,sweep_value,algorithm,csi,mean_sum_rate,stderr_sum_rate,mean_eff_throughput,"
              "stderr_eff_throughput,mean_leakage,mean_overhead_symbols,trials,failures")
PARTITION_CSV_HEADER = ("normalized_doppler,coherence_symbols,strategy,modal_partition,modal_structure,"
                        "structure_counts,mean_group_size,mean_best_score,stderr_best_score,trials,failures")

_FAILURES = (NumericalFailureError, SingularMatrixError)


@dataclass
class ResultRow:
    sweep_var: str
    sweep_value: float
    algorithm: str
    csi: str
    mean_sum_rate: float
    stderr_sum_rate: float
    mean_eff_throughput: float
    stderr_eff_throughput: float
    mean_leakage: float
    mean_overhead_symbols: float
    trials: int
    failures: int


@dataclass
class PartitionRow:
    normalized_doppler: float
    coherence_symbols: int
    strategy: str
    modal_partition: str
    modal_structure: str
    structure_counts: str
    mean_group_size: float
    mean_best_score: float
    stderr_best_score: float
    trials: int
    failures: int


def trial_seed(master, sweep_index, trial_index):
    """64-bit seed for one trial, split from the master seed."""
    ss = np.random.SeedSequence(int(master), spawn_key=(int(sweep_index), int(trial_index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _options_for(cfg, algorithm, network, seed):
    base = cfg.algo_options.get(algorithm, cfg.options)
    tol = base.tol
    if cfg.tol_scales_with_power and algorithm == "min_leakage":
        tol *= max(network.tx_power) / network.noise_var
    return replace(base, tol=tol, seed=seed)


def _run_trial(item):
    """One (fixed SNR, sweep point, trial): every algorithm on the same channels."""
    cfg, snr_db, sweep_index, value, trial = item
    seed = trial_seed(cfg.seed, sweep_index, trial)
    doppler = cfg.fading.normalized_doppler
    if cfg.sweep_variable == "snr_db":
        snr_db = value
    else:
        doppler = value
    network = cfg.network.with_snr_db(snr_db)
    L = csimodel.coherence_length(doppler)
    channels = generate_channels(network, cfg.fading, seed)
    out = {}
    for algo in cfg.algorithms:
        try:
            res = csimodel.run_link(channels, algo, _options_for(cfg, algo, network, seed), cfg.csi, seed=seed)
        except _FAILURES as exc:
            log.warning("trial %d at %s=%s: %s failed (%s)", trial, cfg.sweep_variable, value, algo, exc)
            out[algo] = None
            continue
        eff = csimodel.effective_throughput(res.sum_rate, res.overhead_symbols, L)
        out[algo] = (res.sum_rate, eff, res.leakage, res.overhead_symbols)
    return out


def _map(fn, items, workers):
    if workers <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def _mean_stderr(x):
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return float("nan"), float("nan")
    if x.size == 1:
        return float(x[0]), 0.0
    return float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(x.size))


def run_experiment(cfg):
    """Run a sweep and aggregate one :class:`ResultRow` per (point, algorithm)."""
    snr_points = [None] if cfg.sweep_variable == "snr_db" else cfg.snr_points
    items = [(cfg, snr, k, v, t)
             for snr in snr_points
             for k, v in enumerate(cfg.sweep_values)
             for t in range(cfg.trials)]
    results = _map(_run_trial, items, cfg.workers)
    rows = []
    pos = 0
    for snr in snr_points:
        label = cfg.sweep_variable if snr is None else f"{cfg.sweep_variable}|snr_db={_fmt(snr)}"
        for v in cfg.sweep_values:
            block = results[pos:pos + cfg.trials]
            pos += cfg.trials
            for algo in cfg.algorithms:
                ok = [r[algo] for r in block if r[algo] is not None]
                cols = np.array(ok, dtype=float).reshape(-1, 4)
                m_rate, s_rate = _mean_stderr(cols[:, 0])
                m_eff, s_eff = _mean_stderr(cols[:, 1])
                rows.append(ResultRow(
                    sweep_var=label,
                    sweep_value=float(v),
                    algorithm=algo,
                    csi="perfect" if algo == "tdma" else cfg.csi.mechanism,
                    mean_sum_rate=m_rate,
                    stderr_sum_rate=s_rate,
                    mean_eff_throughput=m_eff,
                    stderr_eff_throughput=s_eff,
                    mean_leakage=float(np.mean(cols[:, 2])) if len(ok) else float("nan"),
                    mean_overhead_symbols=float(np.mean(cols[:, 3])) if len(ok) else float("nan"),
                    trials=cfg.trials,
                    failures=cfg.trials - len(ok),
                ))
    return rows


def _structure(p):
    return "+".join(str(s) for s in sorted(p.sizes, reverse=True))


def _partition_trial(item):
    cfg, trial = item
    seed = trial_seed(cfg.seed, 0, trial)
    network = cfg.network.with_snr_db(cfg.snr_points[0])
    channels = generate_channels(network, cfg.fading, seed)
    algo = cfg.algorithms[0]
    opts = _options_for(cfg, algo, network, seed)
    lengths = [csimodel.coherence_length(v) for v in cfg.sweep_values]
    try:
        if cfg.partition_strategy == "exhaustive":
            best = partition.best_over_coherence(channels, lengths, cfg.csi, algo, opts)
            return [(str(b.partition), b.partition.mean_group_size, b.effective_sum_rate, _structure(b.partition))
                    for b in best]
        out = []
        cache = {}
        gains = pathloss_table(network)
        for L in lengths:
            if cfg.partition_strategy == "greedy":
                p = partition.greedy_grouping(gains, L, network, cfg.csi)
            else:
                if network.positions is None:
                    raise ValueError("geographic grouping needs network.positions")
                p = partition.geographic_grouping(network.positions, cfg.group_size_target or network.K, seed=cfg.seed)
            s = partition.score_partition(p, channels, L, cfg.csi, algo, opts, _cache=cache)
            out.append((str(p), p.mean_group_size, s.effective_sum_rate, _structure(p)))
        return out
    except _FAILURES as exc:
        log.warning("partition trial %d failed (%s)", trial, exc)
        return None


def run_partition_study(cfg):
    """Best partition per Doppler value over paired channel draws.

    Every trial draws one channel realization and scores it at all Doppler
    values, so the sweep compares schedules on identical channels.
    """
    results = _map(_partition_trial, [(cfg, t) for t in range(cfg.trials)], cfg.workers)
    ok = [r for r in results if r is not None]
    rows = []
    for k, v in enumerate(cfg.sweep_values):
        picks = [r[k] for r in ok]
        names = Counter(p[0] for p in picks)
        structs = Counter(p[3] for p in picks)
        m_score, s_score = _mean_stderr([p[2] for p in picks])
        modal = min(names.items(), key=lambda kv: (-kv[1], kv[0]))[0] if picks else ""
        modal_struct = min(structs.items(), key=lambda kv: (-kv[1], kv[0]))[0] if picks else ""
        counts = ";".join(f"{s}:{n}" for s, n in sorted(structs.items(), key=lambda kv: (-kv[1], kv[0])))
        rows.append(PartitionRow(
            normalized_doppler=float(v),
            coherence_symbols=csimodel.coherence_length(v),
            strategy=cfg.partition_strategy,
            modal_partition=modal,
            modal_structure=modal_struct,
            structure_counts=counts,
            mean_group_size=float(np.mean([p[1] for p in picks])) if picks else float("nan"),
            mean_best_score=m_score,
            stderr_best_score=s_score,
            trials=cfg.trials,
            failures=cfg.trials - len(ok),
        ))
    return rows


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _to_csv(header, rows):
    buf = io.StringIO()
    buf.write(header + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    for r in rows:
        writer.writerow([_fmt(v) for v in r.__dict__.values()])
    return buf.getvalue()


def rows_to_csv(rows):
    return _to_csv(CSV_HEADER, rows)


def partition_rows_to_csv(rows):
    return _to_csv(PARTITION_CSV_HEADER, rows)


def write_csv(text, path):
    with open(path, "w", newline="") as fh:
        fh.write(text)
