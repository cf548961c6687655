"""Experiment configuration: YAML schema, validation and shipped presets.

A config is a YAML mapping with ``schema_version: 1``. Every key is
checked; unknown keys and bad values raise :class:`ConfigError` naming the
offending field path (``network.nt``, ``sweep.values[2]``, ...).
"""

import copy
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from .. import precode
from ..csimodel import CsiSpec
from ..netmodel import FadingProcess, NetworkConfig, derive_connectivity
from ..numkit import ContractViolation

__all__ = ["ConfigError", "ExperimentConfig", "PRESETS", "load_config", "parse_config", "preset"]

SCHEMA_VERSION = 1
SWEEP_VARIABLES = ("snr_db", "normalized_doppler")
PARTITION_STRATEGIES = ("exhaustive", "greedy", "geographic")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


_NETWORK_KEYS = {"K", "nt", "nr", "d", "noise_var", "positions", "pathloss_exponent",
                 "reference_distance", "connectivity_threshold_db"}
_FADING_KEYS = {"model", "tx_corr", "rx_corr", "normalized_doppler"}
_OPTION_KEYS = {"max_iters", "tol", "seed", "tol_scales_with_power", "per_algorithm"}
_OVERRIDE_KEYS = {"max_iters", "tol"}
_CSI_KEYS = {"mechanism", "forward_snr_db", "reverse_snr_db", "training_reuse", "rounds",
             "pilot_cost_per_round", "pilot_snr_db"}
_SWEEP_KEYS = {"variable", "values"}
_PARTITION_KEYS = {"strategy", "group_size_target"}
_TOP_KEYS = {"schema_version", "name", "network", "fading", "algorithm", "options", "csi", "sweep",
             "snr_db", "trials", "seed", "output_path", "workers", "partition"}


@dataclass
class ExperimentConfig:
    network: NetworkConfig
    fading: FadingProcess
    algorithms: list
    options: precode.AlgoOptions
    csi: CsiSpec
    sweep_variable: str
    sweep_values: list
    snr_points: list
    trials: int
    seed: int
    output_path: str = None
    workers: int = 1
    name: str = "experiment"
    tol_scales_with_power: bool = False
    partition_strategy: str = "exhaustive"
    group_size_target: int = None
    algo_options: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    def with_overrides(self, seed=None, trials=None, workers=None, output_path=None):
        out = copy.copy(self)
        if seed is not None:
            out.seed = int(seed)
        if trials is not None:
            if int(trials) < 1:
                raise ConfigError("trials: must be >= 1")
            out.trials = int(trials)
        if workers is not None:
            if int(workers) < 1:
                raise ConfigError("workers: must be >= 1")
            out.workers = int(workers)
        if output_path is not None:
            out.output_path = str(output_path)
        return out


def _check_keys(data, allowed, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected a mapping")
    unknown = sorted(set(data) - allowed)
    if unknown:
        where = f"{path}." if path else ""
        raise ConfigError(f"{where}{unknown[0]}: unknown key")


def _number(value, path, kind=float, minimum=None, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if kind is int and int(value) != value:
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    value = kind(value)
    if positive and not value > 0:
        raise ConfigError(f"{path}: must be positive")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}")
    return value


def _db(value):
    return np.inf if value in (None, "inf") else 10.0 ** (float(value) / 10.0)


def _number_list(value, path):
    if np.isscalar(value) and not isinstance(value, str):
        value = [value]
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{path}: expected a non-empty list of numbers")
    return [_number(v, f"{path}[{k}]") for k, v in enumerate(value)]


def parse_config(data):
    """Validate a config mapping and build an :class:`ExperimentConfig`."""
    _check_keys(data, _TOP_KEYS, "")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: must be {SCHEMA_VERSION}, got {data.get('schema_version')!r}")
    for key in ("network", "sweep", "trials"):
        if key not in data:
            raise ConfigError(f"{key}: required")

    net = dict(data["network"] or {})
    _check_keys(net, _NETWORK_KEYS, "network")
    threshold = net.pop("connectivity_threshold_db", None)
    if "K" not in net:
        raise ConfigError("network.K: required")
    try:
        network = NetworkConfig(**net)
        if threshold is not None:
            network = NetworkConfig(**{**net, "connectivity_mask": derive_connectivity(network, threshold)})
    except (ContractViolation, TypeError) as exc:
        raise ConfigError(f"network: {exc}") from None

    fad = dict(data.get("fading") or {})
    _check_keys(fad, _FADING_KEYS, "fading")
    try:
        fading = FadingProcess(**fad)
        fading.correlation_roots(network.nr[0], network.nt[0])
    except (ContractViolation, TypeError) as exc:
        raise ConfigError(f"fading: {exc}") from None

    algos = data.get("algorithm", "min_leakage")
    algos = [algos] if isinstance(algos, str) else algos
    if not isinstance(algos, list) or not algos:
        raise ConfigError("algorithm: expected a name or a list of names")
    for k, a in enumerate(algos):
        if a not in precode.ALGORITHMS:
            raise ConfigError(f"algorithm[{k}]: unknown algorithm {a!r}; choose from {list(precode.ALGORITHMS)}")
        if a == "closed_form_ia" and not (network.K == 3 and network.fully_connected and all(
                t == r == 2 * d == 2 * network.d[0] for t, r, d in zip(network.nt, network.nr, network.d))):
            raise ConfigError(f"algorithm[{k}]: closed_form_ia needs K=3, full connectivity and nt = nr = 2d")

    opt = dict(data.get("options") or {})
    _check_keys(opt, _OPTION_KEYS, "options")
    scales = bool(opt.pop("tol_scales_with_power", False))
    try:
        options = precode.AlgoOptions(
            max_iters=_number(opt.get("max_iters", 1000), "options.max_iters", int, minimum=1),
            tol=_number(opt.get("tol", 1e-10), "options.tol", positive=True),
            seed=_number(opt.get("seed", 0), "options.seed", int, minimum=0),
        )
    except ContractViolation as exc:
        raise ConfigError(f"options: {exc}") from None
    per_algo = opt.get("per_algorithm") or {}
    _check_keys(per_algo, set(precode.ALGORITHMS), "options.per_algorithm")
    algo_options = {}
    for name, ov in per_algo.items():
        path = f"options.per_algorithm.{name}"
        _check_keys(ov, _OVERRIDE_KEYS, path)
        algo_options[name] = replace(
            options,
            max_iters=_number(ov.get("max_iters", options.max_iters), f"{path}.max_iters", int, minimum=1),
            tol=_number(ov.get("tol", options.tol), f"{path}.tol", positive=True),
        )

    cs = dict(data.get("csi") or {})
    _check_keys(cs, _CSI_KEYS, "csi")
    try:
        csi = CsiSpec(
            mechanism=cs.get("mechanism", "perfect"),
            forward_snr=None if "forward_snr_db" not in cs else _db(cs["forward_snr_db"]),
            reverse_snr=None if "reverse_snr_db" not in cs else _db(cs["reverse_snr_db"]),
            training_reuse=_number(cs.get("training_reuse", 1), "csi.training_reuse", int, minimum=1),
            rounds=_number(cs.get("rounds", 100), "csi.rounds", int, minimum=0),
            pilot_cost_per_round=None if cs.get("pilot_cost_per_round") is None
            else _number(cs["pilot_cost_per_round"], "csi.pilot_cost_per_round", int, minimum=0),
            pilot_snr=_db(cs.get("pilot_snr_db")),
        )
    except ContractViolation as exc:
        raise ConfigError(f"csi.mechanism: {exc}") from None

    sw = data["sweep"]
    _check_keys(sw, _SWEEP_KEYS, "sweep")
    if sw.get("variable") not in SWEEP_VARIABLES:
        raise ConfigError(f"sweep.variable: must be one of {list(SWEEP_VARIABLES)}")
    values = _number_list(sw.get("values"), "sweep.values")
    if values != sorted(values):
        raise ConfigError("sweep.values: must be sorted ascending")
    if sw["variable"] == "normalized_doppler":
        for k, v in enumerate(values):
            if not 0.0 <= v < 0.5:
                raise ConfigError(f"sweep.values[{k}]: normalized Doppler must lie in [0, 0.5)")
    snr_points = _number_list(data.get("snr_db", 0.0), "snr_db")

    part = dict(data.get("partition") or {})
    _check_keys(part, _PARTITION_KEYS, "partition")
    strategy = part.get("strategy", "exhaustive")
    if strategy not in PARTITION_STRATEGIES:
        raise ConfigError(f"partition.strategy: must be one of {list(PARTITION_STRATEGIES)}")
    target = part.get("group_size_target")
    if target is not None:
        target = _number(target, "partition.group_size_target", int, minimum=1)

    return ExperimentConfig(
        network=network,
        fading=fading,
        algorithms=list(algos),
        options=options,
        csi=csi,
        sweep_variable=sw["variable"],
        sweep_values=values,
        snr_points=snr_points,
        trials=_number(data["trials"], "trials", int, minimum=1),
        seed=_number(data.get("seed", 0), "seed", int, minimum=0),
        output_path=data.get("output_path"),
        workers=_number(data.get("workers", 1), "workers", int, minimum=1),
        name=str(data.get("name", "experiment")),
        tol_scales_with_power=scales,
        partition_strategy=strategy,
        group_size_target=target,
        algo_options=algo_options,
        raw=copy.deepcopy(data),
    )


def load_config(source):
    """Load a config from a YAML file path, or a preset name."""
    if isinstance(source, str) and source in PRESETS and not Path(source).exists():
        return preset(source)
    path = Path(source)
    if not path.exists():
        raise ConfigError(f"{source}: no such config file or preset (presets: {sorted(PRESETS)})")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: not valid YAML ({exc})") from None
    return parse_config(data)


_FIG4_BASE = {
    "schema_version": 1,
    "network": {"K": 3, "nt": 2, "nr": 2, "d": 1},
    "algorithm": ["min_leakage", "closed_form_ia", "max_sinr", "wmmse", "tdma"],
    "options": {"max_iters": 5000, "tol": 1e-12, "tol_scales_with_power": True,
                "per_algorithm": {"wmmse": {"max_iters": 500, "tol": 1e-6}, "max_sinr": {"tol": 1e-8}}},
    "csi": {"mechanism": "perfect"},
    "sweep": {"variable": "snr_db", "values": [0, 5, 10, 15, 20, 25, 30, 35, 40]},
    "trials": 500,
    "seed": 2012,
}

PRESETS = {
    "fig4_iid": {**_FIG4_BASE, "name": "fig4_iid", "fading": {"model": "iid_rayleigh"}},
    "fig4_correlated": {
        **_FIG4_BASE,
        "name": "fig4_correlated",
        "fading": {"model": "kronecker_correlated", "tx_corr": 0.7, "rx_corr": 0.7},
    },
    "fig5_overhead": {
        "schema_version": 1,
        "name": "fig5_overhead",
        "network": {"K": 5, "nt": 3, "nr": 3, "d": 1},
        "fading": {"model": "iid_rayleigh"},
        "algorithm": ["min_leakage", "tdma"],
        "options": {"max_iters": 2000, "tol": 1e-10, "tol_scales_with_power": True},
        "csi": {"mechanism": "analog_feedback", "training_reuse": 1},
        "sweep": {"variable": "normalized_doppler", "values": [1e-4, 1e-3, 1e-2]},
        "snr_db": [0, 10, 20, 30],
        "trials": 100,
        "seed": 2012,
    },
    "fig6_partition": {
        "schema_version": 1,
        "name": "fig6_partition",
        "network": {"K": 6, "nt": 2, "nr": 5, "d": 1},
        "fading": {"model": "iid_rayleigh"},
        "algorithm": "min_leakage",
        "options": {"max_iters": 1000, "tol": 1e-10, "tol_scales_with_power": True},
        "csi": {"mechanism": "analog_feedback", "forward_snr_db": 40, "reverse_snr_db": 40},
        "sweep": {"variable": "normalized_doppler",
                  "values": [0.0, 1e-4, 3e-4, 5e-4, 6e-4, 7e-4, 8e-4, 1e-3, 1e-2]},
        "snr_db": 30,
        "trials": 30,
        "seed": 2012,
        "partition": {"strategy": "exhaustive"},
    },
}


def preset(name):
    try:
        data = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return parse_config(copy.deepcopy(data))
