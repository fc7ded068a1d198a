"""Seeded multi-trial experiment runner and CSV/JSON emission."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import yaml

from . import __version__
from .errors import ConfigError, DifAltGDError
from .metrics import CommModel, format_value, write_trace_csv
from .solvers import EtaRule, SigmaEstimate, SolverConfig, run_solver
from .spectral_init import InitConfig, spectral_initialization
from .synth import generate_problem, sample_split
from .topology import MixingScheme, build_network

__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "PRESETS",
    "preset",
    "derive_seed",
    "load_config",
    "run_trial",
    "run_experiment",
    "aggregate_by_iteration",
    "aggregate_by_time",
]

log = logging.getLogger(__name__)

ALL_ALGORITHMS = ("central", "dif", "dec", "dgd")

# config-file section -> fields it may set
_SECTIONS = {
    "problem": ("d", "T", "r", "n", "kappa", "sigma_profile"),
    "network": ("L", "p", "scheme", "network_seed"),
    "solver": (
        "algorithms", "T_GD", "T_con_GD", "T_con_init", "T_pm", "eta_rule", "eta_constant",
        "sigma_estimate", "use_sample_split", "centralized_init", "broadcast_every_round",
        "kappa_hint", "mu_hint",
    ),
    "comm": ("latency_s", "bandwidth_bps", "jitter_low", "jitter_high", "parallel_links"),
    "run": ("trials", "base_seed", "out_dir", "workers", "time_bucket_s", "name"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "custom"
    # problem
    d: int = 40
    T: int = 40
    r: int = 2
    n: int = 20
    kappa: float = 1.0
    sigma_profile: str = "geometric"
    # network
    L: int = 4
    p: float = 0.5
    scheme: str = "metropolis"
    network_seed: Optional[int] = None
    # solvers
    algorithms: tuple = ALL_ALGORITHMS
    T_GD: int = 50
    T_con_GD: int = 10
    T_con_init: int = 10
    T_pm: int = 100
    eta_rule: str = "estimated"
    eta_constant: float = 0.4
    sigma_estimate: str = "network"
    use_sample_split: bool = False
    centralized_init: str = "shared"
    broadcast_every_round: bool = True
    kappa_hint: Optional[float] = None
    mu_hint: Optional[float] = None
    # communication
    latency_s: float = 50e-3
    bandwidth_bps: float = 1e9
    jitter_low: float = 0.0
    jitter_high: float = 1e-3
    parallel_links: bool = True
    # run
    trials: int = 2
    base_seed: int = 0
    out_dir: str = "results"
    workers: int = 1
    time_bucket_s: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        self.validate()

    def validate(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        unknown = [a for a in self.algorithms if a not in ALL_ALGORITHMS]
        if unknown or not self.algorithms:
            raise ConfigError(f"unknown algorithms {unknown}; choose from {list(ALL_ALGORITHMS)}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.time_bucket_s <= 0:
            raise ConfigError("time_bucket_s must be positive")
        try:
            MixingScheme(self.scheme)
            EtaRule(self.eta_rule)
            SigmaEstimate(self.sigma_estimate)
            self.solver_config("dif")
            self.comm_model()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not (1 <= self.r <= min(self.d, self.T)):
            raise ConfigError(f"rank r={self.r} must be in [1, min(d, T)]")
        if self.T < self.L:
            raise ConfigError(f"T={self.T} tasks cannot cover L={self.L} nodes")
        if self.use_sample_split and self.n % (2 * max(self.T_GD, 1) + 2):
            raise ConfigError(f"n={self.n} not divisible by 2*T_GD+2 for sample splitting")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def init_config(self, shared_seed=0):
        return InitConfig(
            T_pm=self.T_pm, T_con_init=self.T_con_init, kappa_hint=self.kappa_hint,
            mu_hint=self.mu_hint, shared_seed=shared_seed,
            broadcast_every_round=self.broadcast_every_round,
        )

    def solver_config(self, algorithm, shared_seed=0):
        return SolverConfig(
            algorithm=algorithm, T_GD=self.T_GD, T_con_GD=self.T_con_GD, eta_rule=self.eta_rule,
            eta_constant=self.eta_constant, sigma_estimate=self.sigma_estimate,
            use_sample_split=self.use_sample_split, centralized_init=self.centralized_init,
            init_config=self.init_config(shared_seed),
        )

    def comm_model(self):
        return CommModel(
            latency_s=self.latency_s, bandwidth_bps=self.bandwidth_bps,
            jitter_low=self.jitter_low, jitter_high=self.jitter_high,
            parallel_links=self.parallel_links,
        )

    def to_dict(self):
        out = dataclasses.asdict(self)
        out["algorithms"] = list(self.algorithms)
        return out

    @classmethod
    def from_dict(cls, raw, base=None):
        """Build from a flat or sectioned mapping, overriding ``base``."""
        base = base or cls()
        flat = {}
        names = {f.name for f in dataclasses.fields(cls)}
        for key, value in (raw or {}).items():
            if key in _SECTIONS and isinstance(value, dict):
                for sub, v in value.items():
                    if sub not in _SECTIONS[key]:
                        raise ConfigError(f"unknown key {key}.{sub}")
                    flat[sub] = v
            elif key == "preset":
                continue
            elif key in names:
                flat[key] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
        try:
            return dataclasses.replace(base, **flat)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


# Condition number of the figure presets; the experiments leave it open.
FIGURE_KAPPA = 1.6


def _fig1(tcon):
    return dict(kappa=FIGURE_KAPPA, d=600, T=600, r=4, n=30, L=20, p=0.5, T_GD=500, T_con_GD=tcon, T_con_init=tcon, trials=100)


def _fig2(p):
    return dict(
        kappa=FIGURE_KAPPA, d=100, T=100, r=10, n=50, L=100, p=p, T_GD=1500, T_con_GD=10, T_con_init=10,
        trials=100, algorithms=("central", "dif", "dec"),
    )


_PRESET_FIELDS = {
    "fig1a": _fig1(10),
    "fig1b": _fig1(20),
    "fig1c": _fig1(30),
    "fig2a": _fig2(0.05),
    "fig2b": _fig2(0.1),
    "fig2c": _fig2(0.15),
    "fig1a-desk": dict(kappa=FIGURE_KAPPA, d=120, T=120, r=4, n=30, L=10, p=0.5, T_GD=300, T_con_GD=10, T_con_init=10, trials=20),
    "fig2a-desk": dict(
        kappa=FIGURE_KAPPA, d=60, T=60, r=5, n=40, L=60, p=0.1, T_GD=300, T_con_GD=10, T_con_init=10, trials=20,
        algorithms=("central", "dif", "dec"),
    ),
    "smoke": dict(d=40, T=40, r=2, n=20, L=4, p=0.5, T_GD=50, T_con_GD=10, T_con_init=10, T_pm=50, trials=2),
}

PRESETS = tuple(_PRESET_FIELDS)
LONG_RUNNING = ("fig1a", "fig1b", "fig1c", "fig2a", "fig2b", "fig2c")


def preset(name):
    if name not in _PRESET_FIELDS:
        raise ConfigError(f"unknown preset {name!r}; valid presets: {', '.join(PRESETS)}")
    return ExperimentConfig(name=name, **_PRESET_FIELDS[name])


def load_config(path, base=None):
    """Read a YAML config file; a top-level ``preset`` key selects the base."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    if "preset" in raw:
        base = preset(raw["preset"])
    return ExperimentConfig.from_dict(raw, base)


def derive_seed(base_seed, *keys):
    """Stable 32-bit seed from ``base_seed`` and integer keys (numpy SeedSequence hashing)."""
    return int(np.random.SeedSequence([int(base_seed), *map(int, keys)]).generate_state(1)[0])


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    traces: Dict[int, Dict[str, object]] = field(default_factory=dict)
    trial_meta: List[dict] = field(default_factory=list)
    failures: List[dict] = field(default_factory=list)
    paths: Dict[str, str] = field(default_factory=dict)


def run_trial(config, trial):
    """Run every configured algorithm on one seeded problem/network draw."""
    trial_seed = derive_seed(config.base_seed, trial)
    problem_seed = derive_seed(trial_seed, 1)
    net_seed = config.network_seed if config.network_seed is not None else derive_seed(trial_seed, 2)
    shared_seed = derive_seed(trial_seed, 3)
    problem = generate_problem(
        config.d, config.T, config.r, config.n, config.kappa, problem_seed, config.sigma_profile,
    )
    if config.use_sample_split:
        problem = sample_split(problem, max(config.T_GD, 1))
    network = build_network(config.L, config.p, config.T, config.scheme, net_seed)
    init = spectral_initialization(problem, network, config.init_config(shared_seed))
    traces = {}
    for k, alg in enumerate(config.algorithms):
        cfg = config.solver_config(alg, shared_seed)
        comm_seed = derive_seed(trial_seed, 4, k)
        traces[alg] = run_solver(problem, network, cfg, comm_seed, init, config.comm_model())
    meta = {
        "trial": trial,
        "trial_seed": trial_seed,
        "problem_seed": problem_seed,
        "network_seed": net_seed,
        "shared_seed": shared_seed,
        "gamma": network.gamma,
        "num_edges": network.num_edges,
        "er_retries": network.retries,
        "kappa": problem.kappa,
        "mu_measured": problem.mu_measured,
        "init_sigma_sq_hat": init.sigma_sq_hat.tolist(),
        "eta": {alg: tr.metadata["eta"] for alg, tr in traces.items()},
        "final_theta_rel_err_max": {
            alg: (None if tr.theta_rel_err is None else float(tr.theta_rel_err.max()))
            for alg, tr in traces.items()
        },
    }
    return trial, traces, meta


def _safe_trial(args):
    config, trial = args
    try:
        return run_trial(config, trial), None
    except DifAltGDError as exc:
        return None, {"trial": trial, "error": type(exc).__name__, "message": str(exc)}


AGG_COLUMNS = [
    "algorithm", "tau", "trials", "sd_node1_mean", "sd_max_mean", "sd_mean_mean",
    "rho_mean", "psi_mean", "messages_cum_mean", "bytes_cum_mean", "sim_time_s_mean",
]

TIME_COLUMNS = ["algorithm", "time_s", "trials", "sd_node1_mean", "sd_max_mean"]


def aggregate_by_iteration(traces, algorithms):
    """Across-trial means per ``(algorithm, tau)``."""
    rows = []
    for alg in algorithms:
        runs = [t[alg] for t in traces.values()]
        if not runs:
            continue
        for i in range(len(runs[0].rows)):
            rs = [tr.rows[i] for tr in runs]
            row = {"algorithm": alg, "tau": rs[0]["tau"], "trials": len(rs)}
            for col in ("sd_node1", "sd_max", "sd_mean", "rho", "psi", "messages_cum", "bytes_cum", "sim_time_s"):
                row[f"{col}_mean"] = float(np.mean([r[col] for r in rs]))
            rows.append(row)
    return rows


def aggregate_by_time(traces, algorithms, bucket_s):
    """Across-trial means of SD sampled at fixed simulated-time bucket ends.

    Each trace contributes the value of its last row at or before the bucket
    end; traces that have not started by then are skipped.
    """
    rows = []
    for alg in algorithms:
        runs = [t[alg] for t in traces.values()]
        if not runs:
            continue
        times = [tr.column("sim_time_s") for tr in runs]
        sd1 = [tr.column("sd_node1") for tr in runs]
        sdm = [tr.column("sd_max") for tr in runs]
        horizon = max(t[-1] for t in times)
        nb = int(np.ceil(horizon / bucket_s)) + 1
        for b in range(nb):
            end = b * bucket_s
            v1, vm = [], []
            for t, a, m in zip(times, sd1, sdm):
                idx = np.searchsorted(t, end, side="right") - 1
                if idx >= 0:
                    v1.append(a[idx])
                    vm.append(m[idx])
            if v1:
                rows.append({
                    "algorithm": alg, "time_s": end, "trials": len(v1),
                    "sd_node1_mean": float(np.mean(v1)), "sd_max_mean": float(np.mean(vm)),
                })
    return rows


def _write_rows(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(row[c]) for c in columns])


def run_experiment(config, write=True):
    """Run all trials, aggregate and (optionally) write outputs to ``config.out_dir``.

    Output files: ``trials.csv`` (raw rows), ``aggregate.csv`` (per iteration),
    ``aggregate_time.csv`` (per simulated-time bucket) and ``metadata.json``.
    """
    jobs = [(config, i) for i in range(config.trials)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(_safe_trial, jobs))
    else:
        outcomes = [_safe_trial(job) for job in jobs]

    result = ExperimentResult(config=config)
    for ok, failure in outcomes:
        if failure is not None:
            log.warning("trial %(trial)s failed: %(error)s: %(message)s", failure)
            result.failures.append(failure)
            continue
        trial, traces, meta = ok
        result.traces[trial] = traces
        result.trial_meta.append(meta)

    if write:
        _write_outputs(result)
    return result


def _write_outputs(result):
    config = result.config
    out = config.out_dir
    try:
        os.makedirs(out, exist_ok=True)
        paths = {
            "trials": os.path.join(out, "trials.csv"),
            "aggregate": os.path.join(out, "aggregate.csv"),
            "aggregate_time": os.path.join(out, "aggregate_time.csv"),
            "metadata": os.path.join(out, "metadata.json"),
        }
        pairs = [
            (trial, result.traces[trial][alg])
            for trial in sorted(result.traces) for alg in config.algorithms
        ]
        with open(paths["trials"], "w", newline="") as fh:
            write_trace_csv(fh, pairs)
        _write_rows(paths["aggregate"], AGG_COLUMNS, aggregate_by_iteration(result.traces, config.algorithms))
        _write_rows(
            paths["aggregate_time"], TIME_COLUMNS,
            aggregate_by_time(result.traces, config.algorithms, config.time_bucket_s),
        )
        meta = {
            "config": config.to_dict(),
            "software": {"difaltgd": __version__, "numpy": np.__version__, "python": platform.python_version()},
            "trials_completed": len(result.traces),
            "trials_failed": len(result.failures),
            "failures": result.failures,
            "trials": result.trial_meta,
            "oracle_only_columns": ["sd_max", "sd_mean", "sd_node1", "psi", "cons_err_proj"],
        }
        with open(paths["metadata"], "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"failed writing results to {getattr(exc, 'filename', None) or out}: {exc}") from exc
    result.paths = paths
