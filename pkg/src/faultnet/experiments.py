"""Seeded Monte Carlo sweeps over (n, q, r) and their CSV reports.

Trial ``t`` of every parameter tuple draws from ``SeedSpec(base_seed, t)``,
so sweeps share random numbers across ``q`` and ``r`` and any single trial
can be replayed. Work is farmed out per trial; results are reassembled in
canonical order before any aggregation, which makes the CSV bytes
independent of the worker count.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable

import numpy as np
from scipy import stats

from . import __version__
from .analysis import capacity_loss_ratio, redundancy_to_baseline
from .channel import ChannelParams, channel_trial_connected
from .deployment import SeedSpec, pair_flows, place_nodes, sample_failures
from .errors import ConfigError, InvalidParameterError
from .percolation import (
    PercolationParams,
    build_grid,
    cell_occupancy_stats,
    empty_cell_count,
    estimate_c1,
    phase_condition,
    site_percolation_connected,
)
from .routing import achieved_rate, cell_loads, measure_delay, route_flows
from .scheduling import MacParams, cluster_size, effective_delta
from .topology import SQRT2, connectivity_threshold, critical_radius_closed_form

log = logging.getLogger(__name__)

KINDS = (
    "connectivity-sweep",
    "channel-connectivity",
    "capacity-scaling",
    "delay-scaling",
    "tradeoff",
    "redundancy",
    "occupancy",
)
PIPELINE_KINDS = ("capacity-scaling", "delay-scaling", "tradeoff")

AUTO_MULTIPLIER = 1.2
SWEEP_MULTIPLIERS = tuple(np.round(np.linspace(0.4, 2.4, 21), 6))
# Share of flows allowed to fail routing before the run counts as failed.
ROUTING_FAILURE_LIMIT = 0.05

COLUMNS = {
    "connectivity-sweep": [
        "n", "q", "r", "trials", "connectivity_probability", "stderr", "critical_radius_empirical",
    ],
    "channel-connectivity": [
        "n", "q", "r", "alpha", "sigma_db", "fading", "p_t_dbm", "p_min_dbm", "trials",
        "connectivity_probability", "stderr",
    ],
    "pipeline": [
        "n", "q", "r", "a", "k", "M", "trials", "n_flows", "min_occupancy", "mean_occupancy",
        "max_occupancy", "max_load", "rate", "capacity", "delay", "capacity_delay_ratio",
        "routing_failures", "mean_distance",
    ],
    "redundancy": ["n", "q", "n1", "epsilon", "residual", "capacity_loss_ratio"],
    "occupancy": [
        "n", "q", "r", "a", "k", "trials", "min_occupancy", "mean_occupancy", "max_occupancy",
        "min_occupancy_lowest", "max_occupancy_highest", "fraction_in_band", "empty_cells",
        "percolates_strict", "percolates_giant", "c1_estimate", "phase_condition",
    ],
}


def columns_for(kind: str) -> list[str]:
    return COLUMNS["pipeline" if kind in PIPELINE_KINDS else kind]


@dataclass
class ExperimentConfig:
    kind: str
    n_list: list = field(default_factory=lambda: [1000])
    q_list: list = field(default_factory=lambda: [0.0])
    radius: object = None  # list of radii | {"auto": multiplier or list} | "auto"
    trials: int = 10
    base_seed: int = 0
    mac: dict = field(default_factory=dict)
    channel: dict | None = None
    output_dir: str = "results"
    workers: int = 1

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        known = {f.name for f in fields(cls)}
        for key in raw:
            if key not in known:
                raise ConfigError(key, "unknown key")
        if "kind" not in raw:
            raise ConfigError("kind", "missing")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError("kind", f"must be one of {', '.join(KINDS)}")
        if not isinstance(self.trials, int) or self.trials < 1:
            raise ConfigError("trials", "must be an integer >= 1")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError("workers", "must be an integer >= 1")
        if not isinstance(self.base_seed, int) or not 0 <= self.base_seed < 2**64:
            raise ConfigError("base_seed", "must be an unsigned 64-bit integer")
        if not self.n_list or any(not isinstance(n, int) or n < 2 for n in self.n_list):
            raise ConfigError("n_list", "must be a non-empty list of integers >= 2")
        if not self.q_list or any(not isinstance(q, (int, float)) or not 0 <= q < 1 for q in self.q_list):
            raise ConfigError("q_list", "must be a non-empty list of numbers in [0, 1)")
        if self.kind == "redundancy" and any(q == 0 for q in self.q_list):
            raise ConfigError("q_list", "redundancy needs q > 0")
        try:
            self.mac_params()
        except (InvalidParameterError, TypeError) as exc:
            raise ConfigError("mac", str(exc)) from None
        try:
            self.channel_params()
        except (InvalidParameterError, TypeError) as exc:
            raise ConfigError("channel", str(exc)) from None
        self._radius_rule()

    def mac_params(self) -> MacParams:
        return MacParams(**(self.mac or {}))

    def channel_params(self) -> ChannelParams:
        return ChannelParams(**(self.channel or {}))

    def _radius_rule(self):
        spec = self.radius
        if spec is None or spec == "auto":
            mult = SWEEP_MULTIPLIERS if self.kind in ("connectivity-sweep", "channel-connectivity") else (
                1.0 if self.kind == "occupancy" else AUTO_MULTIPLIER)
            spec = {"auto": mult}
        if isinstance(spec, list):
            if not spec or any(not isinstance(r, (int, float)) or r <= 0 for r in spec):
                raise ConfigError("radius", "explicit radii must be positive numbers")
            return "explicit", [float(r) for r in spec]
        if isinstance(spec, dict) and set(spec) == {"auto"}:
            mult = spec["auto"]
            mult = list(mult) if isinstance(mult, (list, tuple)) else [mult]
            if not mult or any(not isinstance(x, (int, float)) or x <= 0 for x in mult):
                raise ConfigError("radius", "auto multipliers must be positive numbers")
            return "auto", [float(x) for x in mult]
        raise ConfigError("radius", 'expected a list of radii, "auto", or {"auto": multiplier(s)}')

    def radii(self, n: int, q: float) -> list[float]:
        mode, values = self._radius_rule()
        if mode == "explicit":
            return values
        base = critical_radius_closed_form(n, q)
        return [min(SQRT2, m * base) for m in values]


@dataclass
class MetricsReport:
    kind: str
    rows: list  # list of dicts keyed by columns_for(kind)
    routing_failure_fraction: float = 0.0

    @property
    def columns(self) -> list[str]:
        return columns_for(self.kind)

    def column(self, name: str) -> np.ndarray:
        return np.array([row[name] for row in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(row[c]) for c in self.columns])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.9g}"


# -- per-trial jobs (module level so worker processes can unpickle them) ------

def _threshold_job(args):
    n, q, seed, t = args
    spec = SeedSpec(seed, t)
    d = place_nodes(n, spec)
    return connectivity_threshold(d, sample_failures(d, q, spec))


def _channel_job(args):
    n, q, params, seed, t = args
    return channel_trial_connected(n, q, params, SeedSpec(seed, t))


def pipeline_trial(n: int, q: float, r: float, mac: MacParams, seed: int, t: int) -> dict:
    """One deployment pushed through tiling, scheduling and routing."""
    spec = SeedSpec(seed, t)
    d = place_nodes(n, spec)
    m = sample_failures(d, q, spec)
    flows = pair_flows(m, spec)
    a = min(1.0, r / SQRT2)
    g = build_grid(d, m, a)
    M = cluster_size(effective_delta(mac))
    routes, failed = route_flows(g, d, flows)
    lo, hi, mean = cell_occupancy_stats(g)
    out = {
        "a": a, "k": g.k, "M": M, "n_flows": len(routes), "n_pairs": flows.count,
        "min_occupancy": lo, "mean_occupancy": mean, "max_occupancy": hi,
        "routing_failures": len(failed),
    }
    if flows.count:
        src, dst = d.positions[flows.pairs[:, 0]], d.positions[flows.pairs[:, 1]]
        out["mean_distance"] = float(np.linalg.norm(src - dst, axis=1).mean())
    else:
        out["mean_distance"] = math.nan
    if routes:
        loads = cell_loads(routes, g)
        rate = achieved_rate(loads, mac, M)
        out.update(max_load=loads.max_load, rate=rate, capacity=len(routes) * rate,
                   delay=measure_delay(routes))
    else:
        out.update(max_load=0, rate=math.nan, capacity=0.0, delay=math.nan)
    return out


def _pipeline_job(args):
    n, q, r, mac, seed, t = args
    return pipeline_trial(n, q, r, mac, seed, t)


def occupancy_trial(n: int, q: float, r: float, seed: int, t: int) -> dict:
    spec = SeedSpec(seed, t)
    d = place_nodes(n, spec)
    m = sample_failures(d, q, spec)
    g = build_grid(d, m, min(1.0, r / SQRT2))
    lo, hi, mean = cell_occupancy_stats(g)
    return {
        "a": g.a, "k": g.k, "min": lo, "max": hi, "mean": mean,
        "empty": empty_cell_count(g),
        "strict": site_percolation_connected(g, "strict"),
        "giant": site_percolation_connected(g, "giant"),
        "c1": estimate_c1(g, n),
    }


def _occupancy_job(args):
    n, q, r, seed, t = args
    return occupancy_trial(n, q, r, seed, t)


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) < 2:
        return [fn(j) for j in jobs]
    chunk = max(1, len(jobs) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=chunk))


def _chunks(seq, size):
    return [seq[i:i + size] for i in range(0, len(seq), size)]


# -- experiment kinds -------------------------------------------------------------

def _run_connectivity(cfg: ExperimentConfig) -> MetricsReport:
    T, seed = cfg.trials, cfg.base_seed
    tuples = [(n, q) for n in cfg.n_list for q in cfg.q_list]
    jobs = [(n, q, seed, t) for n, q in tuples for t in range(T)]
    th_all = _chunks(_map(_threshold_job, jobs, cfg.workers), T)
    rows = []
    for (n, q), th in zip(tuples, th_all):
        th = np.asarray(th)
        r50 = float(np.quantile(th, 0.5, method="inverted_cdf"))
        for r in cfg.radii(n, q):
            p = float(np.mean(th <= r))
            rows.append({"n": n, "q": q, "r": r, "trials": T, "connectivity_probability": p,
                         "stderr": math.sqrt(p * (1 - p) / T), "critical_radius_empirical": r50})
    return MetricsReport(cfg.kind, rows)


def _run_channel(cfg: ExperimentConfig) -> MetricsReport:
    T, seed = cfg.trials, cfg.base_seed
    base = cfg.channel_params()
    tuples = [(n, q, r) for n in cfg.n_list for q in cfg.q_list for r in cfg.radii(n, q)]
    jobs = [(n, q, base.at_threshold_distance(r), seed, t) for n, q, r in tuples for t in range(T)]
    hits = _chunks(_map(_channel_job, jobs, cfg.workers), T)
    rows = []
    for (n, q, r), h in zip(tuples, hits):
        p = float(np.mean(h))
        params = base.at_threshold_distance(r)
        rows.append({"n": n, "q": q, "r": r, "alpha": params.alpha, "sigma_db": params.sigma_db,
                     "fading": params.fading, "p_t_dbm": params.p_t_dbm, "p_min_dbm": params.p_min_dbm,
                     "trials": T, "connectivity_probability": p, "stderr": math.sqrt(p * (1 - p) / T)})
    return MetricsReport(cfg.kind, rows)


def _run_pipeline(cfg: ExperimentConfig) -> MetricsReport:
    T, seed, mac = cfg.trials, cfg.base_seed, cfg.mac_params()
    tuples = [(n, q, r) for n in cfg.n_list for q in cfg.q_list for r in cfg.radii(n, q)]
    jobs = [(n, q, r, mac, seed, t) for n, q, r in tuples for t in range(T)]
    results = _chunks(_map(_pipeline_job, jobs, cfg.workers), T)
    rows, pairs, failures = [], 0, 0
    for (n, q, r), res in zip(tuples, results):
        def avg(key):
            vals = np.array([x[key] for x in res], dtype=float)
            vals = vals[~np.isnan(vals)]
            return float(vals.mean()) if len(vals) else math.nan

        capacity, delay = avg("capacity"), avg("delay")
        n_fail = sum(x["routing_failures"] for x in res)
        pairs += sum(x["n_pairs"] for x in res)
        failures += n_fail
        rows.append({
            "n": n, "q": q, "r": r, "a": res[0]["a"], "k": res[0]["k"], "M": res[0]["M"], "trials": T,
            "n_flows": avg("n_flows"), "min_occupancy": avg("min_occupancy"),
            "mean_occupancy": avg("mean_occupancy"), "max_occupancy": avg("max_occupancy"),
            "max_load": avg("max_load"), "rate": avg("rate"), "capacity": capacity, "delay": delay,
            "capacity_delay_ratio": capacity / delay if delay > 0 else math.nan,
            "routing_failures": n_fail, "mean_distance": avg("mean_distance"),
        })
    return MetricsReport(cfg.kind, rows, failures / pairs if pairs else 0.0)


def _run_redundancy(cfg: ExperimentConfig) -> MetricsReport:
    rows = []
    for n in cfg.n_list:
        for q in cfg.q_list:
            res = redundancy_to_baseline(n, q)
            eta = capacity_loss_ratio(n, q) if n * (1 - q) >= 2 else math.nan
            rows.append({"n": n, "q": q, "n1": res.n1, "epsilon": res.epsilon,
                         "residual": res.residual, "capacity_loss_ratio": eta})
    return MetricsReport(cfg.kind, rows)


def _run_occupancy(cfg: ExperimentConfig) -> MetricsReport:
    T, seed = cfg.trials, cfg.base_seed
    tuples = [(n, q, r) for n in cfg.n_list for q in cfg.q_list for r in cfg.radii(n, q)]
    jobs = [(n, q, r, seed, t) for n, q, r in tuples for t in range(T)]
    results = _chunks(_map(_occupancy_job, jobs, cfg.workers), T)
    rows = []
    for (n, q, r), res in zip(tuples, results):
        ln = math.log(n)
        lows = np.array([x["min"] for x in res])
        highs = np.array([x["max"] for x in res])
        c1 = float(np.mean([x["c1"] for x in res]))
        rows.append({
            "n": n, "q": q, "r": r, "a": res[0]["a"], "k": res[0]["k"], "trials": T,
            "min_occupancy": float(lows.mean()),
            "mean_occupancy": float(np.mean([x["mean"] for x in res])),
            "max_occupancy": float(highs.mean()),
            "min_occupancy_lowest": int(lows.min()), "max_occupancy_highest": int(highs.max()),
            "fraction_in_band": float(np.mean((lows >= 0.1 * ln) & (highs <= 10 * ln))),
            "empty_cells": float(np.mean([x["empty"] for x in res])),
            "percolates_strict": float(np.mean([x["strict"] for x in res])),
            "percolates_giant": float(np.mean([x["giant"] for x in res])),
            "c1_estimate": c1,
            "phase_condition": phase_condition(n, q, PercolationParams(c1=c1)) if c1 > 0 else False,
        })
    return MetricsReport(cfg.kind, rows)


_RUNNERS = {
    "connectivity-sweep": _run_connectivity,
    "channel-connectivity": _run_channel,
    "capacity-scaling": _run_pipeline,
    "delay-scaling": _run_pipeline,
    "tradeoff": _run_pipeline,
    "redundancy": _run_redundancy,
    "occupancy": _run_occupancy,
}


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> MetricsReport:
    """Run ``cfg`` and, if ``write``, persist ``<kind>.csv`` and ``<kind>.meta.json``."""
    cfg.validate()
    if write:
        os.makedirs(cfg.output_dir, exist_ok=True)
        if not os.access(cfg.output_dir, os.W_OK):
            raise PermissionError(f"output directory {cfg.output_dir!r} is not writable")
    start = time.perf_counter()
    report = _RUNNERS[cfg.kind](cfg)
    wall = time.perf_counter() - start
    if write:
        stem = os.path.join(cfg.output_dir, cfg.kind)
        with open(stem + ".csv", "w", newline="") as fh:
            fh.write(report.to_csv())
        meta = {
            "kind": cfg.kind,
            "config": cfg.to_dict(),
            "base_seed": cfg.base_seed,
            "version": __version__,
            "wall_time_s": round(wall, 3),
            "rows": len(report.rows),
            "columns": report.columns,
            "routing_failure_fraction": report.routing_failure_fraction,
        }
        with open(stem + ".meta.json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
    log.info("%s: %d rows in %.1fs", cfg.kind, len(report.rows), wall)
    return report


# -- scaling fits -----------------------------------------------------------------

PREDICTORS: dict[str, Callable[[float, float], float]] = {
    "n": lambda n, q: n,
    "n(1-q)": lambda n, q: n * (1 - q),
    "n(1-q)/ln n": lambda n, q: n * (1 - q) / math.log(n),
    "n(1-q) ln n": lambda n, q: n * (1 - q) * math.log(n),
}


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    r2: float


def fit_scaling(report: MetricsReport, x="n(1-q)/ln n", y: str = "capacity") -> ScalingFit:
    """Least-squares line through ``(ln x, ln y)`` over the report rows.

    ``x`` is a key of :data:`PREDICTORS` or a callable ``(n, q) -> value``.
    Rows with non-positive or missing values are dropped with a warning.
    """
    fx = PREDICTORS[x] if isinstance(x, str) else x
    xs = np.array([fx(row["n"], row["q"]) for row in report.rows], dtype=float)
    ys = report.column(y)
    ok = (xs > 0) & (ys > 0) & np.isfinite(xs) & np.isfinite(ys)
    if not ok.all():
        warnings.warn(f"fit_scaling: dropped {int((~ok).sum())} non-positive rows", stacklevel=2)
    if ok.sum() < 3:
        raise InvalidParameterError("need at least 3 positive rows to fit")
    res = stats.linregress(np.log(xs[ok]), np.log(ys[ok]))
    return ScalingFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2))
