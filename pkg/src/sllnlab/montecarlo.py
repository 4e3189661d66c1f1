"""Seeded replication harness.

Replicate ``r`` always draws from ``SeededStream(base_seed + r)``.  Replicates
are processed in fixed-size chunks; each chunk yields per-grid-point count,
mean and centered sum of squares, and chunks are merged in chunk order with
the pairwise update of Chan, Golub and LeVeque.  Because chunk boundaries do
not depend on the number of workers, serial and parallel runs produce the
same bits.

Per-replicate values are also kept (one float per replicate and grid point)
so that exact empirical quantiles can be reported.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from . import conditions
from .errors import ConfigError, ParameterError
from .estimators import expected_hill_ratio, hill_ratio
from .io import check_writable, csv_text, json_text, atomic_write_text
from .process import (ProcessParams, _decays, expected_sums, simulate_sums_batch,
                      WeightFunction)
from .sampling import (QuantileRep, SeededStream, draw_exponentials, draw_normals,
                       draw_uniforms, sample_weibull_domain)

EXPERIMENT_IDS = ("wk_convergence", "hill_ratio", "gcip_sweep", "maxvar_probe", "condition_suite")
SUMMARY_COLUMNS = ("x", "mean", "se", "q05", "q50", "q95", "target", "z")


@dataclass
class ExperimentConfig:
    """One experiment.

    ``grid`` holds the k values (or n / q values, depending on the experiment)
    at which replicate statistics are recorded.  ``workers`` and the output
    paths do not affect the numbers and are left out of :meth:`config_hash`.
    """

    experiment_id: str
    params: dict = field(default_factory=dict)
    replications: int = 1
    base_seed: int = 0
    grid: tuple = ()
    output_json: Optional[str] = None
    output_csv: Optional[str] = None
    workers: int = 1
    chunk_size: int = 64

    def __post_init__(self):
        self.grid = tuple(int(g) for g in self.grid)
        self.params = dict(self.params)

    def validate(self) -> "ExperimentConfig":
        if self.experiment_id not in EXPERIMENT_IDS:
            raise ConfigError(f"unknown experiment_id {self.experiment_id!r}; "
                              f"expected one of {', '.join(EXPERIMENT_IDS)}")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if self.chunk_size < 1 or self.workers < 1:
            raise ConfigError("chunk_size and workers must be positive")
        if not self.grid:
            raise ConfigError("grid must be non-empty")
        if any(g < 1 for g in self.grid) or any(b <= a for a, b in zip(self.grid, self.grid[1:])):
            raise ConfigError("grid must be strictly increasing positive integers")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        for alias in ("k_grid", "n_grid", "q_grid"):
            if alias in data:
                if "grid" in data:
                    raise ConfigError(f"give only one of grid and {alias}")
                data["grid"] = data.pop(alias)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "experiment_id" not in data:
            raise ConfigError("experiment_id is required")
        return cls(**data)

    def hashed_dict(self) -> dict:
        """The fields that determine the numbers."""
        d = self.to_dict()
        for key in ("output_json", "output_csv", "workers"):
            d.pop(key)
        return d

    def config_hash(self) -> str:
        d = self.hashed_dict()
        canon = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def load_config(path) -> ExperimentConfig:
    """Read a YAML or JSON experiment file."""
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return ExperimentConfig.from_dict(data).validate()


# --------------------------------------------------------------------------
# results


@dataclass
class GridPoint:
    x: int
    mean: float
    se: float
    q05: float
    q50: float
    q95: float
    target: Optional[float] = None
    z: Optional[float] = None


@dataclass
class RunResult:
    experiment_id: str
    config: dict
    config_hash: str
    seeds: tuple
    points: list
    wall_time: float = 0.0
    extras: dict = field(default_factory=dict)

    def payload(self) -> dict:
        """Everything except the wall time; identical configs give identical payloads."""
        d = self.to_dict()
        d.pop("wall_time")
        return d

    def to_dict(self) -> dict:
        return {"experiment_id": self.experiment_id, "config": self.config,
                "config_hash": self.config_hash, "seeds": list(self.seeds),
                "points": [asdict(p) for p in self.points], "wall_time": self.wall_time,
                "extras": self.extras}

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        return cls(d["experiment_id"], d["config"], d["config_hash"], tuple(d["seeds"]),
                   [GridPoint(**p) for p in d["points"]], d.get("wall_time", 0.0),
                   d.get("extras", {}))

    def point(self, x: int) -> GridPoint:
        for p in self.points:
            if p.x == x:
                return p
        raise KeyError(x)

    def summary_rows(self) -> list:
        def cell(v):
            return "" if v is None else repr(float(v))
        return [(p.x, cell(p.mean), cell(p.se), cell(p.q05), cell(p.q50), cell(p.q95),
                 cell(p.target), cell(p.z)) for p in self.points]


# --------------------------------------------------------------------------
# streaming moments


@dataclass
class Moments:
    """Count, mean and centered sum of squares for a vector of grid points."""

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, values: np.ndarray) -> "Moments":
        values = np.asarray(values, dtype=np.float64)
        mean = values.mean(axis=0)
        return cls(values.shape[0], mean, ((values - mean) ** 2).sum(axis=0))

    def merge(self, other: "Moments") -> "Moments":
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + delta**2 * (self.count * other.count / n)
        return Moments(n, mean, m2)

    @property
    def standard_error(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(self.m2 / (self.count - 1) / self.count)


def merge_all(parts: Sequence[Moments]) -> Moments:
    """Pairwise (tree) merge, which keeps rounding error at ``O(log m)``."""
    parts = list(parts)
    if not parts:
        raise ParameterError("nothing to merge")
    while len(parts) > 1:
        nxt = [parts[i].merge(parts[i + 1]) for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


# --------------------------------------------------------------------------
# per-experiment replicate statistics


def _process_params(p: dict) -> ProcessParams:
    return ProcessParams.power(float(p.get("gamma", 2.0)), float(p.get("tau", 1.0)),
                               cutoff=int(p.get("cutoff", 10)), delta=float(p.get("delta", 0.5)))


def _wk_values(cfg: ExperimentConfig, seeds: range) -> np.ndarray:
    params = _process_params(cfg.params)
    stat = cfg.params.get("statistic", "normalized")
    grid = np.asarray(cfg.grid)
    k_max = int(grid[-1]) + (1 if stat == "ratio" else 0)
    if k_max < 2:
        raise ParameterError("grid must reach k >= 2")
    exps = np.vstack([draw_exponentials(SeededStream(s), k_max - 1) for s in seeds])
    d = params.weight.increments_upto(k_max)
    f = params.weight.values_upto(k_max)
    sums = simulate_sums_batch(_decays(exps, params.gamma), d)  # column k-1 holds A_k
    if stat == "normalized":
        return sums[:, grid - 1] / f[grid]
    if stat == "ratio":
        # W_{k+1} / f(k), equal in law to the Hill ratio at k
        return (f[grid] - sums[:, grid]) / f[grid]
    if stat == "centered":
        M = expected_sums(params, k_max)
        return params.alpha_values(grid) * (sums[:, grid - 1] - M[grid]) / grid
    raise ConfigError(f"unknown statistic {stat!r}")


def _quantile_rep(p: dict) -> QuantileRep:
    return QuantileRep(y0=float(p.get("y0", 0.0)), c=float(p.get("c", 1.0)),
                       gamma=float(p.get("gamma", 2.0)),
                       exponent_mode=p.get("exponent_mode", "inverse_gamma"))


def _hill_values(cfg: ExperimentConfig, seeds: range) -> np.ndarray:
    rep = _quantile_rep(cfg.params)
    n = int(cfg.params.get("n", 10_000))
    if cfg.grid[-1] >= n:
        raise ConfigError("hill_ratio grid values must be below the sample size n")
    weight = WeightFunction.power(float(cfg.params.get("tau", 1.0)))
    out = np.empty((len(seeds), len(cfg.grid)))
    for r, s in enumerate(seeds):
        sample = sample_weibull_domain(SeededStream(s), n, rep)
        out[r] = [hill_ratio(sample, k, weight, y0=rep.y0) for k in cfg.grid]
    return out


def _centered_iid(stream: SeededStream, n: int, distribution: str) -> np.ndarray:
    """Mean zero, unit variance."""
    if distribution == "normal":
        return draw_normals(stream, n)
    if distribution == "exponential":
        return draw_exponentials(stream, n) - 1.0
    if distribution == "uniform":
        return (draw_uniforms(stream, n) - 0.5) * math.sqrt(12.0)
    raise ConfigError(f"unknown distribution {distribution!r}")


def _gcip_values(cfg: ExperimentConfig, seeds: range) -> np.ndarray:
    # S_q**2 / q**((3 - delta)/2) for independent X_i with Var = i**a
    a = float(cfg.params.get("variance_exponent", 0.0))
    delta = float(cfg.params.get("delta", 1.0))
    grid = np.asarray(cfg.grid)
    sd = np.arange(1, grid[-1] + 1, dtype=np.float64) ** (a / 2)
    out = np.empty((len(seeds), grid.size))
    for r, s in enumerate(seeds):
        partial = np.cumsum(sd * draw_normals(SeededStream(s), int(grid[-1])))
        out[r] = partial[grid - 1] ** 2 / grid.astype(np.float64) ** ((3 - delta) / 2)
    return out


def _maxvar_values(cfg: ExperimentConfig, seeds: range) -> np.ndarray:
    # max_{l<=n} S_l**2 / n for centered unit-variance iid terms
    dist = cfg.params.get("distribution", "normal")
    grid = np.asarray(cfg.grid)
    out = np.empty((len(seeds), grid.size))
    for r, s in enumerate(seeds):
        running = np.maximum.accumulate(np.abs(np.cumsum(
            _centered_iid(SeededStream(s), int(grid[-1]), dist))))
        out[r] = running[grid - 1] ** 2 / grid
    return out


_REPLICATE_FNS: dict = {
    "wk_convergence": _wk_values,
    "hill_ratio": _hill_values,
    "gcip_sweep": _gcip_values,
    "maxvar_probe": _maxvar_values,
}


def _chunk_values(cfg_dict: dict, start: int, stop: int) -> np.ndarray:
    cfg = ExperimentConfig.from_dict(cfg_dict)
    seeds = range(cfg.base_seed + start, cfg.base_seed + stop)
    return _REPLICATE_FNS[cfg.experiment_id](cfg, seeds)


# --------------------------------------------------------------------------
# targets


def default_target(cfg: ExperimentConfig) -> Optional[np.ndarray]:
    """Exact (or limiting, when ``params["target"] == "limit"``) mean per grid point."""
    p = cfg.params
    mode = p.get("target", "exact")
    if mode is None or mode == "none":
        return None
    if isinstance(mode, (int, float)):
        return np.full(len(cfg.grid), float(mode))
    grid = np.asarray(cfg.grid)
    tau = float(p.get("tau", 1.0))
    if cfg.experiment_id == "wk_convergence":
        params = _process_params(p)
        stat = p.get("statistic", "normalized")
        if stat == "centered":
            return np.zeros(grid.size)
        if stat == "ratio":
            if mode == "limit":
                return np.full(grid.size, params.gamma / (params.gamma + tau))
            return np.array([expected_hill_ratio(int(k), params.weight, params.gamma) for k in grid])
        if mode == "limit":
            return np.full(grid.size, tau / (tau + params.gamma))
        M = expected_sums(params, int(grid[-1]))
        return M[grid] / params.weight(grid)
    if cfg.experiment_id == "hill_ratio":
        e = _quantile_rep(p).exponent
        if mode == "limit":
            return np.full(grid.size, e / (tau + e))
        w = WeightFunction.power(tau)
        return np.array([expected_hill_ratio(int(k), w, e) for k in grid])
    if cfg.experiment_id == "gcip_sweep":
        a = float(p.get("variance_exponent", 0.0))
        delta = float(p.get("delta", 1.0))
        cum = np.cumsum(np.arange(1, grid[-1] + 1, dtype=np.float64) ** a)
        return cum[grid - 1] / grid.astype(np.float64) ** ((3 - delta) / 2)
    return None


@dataclass(frozen=True)
class DeviationTable:
    rows: list  # (x, mean, target, mean - target, z)
    worst_z: float


def compare_to_target(result: RunResult, target_rule) -> DeviationTable:
    """Deviation ``(mean - target) / se`` per grid point.

    ``target_rule`` may be a callable of the grid value, a mapping keyed by
    grid value, a sequence aligned with the grid, or a scalar.
    """
    xs = [p.x for p in result.points]
    if callable(target_rule):
        targets = [float(target_rule(x)) for x in xs]
    elif isinstance(target_rule, dict):
        if set(target_rule) != set(xs):
            raise ParameterError("target mapping keys do not match the grid")
        targets = [float(target_rule[x]) for x in xs]
    elif np.ndim(target_rule) == 0:
        targets = [float(target_rule)] * len(xs)
    else:
        targets = [float(t) for t in target_rule]
        if len(targets) != len(xs):
            raise ParameterError(f"target has {len(targets)} entries, grid has {len(xs)}")
    rows = []
    for p, t in zip(result.points, targets):
        diff = p.mean - t
        z = diff / p.se if p.se > 0 else (0.0 if diff == 0 else math.copysign(math.inf, diff))
        rows.append((p.x, p.mean, t, diff, z))
    worst = max((abs(r[4]) for r in rows), default=0.0)
    return DeviationTable(rows, worst)


# --------------------------------------------------------------------------
# driver


def _resolve(path: Optional[str], output_dir) -> Optional[Path]:
    if path is None:
        return None
    p = Path(path)
    if output_dir is not None and not p.is_absolute():
        p = Path(output_dir) / p
    return p


def run(config: ExperimentConfig, *, output_dir=None, max_workers: Optional[int] = None) -> RunResult:
    """Execute ``config.replications`` seeded replications and aggregate per grid point.

    Output paths are checked before any computation.  ``max_workers`` caps
    ``config.workers``.
    """
    config.validate()
    out_json = _resolve(config.output_json, output_dir)
    out_csv = _resolve(config.output_csv, output_dir)
    for p in (out_json, out_csv):
        if p is not None:
            check_writable(p)
    start_time = time.perf_counter()
    if config.experiment_id == "condition_suite":
        result = _run_condition_suite(config)
    else:
        result = _run_replications(config, max_workers)
    result.wall_time = time.perf_counter() - start_time
    if out_json is not None:
        atomic_write_text(out_json, json_text(result.to_dict()))
    if out_csv is not None:
        atomic_write_text(out_csv, csv_text(SUMMARY_COLUMNS, result.summary_rows()))
    return result


def _run_replications(config: ExperimentConfig, max_workers: Optional[int]) -> RunResult:
    R, size = config.replications, config.chunk_size
    bounds = [(s, min(s + size, R)) for s in range(0, R, size)]
    cfg_dict = config.to_dict()
    workers = min(config.workers, max_workers or config.workers, len(bounds))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_chunk_values, [cfg_dict] * len(bounds),
                                   [b[0] for b in bounds], [b[1] for b in bounds]))
    else:
        chunks = [_chunk_values(cfg_dict, a, b) for a, b in bounds]
    mom = merge_all([Moments.of(c) for c in chunks])
    values = np.vstack(chunks)
    q05, q50, q95 = np.quantile(values, [0.05, 0.5, 0.95], axis=0)
    se = mom.standard_error
    target = default_target(config)
    points = []
    for g, x in enumerate(config.grid):
        t = None if target is None else float(target[g])
        z = None
        if t is not None:
            diff = float(mom.mean[g]) - t
            z = diff / float(se[g]) if se[g] > 0 else (0.0 if diff == 0 else math.copysign(math.inf, diff))
        points.append(GridPoint(x, float(mom.mean[g]), float(se[g]), float(q05[g]), float(q50[g]),
                                float(q95[g]), t, z))
    extras = {}
    if config.experiment_id == "maxvar_probe" and R >= 1000:
        extras["probability_constant"] = _maxvar_constants(config)
    return RunResult(config.experiment_id, config.hashed_dict(), config.config_hash(),
                     (config.base_seed, config.base_seed + R - 1), points, 0.0, extras)


def _maxvar_constants(config: ExperimentConfig) -> list:
    dist = config.params.get("distribution", "normal")
    r = float(config.params.get("r", 2.0))
    sampler = lambda stream, n: _centered_iid(stream, n, dist)  # noqa: E731
    out = []
    for n in config.grid:
        rep = conditions.maxvar_probe(sampler, r, n, reps=config.replications,
                                      base_seed=config.base_seed, var_sn=float(n))
        out.append({"n": n, "constant": rep.constant, "se": rep.standard_error,
                    "lambda": rep.lambda_star})
    return out


def _run_condition_suite(config: ExperimentConfig) -> RunResult:
    params = _process_params(config.params)
    reports = conditions.eval_process_conditions(params, config.grid[-1])
    extras = {"reports": [r.to_dict() for r in reports],
              "verdicts": {r.condition_id: r.verdict for r in reports},
              "combined": conditions.combined_verdict(reports)}
    return RunResult(config.experiment_id, config.hashed_dict(), config.config_hash(),
                     (config.base_seed, config.base_seed), [], 0.0, extras)


