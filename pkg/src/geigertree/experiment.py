"""Experiment configuration, orchestration and CSV/JSON output."""
from __future__ import annotations

import json
import math
import subprocess
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from . import __version__
from .geiger import (BLOCK_SIZE, _run_kernel, block_rng, reference_batch,
                     split_index)
from .limits import (LimitSpec, g_transform, joint_split_limit_cdf,
                     limit_sum_cdf, mrca_limit_cdf, nested_uniform_cdf)
from .offspring import build_law, extinction_probs
from .reduce import compute_reduced_record
from .stats import (chi2_critical, chi2_independence, ks_statistic)

MODES = ("counts-only", "full-tree-oracle")
ORACLE_MAX_N = 12
MIN_TEST_REPS = 400


def csv_columns(max_k: int) -> list[str]:
    cols = ["rep", "z_left", "z_right", "z_total"]
    for prefix in ("g_l", "g_r", "d_l", "d_r"):
        cols += [f"{prefix}_{k}" for k in range(1, max_k + 1)]
    return cols + ["mrca"]


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    law: str = "binary"
    params: list = field(default_factory=list)
    n: int = 2000
    t: float = 0.5
    replicates: int = 1000
    master_seed: int = 0
    max_k: int = 4
    mode: str = "counts-only"
    out_csv: str | None = None
    out_json: str | None = None
    jobs: int = 1
    block_size: int = BLOCK_SIZE

    def validate(self) -> None:
        if not 0.0 < self.t < 1.0:
            raise ConfigError("t must lie in (0, 1)")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        try:
            split_index(self.n, self.t)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.max_k < 1:
            raise ConfigError("max_k must be >= 1")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.mode == "full-tree-oracle" and self.n > ORACLE_MAX_N:
            raise ConfigError(f"full-tree-oracle mode needs n <= {ORACLE_MAX_N}")
        if self.block_size < 1 or self.jobs < 1:
            raise ConfigError("block_size and jobs must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class ResultTable:
    """Per-replicate rows plus split-step tallies and a summary block."""

    config: ExperimentConfig
    nt: int
    columns: list
    rows: np.ndarray
    split_hits: dict
    summary: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]


def version_string() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             capture_output=True, text=True, timeout=10,
                             cwd=Path(__file__).resolve().parent)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _block_rows(trace, max_k: int, first_rep: int) -> np.ndarray:
    rec = compute_reduced_record(trace, max_k)
    reps = np.arange(first_rep, first_rep + len(trace))
    return np.column_stack([reps, trace.z_left, trace.z_right, trace.z_total,
                            rec.g_left, rec.g_right, rec.d_left, rec.d_right,
                            rec.mrca]).astype(np.int64)


def _hits(trace):
    left = (np.diff(trace.left_running, axis=-1) > 0).sum(axis=0)
    right = (np.diff(trace.right_running, axis=-1) > 0).sum(axis=0)
    return left, right


def _simulate_block(cfg: ExperimentConfig, block: int):
    law = build_law(cfg.law, cfg.params)
    lo = block * cfg.block_size
    size = min(cfg.block_size, cfg.replicates - lo)
    if cfg.mode == "full-tree-oracle":
        trace, _ = reference_batch(law, cfg.n, cfg.t, size,
                                   seed=_oracle_seed(cfg.master_seed, block),
                                   block_size=size)
    else:
        cache = _cache_for(law, cfg.n)
        trace = _run_kernel(cache, cfg.n, split_index(cfg.n, cfg.t),
                            block_rng(cfg.master_seed, block), size, True)
    return _block_rows(trace, cfg.max_k, lo), _hits(trace)


def _oracle_seed(seed: int, block: int) -> int:
    # reference_batch derives its stream from (seed, 0)
    return int(np.random.SeedSequence([seed, block, 1]).generate_state(1)[0])


_CACHES: dict = {}


def _cache_for(law, n):
    key = (law.name, tuple(law.pmf), n)
    if key not in _CACHES:
        _CACHES.clear()
        _CACHES[key] = extinction_probs(law, n)
    return _CACHES[key]


def _blocks(cfg: ExperimentConfig):
    count = math.ceil(cfg.replicates / cfg.block_size)
    if cfg.jobs == 1:
        for b in range(count):
            yield _simulate_block(cfg, b)
    else:
        # ordered results keep the CSV independent of the worker count
        yield from Parallel(n_jobs=cfg.jobs, return_as="generator")(
            delayed(_simulate_block)(cfg, b) for b in range(count))


def run_experiment(cfg: ExperimentConfig) -> ResultTable:
    """Simulate, stream rows to CSV, then attach the test summary."""
    cfg.validate()
    build_law(cfg.law, cfg.params)
    nt = split_index(cfg.n, cfg.t)
    columns = csv_columns(cfg.max_k)
    start = time.perf_counter()
    fh = None
    if cfg.out_csv:
        try:
            fh = open(cfg.out_csv, "w", newline="")
        except OSError as exc:
            raise OSError(f"cannot write CSV {cfg.out_csv!r}: {exc}") from exc
        fh.write(",".join(columns) + "\n")
    rows, left_hits, right_hits = [], np.zeros(nt, np.int64), np.zeros(nt, np.int64)
    try:
        for block_rows, (lh, rh) in _blocks(cfg):
            if fh is not None:
                np.savetxt(fh, block_rows, fmt="%d", delimiter=",", newline="\n")
            rows.append(block_rows)
            left_hits += lh
            right_hits += rh
    finally:
        if fh is not None:
            fh.close()
    table = ResultTable(cfg, nt, columns, np.concatenate(rows),
                        {"left": left_hits, "right": right_hits})
    law = build_law(cfg.law, cfg.params)
    summary = {
        "config": asdict(cfg),
        "version": version_string(),
        "nt": nt,
        "sigma2": law.sigma2,
        "means": {},
        "tests": {},
    }
    for name in ("z_left", "z_right", "z_total", "mrca"):
        x = table.column(name) / cfg.n
        se = x.std(ddof=1) / math.sqrt(x.size) if x.size > 1 else math.nan
        summary["means"][f"{name}/n"] = {"mean": float(x.mean()), "se": float(se)}
    if cfg.replicates < MIN_TEST_REPS:
        summary["tests"] = "insufficient for tests"
    else:
        summary["tests"] = distribution_tests(table, law.sigma2)
    summary["wall_time_s"] = time.perf_counter() - start
    table.summary = summary
    if cfg.out_json:
        try:
            with open(cfg.out_json, "w") as jf:
                json.dump(summary, jf, indent=2, default=_json_default)
                jf.write("\n")
        except OSError as exc:
            raise OSError(f"cannot write JSON {cfg.out_json!r}: {exc}") from exc
    return table


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _entry(value, tol, passed=None, kind="max"):
    if passed is None:
        passed = value <= tol if kind == "max" else value >= tol
    return {"value": float(value), "tolerance": float(tol), "pass": bool(passed)}


def _rel_entry(mean, target, tol):
    return {"value": float(mean), "target": float(target), "tolerance": tol,
            "pass": bool(abs(mean / target - 1.0) <= tol)}


def joint_grid_sup(g_left_n, g_right_n, t: float, points: int = 5) -> float:
    """sup over a grid of |empirical joint CDF - limit joint CDF|."""
    grid = t * np.arange(1, points + 1) / points
    worst = 0.0
    for x in grid:
        below = g_left_n <= x
        for y in grid:
            emp = np.mean(below & (g_right_n <= y))
            worst = max(worst, abs(emp - joint_split_limit_cdf(1, 1, t, x, y)))
    return worst


def chi2_pairs(table: ResultTable) -> np.ndarray:
    t, nt = table.config.t, table.nt
    u_left = g_transform(t, table.column("g_l_1") / nt)
    return np.column_stack([u_left, table.column("g_r_1") / nt])


def distribution_tests(table: ResultTable, sigma2: float) -> dict:
    """Goodness-of-fit of one run against every limit law."""
    cfg, nt = table.config, table.nt
    n, t = cfg.n, cfg.t
    spec = LimitSpec(t, sigma2)
    z = {k: table.column(k) / n for k in ("z_left", "z_right", "z_total")}
    out = {
        "ks_total": _entry(ks_statistic(z["z_total"], lambda x: limit_sum_cdf(spec, x)), 0.03),
        "mean_total": _rel_entry(z["z_total"].mean(), spec.total_mean, 0.05),
        "ks_left": _entry(ks_statistic(z["z_left"], spec.left_cdf), 0.03),
        "mean_left": _rel_entry(z["z_left"].mean(), spec.left_mean, 0.05),
        "ks_right": _entry(ks_statistic(z["z_right"], spec.right_cdf), 0.03),
        "mean_right": _rel_entry(z["z_right"].mean(), spec.right_mean, 0.05),
    }
    for k in (1, 2):
        if k > cfg.max_k:
            break
        g_r = table.column(f"g_r_{k}") / nt
        g_l = g_transform(t, table.column(f"g_l_{k}") / nt)
        cdf = (lambda x, k=k: nested_uniform_cdf(k, np.clip(x, 0.0, 1.0)))
        out[f"ks_right_split_{k}"] = _entry(ks_statistic(g_r, cdf), 0.02)
        out[f"ks_left_split_{k}"] = _entry(ks_statistic(g_l, cdf), 0.02)
    out["joint_cdf_sup"] = _entry(
        joint_grid_sup(table.column("g_l_1") / n, table.column("g_r_1") / n, t), 0.03)
    pairs = chi2_pairs(table)
    if pairs.shape[0] >= 25 * 16:
        stat, dof = chi2_independence(pairs, 4)
        out["chi2_independence"] = _entry(stat, chi2_critical(dof) if dof else 0.0)
        out["chi2_independence"]["dof"] = dof
    mrca = table.column("mrca") / n
    out["ks_mrca"] = _entry(ks_statistic(mrca, lambda x: mrca_limit_cdf(t, np.clip(x, 0.0, t))), 0.03)
    point = float(np.mean(mrca <= 0.25)) if t >= 0.25 else math.nan
    if t >= 0.25:
        target = mrca_limit_cdf(t, 0.25)
        out["mrca_cdf_at_0.25"] = {"value": point, "target": target, "tolerance": 0.02,
                                   "pass": bool(abs(point - target) <= 0.02)}
    return out
