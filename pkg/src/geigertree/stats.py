"""Goodness-of-fit and independence checks of Monte Carlo output."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy import stats


@dataclass
class SampleSummary:
    count: int
    mean: float
    se: float
    values: np.ndarray
    paired: np.ndarray | None = None

    @classmethod
    def from_values(cls, values, paired=None) -> "SampleSummary":
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            raise ValueError("empty sample")
        order = np.argsort(values, kind="stable")
        sd = values.std(ddof=1) if values.size > 1 else math.nan
        return cls(values.size, float(values.mean()), float(sd / math.sqrt(values.size)),
                   values[order], None if paired is None else np.asarray(paired)[order])


def _as_summary(sample) -> SampleSummary:
    return sample if isinstance(sample, SampleSummary) else SampleSummary.from_values(sample)


def ks_statistic(sample, cdf: Callable) -> float:
    """sup_x |F_hat(x) - F(x)| over both one-sided jumps of the sample CDF."""
    s = _as_summary(sample)
    return float(stats.ks_1samp(s.values, cdf, method="asymp").statistic)


def ks_null_band(count: int) -> float:
    """Asymptotic 99.9% critical value of the one-sample KS statistic."""
    return 1.95 / math.sqrt(count)


def tv_distance(law_a: dict, law_b: dict) -> float:
    keys = set(law_a) | set(law_b)
    return 0.5 * math.fsum(abs(law_a.get(k, 0.0) - law_b.get(k, 0.0)) for k in keys)


def empirical_law(values) -> dict:
    keys, counts = np.unique(np.asarray(values), return_counts=True, axis=0)
    total = counts.sum()
    if keys.ndim > 1:
        return {tuple(int(v) for v in key): c / total for key, c in zip(keys, counts)}
    return {int(key): c / total for key, c in zip(keys, counts)}


def _quantile_bins(x: np.ndarray, bins: int) -> np.ndarray:
    edges = np.quantile(x, np.linspace(0, 1, bins + 1)[1:-1])
    return np.searchsorted(edges, x, side="right")


def chi2_independence(pairs, bins: int = 4) -> tuple[float, int]:
    """Pearson independence statistic on a bins x bins grid.

    Edges are the empirical marginal quantiles, so cells are equiprobable
    for continuous data; ties in discrete data can merge bins, in which
    case empty rows/columns are dropped and the dof shrinks accordingly.
    """
    pairs = np.asarray(pairs, dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise ValueError("pairs must have shape (N, 2)")
    if pairs.shape[0] < 25 * bins * bins:
        raise ValueError(f"need at least {25 * bins * bins} pairs, got {pairs.shape[0]}")
    rows = _quantile_bins(pairs[:, 0], bins)
    cols = _quantile_bins(pairs[:, 1], bins)
    table = np.zeros((bins, bins))
    np.add.at(table, (rows, cols), 1)
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    if min(table.shape) < 2:
        return 0.0, 0
    res = stats.chi2_contingency(table, correction=False)
    return float(res.statistic), int(res.dof)


def chi2_critical(dof: int, level: float = 0.999) -> float:
    return float(stats.chi2.ppf(level, dof))


@dataclass
class SplitProfile:
    """Per-i split frequencies for i = 0..nt-1 (increment at step i + 1)."""

    side: str
    n: int
    nt: int
    estimate: np.ndarray
    se: np.ndarray
    asymptote: np.ndarray
    count: int

    def z_scores(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return (self.estimate - self.asymptote) / self.se


def split_asymptote(side: str, n: int, nt: int, i) -> np.ndarray:
    i = np.asarray(i, dtype=float)
    with np.errstate(divide="ignore"):
        if side == "left":
            return 1.0 / i - 1.0 / (i + n - nt)
        if side == "right":
            return 1.0 / i
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def split_probability_profile(traces: Iterable, side: str) -> SplitProfile:
    """Frequency of a strict increase of the side's running count per step."""
    hits, count, n, nt = None, 0, None, None
    for trace in traces:
        if n is None:
            n, nt = trace.n, trace.nt
            hits = np.zeros(nt, dtype=np.int64)
        elif (trace.n, trace.nt) != (n, nt):
            raise ValueError("traces must share (n, t)")
        running = trace.left_running if side == "left" else trace.right_running
        running = np.atleast_2d(running)
        hits += (np.diff(running, axis=-1) > 0).sum(axis=0)
        count += running.shape[0]
    if count == 0:
        raise ValueError("no traces")
    est = hits / count
    se = np.sqrt(est * (1.0 - est) / count)
    return SplitProfile(side, n, nt, est, se, split_asymptote(side, n, nt, np.arange(nt)), count)


def exp_characterization_check(rate: float, N: int, rng: np.random.Generator,
                               base: str = "exponential") -> float:
    """KS distance between U (X1 + X2) and Exp(rate).

    The identity in law holds exactly for exponential X_i; ``base="uniform"``
    swaps in U[0, 2/rate] variables of the same mean as a negative control.
    """
    if N < 10_000:
        raise ValueError("N must be >= 1e4")
    if base == "exponential":
        x = rng.exponential(1.0 / rate, size=(2, N))
    elif base == "uniform":
        x = rng.uniform(0.0, 2.0 / rate, size=(2, N))
    else:
        raise ValueError(f"unknown base {base!r}")
    u = rng.random(N)
    sample = u * (x[0] + x[1])
    return ks_statistic(sample, stats.expon(scale=1.0 / rate).cdf)
