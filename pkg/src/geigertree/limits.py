"""Closed-form limit laws of the rescaled decomposition and split times."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_LEFT, _RIGHT = "left", "right"


@dataclass(frozen=True)
class LimitSpec:
    """Exponential limits of Z^l/n (``left_rate``) and Z^r/n (``right_rate``)."""

    t: float
    sigma2: float

    def __post_init__(self):
        if not 0.0 < self.t < 1.0:
            raise ValueError("t must lie in (0, 1)")
        if not 0.0 < self.sigma2 < math.inf:
            raise ValueError("sigma2 must be positive and finite")

    @property
    def left_rate(self) -> float:
        return 2.0 / (self.t * (1.0 - self.t) * self.sigma2)

    @property
    def right_rate(self) -> float:
        return 2.0 / (self.t * self.sigma2)

    @property
    def left_mean(self) -> float:
        return 1.0 / self.left_rate

    @property
    def right_mean(self) -> float:
        return 1.0 / self.right_rate

    @property
    def total_mean(self) -> float:
        return self.left_mean + self.right_mean

    def left_cdf(self, x):
        return -np.expm1(-self.left_rate * np.maximum(x, 0.0))

    def right_cdf(self, x):
        return -np.expm1(-self.right_rate * np.maximum(x, 0.0))


def _log_series(log_ratio, k: int):
    """sum_{m<k} L^m / m! by the term recurrence."""
    if k < 1:
        raise ValueError("k must be >= 1")
    term = np.ones_like(log_ratio)
    total = np.ones_like(log_ratio)
    for m in range(1, k):
        term = term * log_ratio / m
        total = total + term
    return total


def _check_range(x, lo, hi, name="x"):
    x = np.asarray(x, dtype=float)
    if np.any(x < lo) or np.any(x > hi) or np.any(np.isnan(x)):
        raise ValueError(f"{name} must lie in [{lo}, {hi}]")
    return x


def _scalar(value, like):
    return float(value) if np.ndim(like) == 0 else value


def _frac_times_series(frac, k):
    """frac * sum_{m<k} ln(1/frac)^m/m!, continuous at frac = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        log_ratio = -np.log(frac)
        out = frac * _log_series(log_ratio, k)
    return np.where(frac > 0.0, out, 0.0)


def nested_uniform_cdf(k: int, x, a: float = 0.0, b: float = 1.0):
    """CDF of U_k where U_1 ~ U[a, b] and U_j ~ U[a, U_{j-1}]."""
    if not a < b:
        raise ValueError("need a < b")
    x = _check_range(x, a, b)
    return _scalar(_frac_times_series((x - a) / (b - a), k), x)


def nested_uniform_mean(k: int, a: float = 0.0, b: float = 1.0) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    if not a < b:
        raise ValueError("need a < b")
    return a + (b - a) / 2.0**k


def g_transform(t: float, x):
    """x / (t x + 1 - t), a bijection of [0, 1]."""
    x = np.asarray(x, dtype=float)
    val = x / (t * x + 1.0 - t)
    # keep g(1) = 1 exact under rounding
    return _scalar(np.where(x <= 1.0, np.minimum(val, 1.0), val), x)


def split_limit_cdf(side: str, k: int, t: float, x):
    """Limit CDF of G^{side,k}/n on [0, t]."""
    x = _check_range(x, 0.0, t)
    if side == _LEFT:
        frac = x / (t * (x + 1.0 - t))
    elif side == _RIGHT:
        frac = x / t
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    return _scalar(_frac_times_series(np.minimum(frac, 1.0), k), x)


def joint_split_limit_cdf(k_l: int, k_r: int, t: float, x, y):
    """Limit joint CDF of (G^{l,k_l}/n, G^{r,k_r}/n): a product of marginals."""
    return split_limit_cdf(_LEFT, k_l, t, x) * split_limit_cdf(_RIGHT, k_r, t, y)


def mrca_limit_cdf(t: float, x):
    """Limit CDF of the MRCA generation divided by n."""
    x = _check_range(x, 0.0, t)
    return _scalar(1.0 - (t - x) ** 2 / (t * t * (1.0 - x)), x)


def limit_sum_cdf(spec: LimitSpec, x):
    """CDF of the sum of independent Exp(left_rate) and Exp(right_rate)."""
    lam, mu = spec.left_rate, spec.right_rate
    if lam == mu:
        raise ValueError("rates must differ")
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    val = 1.0 - (mu * np.exp(-lam * x) - lam * np.exp(-mu * x)) / (mu - lam)
    return _scalar(np.clip(val, 0.0, 1.0), x)


def l_limit_tail(t: float, sigma2: float, x):
    """P(L > x n) in the limit, L = Z_nt conditioned on extinction by n."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be >= 0")
    return _scalar(np.exp(-2.0 * x / (t * (1.0 - t) * sigma2)), x)


def l_limit_moments(t: float, sigma2: float) -> tuple[float, float]:
    """Limit first and second moments of L/n."""
    mean = t * (1.0 - t) * sigma2 / 2.0
    return mean, 2.0 * mean * mean
