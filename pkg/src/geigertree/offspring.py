"""Critical offspring laws and their generating-function iterates.

The extinction probabilities ``q[m] = f_m(0)`` approach 1 like ``1 - 2/(sigma2 m)``,
so everything here is driven by the survival probabilities ``surv = 1 - q``
which keep full relative precision.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import stats

from . import _kernels

BUILTIN_LAWS = ("binary", "geometric", "poisson", "custom")

# infinite supports are cut where the tail of k^2 p_k drops below this
_TAIL_EPS = 1e-18


class LawError(ValueError):
    """An offspring law violating the critical, finite-variance assumptions."""


@dataclass(frozen=True, eq=False)
class OffspringLaw:
    """Offspring distribution ``pmf[k] = P(xi = k)``.

    For infinite supports ``pmf`` is the materialized head and ``tail_mass``
    the (analytically known) probability beyond it.
    """

    name: str
    pmf: np.ndarray
    support_kind: str = "finite"
    hint: str | None = None
    tail_mass: float = 0.0

    @cached_property
    def mean(self) -> float:
        k = np.arange(self.pmf.size)
        return math.fsum(k * self.pmf)

    @cached_property
    def sigma2(self) -> float:
        k = np.arange(self.pmf.size)
        return math.fsum(k * (k - 1) * self.pmf)

    def f(self, s):
        return np.polynomial.polynomial.polyval(s, self.pmf)

    def fprime(self, s):
        return np.polynomial.polynomial.polyval(s, _deriv(self.pmf, 1))

    def fsecond(self, s):
        return np.polynomial.polynomial.polyval(s, _deriv(self.pmf, 2))

    @cached_property
    def cdf(self) -> np.ndarray:
        return _cdf(self.pmf)

    def sampler(self, fast: bool = True):
        """(kind, param, cdf) triple understood by the compiled kernels."""
        if fast and self.hint == "binary":
            return _kernels.BINARY, 0.5, self.cdf
        if fast and self.hint == "geometric":
            return _kernels.GEOMETRIC, 0.5, self.cdf
        if fast and self.hint == "poisson":
            return _kernels.POISSON, 1.0, self.cdf
        return _kernels.TABLE, 0.0, self.cdf

    def __repr__(self):
        return f"OffspringLaw({self.name!r}, sigma2={self.sigma2:.6g})"


def _deriv(pmf: np.ndarray, order: int) -> np.ndarray:
    if pmf.size <= order:
        return np.zeros(1)
    return np.polynomial.polynomial.polyder(pmf, order)


def _cdf(pmf: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(pmf)
    cdf /= cdf[-1]
    cdf[-1] = 1.0
    return cdf


def _truncate_tail(pmf: np.ndarray) -> np.ndarray:
    k = np.arange(pmf.size)
    tail = np.cumsum((k * k * pmf)[::-1])[::-1]
    keep = np.flatnonzero(tail >= _TAIL_EPS)
    return pmf[: keep[-1] + 1] if keep.size else pmf[:1]


def build_law(name: str, params=()) -> OffspringLaw:
    """Construct and validate one of the built-in critical laws.

    ``binary``: p0 = p2 = 1/2. ``geometric``: p_k = 2^-(k+1).
    ``poisson``: Poisson(1). ``custom``: ``params`` is the explicit pmf
    table ``[p0, p1, ...]``, which must already be critical.
    """
    params = list(params)
    if name != "custom" and params:
        raise LawError(f"law {name!r} takes no parameters")
    if name == "binary":
        law = OffspringLaw("binary", np.array([0.5, 0.0, 0.5]), hint="binary")
    elif name == "geometric":
        pmf = _truncate_tail(0.5 ** (np.arange(200) + 1.0))
        law = OffspringLaw("geometric", pmf, "infinite", "geometric",
                           tail_mass=0.5 ** pmf.size)
    elif name == "poisson":
        k = np.arange(60)
        pmf = _truncate_tail(stats.poisson.pmf(k, 1.0))
        law = OffspringLaw("poisson", pmf, "infinite", "poisson",
                           tail_mass=float(stats.poisson.sf(pmf.size - 1, 1.0)))
    elif name == "custom":
        if not params:
            raise LawError("custom law needs an explicit pmf table")
        pmf = np.asarray(params, dtype=float)
        if np.any(pmf < 0) or not np.all(np.isfinite(pmf)):
            raise LawError("pmf entries must be finite and nonnegative")
        law = OffspringLaw("custom", np.trim_zeros(pmf, "b") if pmf.any() else pmf)
    else:
        raise LawError(f"unknown law {name!r}; expected one of {BUILTIN_LAWS}")
    validate_law(law)
    return law


def validate_law(law: OffspringLaw) -> None:
    total = math.fsum(law.pmf) + law.tail_mass
    if abs(total - 1.0) > 1e-12:
        raise LawError(f"pmf sums to {total!r}, not 1")
    if abs(law.mean - 1.0) > 1e-10:
        raise LawError(f"law is not critical: measured mean {law.mean!r}")
    if not np.isfinite(law.sigma2):
        raise LawError("offspring variance is infinite")
    if law.sigma2 <= 0.0:
        raise LawError("offspring variance must be positive")


@dataclass(frozen=True, eq=False)
class GfCache:
    """Iterates ``f_m(0)`` for ``m = 0..horizon`` and derived spine quantities.

    ``surv[m] = P(Z_m > 0)``; ``c[m] = surv[m] / surv[m+1]``. Arrays indexed by
    ``m`` describe the spine step ``(V_{m+1}, W_{m+1})``.
    """

    law: OffspringLaw
    horizon: int
    surv: np.ndarray

    @cached_property
    def q(self) -> np.ndarray:
        return 1.0 - self.surv

    @cached_property
    def c(self) -> np.ndarray:
        return self.surv[:-1] / self.surv[1:]

    @cached_property
    def fprime(self) -> np.ndarray:
        return self.law.fprime(self.q)

    @cached_property
    def fsecond(self) -> np.ndarray:
        return self.law.fsecond(self.q)

    def fprime_product(self, lo: int, hi: int) -> float:
        """prod_{lo <= j < hi} f'(q[j]), by a direct running product."""
        return float(np.prod(self.fprime[lo:hi]))

    @cached_property
    def _spine_moments(self) -> dict[str, np.ndarray]:
        return _spine_moments(self.law.pmf, self.surv)

    @property
    def mean_v_minus_1(self) -> np.ndarray:
        """E(V_{m+1} - 1) for m = 0..horizon-1."""
        return self._spine_moments["v1"]

    @property
    def second_v_minus_1(self) -> np.ndarray:
        """E(V_{m+1} - 1)^2."""
        return self._spine_moments["v2"]

    @property
    def mean_x(self) -> np.ndarray:
        """E(X_{m+1}) = E(W_{m+1} - V_{m+1})."""
        return self._spine_moments["x1"]

    @property
    def second_x(self) -> np.ndarray:
        """E(X_{m+1})^2."""
        return self._spine_moments["x2"]

    @cached_property
    def w_cdf(self) -> np.ndarray:
        """Row m: CDF over k of P(W_{m+1} = k) = p_k (1 - q_m^k) / surv[m+1]."""
        p = self.law.pmf
        k = np.arange(p.size)
        s = self.surv[:-1, None]
        with np.errstate(invalid="ignore"):
            hit = np.where(s >= 1.0, (k > 0).astype(float),
                           -np.expm1(k * _log1p_neg(s)))
        w = p * hit
        cdf = np.cumsum(w, axis=1)
        cdf /= cdf[:, -1:]
        cdf[:, -1] = 1.0
        return cdf

    def tilted_sampler_tables(self):
        """Per-depth (kind, param[m], cdf[m]) for the tilted law, m < horizon."""
        kind, _, _ = self.law.sampler()
        q = self.q
        if kind == _kernels.BINARY:
            param = 0.5 * q[:-1] ** 2 / q[1:]
        elif kind == _kernels.GEOMETRIC:
            param = 1.0 - q[:-1] / 2.0
        elif kind == _kernels.POISSON:
            param = q[:-1].copy()
        else:
            param = np.zeros(self.horizon)
        if kind == _kernels.TABLE:
            p = self.law.pmf
            j = np.arange(p.size)
            pmf = p * q[:-1, None] ** j
            cdf = np.cumsum(pmf, axis=1)
            cdf /= cdf[:, -1:]
            cdf[:, -1] = 1.0
        else:
            cdf = np.zeros((1, 1))
        return kind, param, cdf


def _log1p_neg(s: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log1p(-s)


def _spine_moments(pmf: np.ndarray, surv: np.ndarray, chunk: int = 8192):
    """Moments of (V_{m+1} - 1) and X_{m+1} from the joint law

    P(V-1 = j, X = x) = c_m p_{j+1+x} q_m^j, summed as positive series.
    """
    K = pmf.size - 1
    k = np.arange(K + 2)
    pk = np.append(pmf, 0.0)
    # tails over s = 0..K+1
    tail = np.cumsum(pk[::-1])[::-1]
    tail_k = np.cumsum((k * pk)[::-1])[::-1]
    tail_k2 = np.cumsum((k * k * pk)[::-1])[::-1]
    s = k
    a = tail_k - s * tail                        # sum_{k>=s} (k-s) p_k
    b = tail_k2 - 2 * s * tail_k + s * s * tail  # sum_{k>=s} (k-s)^2 p_k
    j = np.arange(K)
    t1, a1, b1 = tail[j + 1], a[j + 1], b[j + 1]

    m_count = surv.size - 1
    out = {name: np.empty(m_count) for name in ("v1", "v2", "x1", "x2")}
    for lo in range(0, m_count, chunk):
        hi = min(lo + chunk, m_count)
        q = 1.0 - surv[lo:hi, None]
        c = surv[lo:hi] / surv[lo + 1:hi + 1]
        qj = q ** j
        out["v1"][lo:hi] = c * (qj * (j * t1)).sum(axis=1)
        out["v2"][lo:hi] = c * (qj * (j * j * t1)).sum(axis=1)
        out["x1"][lo:hi] = c * (qj * a1).sum(axis=1)
        out["x2"][lo:hi] = c * (qj * b1).sum(axis=1)
    return out


def extinction_probs(law: OffspringLaw, horizon: int) -> GfCache:
    """Iterate ``surv[m+1] = 1 - f(1 - surv[m])`` in survival form.

    ``1 - f(1 - s) = sum_k p_k (1 - (1 - s)^k)`` with every bracket evaluated
    through ``expm1``/``log1p`` and the sum compensated.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    p = law.pmf
    k = np.arange(p.size)
    surv = np.empty(horizon + 1)
    surv[0] = 1.0
    if horizon:
        surv[1] = math.fsum(p[1:])
    alive = (k > 0).astype(float)
    for m in range(1, horizon):
        # surv = 1 only when p_0 = 0; then every nonempty family survives
        hit = alive if surv[m] >= 1.0 else -np.expm1(k * math.log1p(-surv[m]))
        surv[m + 1] = math.fsum(p * hit)
    return GfCache(law, horizon, surv)


def spine_step_pmf(cache: GfCache, m: int, j: int, k: int) -> float:
    """P(V_{m+1} = j, W_{m+1} = k) = c_m p_k q_m^(j-1)."""
    if not 1 <= j <= k:
        raise ValueError(f"need 1 <= j <= k, got j={j}, k={k}")
    if not 0 <= m < cache.horizon:
        raise ValueError(f"m={m} outside [0, {cache.horizon})")
    p = cache.law.pmf
    pk = p[k] if k < p.size else 0.0
    return float(cache.c[m] * pk * cache.q[m] ** (j - 1))


def sample_spine_step(cache: GfCache, m: int, rng: np.random.Generator,
                      size: int | None = None):
    """Exact draw of (V_{m+1}, W_{m+1}); ``size`` rows of (V, W) if given."""
    if not 0 <= m < cache.horizon:
        raise ValueError(f"m={m} outside [0, {cache.horizon})")
    if size is not None:
        out = np.empty((size, 2), dtype=np.int64)
        _kernels.spine_steps(rng, cache.w_cdf[m], cache.surv[m], out)
        return out
    v, w = _kernels.spine_step(rng, cache.w_cdf[m], cache.surv[m])
    return int(v), int(w)


@dataclass(frozen=True, eq=False)
class TiltedLaw:
    """Offspring law conditioned on the line dying within ``depth + 1`` steps.

    ``pmf[j] = p_j q_depth^j / q_{depth+1}``.
    """

    base: OffspringLaw
    depth: int
    q_depth: float
    q_next: float
    pmf: np.ndarray

    @property
    def mean(self) -> float:
        return math.fsum(np.arange(self.pmf.size) * self.pmf)

    def sampler(self, fast: bool = True):
        kind, _, _ = self.base.sampler(fast)
        q = self.q_depth
        if kind == _kernels.BINARY:
            return kind, 0.5 * q * q / self.q_next, _cdf(self.pmf)
        if kind == _kernels.GEOMETRIC:
            return kind, 1.0 - q / 2.0, _cdf(self.pmf)
        if kind == _kernels.POISSON:
            return kind, q, _cdf(self.pmf)
        return _kernels.TABLE, 0.0, _cdf(self.pmf)


def tilted_law(cache: GfCache, m: int) -> TiltedLaw:
    if not 0 <= m < cache.horizon:
        raise ValueError(f"m={m} outside [0, {cache.horizon})")
    q_m, q_next = float(cache.q[m]), float(cache.q[m + 1])
    if q_next <= 0.0:
        raise LawError("extinction-conditioning impossible: p_0 = 0")
    p = cache.law.pmf
    pmf = p * q_m ** np.arange(p.size) / q_next
    return TiltedLaw(cache.law, m, q_m, q_next, pmf)


def aggregate_offspring_sum(law, m: int, rng: np.random.Generator,
                            fast: bool = True, size: int | None = None):
    """Sum of ``m`` i.i.d. draws from an OffspringLaw or TiltedLaw.

    With ``fast`` the closed-form sum law is used when one exists
    (binomial, negative binomial, Poisson); otherwise ``m`` single draws.
    With ``size`` an array of that many independent sums is returned.
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    kind, param, cdf = law.sampler(fast)
    if size is not None:
        out = np.empty(size, dtype=np.int64)
        _kernels.offspring_sums(rng, kind, param, cdf, int(m), out)
        return out
    return int(_kernels.offspring_sum(rng, kind, param, cdf, int(m)))
