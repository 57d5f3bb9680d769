"""Exact finite-n moments and small-n exact laws.

Left siblings of the spine evolve as a branching process in varying
environment whose generation-``a`` offspring law is the extinction-tilted
law of depth ``a``; its mean and factorial second moment are

    mu(a) = f'(q_a) q_a / q_{a+1},   nu(a) = f''(q_a) q_a^2 / q_{a+1}.

Every expectation below is a finite sum over these per-generation factors,
so nothing relies on derivatives of the iterates themselves.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .geiger import split_index
from .offspring import GfCache, LawError


def _check_conditionable(cache: GfCache) -> None:
    if cache.law.pmf[0] <= 0.0:
        raise LawError("extinction-conditioning impossible: p_0 = 0")


class _LeftProfile:
    """Mean and factorial second moment of Z^{l,i} for every i = 0..nt."""

    def __init__(self, cache: GfCache, n: int, nt: int):
        _check_conditionable(cache)
        if cache.horizon < n:
            raise ValueError(f"cache horizon {cache.horizon} < n = {n}")
        base = n - nt
        a = np.arange(base, n)
        q = cache.q
        mu = cache.fprime[a] * q[a] / q[a + 1]
        nu_over_mu = cache.fsecond[a] * q[a] / cache.fprime[a]
        # prod[i] = prod_{base <= b < base + i} mu(b)
        prod = np.ones(nt + 1)
        prod[1:] = np.cumprod(mu)
        acc = np.zeros(nt + 1)
        acc[1:] = np.cumsum(nu_over_mu * prod[:-1])
        self.mean = prod
        self.factorial2 = prod * acc

    @property
    def variance(self):
        return self.factorial2 + self.mean - self.mean**2


def _profile(cache: GfCache, n: int, nt: int) -> _LeftProfile:
    store = cache.__dict__.setdefault("_left_profiles", {})
    if (n, nt) not in store:
        store[(n, nt)] = _LeftProfile(cache, n, nt)
    return store[(n, nt)]


def _step_index(cache: GfCache, n: int, t: float):
    nt = split_index(n, t)
    if cache.horizon < n:
        raise ValueError(f"cache horizon {cache.horizon} < n = {n}")
    # spine step i = 1..nt uses horizon index n - nt + i - 1
    return nt, np.arange(n - nt, n)


def expected_left_fragment(cache: GfCache, n: int, t: float, i: int) -> float:
    """E Z^{l,i}: a left sibling's descendants after ``i`` tilted generations."""
    nt = split_index(n, t)
    if not 0 <= i <= nt:
        raise ValueError(f"i must lie in [0, {nt}]")
    return float(_profile(cache, n, nt).mean[i])


def expected_left_fragment_second(cache: GfCache, n: int, t: float, i: int) -> float:
    """E Z^{l,i}(Z^{l,i} - 1)."""
    nt = split_index(n, t)
    if not 0 <= i <= nt:
        raise ValueError(f"i must lie in [0, {nt}]")
    return float(_profile(cache, n, nt).factorial2[i])


def _fsum(x) -> float:
    return math.fsum(np.asarray(x, dtype=float))


def expected_left_count(cache: GfCache, n: int, t: float) -> float:
    """a_nt = E Z^l_nt, spine particle included."""
    nt, m = _step_index(cache, n, t)
    ey = _profile(cache, n, nt).mean[:-1]
    return 1.0 + _fsum(cache.mean_v_minus_1[m] * ey)


def expected_right_count(cache: GfCache, n: int, t: float) -> float:
    """c_nt = E Z^r_nt, spine particle included."""
    _, m = _step_index(cache, n, t)
    return 1.0 + _fsum(cache.mean_x[m])


def _compound_second(en, en2, ey, var_y):
    """E(sum_i S_i)^2 for independent S_i = Y_1 + ... + Y_{N_i}."""
    es = en * ey
    i1 = _fsum(es) ** 2 - _fsum(es * es)
    i2 = _fsum(en2 * ey * ey)
    i3 = _fsum(en * var_y)
    return i1, i2, i3


def left_second_moment_terms(cache: GfCache, n: int, t: float):
    """(I1, I2, I3) with E(Z^l - 1)^2 = I1 + I2 + I3."""
    nt, m = _step_index(cache, n, t)
    prof = _profile(cache, n, nt)
    return _compound_second(cache.mean_v_minus_1[m], cache.second_v_minus_1[m],
                            prof.mean[:-1], prof.variance[:-1])


def expected_left_second(cache: GfCache, n: int, t: float) -> float:
    a = expected_left_count(cache, n, t)
    return 1.0 + 2.0 * (a - 1.0) + sum(left_second_moment_terms(cache, n, t))


def right_second_moment_terms(cache: GfCache, n: int, t: float):
    nt, m = _step_index(cache, n, t)
    i = np.arange(1, nt + 1)
    ones = np.ones(nt)
    return _compound_second(cache.mean_x[m], cache.second_x[m], ones,
                            (i - 1) * cache.law.sigma2)


def expected_right_second(cache: GfCache, n: int, t: float) -> float:
    c = expected_right_count(cache, n, t)
    return 1.0 + 2.0 * (c - 1.0) + sum(right_second_moment_terms(cache, n, t))


def l_moments_exact(cache: GfCache, n: int, t: float) -> tuple[float, float]:
    """(E L, E L^2) for L = Z_nt given Z_n = 0 < Z_nt."""
    _check_conditionable(cache)
    nt = split_index(n, t)
    q = cache.q
    # q_n - q_nt = surv_nt - surv_n keeps precision
    denom = cache.surv[nt] - cache.surv[n]
    if denom <= 0.0:
        raise LawError("q_nt must be below q_n")
    prof = _profile(cache, n, nt)
    mean_z = prof.mean[nt]
    second_z = prof.factorial2[nt] + mean_z
    return float(q[n] * mean_z / denom), float(q[n] * second_z / denom)


def expected_survivor_count(cache: GfCache, n: int) -> float:
    """d_n = E(Z_n | Z_n > 0) = 1 / P(Z_n > 0)."""
    return 1.0 / cache.surv[n]


def exact_split_probability(cache: GfCache, n: int, t: float, side: str) -> np.ndarray:
    """Exact P(the side's running count grows at step i + 1), i = 0..nt-1.

    A sibling born at step ``i + 1`` needs ``i`` more generations; it is
    alive then with probability ``1 - q_i`` (right) or
    ``1 - q_i / q_m`` given extinction by n (left), ``m`` the step's index.
    """
    nt, m = _step_index(cache, n, t)
    q = cache.q
    p = cache.law.pmf
    k = np.arange(p.size)
    j = np.arange(p.size)
    out = np.empty(nt)
    for i in range(nt):
        qm, qi = q[m[i]], q[i]
        # P(V - 1 = j, W = k) = c p_k q_m^j, 0 <= j < k
        weight = np.where(j[:, None] < k[None, :], p[None, :] * qm ** j[:, None], 0.0)
        if side == "left":
            gen = weight * (qi / qm if qm > 0 else 0.0) ** j[:, None]
        elif side == "right":
            gen = weight * qi ** np.maximum(k[None, :] - 1 - j[:, None], 0)
        else:
            raise ValueError(f"side must be 'left' or 'right', got {side!r}")
        out[i] = 1.0 - cache.c[m[i]] * gen.sum()
    return out


def exact_split_time_cdf(cache: GfCache, n: int, t: float, side: str,
                         k: int = 1) -> np.ndarray:
    """Exact P(G^{side,k} <= g) for g = 0..nt.

    Steps contribute independently, so G^{side,k} <= g exactly when fewer
    than ``k`` of the independent split events at steps g+1..nt occur.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    nt = split_index(n, t)
    p = exact_split_probability(cache, n, t, side)
    # dist[j] = P(j splits among steps above g), j < k
    dist = np.zeros(k)
    dist[0] = 1.0
    cdf = np.empty(nt + 1)
    cdf[nt] = 1.0
    for g in range(nt - 1, -1, -1):
        ps = p[g]  # step g + 1
        shifted = np.concatenate(([0.0], dist[:-1]))
        dist = dist * (1.0 - ps) + shifted * ps
        cdf[g] = dist.sum()
    return cdf


# ---------------------------------------------------------------------------
# exact laws at small n


def generation_pmfs(law, generations: int, j_max: int) -> list[np.ndarray]:
    """Laws of Z_0..Z_generations restricted to {0..j_max}.

    Entries up to ``j_max`` are exact (mass above it never flows back);
    the deficit of each array is the truncated tail.
    """
    if j_max < 1:
        raise ValueError("j_max must be >= 1")
    p = law.pmf[: j_max + 1]
    out = [np.zeros(j_max + 1)]
    out[0][1] = 1.0
    for _ in range(generations):
        prev = out[-1]
        nxt = np.zeros(j_max + 1)
        power = np.zeros(j_max + 1)
        power[0] = 1.0
        for count, weight in enumerate(prev):
            if count > 0:
                power = np.convolve(power, p)[: j_max + 1]
            if weight > 0.0:
                nxt += weight * power
        out.append(nxt)
    return out


@dataclass
class ExactLaw:
    pmf: dict
    tail: float

    def total(self) -> float:
        return math.fsum(self.pmf.values()) + self.tail


def exact_conditional_law(cache: GfCache, n: int, t: float, j_max: int = 400) -> ExactLaw:
    """Law of Z_nt given Z_n > 0 over j = 1..j_max, plus the lost tail."""
    nt = split_index(n, t)
    if cache.horizon < n:
        raise ValueError(f"cache horizon {cache.horizon} < n = {n}")
    z = generation_pmfs(cache.law, nt, j_max)[nt]
    j = np.arange(j_max + 1)
    keep = -np.expm1(j * math.log1p(-cache.surv[n - nt])) if cache.surv[n - nt] < 1 \
        else (j > 0).astype(float)
    cond = z * keep / cache.surv[n]
    tail = 1.0 - math.fsum(cond[1:])
    if tail > 1e-6:
        raise ValueError(f"truncated tail {tail:.3g} exceeds 1e-6; raise j_max above {j_max}")
    pmf = {int(k): float(cond[k]) for k in range(1, j_max + 1) if cond[k] > 0.0}
    return ExactLaw(pmf, max(tail, 0.0))


# ---------------------------------------------------------------------------
# report


@dataclass
class MomentReport:
    n: int
    t: float
    sigma2: float
    a_nt: float
    c_nt: float
    b_nt: float
    d_n: float
    left_second: float
    right_second: float
    l_second: float
    i2_over_n2: float
    targets: dict = field(default_factory=dict)
    rel_errors: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def moment_report(cache: GfCache, n: int, t: float) -> MomentReport:
    s2 = cache.law.sigma2
    a = expected_left_count(cache, n, t)
    c = expected_right_count(cache, n, t)
    b, l2 = l_moments_exact(cache, n, t)
    left2 = expected_left_second(cache, n, t)
    right2 = expected_right_second(cache, n, t)
    i2 = left_second_moment_terms(cache, n, t)[1]
    scaled = {"a_nt/n": a / n, "c_nt/n": c / n, "b_nt/n": b / n,
              "left_second/n2": left2 / n**2, "right_second/n2": right2 / n**2,
              "l_second/n2": l2 / n**2}
    lm = t * (1 - t) * s2 / 2
    rm = t * s2 / 2
    targets = {"a_nt/n": lm, "c_nt/n": rm, "b_nt/n": lm,
               "left_second/n2": 2 * lm * lm, "right_second/n2": 2 * rm * rm,
               "l_second/n2": 2 * lm * lm}
    rel = {k: abs(scaled[k] / targets[k] - 1.0) for k in targets}
    return MomentReport(n, t, s2, a, c, b, expected_survivor_count(cache, n),
                        left2, right2, l2, i2 / n**2, targets, rel)
