"""Compiled inner loops.

Every kernel takes a ``numpy.random.Generator`` and consumes it in a fixed
order, so a seeded generator fully determines the output.
"""
import math

import numba
import numpy as np

# aggregate-sum strategies for an offspring law (see OffspringLaw.kind)
BINARY = 0      # xi in {0, 2}; sum of m draws is 2 * Binomial(m, p2)
GEOMETRIC = 1   # xi ~ Geometric(s) on {0, 1, ...}; sum is NegBinomial(m, s)
POISSON = 2     # xi ~ Poisson(lam); sum is Poisson(m * lam)
TABLE = 3       # generic: m inverse-CDF draws


@numba.njit(cache=True)
def offspring_sum(rng, kind, param, cdf, m):
    """Sum of ``m`` i.i.d. offspring draws."""
    if m <= 0:
        return 0
    if kind == BINARY:
        return 2 * rng.binomial(m, param)
    if kind == GEOMETRIC:
        return rng.negative_binomial(m, param)
    if kind == POISSON:
        return rng.poisson(m * param)
    total = 0
    for _ in range(m):
        total += np.searchsorted(cdf, rng.random(), side="right")
    return total


@numba.njit(cache=True)
def spine_step(rng, w_cdf, surv_m):
    """Draw (V, W): W from its marginal, then V | W truncated-geometric.

    Always consumes exactly two uniforms.
    """
    w = np.searchsorted(w_cdf, rng.random(), side="right")
    u = rng.random()
    if surv_m >= 1.0:
        return 1, w
    log_q = math.log1p(-surv_m)
    mass = -math.expm1(w * log_q)  # 1 - q**w
    v = int(math.ceil(math.log1p(-u * mass) / log_q))
    if v < 1:
        v = 1
    elif v > w:
        v = w
    return v, w


@numba.njit(cache=True)
def spine_steps(rng, w_cdf, surv_m, out):
    for r in range(out.shape[0]):
        out[r, 0], out[r, 1] = spine_step(rng, w_cdf, surv_m)


@numba.njit(cache=True)
def offspring_sums(rng, kind, param, cdf, m, out):
    for r in range(out.shape[0]):
        out[r] = offspring_sum(rng, kind, param, cdf, m)


@numba.njit(cache=True)
def decompose_block(rng, n, nt, kind, base_param, base_cdf, tilt_param,
                    tilt_cdf, w_cdf, surv, prune,
                    left_inc, right_inc, left_surv, right_surv):
    """Fill per-step increments and surviving-sibling counts for a block.

    Row ``r`` of each output is one replicate; column ``i`` (1..nt) is the
    contribution of the siblings of the spine particle at generation
    ``nt - i + 1``. Per step the stream is consumed as: spine step, then the
    left subtrees one by one, then the right subtrees one by one.
    """
    reps = left_inc.shape[0]
    table = kind == TABLE
    for r in range(reps):
        left_inc[r, 0] = 0
        right_inc[r, 0] = 0
        left_surv[r, 0] = 0
        right_surv[r, 0] = 0
        for i in range(1, nt + 1):
            m = n - nt + i - 1
            v, w = spine_step(rng, w_cdf[m], surv[m])

            inc = 0
            alive = 0
            for _ in range(v - 1):
                pop = 1
                for k in range(1, i):
                    if prune and pop == 0:
                        break
                    idx = m - k
                    pop = offspring_sum(rng, kind, tilt_param[idx],
                                        tilt_cdf[idx if table else 0], pop)
                if pop > 0:
                    inc += pop
                    alive += 1
            left_inc[r, i] = inc
            left_surv[r, i] = alive

            inc = 0
            alive = 0
            for _ in range(w - v):
                pop = 1
                for k in range(1, i):
                    if prune and pop == 0:
                        break
                    pop = offspring_sum(rng, kind, base_param, base_cdf, pop)
                if pop > 0:
                    inc += pop
                    alive += 1
            right_inc[r, i] = inc
            right_surv[r, i] = alive


@numba.njit(cache=True)
def grow_tree(rng, cdf, depth, counts, gen_start):
    """Grow an ordinary GW tree level by level up to ``depth``.

    ``counts`` receives the children count of every node of generations
    ``0..depth-1`` in planar (left-to-right) order; generation ``g`` occupies
    ``counts[gen_start[g]:gen_start[g + 1]]``. Returns the size of
    generation ``depth``, or 0 as soon as the line dies out.
    """
    gen_start[0] = 0
    size = 1
    pos = 0
    for g in range(depth):
        if pos + size > counts.shape[0]:
            raise ValueError("tree buffer exhausted")
        nxt = 0
        for j in range(size):
            c = np.searchsorted(cdf, rng.random(), side="right")
            counts[pos + j] = c
            nxt += c
        pos += size
        gen_start[g + 1] = pos
        size = nxt
        if size == 0:
            return 0
    return size


@numba.njit(cache=True)
def _descendants(counts, gen_start, depth, top):
    """Number of generation-``depth`` descendants of every node above it."""
    out = np.zeros(gen_start[depth] + top, dtype=np.int64)
    for j in range(top):
        out[gen_start[depth] + j] = 1
    for g in range(depth - 1, -1, -1):
        child = gen_start[g + 1]
        for j in range(gen_start[g], gen_start[g + 1]):
            s = 0
            for _ in range(counts[j]):
                s += out[child]
                child += 1
            out[j] = s
    return out


@numba.njit(cache=True)
def decompose_tree(counts, gen_start, n, nt, left_inc, right_inc,
                   left_surv, right_surv):
    """Walk the spine of a tree surviving to ``n`` down to generation ``nt``.

    The spine child of a node is its left-most child with a generation-``n``
    descendant. Siblings strictly left (right) of it feed the left (right)
    part, indexed by step ``i = nt - g`` for a spine node at generation ``g``.
    """
    size_n = 1
    if n > 0:
        size_n = 0
        for j in range(gen_start[n - 1], gen_start[n]):
            size_n += counts[j]
    desc_n = _descendants(counts, gen_start, n, size_n)
    size_nt = gen_start[nt + 1] - gen_start[nt] if nt < n else size_n
    desc_nt = _descendants(counts, gen_start, nt, size_nt)
    if desc_n[0] == 0:
        raise ValueError("tree is extinct at the horizon")

    node = 0
    for g in range(nt):
        i = nt - g
        first = gen_start[g + 1]
        for j in range(gen_start[g], node):
            first += counts[j]
        k = counts[node]
        spine = -1
        for c in range(k):
            if desc_n[first + c] > 0:
                spine = c
                break
        inc = 0
        alive = 0
        for c in range(spine):
            d = desc_nt[first + c]
            inc += d
            if d > 0:
                alive += 1
        left_inc[i] = inc
        left_surv[i] = alive
        inc = 0
        alive = 0
        for c in range(spine + 1, k):
            d = desc_nt[first + c]
            inc += d
            if d > 0:
                alive += 1
        right_inc[i] = inc
        right_surv[i] = alive
        node = first + spine
    return desc_nt[0]


@numba.njit(cache=True)
def reference_block(rng, cdf, n, nt, max_attempts, counts, gen_start,
                    left_inc, right_inc, left_surv, right_surv):
    """Rejection-sample and decompose one conditioned tree per row."""
    attempts_total = 0
    for r in range(left_inc.shape[0]):
        tries = 0
        while True:
            tries += 1
            if grow_tree(rng, cdf, n, counts, gen_start) > 0:
                break
            if tries >= max_attempts:
                raise RuntimeError("rejection sampler exhausted its attempts")
        attempts_total += tries
        decompose_tree(counts, gen_start, n, nt, left_inc[r], right_inc[r],
                       left_surv[r], right_surv[r])
    return attempts_total
