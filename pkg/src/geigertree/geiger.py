"""Sampling Geiger's conditioned tree and its left/right decomposition.

Large-n sampling never builds trees: every sibling attached to the spine
founds a population-count process (tilted on the left, ordinary on the
right) that is dropped as soon as it dies out. Small-n reference trees are
grown explicitly by rejection for cross-checking.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from . import _kernels
from .offspring import GfCache, OffspringLaw, TiltedLaw, extinction_probs

# replicates sharing one random stream; stream b is seeded by (seed, b)
BLOCK_SIZE = 1000
DEFAULT_MAX_ATTEMPTS = 10**7
_TREE_BUFFER = 1 << 22


class SpineStep(NamedTuple):
    v: int
    w: int

    @property
    def x(self) -> int:
        return self.w - self.v


def split_index(n: int, t: float) -> int:
    """``floor(n t)``, checked to be a usable generation."""
    if not 0.0 < t < 1.0:
        raise ValueError(f"t must lie in (0, 1), got {t}")
    nt = math.floor(n * t)
    if nt < 1:
        raise ValueError(f"floor(n*t) = {nt}; need n*t >= 1")
    return nt


@dataclass
class DecompositionTrace:
    """Per-step running counts of the left and right parts at generation nt.

    Arrays have length ``nt + 1`` along the last axis (index ``i = 0..nt``);
    a leading axis, when present, runs over replicates.
    """

    n: int
    nt: int
    left_running: np.ndarray
    right_running: np.ndarray
    left_survivors: np.ndarray
    right_survivors: np.ndarray

    @classmethod
    def from_increments(cls, n, nt, left_inc, right_inc, left_surv, right_surv):
        left = np.cumsum(left_inc, axis=-1)
        right = np.cumsum(right_inc, axis=-1)
        left += 1
        right += 1
        return cls(n, nt, left, right, left_surv, right_surv)

    @property
    def z_left(self):
        return self.left_running[..., -1]

    @property
    def z_right(self):
        return self.right_running[..., -1]

    @property
    def z_total(self):
        return self.z_left + self.z_right - 1

    def __len__(self):
        return 1 if self.left_running.ndim == 1 else self.left_running.shape[0]

    def replicate(self, r: int) -> "DecompositionTrace":
        return DecompositionTrace(self.n, self.nt, self.left_running[r],
                                  self.right_running[r], self.left_survivors[r],
                                  self.right_survivors[r])

    def check(self) -> None:
        """Assert the structural invariants of a well-formed trace."""
        for run, surv in ((self.left_running, self.left_survivors),
                          (self.right_running, self.right_survivors)):
            assert np.all(run[..., 0] == 1)
            inc = np.diff(run, axis=-1)
            assert np.all(inc >= 0)
            assert np.array_equal(inc > 0, surv[..., 1:] > 0)
        assert np.all(self.z_total >= 1)


class _Tables:
    """Kernel inputs for one (cache, n) pair."""

    def __init__(self, cache: GfCache, n: int):
        if cache.horizon < n:
            raise ValueError(f"cache horizon {cache.horizon} < n = {n}")
        law = cache.law
        self.kind, self.base_param, self.base_cdf = law.sampler()
        kind, tilt_param, tilt_cdf = cache.tilted_sampler_tables()
        assert kind == self.kind
        self.tilt_param = tilt_param[:n]
        self.tilt_cdf = tilt_cdf[:n] if tilt_cdf.shape[0] > 1 else tilt_cdf
        self.w_cdf = cache.w_cdf[:n]
        self.surv = cache.surv


def _tables(cache: GfCache, n: int) -> _Tables:
    store = cache.__dict__.setdefault("_kernel_tables", {})
    if n not in store:
        store[n] = _Tables(cache, n)
    return store[n]


def _run_kernel(cache, n, nt, rng, reps, prune):
    tb = _tables(cache, n)
    shape = (reps, nt + 1)
    left_inc = np.empty(shape, dtype=np.int64)
    right_inc = np.empty(shape, dtype=np.int64)
    left_surv = np.empty(shape, dtype=np.int64)
    right_surv = np.empty(shape, dtype=np.int64)
    _kernels.decompose_block(rng, n, nt, tb.kind, tb.base_param, tb.base_cdf,
                             tb.tilt_param, tb.tilt_cdf, tb.w_cdf, tb.surv,
                             prune, left_inc, right_inc, left_surv, right_surv)
    return DecompositionTrace.from_increments(n, nt, left_inc, right_inc,
                                              left_surv, right_surv)


def simulate_geiger_decomposition(cache: GfCache, n: int, t: float,
                                  rng: np.random.Generator,
                                  prune: bool = True) -> DecompositionTrace:
    """One replicate of the left/right decomposition of Z_{nt} given Z_n > 0.

    Step ``i`` draws the spine step at horizon index ``n - nt + i - 1``,
    then evolves its ``V - 1`` left siblings under the extinction-tilted law
    and its ``X`` right siblings under the ordinary law up to generation nt.
    ``prune=False`` keeps evolving extinct subtrees (for testing only).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    nt = split_index(n, t)
    return _run_kernel(cache, n, nt, rng, 1, prune).replicate(0)


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng([seed, block])


def simulate_batch(cache: GfCache, n: int, t: float, reps: int, seed: int,
                   prune: bool = True, block_size: int = BLOCK_SIZE
                   ) -> Iterator[DecompositionTrace]:
    """Yield stacked traces, one block of replicates at a time.

    Replicate ``r`` lives in block ``r // block_size`` whose stream is
    ``default_rng([seed, block])``, so its value depends only on
    ``(seed, r)`` and the block size, never on ``reps``.
    """
    nt = split_index(n, t)
    for block, lo in enumerate(range(0, reps, block_size)):
        size = min(block_size, reps - lo)
        yield _run_kernel(cache, n, nt, block_rng(seed, block), size, prune)


def simulate_subtree_counts(law, start_gen: int, end_gen: int,
                            rng: np.random.Generator,
                            cache: GfCache | None = None,
                            extinct_by: int | None = None):
    """Evolve one particle at ``start_gen`` to ``end_gen``.

    ``law`` is an OffspringLaw (ordinary subtree) or ``"tilted"`` together
    with ``cache`` and ``extinct_by``: the subtree is then conditioned to be
    extinct at absolute generation ``extinct_by``, so a particle at
    generation ``g`` reproduces by the tilted law of depth
    ``extinct_by - g - 1``. Returns the final count and the alive flag of
    every generation from ``start_gen`` to ``end_gen``.
    """
    if start_gen > end_gen:
        raise ValueError("start_gen must not exceed end_gen")
    if isinstance(law, OffspringLaw):
        kind, param, cdf = law.sampler()
        tilted = None
    elif law == "tilted" or isinstance(law, TiltedLaw):
        if cache is None or extinct_by is None:
            raise ValueError("tilted subtrees need cache and extinct_by")
        kind, tparam, tcdf = cache.tilted_sampler_tables()
        tilted = True
    else:
        raise TypeError(f"unsupported law {law!r}")

    pop = 1
    alive = [True]
    for g in range(start_gen, end_gen):
        if pop == 0:
            alive.append(False)
            continue
        if tilted:
            depth = extinct_by - g - 1
            if depth < 0:
                pop = 0
                alive.append(False)
                continue
            row = tcdf[depth] if tcdf.shape[0] > 1 else tcdf[0]
            pop = int(_kernels.offspring_sum(rng, kind, tparam[depth], row, pop))
        else:
            pop = int(_kernels.offspring_sum(rng, kind, param, cdf, pop))
        alive.append(pop > 0)
    return pop, np.array(alive)


# ---------------------------------------------------------------------------
# reference trees


@dataclass
class GwTree:
    """Rooted planar tree stored level by level.

    ``offspring[g]`` lists the children counts of the generation-``g`` nodes
    from left to right; children of a node are contiguous in the next level.
    """

    offspring: list = field(default_factory=list)
    attempts: int = 1

    @property
    def depth(self) -> int:
        return len(self.offspring)

    def generation_size(self, g: int) -> int:
        if g == 0:
            return 1
        return int(np.sum(self.offspring[g - 1]))

    def children(self, g: int, j: int) -> range:
        start = int(np.sum(self.offspring[g][:j]))
        return range(start, start + int(self.offspring[g][j]))

    @classmethod
    def from_nested(cls, tree, depth: int) -> "GwTree":
        """Build from nested lists: a node is the list of its children."""
        levels, frontier = [], [tree]
        for _ in range(depth):
            levels.append(np.array([len(node) for node in frontier], dtype=np.int64))
            frontier = [child for node in frontier for child in node]
        return cls(levels)

    def flat(self):
        counts = (np.concatenate(self.offspring) if self.offspring
                  else np.zeros(0, dtype=np.int64))
        gen_start = np.zeros(self.depth + 1, dtype=np.int64)
        gen_start[1:] = np.cumsum([len(level) for level in self.offspring])
        return counts.astype(np.int64), gen_start


def sample_conditioned_tree_rejection(law: OffspringLaw, n: int,
                                      rng: np.random.Generator,
                                      max_attempts: int = DEFAULT_MAX_ATTEMPTS
                                      ) -> GwTree:
    """Ordinary GW tree grown to depth ``n``, resampled until Z_n > 0."""
    if n == 0:
        return GwTree([], attempts=1)
    counts = np.empty(_TREE_BUFFER, dtype=np.int64)
    gen_start = np.zeros(n + 1, dtype=np.int64)
    for attempt in range(1, max_attempts + 1):
        if _kernels.grow_tree(rng, law.cdf, n, counts, gen_start) > 0:
            levels = [counts[gen_start[g]:gen_start[g + 1]].copy() for g in range(n)]
            return GwTree(levels, attempts=attempt)
    raise RuntimeError(f"no surviving tree after {max_attempts} attempts")


def decompose_reference_tree(tree: GwTree, n: int, t: float):
    """Split generation-nt particles of an explicit tree around its spine.

    Returns ``(z_left, z_right, trace)``; both parts include the spine
    particle, so ``z_left + z_right - 1`` is the generation-nt size.
    """
    nt = split_index(n, t)
    if tree.depth < n:
        raise ValueError("tree is shallower than the horizon")
    counts, gen_start = tree.flat()
    if tree.generation_size(n) == 0:
        raise ValueError("tree is extinct at generation n")
    arrays = [np.zeros(nt + 1, dtype=np.int64) for _ in range(4)]
    _kernels.decompose_tree(counts, gen_start, n, nt, *arrays)
    trace = DecompositionTrace.from_increments(n, nt, *arrays)
    return int(trace.z_left), int(trace.z_right), trace


def reference_batch(law: OffspringLaw, n: int, t: float, reps: int, seed: int,
                    max_attempts: int = DEFAULT_MAX_ATTEMPTS,
                    block_size: int = 100_000):
    """Stacked decompositions of ``reps`` rejection-sampled trees."""
    nt = split_index(n, t)
    counts = np.empty(_TREE_BUFFER, dtype=np.int64)
    gen_start = np.zeros(n + 1, dtype=np.int64)
    blocks, attempts = [], 0
    for block, lo in enumerate(range(0, reps, block_size)):
        size = min(block_size, reps - lo)
        arrays = [np.zeros((size, nt + 1), dtype=np.int64) for _ in range(4)]
        attempts += _kernels.reference_block(block_rng(seed, block), law.cdf, n,
                                             nt, max_attempts, counts,
                                             gen_start, *arrays)
        blocks.append(arrays)
    stacked = [np.concatenate([b[k] for b in blocks]) for k in range(4)]
    return DecompositionTrace.from_increments(n, nt, *stacked), attempts


def conditioned_cache(law: OffspringLaw, n: int) -> GfCache:
    return extinction_probs(law, n)
