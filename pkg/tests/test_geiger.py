import numpy as np
import pytest

from geigertree import geiger
from geigertree.geiger import (DecompositionTrace, GwTree, SpineStep,
                               decompose_reference_tree, reference_batch,
                               sample_conditioned_tree_rejection,
                               simulate_batch, simulate_geiger_decomposition,
                               simulate_subtree_counts, split_index)
from geigertree.moments import exact_conditional_law
from geigertree.offspring import extinction_probs
from geigertree.stats import empirical_law, tv_distance


def _stack(traces):
    return DecompositionTrace(
        traces[0].n, traces[0].nt,
        *[np.concatenate([getattr(tr, f) for tr in traces])
          for f in ("left_running", "right_running", "left_survivors", "right_survivors")])


def test_spine_step_tuple():
    s = SpineStep(2, 5)
    assert s.x == 3


def test_split_index_floor():
    assert split_index(2000, 0.5) == 1000
    assert split_index(7, 0.5) == 3
    with pytest.raises(ValueError):
        split_index(1, 0.5)
    with pytest.raises(ValueError):
        split_index(10, 1.0)


def test_subtree_zero_generations(laws, rng):
    count, alive = simulate_subtree_counts(laws["binary"], 3, 3, rng)
    assert count == 1 and list(alive) == [True]
    with pytest.raises(ValueError):
        simulate_subtree_counts(laws["binary"], 4, 3, rng)


def test_subtree_one_generation_is_critical(laws, rng):
    counts = [simulate_subtree_counts(laws["binary"], 0, 1, rng)[0] for _ in range(10**5)]
    # band scaled from 1e6 draws at +-0.003
    assert abs(np.mean(counts) - 1.0) <= 0.003 * np.sqrt(10)


def test_tilted_subtree_dies_at_horizon(laws, rng, cache_factory):
    cache = cache_factory("binary", 10)
    for _ in range(1000):
        count, alive = simulate_subtree_counts("tilted", 0, 1, rng, cache=cache, extinct_by=1)
        assert count == 0 and not alive[-1]


def test_tilted_subtree_always_extinct_by_horizon(rng, cache_factory):
    cache = cache_factory("geometric", 30)
    for _ in range(500):
        count, alive = simulate_subtree_counts("tilted", 2, 12, rng, cache=cache, extinct_by=12)
        assert count == 0
        # once dead, stays dead
        assert np.all(np.diff(alive.astype(int)) <= 0)


def test_binary_n2_total_is_two(cache_factory):
    cache = cache_factory("binary", 2)
    tr = _stack(list(simulate_batch(cache, 2, 0.5, 10**4, seed=1)))
    assert np.all(tr.z_total == 2)
    tr.check()


def test_geometric_n2_exact_mass(cache_factory):
    cache = cache_factory("geometric", 2)
    tr = _stack(list(simulate_batch(cache, 2, 0.5, 10**6, seed=2)))
    assert abs(np.mean(tr.z_total == 1) - 3 / 8) <= 0.002


def test_single_replicate_api(cache_factory, rng):
    cache = cache_factory("geometric", 50)
    tr = simulate_geiger_decomposition(cache, 50, 0.3, rng)
    assert tr.nt == 15 and tr.left_running.shape == (16,)
    assert tr.z_left >= 1 and tr.z_right >= 1
    tr.check()
    with pytest.raises(ValueError):
        simulate_geiger_decomposition(cache, 1, 0.5, rng)


def test_horizon_too_short(cache_factory, rng):
    with pytest.raises(ValueError, match="horizon"):
        simulate_geiger_decomposition(cache_factory("binary", 10), 20, 0.5, rng)


def test_batch_determinism_and_prefix_stability(cache_factory):
    cache = cache_factory("poisson", 100)
    a = _stack(list(simulate_batch(cache, 100, 0.5, 2500, seed=9)))
    b = _stack(list(simulate_batch(cache, 100, 0.5, 2500, seed=9)))
    c = _stack(list(simulate_batch(cache, 100, 0.5, 1200, seed=9)))
    np.testing.assert_array_equal(a.left_running, b.left_running)
    # replicate r depends only on (seed, r)
    np.testing.assert_array_equal(a.right_running[:1200], c.right_running)
    d = _stack(list(simulate_batch(cache, 100, 0.5, 1200, seed=10)))
    assert not np.array_equal(c.right_running, d.right_running)


@pytest.mark.parametrize("name", ["binary", "geometric", "poisson"])
def test_trace_invariants_large_n(cache_factory, name):
    cache = cache_factory(name, 500)
    tr = _stack(list(simulate_batch(cache, 500, 0.5, 300, seed=3)))
    tr.check()


def test_chain_tree_decomposition():
    levels = [np.array([1])] * 6
    z_left, z_right, trace = decompose_reference_tree(GwTree(levels), 6, 0.5)
    assert z_left == z_right == 1
    trace.check()


def test_reference_tree_spine_is_leftmost_survivor():
    # root has two children, both with one child at generation 2
    tree = GwTree.from_nested([[[]], [[]]], 2)
    z_left, z_right, _ = decompose_reference_tree(tree, 2, 0.5)
    assert (z_left, z_right) == (1, 2)
    # left child has no descendants at n but is alive at nt: it joins the left part
    tree = GwTree.from_nested([[], [[]]], 2)
    z_left, z_right, _ = decompose_reference_tree(tree, 2, 0.5)
    assert (z_left, z_right) == (2, 1)


def test_reference_tree_left_siblings_counted():
    # generation 1 is [a, b, c]; a dies before n = 3, b carries the spine
    a = [[], []]
    b = [[[]]]
    c = [[], [[]]]
    tree = GwTree.from_nested([a, b, c], 3)
    z_left, z_right, tr = decompose_reference_tree(tree, 3, 0.7)  # nt = 2
    assert tree.generation_size(2) == 5
    assert z_left + z_right - 1 == tree.generation_size(2)
    assert (z_left, z_right) == (3, 3)
    assert list(tr.left_survivors) == [0, 0, 1]
    assert list(tr.right_survivors) == [0, 0, 1]
    tr.check()


def test_extinct_tree_rejected():
    tree = GwTree.from_nested([[], []], 2)
    with pytest.raises(ValueError, match="extinct"):
        decompose_reference_tree(tree, 2, 0.5)


def test_rejection_sampler(laws):
    rng = np.random.default_rng(11)
    tree = sample_conditioned_tree_rejection(laws["binary"], 0, rng)
    assert tree.attempts == 1 and tree.generation_size(0) == 1
    attempts = [sample_conditioned_tree_rejection(laws["binary"], 2, rng).attempts
                for _ in range(20000)]
    assert abs(len(attempts) / sum(attempts) - 3 / 8) <= 0.01
    attempts = [sample_conditioned_tree_rejection(laws["geometric"], 3, rng).attempts
                for _ in range(20000)]
    assert abs(len(attempts) / sum(attempts) - 1 / 4) <= 0.01
    tree = sample_conditioned_tree_rejection(laws["geometric"], 5, rng)
    assert tree.generation_size(5) > 0


def test_rejection_cap(laws):
    rng = np.random.default_rng(0)
    with pytest.raises(RuntimeError, match="attempts"):
        sample_conditioned_tree_rejection(laws["binary"], 1000, rng, max_attempts=2)


def test_reference_batch_partition(laws):
    tr, attempts = reference_batch(laws["poisson"], 8, 0.5, 2000, seed=4)
    tr.check()
    assert attempts >= 2000


@pytest.mark.parametrize("name", ["binary", "geometric"])
@pytest.mark.parametrize("n", [2, 3, 4])
def test_oracle_equivalence(cache_factory, laws, name, n):
    reps = 10**6
    cache = cache_factory(name, n) if n > 2 else extinction_probs(laws[name], n)
    tr = _stack(list(simulate_batch(cache, n, 0.5, reps, seed=20 + n)))
    exact = exact_conditional_law(cache, n, 0.5)
    assert tv_distance(empirical_law(tr.z_total), exact.pmf) <= 0.01
    ref, _ = reference_batch(laws[name], n, 0.5, reps, seed=40 + n)
    joint_geiger = empirical_law(np.column_stack([tr.z_left, tr.z_right]))
    joint_ref = empirical_law(np.column_stack([ref.z_left, ref.z_right]))
    assert tv_distance(joint_geiger, joint_ref) <= 0.015


@pytest.mark.parametrize("name", ["binary", "geometric"])
def test_exact_law_match_n6(cache_factory, name):
    cache = cache_factory(name, 6)
    tr = _stack(list(simulate_batch(cache, 6, 0.5, 10**6, seed=6)))
    exact = exact_conditional_law(cache, 6, 0.5)
    assert tv_distance(empirical_law(tr.z_total), exact.pmf) <= 0.01


def test_pruning_does_not_change_law(cache_factory):
    cache = cache_factory("geometric", 4)
    fast = _stack(list(simulate_batch(cache, 4, 0.5, 10**6, seed=7)))
    slow = _stack(list(simulate_batch(cache, 4, 0.5, 10**6, seed=8, prune=False)))
    a = empirical_law(np.column_stack([fast.z_left, fast.z_right]))
    b = empirical_law(np.column_stack([slow.z_left, slow.z_right]))
    assert tv_distance(a, b) <= 0.01


def test_spine_index_off_by_one(cache_factory):
    # at n = 2, nt = 1 the only step uses index n - nt = 1: binary V can be 2
    # (using index 0 would force V = 1 and an empty left part)
    cache = cache_factory("binary", 2)
    tr = _stack(list(simulate_batch(cache, 2, 0.5, 10**5, seed=5)))
    assert abs(np.mean(tr.z_left == 2) - 1 / 3) <= 0.006
