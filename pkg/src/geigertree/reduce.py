"""Reduced-tree statistics read off a decomposition trace.

Step ``i`` of a trace corresponds to the spine particle ``nt - i``
generations below the root of the reduced tree, so large split times are
splits close to the root.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geiger import DecompositionTrace

MAX_K = 4
SIDES = ("left", "right")


@dataclass
class ReducedRecord:
    """Split times, survivor counts and MRCA generation.

    Each field carries a leading replicate axis when built from a stacked
    trace; per-side sequences have ``max_k`` entries on the last axis.
    """

    nt: int
    g_left: np.ndarray
    g_right: np.ndarray
    d_left: np.ndarray
    d_right: np.ndarray
    h_left_1: np.ndarray
    h_right_1: np.ndarray
    g_both: np.ndarray
    mrca: np.ndarray

    def check(self) -> None:
        for g, d in ((self.g_left, self.d_left), (self.g_right, self.d_right)):
            assert np.all(g[..., 0] <= self.nt) and np.all(g >= 0)
            diff = g[..., :-1] - g[..., 1:]
            assert np.all((diff > 0) | (g[..., :-1] == 0))
            assert np.array_equal(d == 0, g == 0)
        assert np.all((self.mrca >= 0) & (self.mrca <= self.nt))


def _side_arrays(trace: DecompositionTrace, side: str):
    if side == "left":
        return trace.left_running, trace.left_survivors
    if side == "right":
        return trace.right_running, trace.right_survivors
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def _split_positions(running: np.ndarray, max_k: int) -> np.ndarray:
    # k-th largest i with a strict increase at i, 0 when there is none
    running = np.asarray(running)
    inc = np.zeros(running.shape, dtype=bool)
    inc[..., 1:] = running[..., 1:] > running[..., :-1]
    nt = running.shape[-1] - 1
    # rank[i] = number of increases at positions >= i
    rank = np.cumsum(inc[..., ::-1], axis=-1)[..., ::-1]
    out = np.zeros(running.shape[:-1] + (max_k,), dtype=np.int64)
    for k in range(1, max_k + 1):
        hit = inc & (rank == k)
        pos = nt - np.argmax(hit[..., ::-1], axis=-1)
        out[..., k - 1] = np.where(hit.any(axis=-1), pos, 0)
    return out


def split_times(trace: DecompositionTrace, side: str, max_k: int = MAX_K) -> np.ndarray:
    """(G^{side,1}, ..., G^{side,max_k}) padded with zeros."""
    running, _ = _side_arrays(trace, side)
    return _split_positions(running, max_k)


def compute_reduced_record(trace: DecompositionTrace, max_k: int = MAX_K) -> ReducedRecord:
    fields = {}
    for side in SIDES:
        running, surv = _side_arrays(trace, side)
        g = _split_positions(running, max_k)
        d = np.take_along_axis(surv, g, axis=-1)
        d = np.where(g > 0, d, 0)
        first = g[..., :1]
        below = np.take_along_axis(running, np.maximum(first - 1, 0), axis=-1)[..., 0]
        h = np.where(first[..., 0] > 0, below, 1)
        fields[side] = (g, d, h)
    g_both = np.maximum(fields["left"][0][..., 0], fields["right"][0][..., 0])
    return ReducedRecord(
        nt=trace.nt,
        g_left=fields["left"][0], g_right=fields["right"][0],
        d_left=fields["left"][1], d_right=fields["right"][1],
        h_left_1=fields["left"][2], h_right_1=fields["right"][2],
        g_both=g_both, mrca=trace.nt - g_both,
    )
