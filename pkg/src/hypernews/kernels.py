"""Deterministic numpy kernels: activations, segment reductions, neighbor means.

Everything here is single-threaded, allocation-order deterministic, and dtype
preserving, so f64 runs are bitwise reproducible and f32 runs stay in f32.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAKY_SLOPE = 0.01


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, x.dtype.type(0))


def relu_grad(x: np.ndarray) -> np.ndarray:
    return (x > 0).astype(x.dtype)


def leaky_relu(x: np.ndarray, slope: float = LEAKY_SLOPE) -> np.ndarray:
    return np.where(x >= 0, x, x.dtype.type(slope) * x)


def leaky_relu_grad(x: np.ndarray, slope: float = LEAKY_SLOPE) -> np.ndarray:
    # Subgradient at 0 is 1 (the positive-branch value).
    return np.where(x >= 0, x.dtype.type(1), x.dtype.type(slope))


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], dtype) -> np.ndarray:
    """Uniform init in +-sqrt(6 / (fan_in + fan_out)); vectors use fan_out = 1.

    Values are drawn in f64 then cast, so the same seed yields the same
    numbers (up to rounding) under every precision.
    """
    fan_in = shape[0]
    fan_out = shape[1] if len(shape) > 1 else 1
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def row_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def dropout_mask(rng: np.random.Generator, shape: tuple[int, ...], rate: float, dtype) -> np.ndarray:
    """Inverted-dropout multiplier: 0 with probability `rate`, else 1/(1-rate)."""
    keep = rng.random(shape) >= rate
    scale = np.dtype(dtype).type(1.0 / (1.0 - rate))
    return keep.astype(dtype) * scale


# ---------------------------------------------------------------------------
# Segment reductions over contiguous groups delimited by an offsets array.
# `offsets` has S+1 entries with offsets[0] == 0 and offsets[-1] == len(values);
# segment s covers values[offsets[s]:offsets[s+1]] and may be empty.
# ---------------------------------------------------------------------------

def segment_sum(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    n_seg = offsets.size - 1
    out = np.zeros((n_seg,) + values.shape[1:], dtype=values.dtype)
    if n_seg == 0 or values.shape[0] == 0:
        return out
    nonempty = offsets[:-1] < offsets[1:]
    if nonempty.any():
        # reduceat over nonempty starts: skipped empty segments hold no values,
        # so each slice is exactly one original segment.
        out[nonempty] = np.add.reduceat(values, offsets[:-1][nonempty], axis=0)
    return out


def segment_max(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    n_seg = offsets.size - 1
    out = np.zeros(n_seg, dtype=values.dtype)
    if n_seg == 0 or values.shape[0] == 0:
        return out
    nonempty = offsets[:-1] < offsets[1:]
    if nonempty.any():
        out[nonempty] = np.maximum.reduceat(values, offsets[:-1][nonempty])
    return out


def segment_softmax(scores: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Per-segment softmax with max-shift stabilisation."""
    sizes = np.diff(offsets)
    shifted = scores - np.repeat(segment_max(scores, offsets), sizes)
    w = np.exp(shifted)
    denom = segment_sum(w, offsets)
    return w / np.repeat(denom, sizes)


def segment_softmax_grad(probs: np.ndarray, grad_probs: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Backprop through segment_softmax: p * (g - sum_seg(p * g))."""
    sizes = np.diff(offsets)
    inner = segment_sum(probs * grad_probs, offsets)
    return probs * (grad_probs - np.repeat(inner, sizes))


# ---------------------------------------------------------------------------
# Undirected neighbor-mean aggregation (shared by the tree encoder and the
# clique-expansion baseline).
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NeighborIndex:
    """CSR-style neighbor lists over an undirected edge set."""

    n_nodes: int
    offsets: np.ndarray     # (n+1,) int64, per-node neighbor segment bounds
    neighbors: np.ndarray   # (2E,) int64, neighbor ids grouped by owner
    owners: np.ndarray      # (2E,) int64, owner id per entry
    inv_degree: np.ndarray  # (n,) f64, zero for isolated nodes

    @classmethod
    def from_edges(cls, n_nodes: int, edges) -> "NeighborIndex":
        """Build from an iterable of (u, v) pairs; both directions are added."""
        e = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= n_nodes):
            raise ValueError("edge endpoint out of range")
        both = np.concatenate([e, e[:, ::-1]], axis=0) if e.size else e
        owners = both[:, 0] if both.size else np.zeros(0, dtype=np.int64)
        nbrs = both[:, 1] if both.size else np.zeros(0, dtype=np.int64)
        order = np.argsort(owners, kind="stable")
        owners = owners[order]
        nbrs = nbrs[order]
        counts = np.bincount(owners, minlength=n_nodes)
        offsets = np.zeros(n_nodes + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        inv = np.zeros(n_nodes, dtype=np.float64)
        np.divide(1.0, counts, out=inv, where=counts > 0)
        return cls(n_nodes, offsets, nbrs, owners, inv)


def neighbor_mean(x: np.ndarray, index: NeighborIndex) -> np.ndarray:
    """Row i of the result is the mean of x over i's neighbors (0 if none)."""
    total = segment_sum(x[index.neighbors], index.offsets)
    return total * index.inv_degree.astype(x.dtype)[:, None]


def neighbor_mean_grad(grad_out: np.ndarray, index: NeighborIndex) -> np.ndarray:
    """Adjoint of neighbor_mean (the transposed averaging operator)."""
    contrib = grad_out * index.inv_degree.astype(grad_out.dtype)[:, None]
    gx = np.zeros_like(grad_out)
    np.add.at(gx, index.neighbors, contrib[index.owners])
    return gx
