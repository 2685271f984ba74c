"""Propagation-tree encoder and the initial hypergraph node embeddings.

Each tree runs through two mean-aggregation message-passing layers (separate
self and neighbor weights, ReLU, undirected edges). The root state is then
concatenated with a linear projection of the raw news feature and mapped by a
fully connected layer to the initial node embedding. Trees are processed in
chunks; results are independent of the chunking because trees never share
edges.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, PropagationTree
from .kernels import (
    NeighborIndex,
    glorot_uniform,
    neighbor_mean,
    neighbor_mean_grad,
    relu,
    relu_grad,
)


@dataclass(eq=False)
class TreeEncoderParams:
    layer1_self: np.ndarray  # (F, d)
    layer1_nbr: np.ndarray   # (F, d)
    layer2_self: np.ndarray  # (d, d)
    layer2_nbr: np.ndarray   # (d, d)
    skip: np.ndarray         # (F, d) raw news feature projection
    proj_w: np.ndarray       # (2d, d)
    proj_b: np.ndarray       # (d,)

    @property
    def feature_dim(self) -> int:
        return self.layer1_self.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.layer1_self.shape[1]


def init_tree_encoder_params(
    rng: np.random.Generator, feature_dim: int, hidden_dim: int, dtype
) -> TreeEncoderParams:
    f, d = feature_dim, hidden_dim
    return TreeEncoderParams(
        layer1_self=glorot_uniform(rng, (f, d), dtype),
        layer1_nbr=glorot_uniform(rng, (f, d), dtype),
        layer2_self=glorot_uniform(rng, (d, d), dtype),
        layer2_nbr=glorot_uniform(rng, (d, d), dtype),
        skip=glorot_uniform(rng, (f, d), dtype),
        proj_w=glorot_uniform(rng, (2 * d, d), dtype),
        proj_b=np.zeros(d, dtype=dtype),
    )


# ---------------------------------------------------------------------------
# Chunked tree batches
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TreeChunk:
    features: np.ndarray     # (total_nodes, F) float32 source data
    index: NeighborIndex
    root_rows: np.ndarray    # (n_trees,) row of each tree's root
    item_ids: np.ndarray     # (n_trees,) dataset item per root


def build_tree_chunks(trees, batch_size: int) -> list[TreeChunk]:
    """Flatten trees into contiguous batches of at most `batch_size` trees."""
    chunks = []
    for start in range(0, len(trees), batch_size):
        group = trees[start : start + batch_size]
        offsets = np.zeros(len(group) + 1, dtype=np.int64)
        np.cumsum([len(t.nodes) for t in group], out=offsets[1:])
        edges = []
        for base, tree in zip(offsets[:-1], group):
            edges.extend((int(base) + p, int(base) + c) for p, c in tree.edges)
        chunks.append(
            TreeChunk(
                features=np.concatenate([t.features for t in group], axis=0),
                index=NeighborIndex.from_edges(int(offsets[-1]), edges),
                root_rows=offsets[:-1].copy(),
                item_ids=np.array([t.news_id for t in group], dtype=np.int64),
            )
        )
    return chunks


@dataclass(eq=False)
class _ChunkCache:
    x0: np.ndarray
    m1: np.ndarray
    pre1: np.ndarray
    x1: np.ndarray
    m2: np.ndarray
    pre2: np.ndarray


def _encode_chunk(params: TreeEncoderParams, chunk: TreeChunk, dtype):
    x0 = chunk.features.astype(dtype)
    m1 = neighbor_mean(x0, chunk.index)
    pre1 = x0 @ params.layer1_self + m1 @ params.layer1_nbr
    x1 = relu(pre1)
    m2 = neighbor_mean(x1, chunk.index)
    pre2 = x1 @ params.layer2_self + m2 @ params.layer2_nbr
    x2 = relu(pre2)
    return x2, _ChunkCache(x0=x0, m1=m1, pre1=pre1, x1=x1, m2=m2, pre2=pre2)


def _encode_chunk_backward(
    params: TreeEncoderParams,
    chunk: TreeChunk,
    cache: _ChunkCache,
    g_x2: np.ndarray,
    grads: dict[str, np.ndarray],
) -> None:
    g_pre2 = g_x2 * relu_grad(cache.pre2)
    grads["encoder.layer2.self"] += cache.x1.T @ g_pre2
    grads["encoder.layer2.nbr"] += cache.m2.T @ g_pre2
    g_x1 = g_pre2 @ params.layer2_self.T + neighbor_mean_grad(
        g_pre2 @ params.layer2_nbr.T, chunk.index
    )
    g_pre1 = g_x1 * relu_grad(cache.pre1)
    grads["encoder.layer1.self"] += cache.x0.T @ g_pre1
    grads["encoder.layer1.nbr"] += cache.m1.T @ g_pre1
    # Gradient stops here: tree node features are data, not parameters.


def encode_tree(params: TreeEncoderParams, tree: PropagationTree) -> np.ndarray:
    """Root representation of a single propagation tree."""
    chunk = build_tree_chunks([tree], batch_size=1)[0]
    states, _ = _encode_chunk(params, chunk, params.layer1_self.dtype)
    return states[chunk.root_rows[0]]


# ---------------------------------------------------------------------------
# Initial node embeddings (tree state + skip connection + projection)
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class EncoderCache:
    chunks: list[TreeChunk]
    chunk_caches: list[_ChunkCache]
    features: np.ndarray       # (N, F) in compute dtype
    roots: np.ndarray          # (N, d)
    concat: np.ndarray         # (N, 2d) pre-activation
    activated: np.ndarray      # (N, 2d) post-ReLU, post-dropout
    drop_mask: np.ndarray | None


def _embed_forward(
    params: TreeEncoderParams,
    dataset: Dataset,
    chunks: list[TreeChunk],
    dtype,
    drop_mask: np.ndarray | None = None,
) -> tuple[np.ndarray, EncoderCache]:
    n = dataset.n_items
    d = params.hidden_dim
    roots = np.empty((n, d), dtype=dtype)
    chunk_caches = []
    for chunk in chunks:
        states, cache = _encode_chunk(params, chunk, dtype)
        roots[chunk.item_ids] = states[chunk.root_rows]
        chunk_caches.append(cache)
    features = dataset.features.astype(dtype)
    concat = np.concatenate([features @ params.skip, roots], axis=1)
    activated = relu(concat)
    if drop_mask is not None:
        activated = activated * drop_mask
    v0 = activated @ params.proj_w + params.proj_b
    cache = EncoderCache(
        chunks=chunks,
        chunk_caches=chunk_caches,
        features=features,
        roots=roots,
        concat=concat,
        activated=activated,
        drop_mask=drop_mask,
    )
    return v0, cache


def _embed_backward(
    params: TreeEncoderParams,
    cache: EncoderCache,
    g_v0: np.ndarray,
    grads: dict[str, np.ndarray],
) -> None:
    d = params.hidden_dim
    grads["encoder.proj_b"] += g_v0.sum(axis=0)
    grads["encoder.proj_w"] += cache.activated.T @ g_v0
    g_act = g_v0 @ params.proj_w.T
    if cache.drop_mask is not None:
        g_act = g_act * cache.drop_mask
    g_concat = g_act * relu_grad(cache.concat)
    g_skip_out, g_roots = g_concat[:, :d], g_concat[:, d:]
    grads["encoder.skip"] += cache.features.T @ g_skip_out
    for chunk, chunk_cache in zip(cache.chunks, cache.chunk_caches):
        g_states = np.zeros_like(chunk_cache.pre2)
        g_states[chunk.root_rows] = g_roots[chunk.item_ids]
        _encode_chunk_backward(params, chunk, chunk_cache, g_states, grads)


def initial_node_embeddings(
    params: TreeEncoderParams, dataset: Dataset, batch_size: int = 128
) -> np.ndarray:
    """Deterministic (dropout-free) initial embeddings, one row per news item."""
    chunks = build_tree_chunks(dataset.trees, batch_size)
    v0, _ = _embed_forward(params, dataset, chunks, params.layer1_self.dtype)
    return v0
