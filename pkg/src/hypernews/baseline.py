"""Plain-graph baseline: a two-layer mean-aggregation GNN on the clique
expansion, trained transductively on raw news features.

This is the comparison model for hypergraph-versus-graph experiments. It sees
news content features only: no propagation trees and no group-wise structure
beyond the pairwise edges the clique expansion keeps. Note the comparison is
therefore joint over both differences (structure and tree encoding); the
hypergraph model's advantage is not attributable to one of them alone.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .hypergraph import PlainGraph
from .kernels import (
    NeighborIndex,
    dropout_mask,
    glorot_uniform,
    neighbor_mean,
    neighbor_mean_grad,
    relu,
    relu_grad,
)


@dataclass(eq=False)
class BaselineParams:
    layer1_self: np.ndarray  # (F, d)
    layer1_nbr: np.ndarray   # (F, d)
    layer2_self: np.ndarray  # (d, d)
    layer2_nbr: np.ndarray   # (d, d)
    head_w: np.ndarray       # (d, 2)
    head_b: np.ndarray       # (2,)


def init_baseline_params(rng, feature_dim: int, hidden_dim: int, dtype) -> BaselineParams:
    f, d = feature_dim, hidden_dim
    return BaselineParams(
        layer1_self=glorot_uniform(rng, (f, d), dtype),
        layer1_nbr=glorot_uniform(rng, (f, d), dtype),
        layer2_self=glorot_uniform(rng, (d, d), dtype),
        layer2_nbr=glorot_uniform(rng, (d, d), dtype),
        head_w=glorot_uniform(rng, (d, 2), dtype),
        head_b=np.zeros(2, dtype=dtype),
    )


def baseline_named_tensors(params: BaselineParams) -> dict[str, np.ndarray]:
    return {
        "base.layer1.self": params.layer1_self,
        "base.layer1.nbr": params.layer1_nbr,
        "base.layer2.self": params.layer2_self,
        "base.layer2.nbr": params.layer2_nbr,
        "base.head.w": params.head_w,
        "base.head.b": params.head_b,
    }


@dataclass(eq=False)
class _BaselineCache:
    x0: np.ndarray
    m1: np.ndarray
    pre1: np.ndarray
    x1: np.ndarray        # post-dropout when training
    x1_raw: np.ndarray
    m2: np.ndarray
    pre2: np.ndarray
    x2: np.ndarray
    drop_mask: np.ndarray | None


def baseline_forward(
    params: BaselineParams,
    features: np.ndarray,
    index: NeighborIndex,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
    dropout: float = 0.3,
):
    dtype = params.head_w.dtype
    x0 = features.astype(dtype)
    m1 = neighbor_mean(x0, index)
    pre1 = x0 @ params.layer1_self + m1 @ params.layer1_nbr
    x1_raw = relu(pre1)
    drop = None
    if train_mode and dropout > 0:
        drop = dropout_mask(rng, x1_raw.shape, dropout, dtype)
        x1 = x1_raw * drop
    else:
        x1 = x1_raw
    m2 = neighbor_mean(x1, index)
    pre2 = x1 @ params.layer2_self + m2 @ params.layer2_nbr
    x2 = relu(pre2)
    logits = x2 @ params.head_w + params.head_b
    cache = _BaselineCache(
        x0=x0, m1=m1, pre1=pre1, x1=x1, x1_raw=x1_raw, m2=m2, pre2=pre2, x2=x2,
        drop_mask=drop,
    )
    return logits, cache


def baseline_backward(
    params: BaselineParams,
    index: NeighborIndex,
    cache: _BaselineCache,
    g_logits: np.ndarray,
) -> dict[str, np.ndarray]:
    grads = {k: np.zeros_like(v) for k, v in baseline_named_tensors(params).items()}
    grads["base.head.w"] += cache.x2.T @ g_logits
    grads["base.head.b"] += g_logits.sum(axis=0)
    g_x2 = g_logits @ params.head_w.T
    g_pre2 = g_x2 * relu_grad(cache.pre2)
    grads["base.layer2.self"] += cache.x1.T @ g_pre2
    grads["base.layer2.nbr"] += cache.m2.T @ g_pre2
    g_x1 = g_pre2 @ params.layer2_self.T + neighbor_mean_grad(
        g_pre2 @ params.layer2_nbr.T, index
    )
    if cache.drop_mask is not None:
        g_x1 = g_x1 * cache.drop_mask
    g_pre1 = g_x1 * relu_grad(cache.pre1)
    grads["base.layer1.self"] += cache.x0.T @ g_pre1
    grads["base.layer1.nbr"] += cache.m1.T @ g_pre1
    return grads


class BaselineDriver:
    """Adapter for the shared training loop in :mod:`hypernews.training`."""

    def __init__(self, params: BaselineParams, dataset: Dataset, graph: PlainGraph,
                 dropout: float):
        self.params = params
        self.features = dataset.features
        self.index = NeighborIndex.from_edges(graph.n_nodes, graph.edges)
        self.dropout = dropout
        self.named = baseline_named_tensors(params)

    def forward_train(self, rng):
        return baseline_forward(
            self.params, self.features, self.index,
            train_mode=True, rng=rng, dropout=self.dropout,
        )

    def backward(self, cache, g_logits):
        return baseline_backward(self.params, self.index, cache, g_logits)

    def forward_eval(self):
        logits, _ = baseline_forward(self.params, self.features, self.index)
        return logits, None
