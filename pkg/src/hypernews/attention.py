"""Dual-level hypergraph attention network and its hand-written gradients.

One layer alternates two steps over the incidence structure:

* member attention: each hyperedge scores its member nodes with a context
  vector over LeakyReLU-transformed states and aggregates them into a
  hyperedge representation (softmax weights ``alpha``);
* incident attention: each node scores its incident hyperedges with a second
  context vector over the concatenated edge/node transforms and aggregates
  them into its next state (softmax weights ``beta``).

Two layers are stacked; a linear head maps final node states to class logits.
All forward intermediates are cached so the backward pass is exact
reverse-mode differentiation of this exact computation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .encoder import (
    EncoderCache,
    TreeEncoderParams,
    TreeChunk,
    _embed_backward,
    _embed_forward,
    build_tree_chunks,
    init_tree_encoder_params,
)
from .errors import ValidationError
from .hypergraph import Hypergraph
from .kernels import (
    dropout_mask,
    glorot_uniform,
    leaky_relu,
    leaky_relu_grad,
    relu,
    relu_grad,
    row_softmax,
    segment_softmax,
    segment_softmax_grad,
    segment_sum,
)

N_CLASSES = 2


@dataclass(eq=False)
class AttentionLayerParams:
    w_node: np.ndarray        # (d, d) node-state transform
    w_edge: np.ndarray        # (d, d) hyperedge-state transform
    ctx_member: np.ndarray    # (d,)  scores members within a hyperedge
    ctx_incident: np.ndarray  # (2d,) scores hyperedges incident to a node


@dataclass(eq=False)
class ModelParams:
    encoder: TreeEncoderParams
    layers: tuple[AttentionLayerParams, ...]
    head_w: np.ndarray  # (d, 2)
    head_b: np.ndarray  # (2,)

    @property
    def feature_dim(self) -> int:
        return self.encoder.feature_dim

    @property
    def hidden_dim(self) -> int:
        return self.encoder.hidden_dim

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def dtype(self):
        return self.head_w.dtype


def init_model_params(
    seed: int | np.random.Generator,
    feature_dim: int,
    hidden_dim: int,
    n_layers: int = 2,
    dtype=np.float32,
) -> ModelParams:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    dtype = np.dtype(dtype).type
    d = hidden_dim
    encoder = init_tree_encoder_params(rng, feature_dim, d, dtype)
    layers = tuple(
        AttentionLayerParams(
            w_node=glorot_uniform(rng, (d, d), dtype),
            w_edge=glorot_uniform(rng, (d, d), dtype),
            ctx_member=glorot_uniform(rng, (d,), dtype),
            ctx_incident=glorot_uniform(rng, (2 * d,), dtype),
        )
        for _ in range(n_layers)
    )
    return ModelParams(
        encoder=encoder,
        layers=layers,
        head_w=glorot_uniform(rng, (d, N_CLASSES), dtype),
        head_b=np.zeros(N_CLASSES, dtype=dtype),
    )


def named_tensors(params: ModelParams) -> dict[str, np.ndarray]:
    """Ordered name -> array view of every trainable tensor (same objects)."""
    named = {
        "encoder.layer1.self": params.encoder.layer1_self,
        "encoder.layer1.nbr": params.encoder.layer1_nbr,
        "encoder.layer2.self": params.encoder.layer2_self,
        "encoder.layer2.nbr": params.encoder.layer2_nbr,
        "encoder.skip": params.encoder.skip,
        "encoder.proj_w": params.encoder.proj_w,
        "encoder.proj_b": params.encoder.proj_b,
    }
    for i, layer in enumerate(params.layers, start=1):
        named[f"attn{i}.w_node"] = layer.w_node
        named[f"attn{i}.w_edge"] = layer.w_edge
        named[f"attn{i}.ctx_member"] = layer.ctx_member
        named[f"attn{i}.ctx_incident"] = layer.ctx_incident
    named["head.w"] = params.head_w
    named["head.b"] = params.head_b
    return named


def params_from_named(named: dict[str, np.ndarray]) -> ModelParams:
    n_layers = sum(1 for name in named if name.endswith(".w_node"))
    encoder = TreeEncoderParams(
        layer1_self=named["encoder.layer1.self"],
        layer1_nbr=named["encoder.layer1.nbr"],
        layer2_self=named["encoder.layer2.self"],
        layer2_nbr=named["encoder.layer2.nbr"],
        skip=named["encoder.skip"],
        proj_w=named["encoder.proj_w"],
        proj_b=named["encoder.proj_b"],
    )
    layers = tuple(
        AttentionLayerParams(
            w_node=named[f"attn{i}.w_node"],
            w_edge=named[f"attn{i}.w_edge"],
            ctx_member=named[f"attn{i}.ctx_member"],
            ctx_incident=named[f"attn{i}.ctx_incident"],
        )
        for i in range(1, n_layers + 1)
    )
    return ModelParams(
        encoder=encoder, layers=layers, head_w=named["head.w"], head_b=named["head.b"]
    )


def clone_params(params: ModelParams) -> ModelParams:
    return params_from_named({k: v.copy() for k, v in named_tensors(params).items()})


def params_astype(params: ModelParams, dtype) -> ModelParams:
    return params_from_named(
        {k: v.astype(dtype) for k, v in named_tensors(params).items()}
    )


def zero_grads(params: ModelParams) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in named_tensors(params).items()}


# ---------------------------------------------------------------------------
# Attention snapshot
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LayerAttention:
    """Attention coefficients of one layer, aligned with the incidence pairs."""

    alpha_edges: np.ndarray  # hyperedge id per member pair (edge-grouped)
    alpha_nodes: np.ndarray  # member node id per pair
    alpha: np.ndarray        # softmax weight per pair, sums to 1 per hyperedge
    beta_nodes: np.ndarray   # node id per incidence pair (node-grouped)
    beta_edges: np.ndarray   # incident hyperedge id per pair
    beta: np.ndarray         # softmax weight per pair, sums to 1 per node


@dataclass(frozen=True, eq=False)
class AttentionSnapshot:
    layers: tuple[LayerAttention, ...]
    edge_states: np.ndarray  # final-layer hyperedge representations (M, d)

    @property
    def final(self) -> LayerAttention:
        return self.layers[-1]


def attention_csv_rows(snapshot: AttentionSnapshot):
    """Rows of ``layer,level,i,j,coefficient`` with i = node, j = hyperedge."""
    for layer_no, layer in enumerate(snapshot.layers, start=1):
        for e, n, a in zip(layer.alpha_edges, layer.alpha_nodes, layer.alpha):
            yield [layer_no, "node", int(n), int(e), float(a)]
        for n, e, b in zip(layer.beta_nodes, layer.beta_edges, layer.beta):
            yield [layer_no, "edge", int(n), int(e), float(b)]


def export_attention_csv(snapshot: AttentionSnapshot, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer", "level", "i", "j", "coefficient"])
        writer.writerows(attention_csv_rows(snapshot))


# ---------------------------------------------------------------------------
# Forward steps
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class _LayerCache:
    v_prev: np.ndarray
    p: np.ndarray         # v_prev @ w_node
    hn: np.ndarray        # leaky_relu(p)
    alpha: np.ndarray
    e_pre: np.ndarray
    e: np.ndarray
    q: np.ndarray         # e @ w_edge
    lq: np.ndarray        # leaky_relu(q)
    beta: np.ndarray
    v_pre: np.ndarray
    drop_mask: np.ndarray | None  # applied to this layer's output


def _hyperedge_step_cached(layer: AttentionLayerParams, v_prev: np.ndarray, hg: Hypergraph):
    p = v_prev @ layer.w_node
    hn = leaky_relu(p)
    member_scores = (hn @ layer.ctx_member)[hg.member_nodes]
    alpha = segment_softmax(member_scores, hg.member_offsets)
    e_pre = segment_sum(alpha[:, None] * p[hg.member_nodes], hg.member_offsets)
    return relu(e_pre), p, hn, alpha, e_pre


def hyperedge_step(
    layer: AttentionLayerParams, node_states: np.ndarray, hg: Hypergraph
) -> tuple[np.ndarray, np.ndarray]:
    """Aggregate member nodes into hyperedge states.

    Returns the (M, d) hyperedge states and the attention weights aligned
    with ``hg.member_edges`` / ``hg.member_nodes``.
    """
    e, _, _, alpha, _ = _hyperedge_step_cached(layer, node_states, hg)
    return e, alpha


def _node_step_cached(
    layer: AttentionLayerParams,
    edge_states: np.ndarray,
    hn: np.ndarray,
    hg: Hypergraph,
):
    d = layer.w_node.shape[0]
    q = edge_states @ layer.w_edge
    lq = leaky_relu(q)
    edge_part = lq @ layer.ctx_incident[:d]
    node_part = hn @ layer.ctx_incident[d:]
    scores = edge_part[hg.incident_edges] + node_part[hg.incident_nodes]
    beta = segment_softmax(scores, hg.incident_offsets)
    v_pre = segment_sum(beta[:, None] * q[hg.incident_edges], hg.incident_offsets)
    return relu(v_pre), q, lq, beta, v_pre


def node_step(
    layer: AttentionLayerParams,
    edge_states: np.ndarray,
    prev_node_states: np.ndarray,
    hg: Hypergraph,
) -> tuple[np.ndarray, np.ndarray]:
    """Aggregate incident hyperedges into next node states.

    Returns the (N, d) node states and the attention weights aligned with
    ``hg.incident_nodes`` / ``hg.incident_edges``. Isolated nodes get zeros.
    """
    hn = leaky_relu(prev_node_states @ layer.w_node)
    v, _, _, beta, _ = _node_step_cached(layer, edge_states, hn, hg)
    return v, beta


@dataclass(eq=False)
class ForwardCache:
    encoder: EncoderCache
    v0: np.ndarray
    layer_caches: list[_LayerCache]
    v_final: np.ndarray
    logits: np.ndarray


def _forward_cached(
    params: ModelParams,
    dataset: Dataset,
    hg: Hypergraph,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
    dropout: float = 0.3,
    batch_size: int = 128,
    tree_chunks: list[TreeChunk] | None = None,
) -> tuple[np.ndarray, AttentionSnapshot, ForwardCache]:
    if hg.n_nodes != dataset.n_items:
        raise ValidationError(
            f"hypergraph has {hg.n_nodes} nodes, dataset has {dataset.n_items} items"
        )
    if train_mode and dropout > 0 and rng is None:
        raise ValidationError("train-mode forward needs an rng for dropout")
    dtype = params.dtype
    n, d = dataset.n_items, params.hidden_dim

    chunks = tree_chunks if tree_chunks is not None else build_tree_chunks(
        dataset.trees, batch_size
    )
    enc_mask = (
        dropout_mask(rng, (n, 2 * d), dropout, dtype)
        if train_mode and dropout > 0
        else None
    )
    v0, enc_cache = _embed_forward(params.encoder, dataset, chunks, dtype, enc_mask)

    v = v0
    layer_caches = []
    snapshots = []
    for layer_no, layer in enumerate(params.layers):
        e, p, hn, alpha, e_pre = _hyperedge_step_cached(layer, v, hg)
        v_new, q, lq, beta, v_pre = _node_step_cached(layer, e, hn, hg)
        drop = None
        if train_mode and dropout > 0 and layer_no < len(params.layers) - 1:
            drop = dropout_mask(rng, v_new.shape, dropout, dtype)
            v_out = v_new * drop
        else:
            v_out = v_new
        layer_caches.append(
            _LayerCache(
                v_prev=v, p=p, hn=hn, alpha=alpha, e_pre=e_pre, e=e,
                q=q, lq=lq, beta=beta, v_pre=v_pre, drop_mask=drop,
            )
        )
        snapshots.append(
            LayerAttention(
                alpha_edges=hg.member_edges,
                alpha_nodes=hg.member_nodes,
                alpha=alpha,
                beta_nodes=hg.incident_nodes,
                beta_edges=hg.incident_edges,
                beta=beta,
            )
        )
        v = v_out

    logits = v @ params.head_w + params.head_b
    snapshot = AttentionSnapshot(
        layers=tuple(snapshots),
        edge_states=layer_caches[-1].e if layer_caches else np.zeros((0, d), dtype=dtype),
    )
    cache = ForwardCache(
        encoder=enc_cache, v0=v0, layer_caches=layer_caches, v_final=v, logits=logits
    )
    return logits, snapshot, cache


def forward(
    params: ModelParams,
    dataset: Dataset,
    hg: Hypergraph,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
    dropout: float = 0.3,
    batch_size: int = 128,
    tree_chunks: list[TreeChunk] | None = None,
) -> tuple[np.ndarray, AttentionSnapshot]:
    """Full transductive forward pass: (N, 2) logits plus attention snapshot."""
    logits, snapshot, _ = _forward_cached(
        params, dataset, hg, train_mode, rng, dropout, batch_size, tree_chunks
    )
    return logits, snapshot


def predict(logits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise softmax probabilities and argmax labels; ties go to label 0."""
    probs = row_softmax(logits)
    labels = (probs[:, 1] > probs[:, 0]).astype(np.int64)
    return labels, probs


# ---------------------------------------------------------------------------
# Backward
# ---------------------------------------------------------------------------

def backward_from_cache(
    params: ModelParams,
    hg: Hypergraph,
    cache: ForwardCache,
    g_logits: np.ndarray,
) -> dict[str, np.ndarray]:
    """Exact gradients of a scalar loss with upstream d(loss)/d(logits)."""
    grads = zero_grads(params)
    grads["head.w"] += cache.v_final.T @ g_logits
    grads["head.b"] += g_logits.sum(axis=0)
    g_v = g_logits @ params.head_w.T

    d = params.hidden_dim
    for layer_no in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[layer_no]
        lc = cache.layer_caches[layer_no]
        prefix = f"attn{layer_no + 1}"
        if lc.drop_mask is not None:
            g_v = g_v * lc.drop_mask

        # node_step backward
        g_vpre = g_v * relu_grad(lc.v_pre)
        pn, pe = hg.incident_nodes, hg.incident_edges
        g_beta = np.einsum("ij,ij->i", lc.q[pe], g_vpre[pn])
        g_q = np.zeros_like(lc.q)
        np.add.at(g_q, pe, lc.beta[:, None] * g_vpre[pn])
        g_scores = segment_softmax_grad(lc.beta, g_beta, hg.incident_offsets)
        g_edge_part = np.zeros(hg.n_hyperedges, dtype=g_scores.dtype)
        np.add.at(g_edge_part, pe, g_scores)
        g_node_part = segment_sum(g_scores, hg.incident_offsets)
        g_lq = g_edge_part[:, None] * layer.ctx_incident[:d]
        g_hn = g_node_part[:, None] * layer.ctx_incident[d:]
        g_ctx_incident = grads[f"{prefix}.ctx_incident"]
        g_ctx_incident[:d] += lc.lq.T @ g_edge_part
        g_ctx_incident[d:] += lc.hn.T @ g_node_part
        g_q += g_lq * leaky_relu_grad(lc.q)
        grads[f"{prefix}.w_edge"] += lc.e.T @ g_q
        g_e = g_q @ layer.w_edge.T

        # hyperedge_step backward
        g_epre = g_e * relu_grad(lc.e_pre)
        me, mn = hg.member_edges, hg.member_nodes
        g_alpha = np.einsum("ij,ij->i", lc.p[mn], g_epre[me])
        g_p = np.zeros_like(lc.p)
        np.add.at(g_p, mn, lc.alpha[:, None] * g_epre[me])
        g_mscores = segment_softmax_grad(lc.alpha, g_alpha, hg.member_offsets)
        g_snode = np.zeros(hg.n_nodes, dtype=g_mscores.dtype)
        np.add.at(g_snode, mn, g_mscores)
        g_hn += g_snode[:, None] * layer.ctx_member
        grads[f"{prefix}.ctx_member"] += lc.hn.T @ g_snode
        g_p += g_hn * leaky_relu_grad(lc.p)
        grads[f"{prefix}.w_node"] += lc.v_prev.T @ g_p
        g_v = g_p @ layer.w_node.T

    _embed_backward(params.encoder, cache.encoder, g_v, grads)
    return grads
