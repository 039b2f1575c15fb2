"""Generic message-passing baseline over retrieved subgraphs.

Facts are treated as undirected: each edge contributes one message per
direction, built from the source node's state concatenated with a learned
relation embedding.  A node update adds a GELU feed-forward transform of the
aggregated messages onto the previous state; the transform is bias-free and
reads only the aggregate, so an empty neighborhood contributes exactly zero
and isolated nodes keep their state bit-for-bit.  The virtual question node
is initialized from the language model's question representation; its final
state feeds candidate scoring.

Parameters (flat dict, "gnn." prefix):
    gnn.rel_emb [R, d]
    gnn.msg.w [2d, d], gnn.msg.b [d]
    gnn.upd.w [d, d]
    gnn.score.{w1 [d, d], b1 [d], w2 [d], b2 [1]}
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from factpool.kg import VIRTUAL_NODE_ID, Subgraph, id_to_surface
from factpool.numerics import gelu, gelu_cached, gelu_grad_cached
from factpool.transformer import init_scalar_head


@dataclass
class GNNConfig:
    layers: int = 2
    aggregation: str = "sum"  # sum | mean


def init_gnn_params(
    d: int, num_relations: int, rng: np.random.Generator, dtype=np.float64
) -> dict[str, np.ndarray]:
    bound = 1.0 / np.sqrt(2 * d)
    params = {
        "gnn.rel_emb": (0.1 * rng.standard_normal((num_relations, d))).astype(dtype),
        "gnn.msg.w": rng.uniform(-bound, bound, size=(2 * d, d)).astype(dtype),
        "gnn.msg.b": np.zeros(d, dtype=dtype),
        "gnn.upd.w": rng.uniform(-bound, bound, size=(d, d)).astype(dtype),
    }
    params.update(init_scalar_head("gnn.score", d, rng, dtype))
    return params


@dataclass
class SubgraphArrays:
    """Index form of a subgraph for vectorized message passing."""

    node_ids: list[str]  # sorted; includes the virtual node when present
    src: np.ndarray  # [M] int, message source node index
    dst: np.ndarray  # [M] int, message destination node index
    rel: np.ndarray  # [M] int, relation-table row per message
    virtual_index: int | None


def subgraph_arrays(sub: Subgraph, relation_index: dict[str, int]) -> SubgraphArrays:
    node_ids = sorted(sub.nodes)
    pos = {node: i for i, node in enumerate(node_ids)}
    src, dst, rel = [], [], []
    for fact in sorted(sub.edges):
        r = relation_index[fact.relation]
        # one message per direction, shared relation embedding
        src.append(pos[fact.head])
        dst.append(pos[fact.tail])
        rel.append(r)
        src.append(pos[fact.tail])
        dst.append(pos[fact.head])
        rel.append(r)
    return SubgraphArrays(
        node_ids=node_ids,
        src=np.array(src, dtype=np.int64),
        dst=np.array(dst, dtype=np.int64),
        rel=np.array(rel, dtype=np.int64),
        virtual_index=pos.get(VIRTUAL_NODE_ID),
    )


def init_nodes(sub: Subgraph, question_repr: np.ndarray, encoder) -> dict[str, np.ndarray]:
    """Layer-0 node states: virtual node gets the question vector, entities
    get the frozen encoding of their surface text."""
    states: dict[str, np.ndarray] = {}
    for node in sorted(sub.nodes):
        if node == VIRTUAL_NODE_ID:
            states[node] = np.asarray(question_repr, dtype=np.float64)
        else:
            states[node] = encoder.encode_text(id_to_surface(node))
    return states


def message(
    h_dst: np.ndarray, h_src: np.ndarray, relation_embedding: np.ndarray, params
) -> np.ndarray:
    """Message along one edge; depends on the source state and relation only."""
    del h_dst
    m_in = np.concatenate([h_src, relation_embedding])
    return gelu(m_in @ params["gnn.msg.w"] + params["gnn.msg.b"])


def gnn_forward_arrays(
    params: dict[str, np.ndarray],
    cfg: GNNConfig,
    arrays: SubgraphArrays,
    node_init: np.ndarray,
):
    """Vectorized forward.  Returns (final states [N, d], cache, update count)."""
    n, d = node_init.shape
    h = node_init
    counts = np.zeros(n)
    np.add.at(counts, arrays.dst, 1.0)
    safe_counts = np.maximum(counts, 1.0)[:, None]
    layer_caches = []
    for _ in range(cfg.layers):
        m_in = np.concatenate(
            [h[arrays.src], params["gnn.rel_emb"][arrays.rel]], axis=1
        )  # [M, 2d]
        pre_m = m_in @ params["gnn.msg.w"] + params["gnn.msg.b"]
        msg, pre_m_t = gelu_cached(pre_m)
        agg = np.zeros((n, d))
        np.add.at(agg, arrays.dst, msg)
        if cfg.aggregation == "mean":
            agg = agg / safe_counts
        pre_u = agg @ params["gnn.upd.w"]
        upd, pre_u_t = gelu_cached(pre_u)
        h_next = upd + h
        layer_caches.append((h, m_in, pre_m, pre_m_t, agg, pre_u, pre_u_t))
        h = h_next
    cache = (arrays, layer_caches, safe_counts)
    return h, cache, n * cfg.layers


def gnn_backward_arrays(
    params: dict[str, np.ndarray], cfg: GNNConfig, cache, d_final: np.ndarray
):
    """Returns (grads dict, d_node_init [N, d])."""
    arrays, layer_caches, safe_counts = cache
    d = d_final.shape[1]
    grads = {
        "gnn.rel_emb": np.zeros_like(params["gnn.rel_emb"]),
        "gnn.msg.w": np.zeros_like(params["gnn.msg.w"]),
        "gnn.msg.b": np.zeros_like(params["gnn.msg.b"]),
        "gnn.upd.w": np.zeros_like(params["gnn.upd.w"]),
    }
    dh = np.asarray(d_final)
    for layer in range(cfg.layers - 1, -1, -1):
        h_prev, m_in, pre_m, pre_m_t, agg, pre_u, pre_u_t = layer_caches[layer]
        d_pre_u = dh * gelu_grad_cached(pre_u, pre_u_t)
        grads["gnn.upd.w"] += agg.T @ d_pre_u
        dh_prev = dh.copy()
        d_agg = d_pre_u @ params["gnn.upd.w"].T
        if cfg.aggregation == "mean":
            d_agg = d_agg / safe_counts
        d_msg = d_agg[arrays.dst]
        d_pre_m = d_msg * gelu_grad_cached(pre_m, pre_m_t)
        grads["gnn.msg.w"] += m_in.T @ d_pre_m
        grads["gnn.msg.b"] += d_pre_m.sum(axis=0)
        d_m_in = d_pre_m @ params["gnn.msg.w"].T
        np.add.at(dh_prev, arrays.src, d_m_in[:, :d])
        np.add.at(grads["gnn.rel_emb"], arrays.rel, d_m_in[:, d:])
        dh = dh_prev
    return grads, dh


def gnn_forward(
    params: dict[str, np.ndarray],
    cfg: GNNConfig,
    sub: Subgraph,
    node_state0: dict[str, np.ndarray],
    relation_index: dict[str, int],
) -> dict[str, np.ndarray]:
    """Dictionary-level forward over a subgraph's node states."""
    arrays = subgraph_arrays(sub, relation_index)
    node_init = np.stack([node_state0[node] for node in arrays.node_ids])
    final, _, _ = gnn_forward_arrays(params, cfg, arrays, node_init)
    return {node: final[i] for i, node in enumerate(arrays.node_ids)}


def gnn_score(
    params: dict[str, np.ndarray],
    node_states: dict[str, np.ndarray],
    question_node: str = VIRTUAL_NODE_ID,
) -> float:
    """Graph-side candidate score read from the question node's final state."""
    from factpool.transformer import scalar_head_forward

    state = node_states[question_node]
    out, _ = scalar_head_forward(params, "gnn.score", state[None, :])
    return float(out[0])
