"""Graph policy network: GIN backbone, sum-pool readout, actor/critic heads.

Everything runs in float64 numpy with hand-written reverse-mode gradients;
forward passes record a trace that backward() replays exactly.  The same
parameters evaluate on any instance geometry (no shape-dependent weights).

Message passing per layer:
    h_v <- MLP((1 + eps) * h_v + sum of h_u over in-neighbors u)
with assignment arcs in both directions and precedence arcs forward only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .graph import FEATURE_DIM, AdjIndex, UnifiedGraph

HIDDEN_DIM = 64
NUM_LAYERS = 3
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable or dimension-incompatible checkpoint."""


@dataclass
class PolicyParams:
    """All learnable weights.

    gin_* lists have one entry per message-passing layer; each layer's MLP
    is affine -> tanh -> affine.  The actor head reads the concatenation of
    a node embedding with the pooled graph embedding (2 * hidden inputs).
    """

    gin_w1: list[np.ndarray]
    gin_b1: list[np.ndarray]
    gin_w2: list[np.ndarray]
    gin_b2: list[np.ndarray]
    gin_eps: list[np.ndarray]
    actor_w1: np.ndarray
    actor_b1: np.ndarray
    actor_w2: np.ndarray
    actor_b2: np.ndarray
    critic_w1: np.ndarray
    critic_b1: np.ndarray
    critic_w2: np.ndarray
    critic_b2: np.ndarray
    feature_dim: int = FEATURE_DIM
    hidden_dim: int = HIDDEN_DIM
    num_layers: int = NUM_LAYERS

    def named_arrays(self):
        """Stable (name, array) iteration used by the optimizer, the
        checkpoint format and gradient checks."""
        for k in range(self.num_layers):
            yield f"gin{k}.w1", self.gin_w1[k]
            yield f"gin{k}.b1", self.gin_b1[k]
            yield f"gin{k}.w2", self.gin_w2[k]
            yield f"gin{k}.b2", self.gin_b2[k]
            yield f"gin{k}.eps", self.gin_eps[k]
        yield "actor.w1", self.actor_w1
        yield "actor.b1", self.actor_b1
        yield "actor.w2", self.actor_w2
        yield "actor.b2", self.actor_b2
        yield "critic.w1", self.critic_w1
        yield "critic.b1", self.critic_b1
        yield "critic.w2", self.critic_w2
        yield "critic.b2", self.critic_b2

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            gin_w1=[a.copy() for a in self.gin_w1],
            gin_b1=[a.copy() for a in self.gin_b1],
            gin_w2=[a.copy() for a in self.gin_w2],
            gin_b2=[a.copy() for a in self.gin_b2],
            gin_eps=[a.copy() for a in self.gin_eps],
            actor_w1=self.actor_w1.copy(),
            actor_b1=self.actor_b1.copy(),
            actor_w2=self.actor_w2.copy(),
            actor_b2=self.actor_b2.copy(),
            critic_w1=self.critic_w1.copy(),
            critic_b1=self.critic_b1.copy(),
            critic_w2=self.critic_w2.copy(),
            critic_b2=self.critic_b2.copy(),
            feature_dim=self.feature_dim,
            hidden_dim=self.hidden_dim,
            num_layers=self.num_layers,
        )


def zero_grads(p: PolicyParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(a) for name, a in p.named_arrays()}


def _glorot(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(seed: int, feature_dim: int = FEATURE_DIM, hidden_dim: int = HIDDEN_DIM, num_layers: int = NUM_LAYERS) -> PolicyParams:
    """Glorot-uniform weights, zero biases, eps = 0; deterministic per seed."""
    rng = np.random.Generator(np.random.PCG64(seed))
    gin_w1, gin_b1, gin_w2, gin_b2, gin_eps = [], [], [], [], []
    d_in = feature_dim
    for _ in range(num_layers):
        gin_w1.append(_glorot(rng, d_in, hidden_dim, (d_in, hidden_dim)))
        gin_b1.append(np.zeros(hidden_dim))
        gin_w2.append(_glorot(rng, hidden_dim, hidden_dim, (hidden_dim, hidden_dim)))
        gin_b2.append(np.zeros(hidden_dim))
        gin_eps.append(np.zeros(()))
        d_in = hidden_dim
    return PolicyParams(
        gin_w1=gin_w1,
        gin_b1=gin_b1,
        gin_w2=gin_w2,
        gin_b2=gin_b2,
        gin_eps=gin_eps,
        actor_w1=_glorot(rng, 2 * hidden_dim, hidden_dim, (2 * hidden_dim, hidden_dim)),
        actor_b1=np.zeros(hidden_dim),
        actor_w2=_glorot(rng, hidden_dim, 1, (hidden_dim, 1)),
        actor_b2=np.zeros(1),
        critic_w1=_glorot(rng, hidden_dim, hidden_dim, (hidden_dim, hidden_dim)),
        critic_b1=np.zeros(hidden_dim),
        critic_w2=_glorot(rng, hidden_dim, 1, (hidden_dim, 1)),
        critic_b2=np.zeros(1),
        feature_dim=feature_dim,
        hidden_dim=hidden_dim,
        num_layers=num_layers,
    )


# --- batched graph representation ------------------------------------------


@dataclass(frozen=True)
class GraphBatch:
    """Disjoint union of graphs with per-graph segment bookkeeping."""

    num_nodes: int
    num_graphs: int
    graph_ptr: np.ndarray  # (G+1,) node offsets
    node_graph: np.ndarray  # (n,)
    op_rows: np.ndarray  # node ids of op nodes, grouped by graph
    op_graph: np.ndarray  # graph id per op row
    op_ptr: np.ndarray  # (G+1,) offsets into op arrays
    in_adj: AdjIndex
    out_adj: AdjIndex

    @staticmethod
    def from_graphs(graphs: list[UnifiedGraph]) -> "GraphBatch":
        node_off = 0
        graph_ptr = [0]
        op_ptr = [0]
        op_rows, in_g, in_p, in_n, out_g, out_p, out_n = [], [], [], [], [], [], []
        in_arc_off = 0
        out_arc_off = 0
        for g in graphs:
            op_rows.append(np.arange(g.num_ops, dtype=np.int64) + node_off)
            in_g.append(g.in_adj.gather + node_off)
            in_p.append(g.in_adj.seg_ptr[:-1] + in_arc_off)
            in_n.append(g.in_adj.seg_nodes + node_off)
            in_arc_off += len(g.in_adj.gather)
            out_g.append(g.out_adj.gather + node_off)
            out_p.append(g.out_adj.seg_ptr[:-1] + out_arc_off)
            out_n.append(g.out_adj.seg_nodes + node_off)
            out_arc_off += len(g.out_adj.gather)
            node_off += g.num_nodes
            graph_ptr.append(node_off)
            op_ptr.append(op_ptr[-1] + g.num_ops)
        graph_ptr = np.asarray(graph_ptr, dtype=np.int64)
        node_graph = np.repeat(
            np.arange(len(graphs), dtype=np.int64), np.diff(graph_ptr)
        )
        op_ptr = np.asarray(op_ptr, dtype=np.int64)
        op_graph = np.repeat(np.arange(len(graphs), dtype=np.int64), np.diff(op_ptr))
        return GraphBatch(
            num_nodes=node_off,
            num_graphs=len(graphs),
            graph_ptr=graph_ptr,
            node_graph=node_graph,
            op_rows=np.concatenate(op_rows),
            op_graph=op_graph,
            op_ptr=op_ptr,
            in_adj=AdjIndex(
                np.ascontiguousarray(np.concatenate(in_g)),
                np.ascontiguousarray(np.r_[np.concatenate(in_p), in_arc_off]),
                np.ascontiguousarray(np.concatenate(in_n)),
            ),
            out_adj=AdjIndex(
                np.ascontiguousarray(np.concatenate(out_g)),
                np.ascontiguousarray(np.r_[np.concatenate(out_p), out_arc_off]),
                np.ascontiguousarray(np.concatenate(out_n)),
            ),
        )


@dataclass
class ForwardTrace:
    """Intermediates of one forward pass, enough to replay it backward."""

    batch: GraphBatch
    x: np.ndarray
    aggs: list[np.ndarray] = field(default_factory=list)
    tanhs: list[np.ndarray] = field(default_factory=list)
    hs: list[np.ndarray] = field(default_factory=list)
    h_graph: np.ndarray = None
    context: np.ndarray = None
    critic_tanh: np.ndarray = None
    values: np.ndarray = None
    actor_z: np.ndarray = None
    actor_tanh: np.ndarray = None
    logits: np.ndarray = None


def _neighbor_sum(h: np.ndarray, adj: AdjIndex, out_nodes: int) -> np.ndarray:
    out = np.zeros((out_nodes, h.shape[1]), dtype=np.float64)
    _kernels.neighbor_sum(h, adj.gather, adj.seg_ptr, adj.seg_nodes, out)
    return out


def forward(batch: GraphBatch, x: np.ndarray, p: PolicyParams) -> ForwardTrace:
    """Full pass: GIN encoding, per-graph readout, critic values and actor
    logits for every op node; returns the replayable trace."""
    if x.shape != (batch.num_nodes, p.feature_dim):
        raise ValueError(f"feature matrix {x.shape} does not match batch ({batch.num_nodes}, {p.feature_dim})")
    tr = ForwardTrace(batch=batch, x=x)
    h = x
    tr.hs.append(h)
    for k in range(p.num_layers):
        agg = (1.0 + p.gin_eps[k]) * h + _neighbor_sum(h, batch.in_adj, batch.num_nodes)
        t = np.tanh(agg @ p.gin_w1[k] + p.gin_b1[k])
        h = t @ p.gin_w2[k] + p.gin_b2[k]
        tr.aggs.append(agg)
        tr.tanhs.append(t)
        tr.hs.append(h)
    tr.h_graph = np.add.reduceat(h, batch.graph_ptr[:-1], axis=0)
    # heads read the pooled embedding scaled by node count so its magnitude
    # is size-independent; the raw sum would saturate the tanh layers and
    # grow with instance size
    nodes_per_graph = np.diff(batch.graph_ptr).astype(np.float64)
    tr.context = tr.h_graph / nodes_per_graph[:, None]

    ct = np.tanh(tr.context @ p.critic_w1 + p.critic_b1)
    tr.critic_tanh = ct
    tr.values = (ct @ p.critic_w2 + p.critic_b2)[:, 0]

    z = np.concatenate([h[batch.op_rows], tr.context[batch.op_graph]], axis=1)
    at = np.tanh(z @ p.actor_w1 + p.actor_b1)
    tr.actor_z = z
    tr.actor_tanh = at
    tr.logits = (at @ p.actor_w2 + p.actor_b2)[:, 0]
    return tr


def backward(tr: ForwardTrace, d_logits: np.ndarray, d_values: np.ndarray, p: PolicyParams) -> dict[str, np.ndarray]:
    """Exact reverse-mode gradients of any scalar loss with seed gradients
    d_logits (one per op row) and d_values (one per graph)."""
    batch = tr.batch
    g = zero_grads(p)

    # actor head
    at = tr.actor_tanh
    g["actor.w2"] += at.T @ d_logits[:, None]
    g["actor.b2"] += d_logits.sum(keepdims=True)
    d_at = d_logits[:, None] * p.actor_w2[:, 0][None, :]
    d_au = d_at * (1.0 - at * at)
    g["actor.w1"] += tr.actor_z.T @ d_au
    g["actor.b1"] += d_au.sum(axis=0)
    d_z = d_au @ p.actor_w1.T

    hidden = p.hidden_dim
    d_h = np.zeros((batch.num_nodes, hidden))
    d_h[batch.op_rows] = d_z[:, :hidden]
    # op rows are grouped by graph, so the broadcast gradient reduces per segment
    d_ctx = np.add.reduceat(d_z[:, hidden:], batch.op_ptr[:-1], axis=0)

    # critic head
    ct = tr.critic_tanh
    g["critic.w2"] += ct.T @ d_values[:, None]
    g["critic.b2"] += d_values.sum(keepdims=True)
    d_ct = d_values[:, None] * p.critic_w2[:, 0][None, :]
    d_cu = d_ct * (1.0 - ct * ct)
    g["critic.w1"] += tr.context.T @ d_cu
    g["critic.b1"] += d_cu.sum(axis=0)
    d_ctx += d_cu @ p.critic_w1.T

    # context = h_graph / node count; readout hands every node its graph's
    # gradient
    nodes_per_graph = np.diff(batch.graph_ptr).astype(np.float64)
    d_hg = d_ctx / nodes_per_graph[:, None]
    d_h += d_hg[batch.node_graph]

    for k in reversed(range(p.num_layers)):
        t = tr.tanhs[k]
        g[f"gin{k}.w2"] += t.T @ d_h
        g[f"gin{k}.b2"] += d_h.sum(axis=0)
        d_t = d_h @ p.gin_w2[k].T
        d_u = d_t * (1.0 - t * t)
        g[f"gin{k}.w1"] += tr.aggs[k].T @ d_u
        g[f"gin{k}.b1"] += d_u.sum(axis=0)
        d_agg = d_u @ p.gin_w1[k].T
        h_in = tr.hs[k]
        g[f"gin{k}.eps"] += (d_agg * h_in).sum()
        d_h = (1.0 + p.gin_eps[k]) * d_agg + _neighbor_sum(d_agg, batch.out_adj, batch.num_nodes)
    return g


# --- single-graph conveniences ---------------------------------------------


def encode(g: UnifiedGraph, x: np.ndarray, p: PolicyParams) -> np.ndarray:
    """Node embeddings after the full message-passing stack."""
    tr = forward(GraphBatch.from_graphs([g]), x, p)
    return tr.hs[-1]


def readout(h: np.ndarray) -> np.ndarray:
    """Sum-pool over all nodes (ops and machines)."""
    return h.sum(axis=0)


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray, op_ptr: np.ndarray, op_graph: np.ndarray):
    """Per-graph masked softmax over op logits.

    Returns (logp, p) with p exactly 0 and logp -inf on masked entries.
    Every graph segment must have at least one unmasked entry.
    """
    masked = np.where(mask, logits, -np.inf)
    seg_max = np.maximum.reduceat(masked, op_ptr[:-1])
    if not np.isfinite(seg_max).all():
        raise ValueError("all actions masked for at least one graph")
    shifted = masked - seg_max[op_graph]
    ex = np.where(mask, np.exp(shifted), 0.0)
    seg_sum = np.add.reduceat(ex, op_ptr[:-1])
    logp = np.where(mask, shifted - np.log(seg_sum)[op_graph], -np.inf)
    probs = np.where(mask, ex / seg_sum[op_graph], 0.0)
    return logp, probs


def actor_logits(h: np.ndarray, h_graph: np.ndarray, mask: np.ndarray, p: PolicyParams) -> np.ndarray:
    """Masked policy over the op nodes of one graph (probabilities).

    h holds all node embeddings (ops first), h_graph the sum-pooled
    readout; the head consumes the size-normalized context h_graph/|V|.
    """
    num_ops = mask.shape[0]
    context = h_graph / h.shape[0]
    z = np.concatenate([h[:num_ops], np.broadcast_to(context, (num_ops, p.hidden_dim))], axis=1)
    at = np.tanh(z @ p.actor_w1 + p.actor_b1)
    logits = (at @ p.actor_w2 + p.actor_b2)[:, 0]
    ptr = np.array([0, num_ops], dtype=np.int64)
    _, probs = masked_log_softmax(logits, mask, ptr, np.zeros(num_ops, dtype=np.int64))
    return probs


def critic_value(h_graph: np.ndarray, p: PolicyParams, num_nodes: int = 1) -> float:
    """State value from the pooled graph embedding (scaled by the node
    count of the graph that produced it)."""
    ct = np.tanh(h_graph / num_nodes @ p.critic_w1 + p.critic_b1)
    return float(ct @ p.critic_w2[:, 0] + p.critic_b2[0])


# --- checkpoint io ----------------------------------------------------------


def save_checkpoint(params: PolicyParams, path, metadata: dict | None = None) -> None:
    """Versioned JSON checkpoint: dims plus named flat float64 arrays."""
    obj = {
        "format_version": CHECKPOINT_VERSION,
        "feature_dim": params.feature_dim,
        "hidden_dim": params.hidden_dim,
        "num_layers": params.num_layers,
        "params": {name: a.ravel().tolist() for name, a in params.named_arrays()},
        "metadata": metadata or {},
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, sort_keys=True, separators=(",", ":"))
        f.write("\n")


def load_checkpoint(path):
    """Returns (params, metadata); rejects version or dimension mismatches."""
    try:
        with open(path, encoding="utf-8") as f:
            obj = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(obj, dict) or obj.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format_version {obj.get('format_version')!r} (expected {CHECKPOINT_VERSION})"
        )
    if obj.get("feature_dim") != FEATURE_DIM or obj.get("hidden_dim") != HIDDEN_DIM:
        raise CheckpointError(
            f"dimension mismatch: checkpoint {obj.get('feature_dim')}x{obj.get('hidden_dim')}, "
            f"runtime {FEATURE_DIM}x{HIDDEN_DIM}"
        )
    params = init_params(0, num_layers=int(obj["num_layers"]))
    for name, a in params.named_arrays():
        if name not in obj["params"]:
            raise CheckpointError(f"checkpoint missing tensor {name}")
        flat = np.asarray(obj["params"][name], dtype=np.float64)
        if flat.size != a.size:
            raise CheckpointError(f"tensor {name} has {flat.size} entries, expected {a.size}")
        a[...] = flat.reshape(a.shape)
    return params, obj.get("metadata", {})
