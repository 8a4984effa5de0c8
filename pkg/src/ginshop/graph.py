"""Sparse unified operation/machine graph and node features.

Topology is static per instance: directed precedence arcs between
consecutive operations of a job, plus one bidirectional assignment link
(stored as two directed arcs) between each operation and its machine.
All dynamic information lives in the 5-dim node feature rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .env import ScheduleState
from .instance import Instance, lower_bound

FEATURE_DIM = 5

KIND_PREC = 0
KIND_ASSIGN_OM = 1  # operation -> machine
KIND_ASSIGN_MO = 2  # machine -> operation

_KIND_NAMES = {KIND_PREC: "prec", KIND_ASSIGN_OM: "assign", KIND_ASSIGN_MO: "assign"}


@dataclass(frozen=True)
class AdjIndex:
    """Segmented adjacency: node gather[e] feeds seg_nodes[s] for arcs
    e in [seg_ptr[s], seg_ptr[s+1])."""

    gather: np.ndarray
    seg_ptr: np.ndarray
    seg_nodes: np.ndarray


def _segment(key_nodes: np.ndarray, gather_nodes: np.ndarray) -> AdjIndex:
    order = np.lexsort((gather_nodes, key_nodes))
    keys = key_nodes[order]
    gather = np.ascontiguousarray(gather_nodes[order])
    starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
    seg_ptr = np.ascontiguousarray(np.r_[starts, len(keys)], dtype=np.int64)
    seg_nodes = np.ascontiguousarray(keys[starts])
    return AdjIndex(gather, seg_ptr, seg_nodes)


@dataclass(frozen=True)
class UnifiedGraph:
    """Static topology: op nodes [0, N), machine nodes [N, N+M).

    arc_src/arc_dst/arc_kind list every directed arc; in_adj groups arcs by
    destination (message aggregation), out_adj by source (reverse pass).
    """

    num_ops: int
    num_mch: int
    arc_src: np.ndarray
    arc_dst: np.ndarray
    arc_kind: np.ndarray
    op_machine: np.ndarray  # machine *node* id per op
    in_adj: AdjIndex
    out_adj: AdjIndex

    @property
    def num_nodes(self) -> int:
        return self.num_ops + self.num_mch

    @property
    def num_prec_edges(self) -> int:
        return int((self.arc_kind == KIND_PREC).sum())

    @property
    def num_assign_arcs(self) -> int:
        return int((self.arc_kind != KIND_PREC).sum())


def build(inst: Instance, bidirectional_prec: bool = False) -> UnifiedGraph:
    """Static graph for an instance.

    Node order: ops row-major by (job, step), then machines by index.
    Precedence arcs run predecessor -> successor only unless
    bidirectional_prec is set (ablation variant).
    """
    J, M = inst.num_jobs, inst.num_machines
    N = J * M
    flat = np.arange(N, dtype=np.int64).reshape(J, M)
    prec_src = flat[:, :-1].ravel()
    prec_dst = flat[:, 1:].ravel()
    op_machine = inst.machine.ravel() + N

    src = [prec_src, flat.ravel(), op_machine]
    dst = [prec_dst, op_machine, flat.ravel()]
    kind = [
        np.full(len(prec_src), KIND_PREC, dtype=np.int64),
        np.full(N, KIND_ASSIGN_OM, dtype=np.int64),
        np.full(N, KIND_ASSIGN_MO, dtype=np.int64),
    ]
    if bidirectional_prec:
        src.append(prec_dst)
        dst.append(prec_src)
        kind.append(np.full(len(prec_src), KIND_PREC, dtype=np.int64))
    arc_src = np.concatenate(src)
    arc_dst = np.concatenate(dst)
    arc_kind = np.concatenate(kind)
    return UnifiedGraph(
        num_ops=N,
        num_mch=M,
        arc_src=arc_src,
        arc_dst=arc_dst,
        arc_kind=arc_kind,
        op_machine=np.ascontiguousarray(op_machine),
        in_adj=_segment(arc_dst, arc_src),
        out_adj=_segment(arc_src, arc_dst),
    )


def horizon(inst: Instance) -> int:
    """Feature/reward normalizer; the instance lower bound."""
    return lower_bound(inst)


def features(s: ScheduleState, g: UnifiedGraph, h: int) -> np.ndarray:
    """Per-node feature rows.

    Op rows: [1, 0, clb/h, scheduled, 0]; machine rows:
    [0, 1, 0, 0, done/total].  Pure function of (state, horizon).
    """
    n = g.num_nodes
    N = g.num_ops
    x = np.zeros((n, FEATURE_DIM), dtype=np.float64)
    x[:N, 0] = 1.0
    x[N:, 1] = 1.0
    x[:N, 2] = s._clb.ravel() / h
    x[:N, 3] = s.scheduled.ravel()
    x[N:, 4] = s.mch_done / s.inst.num_jobs
    return x


def dump_edges(g: UnifiedGraph) -> str:
    """Debug edge list, one "u v kind" line per directed arc."""
    lines = []
    for u, v, k in zip(g.arc_src, g.arc_dst, g.arc_kind):
        lines.append(f"{u} {v} {_KIND_NAMES[int(k)]}")
    return "\n".join(lines) + "\n"
