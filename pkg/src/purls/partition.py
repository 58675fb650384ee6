"""Pooling node features into per-description visual representations.

Both strategies map the (S, n) node-feature matrix of one sample to a
(parts + intervals + 1, n) representation matrix whose rows line up with a
class's description rows:

- static: fixed averaging over the joints of each body part, over each
  temporal interval, and over everything for the trailing global row;
- adaptive: single-head cross-attention where description embeddings query
  the nodes, so each row becomes a learned convex combination of all
  node features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .bundle import StaticPartitionMap
from .errors import DimensionError


@dataclass(frozen=True)
class AttentionPartition:
    """Learnable cross-attention state: text queries against node keys."""

    query_weight: np.ndarray  # (text_dim, proj_dim)
    key_weight: np.ndarray    # (visual_dim, proj_dim)

    @property
    def proj_dim(self) -> int:
        return self.query_weight.shape[1]


@dataclass(frozen=True)
class PartitionOutput:
    reps: np.ndarray              # (scales, visual_dim)
    attention: np.ndarray | None  # (scales, nodes), adaptive mode only


def static_weights(static_map: StaticPartitionMap, temporal_steps: int, joints: int) -> np.ndarray:
    """Constant row-stochastic pooling matrix (scales x S), t-major nodes.

    Row layout: one row per part (mean over that part's joints, all steps),
    one per interval (mean over all joints in the interval), then the
    global mean over every node.
    """
    nodes = temporal_steps * joints
    rows = []
    for _, joint_ids in static_map.parts:
        w = np.zeros(nodes)
        for t in range(temporal_steps):
            for j in joint_ids:
                w[t * joints + j] = 1.0
        rows.append(w / w.sum())
    for start, stop in static_map.intervals:
        w = np.zeros(nodes)
        for t in range(start, stop):
            w[t * joints:(t + 1) * joints] = 1.0
        rows.append(w / w.sum())
    rows.append(np.full(nodes, 1.0 / nodes))
    return np.asarray(rows)


def partition_static(nodes: np.ndarray, static_map: StaticPartitionMap) -> PartitionOutput:
    """Pool a t-major (S, n) node matrix with the fixed map."""
    joints = sum(len(j) for _, j in static_map.parts)
    temporal_steps = static_map.intervals[-1][1]
    if nodes.shape[0] != temporal_steps * joints:
        raise DimensionError(
            f"partition_static: {nodes.shape[0]} nodes but map covers "
            f"{temporal_steps} steps x {joints} joints"
        )
    weights = static_weights(static_map, temporal_steps, joints)
    return PartitionOutput(reps=weights @ nodes, attention=None)


def adaptive_graph(nodes: T.Var, bank: T.Var, query_w: T.Var, key_w: T.Var) -> tuple[T.Var, T.Var]:
    """Differentiable adaptive pooling; returns (reps, attention) Vars.

    Queries come from the description rows, keys from the nodes; logits are
    scaled by 1/sqrt(proj_dim) and softmaxed per description row, so each
    representation is a convex combination of node features.
    """
    proj_dim = query_w.value.shape[1]
    queries = T.matmul(bank, query_w)
    keys = T.matmul(nodes, key_w)
    logits = T.scale(T.matmul(queries, T.transpose(keys)), 1.0 / np.sqrt(proj_dim))
    attention = T.softmax_rows(logits)
    reps = T.matmul(attention, nodes)
    return reps, attention


def partition_adaptive(nodes: np.ndarray, bank: np.ndarray, att: AttentionPartition) -> PartitionOutput:
    """Pool a t-major (S, n) node matrix against one class's description bank."""
    if bank.shape[1] != att.query_weight.shape[0]:
        raise DimensionError(
            f"partition_adaptive: bank width {bank.shape[1]} does not match "
            f"query weight rows {att.query_weight.shape[0]}"
        )
    if nodes.shape[1] != att.key_weight.shape[0]:
        raise DimensionError(
            f"partition_adaptive: node width {nodes.shape[1]} does not match "
            f"key weight rows {att.key_weight.shape[0]}"
        )
    reps, attention = adaptive_graph(
        T.constant(nodes),
        T.constant(bank),
        T.constant(att.query_weight),
        T.constant(att.key_weight),
    )
    return PartitionOutput(reps=reps.value, attention=attention.value)
