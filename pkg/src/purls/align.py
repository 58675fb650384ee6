"""Projection into text space and the bidirectional contrastive objective.

For each pooling scale i the model projects the visual representation into
the description-embedding space and pulls it toward the matching
description row while pushing it away from (a) the same-scale rows of the
other seen classes and (b) the same-scale projections of the other samples
in the batch. Both softmax denominators include the positive pair, so each
per-scale loss is non-negative. The training loss is a convex combination
of the per-scale losses, averaged over the batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .bundle import BundleDims, SkeletonFeatures, StaticPartitionMap
from .errors import DimensionError, ValidationError
from .partition import AttentionPartition, adaptive_graph, static_weights

MODES = ("global", "static", "adaptive")
ALPHA_MODES = ("uniform", "learnable")


@dataclass
class BatchContext:
    """Everything one training step needs: samples plus the seen-class banks."""

    samples: list[SkeletonFeatures]
    banks: dict[int, np.ndarray]  # class id -> (scales, text_dim) float64
    seen: tuple[int, ...]         # sorted seen class ids

    def __post_init__(self):
        if not self.seen:
            raise ValidationError("batch context: seen class set is empty")
        for s in self.samples:
            if s.class_id not in self.seen:
                raise ValidationError(
                    f"batch context: sample {s.sample_id} has class {s.class_id} "
                    "outside the seen set"
                )
            if s.class_id not in self.banks:
                raise ValidationError(f"batch context: no bank for class {s.class_id}")


@dataclass
class AlignmentModel:
    """Trainable state: attention weights, projection MLP, scale weights.

    Parameters live in `params` as plain float64 arrays (insertion order is
    the canonical parameter order); every training step lifts them into a
    fresh gradient tape.
    """

    dims: BundleDims
    hidden_dim: int
    attention_dim: int
    mode: str
    alpha_mode: str
    tau: float
    learn_tau: bool
    normalize: bool
    params: dict[str, np.ndarray]
    static_map: StaticPartitionMap | None = None
    _static_pool: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def initialize(
        cls,
        dims: BundleDims,
        rng: np.random.Generator,
        mode: str = "adaptive",
        alpha_mode: str = "learnable",
        hidden_dim: int = 512,
        attention_dim: int = 150,
        tau: float = 0.1,
        learn_tau: bool = False,
        normalize: bool = False,
        static_map: StaticPartitionMap | None = None,
    ) -> "AlignmentModel":
        if mode not in MODES:
            raise ValidationError(f"unknown mode {mode!r}; expected one of {MODES}")
        if alpha_mode not in ALPHA_MODES:
            raise ValidationError(f"unknown alpha_mode {alpha_mode!r}; expected one of {ALPHA_MODES}")
        if tau <= 0:
            raise ValidationError(f"temperature must be positive, got {tau}")
        if mode == "static" and static_map is None:
            raise ValidationError("static mode requires a static_map (bundle field 'static_map')")

        def glorot(fan_in, fan_out):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_in, fan_out))

        params: dict[str, np.ndarray] = {}
        if mode == "adaptive":
            # zero queries make the initial attention exactly uniform: the
            # bilinear form then grows only along directions that already
            # improve alignment, instead of locking onto random init tilt
            params["query_w"] = np.zeros((dims.text_dim, attention_dim))
            params["key_w"] = glorot(dims.visual_dim, attention_dim)
        params["mlp_w1"] = glorot(dims.visual_dim, hidden_dim)
        params["mlp_b1"] = np.zeros((1, hidden_dim))
        params["mlp_w2"] = glorot(hidden_dim, dims.text_dim)
        params["mlp_b2"] = np.zeros((1, dims.text_dim))
        if alpha_mode == "learnable" and mode != "global":
            params["alpha_logits"] = np.zeros((1, dims.scales))
        if learn_tau:
            params["log_tau"] = np.array([[math.log(tau)]])

        return cls(
            dims=dims,
            hidden_dim=hidden_dim,
            attention_dim=attention_dim,
            mode=mode,
            alpha_mode=alpha_mode,
            tau=tau,
            learn_tau=learn_tau,
            normalize=normalize,
            params=params,
            static_map=static_map,
        )

    # -- parameter bookkeeping -------------------------------------------

    def parameter_names(self) -> list[str]:
        return list(self.params)

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    @property
    def attention(self) -> AttentionPartition:
        if self.mode != "adaptive":
            raise ValidationError(f"{self.mode} mode has no attention parameters")
        return AttentionPartition(
            query_weight=self.params["query_w"], key_weight=self.params["key_w"]
        )

    def effective_tau(self) -> float:
        if self.learn_tau:
            return float(np.exp(self.params["log_tau"][0, 0]))
        return self.tau

    def effective_alpha(self) -> np.ndarray:
        """Scale weights on the simplex: softmax of logits, or uniform."""
        k = self.dims.scales
        if self.mode == "global":
            out = np.zeros(k)
            out[-1] = 1.0
            return out
        if self.alpha_mode == "learnable":
            logits = self.params["alpha_logits"][0]
            e = np.exp(logits - logits.max())
            return e / e.sum()
        return np.full(k, 1.0 / k)

    def _pool_matrix(self) -> np.ndarray:
        # global mode reuses the static layout's last (uniform) row, so it
        # needs no map; build a scales x S matrix lazily and cache it.
        if self._static_pool is None:
            d = self.dims
            if self.mode == "static":
                self._static_pool = static_weights(self.static_map, d.temporal_steps, d.joints)
            else:
                self._static_pool = np.full((d.scales, d.nodes), 1.0 / d.nodes)
        return self._static_pool

    # -- forward pieces ----------------------------------------------------

    def project_graph(self, reps: T.Var, params: dict[str, T.Var]) -> T.Var:
        hidden = T.relu(T.add_row(T.matmul(reps, params["mlp_w1"]), params["mlp_b1"]))
        return T.add_row(T.matmul(hidden, params["mlp_w2"]), params["mlp_b2"])

    def project(self, reps: np.ndarray) -> np.ndarray:
        """Map one or more visual representation rows into text space."""
        reps = np.atleast_2d(np.asarray(reps, dtype=np.float64))
        if reps.shape[1] != self.dims.visual_dim:
            raise DimensionError(
                f"project: expected rows of width {self.dims.visual_dim}, got {reps.shape[1]}"
            )
        hidden = np.maximum(reps @ self.params["mlp_w1"] + self.params["mlp_b1"], 0.0)
        return hidden @ self.params["mlp_w2"] + self.params["mlp_b2"]

    def global_visual(self, sample: SkeletonFeatures) -> np.ndarray:
        """Test-time visual embedding: project the uniform mean over all nodes.

        Inference scores every candidate with one shared visual vector, so
        this path must not condition on any class's descriptions. Uniform
        pooling is the query-free degenerate case of the adaptive module
        (a zero query weight reproduces it exactly) and keeps prediction
        identical across pooling modes by construction.
        """
        pooled = sample.flat().mean(axis=0, keepdims=True)
        v = self.project(pooled)[0]
        if self.normalize:
            v = v / np.linalg.norm(v)
        return v

    def _reps_graph(self, sample: SkeletonFeatures, bank: np.ndarray, params: dict[str, T.Var]) -> T.Var:
        nodes = T.constant(sample.flat())
        if self.mode == "adaptive":
            reps, _ = adaptive_graph(nodes, T.constant(bank), params["query_w"], params["key_w"])
            return reps
        return T.matmul(T.constant(self._pool_matrix()), nodes)

    @staticmethod
    def _normalize_rows_graph(v: T.Var) -> T.Var:
        return T.mul_col(v, T.rsqrt(T.sum_rows(T.mul(v, v))))

    def _normalize_rows(self, a: np.ndarray) -> np.ndarray:
        return a / np.linalg.norm(a, axis=1, keepdims=True)

    # -- losses --------------------------------------------------------------

    def loss_graph(self, ctx: BatchContext) -> tuple[T.Var, dict[str, T.Var]]:
        """Build the full training-loss graph for one batch.

        Returns the scalar loss Var plus the lifted parameter Vars, so the
        caller can ask the tape for gradients.
        """
        params = {k: T.Var(v) for k, v in self.params.items()}
        d = self.dims
        k_scales = d.scales
        batch = ctx.samples
        if not batch:
            raise ValidationError("train_loss: empty batch")
        w = len(batch)

        if self.learn_tau:
            inv_tau = T.exp(T.scale(params["log_tau"], -1.0))
        else:
            inv_tau = T.constant([[1.0 / self.tau]])

        # per-sample projections, stacked to (w * scales, m)
        projected = []
        for s in batch:
            bank = ctx.banks[s.class_id]
            reps = self._reps_graph(s, bank, params)
            projected.append(self.project_graph(reps, params))
        v_all = T.stack_rows(projected)
        if self.normalize:
            v_all = self._normalize_rows_graph(v_all)

        seen = list(ctx.seen)
        class_index = {cid: i for i, cid in enumerate(seen)}
        banks64 = {cid: np.asarray(ctx.banks[cid], dtype=np.float64) for cid in seen}
        if self.normalize:
            banks64 = {cid: self._normalize_rows(b) for cid, b in banks64.items()}

        scale_ids = [k_scales - 1] if self.mode == "global" else list(range(k_scales))
        eye_mask = np.eye(w)
        per_scale: list[T.Var] = []
        for i in scale_ids:
            v_i = T.row_gather(v_all, [w_idx * k_scales + i for w_idx in range(w)])  # (w, m)

            # scale-i description rows: all seen classes, and per-sample positives
            f_seen = np.stack([banks64[cid][i] for cid in seen])          # (o, m)
            f_batch = np.stack([banks64[s.class_id][i] for s in batch])   # (w, m)
            pos_mask = np.zeros((w, len(seen)))
            for w_idx, s in enumerate(batch):
                pos_mask[w_idx, class_index[s.class_id]] = 1.0

            class_logits = T.scale_var(T.matmul(v_i, T.constant(f_seen.T)), inv_tau)
            class_term = T.add(
                T.logsumexp_rows(class_logits),
                T.scale(T.sum_rows(T.mul(class_logits, T.constant(pos_mask))), -1.0),
            )

            batch_logits = T.scale_var(T.matmul(T.constant(f_batch), T.transpose(v_i)), inv_tau)
            batch_term = T.add(
                T.logsumexp_rows(batch_logits),
                T.scale(T.sum_rows(T.mul(batch_logits, T.constant(eye_mask))), -1.0),
            )

            per_scale.append(T.sum_all(T.scale(T.add(class_term, batch_term), 0.5)))

        if self.mode == "global":
            total = per_scale[0]
        else:
            stacked = T.stack_rows(per_scale)  # (scales, 1)
            if self.alpha_mode == "learnable":
                alpha = T.softmax_rows(params["alpha_logits"])
            else:
                alpha = T.constant(np.full((1, k_scales), 1.0 / k_scales))
            total = T.matmul(alpha, stacked)
        return T.scale(total, 1.0 / w), params

    def train_loss(self, ctx: BatchContext) -> float:
        loss, _ = self.loss_graph(ctx)
        return float(loss.value[0, 0])

    def loss_and_grads(self, ctx: BatchContext) -> tuple[float, dict[str, np.ndarray]]:
        loss, params = self.loss_graph(ctx)
        grads = T.grad(loss, list(params.values()))
        return float(loss.value[0, 0]), dict(zip(params.keys(), grads))

    def scale_loss(self, v_i: np.ndarray, class_id: int, scale: int, ctx: BatchContext,
                   batch_v: np.ndarray | None = None) -> float:
        """Contrastive loss of one projected row against one description row.

        `batch_v` holds the scale-i projections of every batch sample, one
        row per sample in batch order; the row for this sample must equal
        `v_i`. When omitted, the batch side degenerates to this sample
        alone and contributes zero.
        """
        v_i = np.asarray(v_i, dtype=np.float64).reshape(-1)
        if batch_v is None:
            batch_v = v_i[np.newaxis, :]
            batch_classes = [class_id]
        else:
            batch_v = np.asarray(batch_v, dtype=np.float64)
            batch_classes = [s.class_id for s in ctx.samples]
        if self.normalize:
            v_i = v_i / np.linalg.norm(v_i)
            batch_v = self._normalize_rows(batch_v)

        inv_tau = 1.0 / self.effective_tau()
        banks = ctx.banks
        f_rows = {cid: np.asarray(banks[cid], dtype=np.float64)[scale] for cid in ctx.seen}
        if self.normalize:
            f_rows = {cid: r / np.linalg.norm(r) for cid, r in f_rows.items()}
        f_pos = f_rows[class_id]

        class_logits = np.array([v_i @ f_rows[cid] for cid in ctx.seen]) * inv_tau
        batch_logits = np.array([row @ f_pos for row in batch_v]) * inv_tau
        pos = v_i @ f_pos * inv_tau

        def lse(x):
            mx = x.max()
            return mx + math.log(np.exp(x - mx).sum())

        return 0.5 * (lse(class_logits) - pos) + 0.5 * (lse(batch_logits) - pos)
