"""Seeded Adam training loop with early stopping and checkpointing.

One run is fully determined by (bundle, split, config): parameter init,
batch shuffling and gradient accumulation all draw from a single PCG64
stream and fixed iteration orders, so identical inputs give bit-identical
checkpoints.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .align import ALPHA_MODES, MODES, AlignmentModel, BatchContext
from .bundle import (
    Bundle,
    BundleDims,
    SplitSpec,
    StaticPartitionMap,
    read_tensor,
    write_tensor,
)
from .errors import BundleError, ValidationError


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "adaptive"
    alpha_mode: str = "learnable"
    learning_rate: float = 1e-4
    batch_size: int = 256
    max_epochs: int = 300
    patience: int = 20
    seed: int = 0
    tau: float = 0.1
    learn_tau: bool = False
    normalize: bool = False
    hidden_dim: int = 512
    attention_dim: int = 150

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.alpha_mode not in ALPHA_MODES:
            raise ValidationError(f"alpha_mode must be one of {ALPHA_MODES}, got {self.alpha_mode!r}")
        if self.learning_rate < 0:
            raise ValidationError("learning_rate cannot be negative")
        for name in ("batch_size", "max_epochs", "patience", "tau", "hidden_dim", "attention_dim"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"config field {name!r} must be positive")
        if self.patience > self.max_epochs:
            raise ValidationError(
                f"patience ({self.patience}) cannot exceed max_epochs ({self.max_epochs})"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def init_adam_state(params: dict[str, np.ndarray]) -> dict:
    return {
        "t": 0,
        "m": {k: np.zeros_like(v) for k, v in params.items()},
        "v": {k: np.zeros_like(v) for k, v in params.items()},
    }


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: dict,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One in-place Adam update with bias correction."""
    state["t"] += 1
    t = state["t"]
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValidationError(f"adam_step: gradient shape {g.shape} != param shape {p.shape} for {name!r}")
        m = state["m"][name]
        v = state["v"][name]
        m[...] = beta1 * m + (1.0 - beta1) * g
        v[...] = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)


def seen_class_scores(model: AlignmentModel, sample, banks: dict[int, np.ndarray],
                      class_ids: list[int]) -> np.ndarray:
    """Dot products of the test-time visual embedding against each class's
    global description row, in `class_ids` order."""
    v = model.global_visual(sample)
    scores = np.empty(len(class_ids))
    for idx, cid in enumerate(class_ids):
        f = np.asarray(banks[cid], dtype=np.float64)[-1]
        if model.normalize:
            f = f / np.linalg.norm(f)
        scores[idx] = v @ f
    return scores


def monitored_accuracy(bundle: Bundle, split: SplitSpec, model: AlignmentModel) -> float:
    """Seen-class top-1 accuracy of the training samples under the same
    global-representation decision rule used at test time."""
    seen = sorted(split.seen)
    banks = {cid: bundle.classes[cid].bank for cid in seen}
    samples = bundle.samples_for(seen)
    if not samples:
        return 1.0
    correct = 0
    for s in samples:
        scores = seen_class_scores(model, s, banks, seen)
        if seen[int(np.argmax(scores))] == s.class_id:
            correct += 1
    return correct / len(samples)


@dataclass
class Checkpoint:
    model: AlignmentModel
    config: TrainConfig
    best_epoch: int
    best_metric: float
    history: list[dict] = field(default_factory=list)
    rng_state: dict | None = None

    def save(self, out_dir: Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        tensors = {}
        for name, value in self.model.params.items():
            fname = f"{name}.ptf"
            digest = write_tensor(out / fname, value.astype(np.float64))
            tensors[name] = {"file": fname, "sha256": digest}
        meta = {
            "format": "purls-checkpoint",
            "version": 1,
            "config": self.config.to_dict(),
            "dims": self.model.dims.to_dict(),
            "static_map": self.model.static_map.to_dict() if self.model.static_map else None,
            "part_labels": [name for name, _ in self.model.static_map.parts] if self.model.static_map else None,
            "best_epoch": self.best_epoch,
            "best_metric": self.best_metric,
            "history": self.history,
            "rng_state": _jsonable(self.rng_state),
            "tensors": tensors,
        }
        (out / "checkpoint.json").write_text(json.dumps(meta, indent=2) + "\n")
        return out


def load_checkpoint(path: Path) -> Checkpoint:
    root = Path(path)
    meta_path = root / "checkpoint.json"
    if not meta_path.is_file():
        raise BundleError(f"{root}: missing checkpoint.json")
    meta = json.loads(meta_path.read_text())
    if meta.get("format") != "purls-checkpoint":
        raise BundleError(f"{meta_path}: not a checkpoint file")
    config = TrainConfig.from_dict(meta["config"])
    dims = BundleDims.from_dict(meta["dims"])
    params = {}
    for name, entry in meta["tensors"].items():
        arr = read_tensor(root / entry["file"], entry.get("sha256"))
        params[name] = arr.astype(np.float64)
    static_map = None
    if meta.get("static_map"):
        static_map = StaticPartitionMap.from_dict(meta["static_map"], meta["part_labels"])
    model = AlignmentModel(
        dims=dims,
        hidden_dim=config.hidden_dim,
        attention_dim=config.attention_dim,
        mode=config.mode,
        alpha_mode=config.alpha_mode,
        tau=config.tau,
        learn_tau=config.learn_tau,
        normalize=config.normalize,
        params=params,
        static_map=static_map,
    )
    return Checkpoint(
        model=model,
        config=config,
        best_epoch=int(meta["best_epoch"]),
        best_metric=float(meta["best_metric"]),
        history=meta.get("history", []),
        rng_state=meta.get("rng_state"),
    )


def train(bundle: Bundle, split: SplitSpec, cfg: TrainConfig) -> Checkpoint:
    """Train on the seen-class samples; return the best-metric checkpoint.

    Stops early once the monitored accuracy has not improved for
    `cfg.patience` consecutive epochs.
    """
    cfg.validate()
    bundle.check_split(split)
    seen = tuple(sorted(split.seen))
    if not seen:
        raise ValidationError("split has no seen classes")
    train_samples = bundle.samples_for(seen)
    if not train_samples:
        raise ValidationError("bundle has no samples for the seen classes")

    rng = np.random.default_rng(cfg.seed)
    model = AlignmentModel.initialize(
        bundle.dims,
        rng,
        mode=cfg.mode,
        alpha_mode=cfg.alpha_mode,
        hidden_dim=cfg.hidden_dim,
        attention_dim=cfg.attention_dim,
        tau=cfg.tau,
        learn_tau=cfg.learn_tau,
        normalize=cfg.normalize,
        static_map=bundle.static_map,
    )
    banks = {cid: bundle.classes[cid].bank.astype(np.float64) for cid in seen}
    state = init_adam_state(model.params)

    best_metric = -np.inf
    best_epoch = 0
    best_params = model.copy_params()
    history: list[dict] = []

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_samples))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_samples[i] for i in order[start:start + cfg.batch_size]]
            ctx = BatchContext(samples=batch, banks=banks, seen=seen)
            loss, grads = model.loss_and_grads(ctx)
            adam_step(model.params, grads, state, cfg.learning_rate)
            losses.append(loss)
        accuracy = monitored_accuracy(bundle, split, model)
        history.append({"epoch": epoch, "loss": float(np.mean(losses)), "accuracy": accuracy})
        if accuracy > best_metric:
            best_metric = accuracy
            best_epoch = epoch
            best_params = model.copy_params()
        if epoch - best_epoch >= cfg.patience:
            break

    best_model = replace(model, params=best_params)
    return Checkpoint(
        model=best_model,
        config=cfg,
        best_epoch=best_epoch,
        best_metric=best_metric,
        history=history,
        rng_state=rng.bit_generator.state,
    )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj
