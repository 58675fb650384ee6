"""Scikit-learn style facade over the training and inference engine.

The estimator consumes plain arrays so it composes with the wider
ecosystem: X is a stack of per-sample node-feature grids, y the class ids.
Description banks (one matrix per class, part/interval rows then the
global row) are estimator parameters because in the zero-shot setting they
exist for classes that never appear in `fit`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .bundle import Bundle, BundleDims, ClassEntry, SkeletonFeatures, SplitSpec, StaticPartitionMap
from .errors import ValidationError
from .evaluate import candidate_scores
from .train import TrainConfig, train


class ZeroShotSkeletonClassifier(ClassifierMixin, BaseEstimator):
    """Zero-shot action classifier over precomputed skeleton feature grids.

    Parameters
    ----------
    banks : dict[int, ndarray]
        Per-class description-embedding matrices of shape
        (parts + intervals + 1, text_dim); the last row is the global
        description. Must cover every fit label and every predict class.
    parts, intervals : int
        How many body-part and temporal-interval description rows each
        bank carries.
    static_map : StaticPartitionMap, optional
        Required for ``mode="static"``.
    predict_classes : sequence of int, optional
        Candidate classes scored by `predict`. Defaults to every bank
        class that did not appear in `fit` (the standard zero-shot
        protocol).
    mode : {"adaptive", "static", "global"}
        Pooling strategy used during training.
    alpha_mode : {"uniform", "learnable"}
        How per-scale losses are weighted.
    The remaining parameters mirror TrainConfig fields.
    """

    def __init__(self, banks=None, parts=4, intervals=3, static_map=None,
                 predict_classes=None, mode="adaptive", alpha_mode="learnable",
                 learning_rate=1e-4, batch_size=256, max_epochs=300, patience=20,
                 tau=0.1, learn_tau=False, normalize=False, hidden_dim=512,
                 attention_dim=150, seed=0):
        self.banks = banks
        self.parts = parts
        self.intervals = intervals
        self.static_map = static_map
        self.predict_classes = predict_classes
        self.mode = mode
        self.alpha_mode = alpha_mode
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.tau = tau
        self.learn_tau = learn_tau
        self.normalize = normalize
        self.hidden_dim = hidden_dim
        self.attention_dim = attention_dim
        self.seed = seed

    def _validated_grids(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float32)
        if X.ndim != 4:
            raise ValidationError(
                f"X must have shape (n_samples, temporal_steps, joints, visual_dim), got {X.shape}"
            )
        if not np.isfinite(X).all():
            raise ValidationError("X contains NaN/Inf values")
        return X

    def _config(self) -> TrainConfig:
        return TrainConfig(
            mode=self.mode,
            alpha_mode=self.alpha_mode,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            seed=self.seed,
            tau=self.tau,
            learn_tau=self.learn_tau,
            normalize=self.normalize,
            hidden_dim=self.hidden_dim,
            attention_dim=self.attention_dim,
        )

    def fit(self, X, y):
        if not self.banks:
            raise ValidationError("banks must be provided before fitting")
        X = self._validated_grids(X)
        y = np.asarray(y, dtype=int)
        if len(X) != len(y):
            raise ValidationError(f"X has {len(X)} samples but y has {len(y)} labels")

        scales = self.parts + self.intervals + 1
        text_dim = None
        banks: dict[int, np.ndarray] = {}
        for cid, bank in self.banks.items():
            bank = np.asarray(bank, dtype=np.float32)
            if bank.ndim != 2 or bank.shape[0] != scales:
                raise ValidationError(
                    f"bank for class {cid} must have {scales} rows, got shape {bank.shape}"
                )
            if text_dim is None:
                text_dim = bank.shape[1]
            elif bank.shape[1] != text_dim:
                raise ValidationError(f"bank for class {cid} has width {bank.shape[1]}, expected {text_dim}")
            banks[int(cid)] = bank

        seen = sorted(set(int(c) for c in y))
        missing = [c for c in seen if c not in banks]
        if missing:
            raise ValidationError(f"fit labels {missing} have no banks")
        if self.predict_classes is not None:
            candidates = sorted(int(c) for c in self.predict_classes)
        else:
            candidates = sorted(set(banks) - set(seen))
        unknown = [c for c in candidates if c not in banks]
        if unknown:
            raise ValidationError(f"predict classes {unknown} have no banks")

        _, steps, joints, visual_dim = X.shape
        dims = BundleDims(
            temporal_steps=steps,
            joints=joints,
            visual_dim=visual_dim,
            text_dim=text_dim,
            parts=self.parts,
            intervals=self.intervals,
        )
        static_map = self.static_map
        if static_map is not None and not isinstance(static_map, StaticPartitionMap):
            raise ValidationError("static_map must be a StaticPartitionMap")
        part_labels = ([name for name, _ in static_map.parts] if static_map is not None
                       else [f"part_{p}" for p in range(self.parts)])
        bundle = Bundle(
            dims=dims,
            part_labels=part_labels,
            interval_labels=[f"interval_{z}" for z in range(self.intervals)],
            classes={cid: ClassEntry(cid, str(cid), bank) for cid, bank in banks.items()},
            samples=[
                SkeletonFeatures(grid=X[i], class_id=int(y[i]), sample_id=f"{i:06d}")
                for i in range(len(X))
            ],
            static_map=static_map,
        )
        bundle.validate()
        split = SplitSpec(seen=tuple(seen), unseen=tuple(candidates))

        checkpoint = train(bundle, split, self._config())
        self.model_ = checkpoint.model
        self.classes_ = np.asarray(candidates if candidates else seen, dtype=int)
        self.seen_classes_ = np.asarray(seen, dtype=int)
        self.banks_ = banks
        self.history_ = checkpoint.history
        self.monitored_accuracy_ = checkpoint.best_metric
        self.best_epoch_ = checkpoint.best_epoch
        return self

    def decision_function(self, X):
        """Alignment scores per candidate class (higher is better), in
        `classes_` order."""
        check_is_fitted(self, "model_")
        X = self._validated_grids(X)
        class_ids = [int(c) for c in self.classes_]
        scores = np.empty((len(X), len(class_ids)))
        for i in range(len(X)):
            sample = SkeletonFeatures(grid=X[i], class_id=-1, sample_id=f"q{i:06d}")
            scores[i] = candidate_scores(sample, self.banks_, self.model_, class_ids)
        return scores

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[np.argmax(scores, axis=1)]
