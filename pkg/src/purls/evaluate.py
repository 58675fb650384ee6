"""Zero-shot inference, accuracy reporting, and attention export.

Prediction scores every candidate class by the dot product between the
sample's test-time visual embedding and the candidate's global description
row. Because the candidate-set softmax denominator is shared, ranking by
dot product is exactly the minimum-alignment-loss rule; temperature and
shared logit offsets cannot change the answer. Ties go to the lowest
class id.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .align import AlignmentModel
from .bundle import Bundle, SkeletonFeatures, SplitSpec
from .errors import ValidationError
from .partition import partition_adaptive


@dataclass
class EvalReport:
    top1: float
    per_class: dict[int, float]
    confusion: dict[int, dict[int, int]]
    n_samples: int
    split: dict
    config_hash: str
    class_names: dict[int, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "top1": self.top1,
            "n_samples": self.n_samples,
            "per_class": {str(k): v for k, v in sorted(self.per_class.items())},
            "confusion": {
                str(t): {str(p): c for p, c in sorted(row.items())}
                for t, row in sorted(self.confusion.items())
            },
            "split": self.split,
            "config_hash": self.config_hash,
            "class_names": {str(k): v for k, v in sorted(self.class_names.items())},
        }

    def save(self, path: Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def candidate_scores(sample: SkeletonFeatures, banks: dict[int, np.ndarray],
                     model: AlignmentModel, class_ids: list[int]) -> np.ndarray:
    for cid in class_ids:
        bank = np.asarray(banks[cid])
        if bank.shape[0] != model.dims.scales:
            raise ValidationError(
                f"class {cid}: bank has {bank.shape[0]} rows, expected {model.dims.scales} "
                "(global row missing?)"
            )
    v = model.global_visual(sample)
    scores = np.empty(len(class_ids))
    for idx, cid in enumerate(class_ids):
        f = np.asarray(banks[cid], dtype=np.float64)[-1]
        if model.normalize:
            f = f / np.linalg.norm(f)
        scores[idx] = v @ f
    return scores


def predict(sample: SkeletonFeatures, banks: dict[int, np.ndarray], model: AlignmentModel) -> int:
    """Class id of the candidate with the lowest alignment loss."""
    if not banks:
        raise ValidationError("predict: no candidate banks")
    class_ids = sorted(banks)
    scores = candidate_scores(sample, banks, model, class_ids)
    return class_ids[int(np.argmax(scores))]


def alignment_loss(sample: SkeletonFeatures, banks: dict[int, np.ndarray],
                   model: AlignmentModel, candidate: int) -> float:
    """Explicit candidate-set alignment loss (the quantity `predict` minimizes)."""
    class_ids = sorted(banks)
    scores = candidate_scores(sample, banks, model, class_ids) / model.effective_tau()
    mx = scores.max()
    lse = mx + np.log(np.exp(scores - mx).sum())
    return 0.5 * (lse - scores[class_ids.index(candidate)])


def evaluate(bundle: Bundle, split: SplitSpec, model: AlignmentModel,
             config_hash: str = "") -> EvalReport:
    """Score every unseen-class sample; deterministic and order-independent."""
    bundle.check_split(split)
    unseen = sorted(split.unseen)
    if not unseen:
        raise ValidationError("split has no unseen classes")
    test_samples = bundle.samples_for(unseen)
    if not test_samples:
        raise ValidationError("bundle has no samples for the unseen classes")
    banks = {cid: bundle.classes[cid].bank for cid in unseen}

    confusion: dict[int, dict[int, int]] = {cid: {} for cid in unseen}
    for s in sorted(test_samples, key=lambda s: s.sample_id):
        pred = predict(s, banks, model)
        row = confusion[s.class_id]
        row[pred] = row.get(pred, 0) + 1

    correct = sum(confusion[cid].get(cid, 0) for cid in unseen)
    per_class = {}
    for cid in unseen:
        total = sum(confusion[cid].values())
        per_class[cid] = confusion[cid].get(cid, 0) / total if total else 0.0
    return EvalReport(
        top1=correct / len(test_samples),
        per_class=per_class,
        confusion=confusion,
        n_samples=len(test_samples),
        split={"seen": sorted(split.seen), "unseen": unseen},
        config_hash=config_hash,
        class_names={cid: bundle.classes[cid].name for cid in unseen},
    )


def export_attention(sample: SkeletonFeatures, bank: np.ndarray, model: AlignmentModel,
                     out_csv: Path, row_labels: list[str], class_id: int | None = None) -> Path:
    """Write the adaptive attention matrix for one sample/bank pairing.

    CSV rows are the description labels, columns the t-major nodes; a JSON
    sidecar (same stem, .json) records the axis metadata. Values are
    float32, formatted so a re-import reproduces them exactly.
    """
    if model.mode != "adaptive":
        raise ValidationError(f"attention export requires an adaptive model, got mode {model.mode!r}")
    d = model.dims
    if len(row_labels) != d.scales:
        raise ValidationError(f"expected {d.scales} row labels, got {len(row_labels)}")
    out = partition_adaptive(sample.flat(), np.asarray(bank, dtype=np.float64), model.attention)
    att = out.attention.astype(np.float32)

    out_csv = Path(out_csv)
    node_labels = [f"t{t}_j{j}" for t in range(d.temporal_steps) for j in range(d.joints)]
    with out_csv.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["description"] + node_labels)
        for label, row in zip(row_labels, att):
            writer.writerow([label] + [np.format_float_positional(v, unique=True) for v in row])

    sidecar = out_csv.with_suffix(".json")
    sidecar.write_text(json.dumps({
        "sample_id": sample.sample_id,
        "class_id": sample.class_id if class_id is None else class_id,
        "temporal_steps": d.temporal_steps,
        "joints": d.joints,
        "nodes": d.nodes,
        "node_order": "t-major (node s = t * joints + j)",
        "row_labels": row_labels,
    }, indent=2) + "\n")
    return out_csv


def read_attention_csv(path: Path) -> tuple[list[str], np.ndarray]:
    """Re-import an exported attention CSV (labels, float32 matrix)."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    labels = [r[0] for r in rows[1:]]
    values = np.array([[np.float32(v) for v in r[1:]] for r in rows[1:]], dtype=np.float32)
    return labels, values


def config_hash_of(config_dict: dict) -> str:
    blob = json.dumps(config_dict, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]
