"""Zero-shot skeleton action recognition via part-aware language alignment.

Train a contrastive alignment between pooled skeleton-feature
representations (global, per body part, per temporal interval) and their
text-description embeddings; classify unseen actions by minimum alignment
loss on the global representation.
"""

from ._threads import apply_thread_cap

apply_thread_cap()

from .align import AlignmentModel, BatchContext
from .bundle import (
    Bundle,
    BundleDims,
    ClassEntry,
    SkeletonFeatures,
    SplitSpec,
    StaticPartitionMap,
    load_bundle,
    load_split,
    write_bundle,
    write_split,
)
from .errors import (
    BundleError,
    DimensionError,
    NonFiniteError,
    PurlsError,
    ValidationError,
)
from .estimator import ZeroShotSkeletonClassifier
from .evaluate import EvalReport, evaluate, export_attention, predict
from .partition import AttentionPartition, PartitionOutput, partition_adaptive, partition_static
from .synth import SynthSpec, generate
from .train import Checkpoint, TrainConfig, load_checkpoint, monitored_accuracy, train

__version__ = "0.1.0"

__all__ = [
    "AlignmentModel",
    "AttentionPartition",
    "BatchContext",
    "Bundle",
    "BundleDims",
    "BundleError",
    "Checkpoint",
    "ClassEntry",
    "DimensionError",
    "EvalReport",
    "NonFiniteError",
    "PartitionOutput",
    "PurlsError",
    "SkeletonFeatures",
    "SplitSpec",
    "StaticPartitionMap",
    "SynthSpec",
    "TrainConfig",
    "ValidationError",
    "ZeroShotSkeletonClassifier",
    "evaluate",
    "export_attention",
    "generate",
    "load_bundle",
    "load_checkpoint",
    "load_split",
    "monitored_accuracy",
    "partition_adaptive",
    "partition_static",
    "predict",
    "train",
    "write_bundle",
    "write_split",
]
