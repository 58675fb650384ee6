"""Feature-bundle storage: binary tensors, manifest, splits, partition maps.

A bundle directory decouples this engine from upstream feature extractors:

    bundle/
      manifest.json       dims, labels, class/sample tables, static map
      class_<id>.ptf      per-class description-embedding banks
      sample_<id>.ptf     per-sample node feature grids

Tensor files (.ptf) are deliberately library-free:

    magic   4 bytes  b"PRLT"
    version u8       1
    dtype   u8       1 = float32 LE, 2 = float64 LE
    ndim    u8
    dims    ndim x u32 LE
    payload row-major, little-endian

The manifest records a sha256 per tensor file, so any corruption of a
written bundle is detected at load time. Splits are JSON files of the form
{"seen": [...], "unseen": [...]}.
"""

from __future__ import annotations

import hashlib
import io
import json
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BundleError, ValidationError

MAGIC = b"PRLT"
FORMAT_VERSION = 1
_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_DTYPE_CODES = {np.dtype("float32"): 1, np.dtype("float64"): 2}
_HEADER = struct.Struct("<4sBBB")

_ID_RE = re.compile(r"^[A-Za-z0-9_\-]+$")


def tensor_bytes(array: np.ndarray) -> bytes:
    """Serialize an array to the .ptf wire format."""
    arr = np.ascontiguousarray(array)
    if arr.dtype not in _DTYPE_CODES:
        raise BundleError(f"unsupported dtype {arr.dtype}; use float32 or float64")
    if arr.ndim < 1 or arr.ndim > 4:
        raise BundleError(f"unsupported rank {arr.ndim}")
    out = io.BytesIO()
    out.write(_HEADER.pack(MAGIC, FORMAT_VERSION, _DTYPE_CODES[arr.dtype], arr.ndim))
    out.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
    out.write(le.tobytes(order="C"))
    return out.getvalue()


def write_tensor(path: Path, array: np.ndarray) -> str:
    """Write a .ptf file and return its sha256 hex digest."""
    data = tensor_bytes(array)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def tensor_from_bytes(data: bytes, name: str) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise BundleError(f"{name}: truncated header at byte {len(data)}")
    magic, version, dtype_code, ndim = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BundleError(f"{name}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise BundleError(f"{name}: unsupported version {version}")
    if dtype_code not in _DTYPES:
        raise BundleError(f"{name}: unknown dtype code {dtype_code}")
    if not 1 <= ndim <= 4:
        raise BundleError(f"{name}: bad rank {ndim}")
    dims_end = _HEADER.size + 4 * ndim
    if len(data) < dims_end:
        raise BundleError(f"{name}: truncated dims at byte {len(data)}")
    shape = struct.unpack_from(f"<{ndim}I", data, _HEADER.size)
    if any(d == 0 for d in shape):
        raise BundleError(f"{name}: zero-sized dimension in shape {shape}")
    dtype = _DTYPES[dtype_code]
    expected = int(np.prod(shape)) * dtype.itemsize
    payload = data[dims_end:]
    if len(payload) < expected:
        raise BundleError(
            f"{name}: truncated payload at byte {dims_end + len(payload)}, "
            f"expected {expected} payload bytes"
        )
    if len(payload) > expected:
        raise BundleError(f"{name}: {len(payload) - expected} trailing bytes after payload")
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape).copy()
    if not np.isfinite(arr).all():
        raise BundleError(f"{name}: payload contains NaN/Inf values")
    return arr


def read_tensor(path: Path, expect_sha256: str | None = None) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise BundleError(f"{path}: missing tensor file")
    data = path.read_bytes()
    if expect_sha256 is not None:
        digest = hashlib.sha256(data).hexdigest()
        if digest != expect_sha256:
            raise BundleError(f"{path.name}: sha256 mismatch (file {digest[:12]}..., manifest {expect_sha256[:12]}...)")
    return tensor_from_bytes(data, path.name)


@dataclass(frozen=True)
class BundleDims:
    temporal_steps: int   # temporal feature length after upstream convolution
    joints: int
    visual_dim: int
    text_dim: int
    parts: int
    intervals: int

    @property
    def nodes(self) -> int:
        return self.temporal_steps * self.joints

    @property
    def scales(self) -> int:
        """Part rows + interval rows + the trailing global row."""
        return self.parts + self.intervals + 1

    def to_dict(self) -> dict:
        return {
            "temporal_steps": self.temporal_steps,
            "joints": self.joints,
            "visual_dim": self.visual_dim,
            "text_dim": self.text_dim,
            "body_parts": self.parts,
            "intervals": self.intervals,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BundleDims":
        try:
            dims = cls(
                temporal_steps=int(d["temporal_steps"]),
                joints=int(d["joints"]),
                visual_dim=int(d["visual_dim"]),
                text_dim=int(d["text_dim"]),
                parts=int(d["body_parts"]),
                intervals=int(d["intervals"]),
            )
        except KeyError as exc:
            raise BundleError(f"manifest dims: missing field {exc.args[0]!r}") from exc
        for name, value in dims.to_dict().items():
            if value <= 0:
                raise BundleError(f"manifest dims: field {name!r} must be positive, got {value}")
        return dims


@dataclass(frozen=True)
class StaticPartitionMap:
    """Fixed joint-to-part assignment plus contiguous temporal intervals.

    `parts` pairs each part name with its joint indices; names and order
    must match the bundle's part labels. `intervals` are half-open [start,
    stop) ranges that tile [0, temporal_steps).
    """

    parts: tuple[tuple[str, tuple[int, ...]], ...]
    intervals: tuple[tuple[int, int], ...]

    def validate(self, joints: int, temporal_steps: int, part_labels: list[str]) -> None:
        names = [name for name, _ in self.parts]
        if names != list(part_labels):
            raise BundleError(
                f"static_map: part names {names} do not match part labels {list(part_labels)}"
            )
        seen: set[int] = set()
        for name, idx in self.parts:
            if not idx:
                raise BundleError(f"static_map: part {name!r} has no joints")
            for j in idx:
                if not 0 <= j < joints:
                    raise BundleError(f"static_map: part {name!r} joint {j} out of range 0..{joints - 1}")
                if j in seen:
                    raise BundleError(f"static_map: joint {j} assigned to more than one part")
                seen.add(j)
        if seen != set(range(joints)):
            missing = sorted(set(range(joints)) - seen)
            raise BundleError(f"static_map: joints {missing} not assigned to any part")
        cursor = 0
        for start, stop in self.intervals:
            if start != cursor or stop <= start:
                raise BundleError(
                    f"static_map: intervals must contiguously tile [0, {temporal_steps}), "
                    f"got range [{start}, {stop}) after {cursor}"
                )
            cursor = stop
        if cursor != temporal_steps:
            raise BundleError(
                f"static_map: intervals cover [0, {cursor}) but temporal length is {temporal_steps}"
            )

    def to_dict(self) -> dict:
        return {
            "parts": {name: list(idx) for name, idx in self.parts},
            "intervals": [list(r) for r in self.intervals],
        }

    @classmethod
    def from_dict(cls, d: dict, part_labels: list[str]) -> "StaticPartitionMap":
        try:
            raw_parts = d["parts"]
            raw_intervals = d["intervals"]
        except KeyError as exc:
            raise BundleError(f"static_map: missing field {exc.args[0]!r}") from exc
        if set(raw_parts) != set(part_labels):
            raise BundleError(
                f"static_map: part names {sorted(raw_parts)} do not match part labels {part_labels}"
            )
        parts = tuple((name, tuple(int(j) for j in raw_parts[name])) for name in part_labels)
        intervals = tuple((int(a), int(b)) for a, b in raw_intervals)
        return cls(parts=parts, intervals=intervals)


def default_skeleton_map(temporal_steps: int, intervals: int = 3) -> StaticPartitionMap:
    """Best-effort default map for the common 25-joint skeleton layout.

    The joint-to-part reading is a convention, not a contract: bundles may
    always override it with their own map.
    """
    parts = (
        ("head", (2, 3, 20)),
        ("hands", (4, 5, 6, 7, 8, 9, 10, 11, 21, 22, 23, 24)),
        ("torso", (0, 1, 12, 16)),
        ("legs", (13, 14, 15, 17, 18, 19)),
    )
    return StaticPartitionMap(parts=parts, intervals=even_intervals(temporal_steps, intervals))


def even_intervals(temporal_steps: int, count: int) -> tuple[tuple[int, int], ...]:
    """Split [0, temporal_steps) into `count` near-equal contiguous ranges."""
    if count <= 0 or count > temporal_steps:
        raise ValidationError(f"cannot split {temporal_steps} steps into {count} intervals")
    bounds = np.linspace(0, temporal_steps, count + 1).astype(int)
    return tuple((int(bounds[i]), int(bounds[i + 1])) for i in range(count))


@dataclass(frozen=True)
class SkeletonFeatures:
    """One sample's extracted node features, stored t-major (node s = t*J + j)."""

    grid: np.ndarray  # (temporal_steps, joints, visual_dim) float32
    class_id: int
    sample_id: str

    def flat(self) -> np.ndarray:
        """Nodes as an (S, n) float64 matrix, t-major, ready for the kernel."""
        lp, j, n = self.grid.shape
        return self.grid.reshape(lp * j, n).astype(np.float64)


@dataclass(frozen=True)
class ClassEntry:
    class_id: int
    name: str
    bank: np.ndarray  # (parts + intervals + 1, text_dim) float32; last row is global


@dataclass(frozen=True)
class SplitSpec:
    seen: tuple[int, ...]
    unseen: tuple[int, ...]

    def __post_init__(self):
        overlap = set(self.seen) & set(self.unseen)
        if overlap:
            raise ValidationError(f"split: classes {sorted(overlap)} are both seen and unseen")

    def to_dict(self) -> dict:
        return {"seen": list(self.seen), "unseen": list(self.unseen)}


@dataclass
class Bundle:
    dims: BundleDims
    part_labels: list[str]
    interval_labels: list[str]
    classes: dict[int, ClassEntry]
    samples: list[SkeletonFeatures]
    static_map: StaticPartitionMap | None = None
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        d = self.dims
        if len(self.part_labels) != d.parts:
            raise BundleError(
                f"part_labels: expected {d.parts} entries, got {len(self.part_labels)}"
            )
        if len(self.interval_labels) != d.intervals:
            raise BundleError(
                f"interval_labels: expected {d.intervals} entries, got {len(self.interval_labels)}"
            )
        for cid, entry in self.classes.items():
            if entry.bank.shape != (d.scales, d.text_dim):
                raise BundleError(
                    f"class {cid} ({entry.name!r}): bank shape {entry.bank.shape} does not "
                    f"match expected ({d.scales}, {d.text_dim})"
                )
        ids = set()
        for s in self.samples:
            if not _ID_RE.match(s.sample_id):
                raise BundleError(f"sample id {s.sample_id!r} is not filesystem-safe")
            if s.sample_id in ids:
                raise BundleError(f"duplicate sample id {s.sample_id!r}")
            ids.add(s.sample_id)
            if s.class_id not in self.classes:
                raise BundleError(f"sample {s.sample_id}: unknown class id {s.class_id}")
            expected = (d.temporal_steps, d.joints, d.visual_dim)
            if s.grid.shape != expected:
                raise BundleError(
                    f"sample {s.sample_id}: grid shape {s.grid.shape} does not match {expected}"
                )
        if self.static_map is not None:
            self.static_map.validate(d.joints, d.temporal_steps, self.part_labels)

    def check_split(self, split: SplitSpec) -> None:
        for cid in list(split.seen) + list(split.unseen):
            if cid not in self.classes:
                raise ValidationError(f"split references unknown class id {cid}")

    def samples_for(self, class_ids) -> list[SkeletonFeatures]:
        wanted = set(class_ids)
        return [s for s in self.samples if s.class_id in wanted]


def write_bundle(bundle: Bundle, out_dir: Path) -> Path:
    """Write a bundle directory; loading it back is bit-exact for all tensors."""
    bundle.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    classes = []
    for cid in sorted(bundle.classes):
        entry = bundle.classes[cid]
        fname = f"class_{cid}.ptf"
        digest = write_tensor(out / fname, entry.bank.astype(np.float32))
        classes.append({"id": cid, "name": entry.name, "bank": fname, "sha256": digest})

    samples = []
    for s in bundle.samples:
        fname = f"sample_{s.sample_id}.ptf"
        digest = write_tensor(out / fname, s.grid.astype(np.float32))
        samples.append(
            {"id": s.sample_id, "class_id": s.class_id, "file": fname, "sha256": digest}
        )

    manifest = {
        "format": "purls-bundle",
        "version": FORMAT_VERSION,
        "dims": bundle.dims.to_dict(),
        "part_labels": list(bundle.part_labels),
        "interval_labels": list(bundle.interval_labels),
        "classes": classes,
        "samples": samples,
    }
    if bundle.static_map is not None:
        manifest["static_map"] = bundle.static_map.to_dict()
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out


def load_bundle(path: Path) -> Bundle:
    """Load and fully validate a bundle directory.

    Every invariant is checked here so downstream code can trust shapes:
    dims vs tensors, bank row counts, partition-map coverage, digests.
    """
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise BundleError(f"{root}: missing manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise BundleError(f"{manifest_path}: invalid JSON ({exc})") from exc

    if manifest.get("format") != "purls-bundle":
        raise BundleError(f"manifest: format field is {manifest.get('format')!r}")
    if manifest.get("version") != FORMAT_VERSION:
        raise BundleError(f"manifest: unsupported version {manifest.get('version')!r}")
    dims = BundleDims.from_dict(_require(manifest, "dims"))

    part_labels = list(_require(manifest, "part_labels"))
    interval_labels = list(_require(manifest, "interval_labels"))

    classes: dict[int, ClassEntry] = {}
    for row in _require(manifest, "classes"):
        cid = int(_require(row, "id", "class entry"))
        if cid in classes:
            raise BundleError(f"manifest: duplicate class id {cid}")
        bank = read_tensor(root / _require(row, "bank", f"class {cid}"), row.get("sha256"))
        if bank.dtype != np.float32:
            raise BundleError(f"class {cid}: bank must be float32, got {bank.dtype}")
        classes[cid] = ClassEntry(class_id=cid, name=str(row.get("name", cid)), bank=bank)

    samples: list[SkeletonFeatures] = []
    for row in _require(manifest, "samples"):
        sid = str(_require(row, "id", "sample entry"))
        grid = read_tensor(root / _require(row, "file", f"sample {sid}"), row.get("sha256"))
        if grid.dtype != np.float32:
            raise BundleError(f"sample {sid}: grid must be float32, got {grid.dtype}")
        if grid.ndim != 3:
            raise BundleError(f"sample {sid}: grid must be rank 3, got rank {grid.ndim}")
        samples.append(
            SkeletonFeatures(grid=grid, class_id=int(_require(row, "class_id", f"sample {sid}")), sample_id=sid)
        )

    static_map = None
    if "static_map" in manifest:
        static_map = StaticPartitionMap.from_dict(manifest["static_map"], part_labels)

    bundle = Bundle(
        dims=dims,
        part_labels=part_labels,
        interval_labels=interval_labels,
        classes=classes,
        samples=samples,
        static_map=static_map,
    )
    bundle.validate()
    return bundle


def _require(d: dict, key: str, where: str = "manifest"):
    try:
        return d[key]
    except (KeyError, TypeError) as exc:
        raise BundleError(f"{where}: missing field {key!r}") from exc


def load_split(path: Path, known_ids=None) -> SplitSpec:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path}: cannot parse split file ({exc})") from exc
    for key in ("seen", "unseen"):
        if key not in raw or not isinstance(raw[key], list):
            raise ValidationError(f"{path}: split file must contain a {key!r} list")
    split = SplitSpec(
        seen=tuple(int(c) for c in raw["seen"]),
        unseen=tuple(int(c) for c in raw["unseen"]),
    )
    if known_ids is not None:
        known = set(known_ids)
        for cid in split.seen + split.unseen:
            if cid not in known:
                raise ValidationError(f"{path}: split references unknown class id {cid}")
    return split


def write_split(split: SplitSpec, path: Path) -> None:
    Path(path).write_text(json.dumps(split.to_dict(), indent=2) + "\n")
