"""Incremental model lifecycle: head growth, frozen snapshots, prototypes, checkpoints."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptionError, ShapeError, StateError
from .nn import FeatureExtractor, ForwardTrace, Head, HeadSet, init_network

CKPT_MAGIC = b"CILM1\x00"
CKPT_VERSION = 1


class IncrementalModel:
    """Feature extractor plus the aggregated per-task heads.

    classes_per_head records, per head, the ordered global class ids its
    rot-index-0 slots stand for; that ordering defines the local labels.
    """

    def __init__(self, extractor: FeatureExtractor, heads: HeadSet | None = None):
        self.extractor = extractor
        self.heads = heads or HeadSet()
        self.classes_per_head: list[list[int]] = []
        self.trained_tasks = 0

    @classmethod
    def create(cls, layer_dims: list[int], seed: int) -> "IncrementalModel":
        return cls(init_network(layer_dims, seed))

    @property
    def feature_dim(self) -> int:
        return self.extractor.feature_dim

    def forward_features(self, batch: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
        return self.extractor.forward(batch)

    def forward_logits(self, batch: np.ndarray) -> np.ndarray:
        feats, _ = self.extractor.forward(batch)
        return self.heads.forward(feats)

    def seen_classes(self) -> list[int]:
        out: list[int] = []
        for ids in self.classes_per_head:
            out.extend(ids)
        return out

    def param_list(self) -> list[np.ndarray]:
        return self.extractor.param_list() + self.heads.param_list()

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(self.extractor.checksum().encode())
        for p in self.heads.param_list():
            h.update(np.ascontiguousarray(p).tobytes())
        return h.hexdigest()


def append_head(model: IncrementalModel, class_ids: list[int], rot_factor: int, seed: int) -> IncrementalModel:
    """Append a seeded head for the given classes; existing heads are untouched."""
    tag = len(model.heads)
    model.heads.heads.append(
        Head.create(model.feature_dim, len(class_ids), rot_factor, seed, tag)
    )
    model.classes_per_head.append(list(class_ids))
    return model


class FrozenExtractor:
    """Deep copy of an extractor, checksum-verified on every use."""

    def __init__(self, extractor: FeatureExtractor):
        self._extractor = extractor.copy()
        self.checksum = self._extractor.checksum()

    @property
    def feature_dim(self) -> int:
        return self._extractor.feature_dim

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return self._extractor.layer_dims

    def verify(self) -> None:
        if self._extractor.checksum() != self.checksum:
            raise StateError("frozen extractor was mutated after freezing")

    def features(self, batch: np.ndarray) -> np.ndarray:
        self.verify()
        feats, _ = self._extractor.forward(batch)
        return feats


def freeze_snapshot(model: IncrementalModel) -> FrozenExtractor:
    if model.trained_tasks < 1:
        raise StateError("cannot freeze an extractor before the initial task is trained")
    return FrozenExtractor(model.extractor)


def features_of(extractor: FeatureExtractor | FrozenExtractor, batch: np.ndarray) -> np.ndarray:
    if isinstance(extractor, FrozenExtractor):
        return extractor.features(batch)
    feats, _ = extractor.forward(batch)
    return feats


@dataclass
class PrototypeStore:
    """Per-class mean feature vectors, kept forever once computed.

    provenance maps class id -> (task id, extractor checksum at computation
    time), so prototype/extractor drift is a queryable condition.
    """

    vectors: dict[int, np.ndarray] = field(default_factory=dict)
    provenance: dict[int, tuple[int, str]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.vectors)

    def class_ids(self) -> list[int]:
        return sorted(self.vectors)

    def matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """Prototypes stacked in ascending class-id order."""
        ids = self.class_ids()
        return np.array(ids, dtype=np.int64), np.stack([self.vectors[c] for c in ids])

    def stale_classes(self, extractor_checksum: str) -> list[int]:
        return [c for c, (_, chk) in sorted(self.provenance.items()) if chk != extractor_checksum]


def compute_prototypes(
    extractor: FeatureExtractor | FrozenExtractor,
    x: np.ndarray,
    y_global: np.ndarray,
    store: PrototypeStore,
    task_id: int,
) -> PrototypeStore:
    """One forward pass over the task's training samples; mean feature per class."""
    chk = extractor.checksum if isinstance(extractor, FrozenExtractor) else extractor.checksum()
    feats = features_of(extractor, x)
    for c in sorted(np.unique(y_global).tolist()):
        if c in store.vectors:
            raise StateError(f"prototype for class {c} already exists (exemplar-free violation)")
        store.vectors[c] = feats[y_global == c].mean(axis=0)
        store.provenance[c] = (task_id, chk)
    return store


# --- checkpoint serialization -------------------------------------------------


def save_checkpoint(model: IncrementalModel, store: PrototypeStore, path) -> None:
    """Single binary blob: CILM1 magic, JSON header, sha256-guarded f64 payload."""
    arrays: list[np.ndarray] = list(model.param_list())
    proto_ids = store.class_ids()
    arrays.extend(store.vectors[c] for c in proto_ids)
    payload = b"".join(np.ascontiguousarray(a, dtype=np.float64).tobytes() for a in arrays)
    header = {
        "layer_dims": list(model.extractor.layer_dims),
        "heads": [
            {"n_classes": h.n_classes, "rot_factor": h.rot_factor, "classes": ids}
            for h, ids in zip(model.heads.heads, model.classes_per_head)
        ],
        "trained_tasks": model.trained_tasks,
        "prototype_ids": proto_ids,
        "provenance": {str(c): [store.provenance[c][0], store.provenance[c][1]] for c in proto_ids},
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<II", CKPT_VERSION, len(header_bytes)))
        f.write(header_bytes)
        f.write(payload)


def load_checkpoint(path, expect_layer_dims: list[int] | None = None):
    """Rebuild (model, store) from a checkpoint; bitwise round-trip guaranteed."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise CorruptionError(f"{path}: bad checkpoint magic")
    off = len(CKPT_MAGIC)
    if len(blob) < off + 8:
        raise CorruptionError(f"{path}: truncated checkpoint header")
    version, header_len = struct.unpack("<II", blob[off : off + 8])
    if version != CKPT_VERSION:
        raise CorruptionError(f"{path}: unsupported checkpoint version {version}")
    off += 8
    if len(blob) < off + header_len:
        raise CorruptionError(f"{path}: truncated checkpoint header block")
    header = json.loads(blob[off : off + header_len])
    payload = blob[off + header_len :]
    if hashlib.sha256(payload).hexdigest() != header["payload_sha256"]:
        raise CorruptionError(f"{path}: payload checksum mismatch (truncated or corrupted)")

    layer_dims = [int(v) for v in header["layer_dims"]]
    if expect_layer_dims is not None and list(expect_layer_dims) != layer_dims:
        raise ShapeError(
            f"checkpoint architecture {layer_dims} does not match expected {list(expect_layer_dims)}"
        )
    d = layer_dims[-1]

    shapes: list[tuple[int, ...]] = []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        shapes.extend([(fan_in, fan_out), (fan_out,)])
    for spec in header["heads"]:
        width = int(spec["n_classes"]) * int(spec["rot_factor"])
        shapes.extend([(d, width), (width,)])
    shapes.extend((d,) for _ in header["prototype_ids"])

    expected_floats = sum(int(np.prod(s)) for s in shapes)
    if len(payload) != expected_floats * 8:
        raise CorruptionError(
            f"{path}: payload holds {len(payload)} bytes, expected {expected_floats * 8}"
        )
    flat = np.frombuffer(payload, dtype="<f8")
    arrays, pos = [], 0
    for s in shapes:
        n = int(np.prod(s))
        arrays.append(flat[pos : pos + n].reshape(s).copy())
        pos += n

    n_layers = len(layer_dims) - 1
    weights = [arrays[2 * i] for i in range(n_layers)]
    biases = [arrays[2 * i + 1] for i in range(n_layers)]
    model = IncrementalModel(FeatureExtractor(weights, biases))
    pos = 2 * n_layers
    for spec in header["heads"]:
        model.heads.heads.append(
            Head(arrays[pos], arrays[pos + 1], int(spec["n_classes"]), int(spec["rot_factor"]))
        )
        model.classes_per_head.append([int(c) for c in spec["classes"]])
        pos += 2
    model.trained_tasks = int(header["trained_tasks"])

    store = PrototypeStore()
    for c in header["prototype_ids"]:
        store.vectors[int(c)] = arrays[pos]
        task_id, chk = header["provenance"][str(c)]
        store.provenance[int(c)] = (int(task_id), str(chk))
        pos += 1
    return model, store
