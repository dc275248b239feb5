"""Datasets, class-disjoint task streams, rotation augmentation, and file I/O.

Images are square s x s grids stored flattened (d = s*s) in float64. The
binary on-disk format is CILD1 (little-endian, f32 pixels); a CSV alternative
with header ``label,p0,...,p{d-1}`` is also supported. All types are
immutable after construction except for the task views' training-data
lifecycle flag, which enforces the exemplar-free contract.
"""

from __future__ import annotations

import csv
import hashlib
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, FormatError, ProtocolError, ShapeError, StateError
from .seeding import rng_for

MAGIC = b"CILD1\x00"
DEFAULT_HOLDOUT_FRAC = 0.2


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic stand-in dataset."""

    n_classes: int = 8
    side: int = 8
    samples_per_class: int = 100
    noise_sigma: float = 0.1
    seed: int = 1
    holdout_frac: float = DEFAULT_HOLDOUT_FRAC

    def to_dict(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "side": self.side,
            "samples_per_class": self.samples_per_class,
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
            "holdout_frac": self.holdout_frac,
        }


@dataclass
class Dataset:
    """Flattened images with labels and a per-class train/held-out split."""

    x: np.ndarray  # (N, d) float64
    y: np.ndarray  # (N,) int64, contiguous class ids in [0, n_classes)
    n_classes: int
    side: int
    train_idx: dict[int, np.ndarray]
    held_idx: dict[int, np.ndarray]
    label_mapping: dict[int, int] | None = None  # original file label -> contiguous id
    templates: np.ndarray | None = None  # (K, d), synthetic provenance only

    def __post_init__(self) -> None:
        if self.x.ndim != 2 or self.x.shape[1] != self.side * self.side:
            raise ShapeError(f"pixel array {self.x.shape} does not match side {self.side}")
        if self.y.shape != (self.x.shape[0],):
            raise ShapeError(f"labels {self.y.shape} vs samples {self.x.shape[0]}")
        for c in range(self.n_classes):
            tr, he = self.train_idx.get(c), self.held_idx.get(c)
            if tr is None or he is None or len(tr) < 1 or len(he) < 1:
                raise DataError(f"class {c} needs >=1 train and >=1 held-out sample")
            if np.intersect1d(tr, he).size:
                raise DataError(f"class {c} train/held-out indices overlap")

    @property
    def n_samples(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def heldout_count(self, class_ids) -> int:
        return sum(len(self.held_idx[c]) for c in class_ids)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(struct.pack("<III", self.n_classes, self.side, self.n_samples))
        h.update(np.ascontiguousarray(self.x).tobytes())
        h.update(np.ascontiguousarray(self.y).tobytes())
        for c in range(self.n_classes):
            h.update(np.ascontiguousarray(self.train_idx[c]).tobytes())
            h.update(np.ascontiguousarray(self.held_idx[c]).tobytes())
        return h.hexdigest()


def _split_per_class(y: np.ndarray, n_classes: int, holdout_frac: float):
    """Last fraction of each class's samples (in record order) becomes held-out."""
    train_idx, held_idx = {}, {}
    for c in range(n_classes):
        idx = np.flatnonzero(y == c)
        if idx.size < 2:
            raise DataError(f"class {c} has {idx.size} samples; need >= 2 to split")
        n_held = int(round(holdout_frac * idx.size))
        n_held = min(max(n_held, 1), idx.size - 1)
        train_idx[c] = idx[: idx.size - n_held]
        held_idx[c] = idx[idx.size - n_held :]
    return train_idx, held_idx


# Class templates sit a few noise standard deviations apart: close enough
# that a feature extractor trained on a subset of classes transfers poorly
# to the rest, far enough that joint training separates them well.
TEMPLATE_SCALE = 0.035
RAMP_SCALE = 0.0175


def _orientation_ramp(side: int) -> np.ndarray:
    # fixed anisotropic gradient; guarantees every template changes under
    # each of the three rotations, like the consistent "sky-up" cue in photos
    lin = np.linspace(-1.0, 1.0, side)
    return RAMP_SCALE * lin[:, None] + 0.5 * RAMP_SCALE * lin[None, :]


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Deterministic noisy-template dataset; one rotation-asymmetric template per class."""
    if spec.n_classes < 2 or spec.side < 2:
        raise ConfigError(f"need n_classes >= 2 and side >= 2, got {spec.n_classes}, {spec.side}")
    if spec.samples_per_class < 5:
        raise ConfigError(f"samples_per_class must be >= 5, got {spec.samples_per_class}")
    if not 0.0 < spec.holdout_frac < 1.0:
        raise ConfigError(f"holdout_frac must be in (0, 1), got {spec.holdout_frac}")
    rng = rng_for(spec.seed, "synthetic")
    ramp = _orientation_ramp(spec.side).ravel()
    d = spec.side * spec.side
    templates = TEMPLATE_SCALE * rng.normal(size=(spec.n_classes, d)) + ramp
    xs, ys = [], []
    for c in range(spec.n_classes):
        noise = spec.noise_sigma * rng.normal(size=(spec.samples_per_class, d))
        xs.append(templates[c] + noise)
        ys.append(np.full(spec.samples_per_class, c, dtype=np.int64))
    # round-trip through f32 so CILD1 serialization is bitwise lossless
    x = np.concatenate(xs).astype(np.float32).astype(np.float64)
    y = np.concatenate(ys)
    train_idx, held_idx = _split_per_class(y, spec.n_classes, spec.holdout_frac)
    return Dataset(
        x=x,
        y=y,
        n_classes=spec.n_classes,
        side=spec.side,
        train_idx=train_idx,
        held_idx=held_idx,
        templates=templates.astype(np.float32).astype(np.float64),
    )


def save_dataset(ds: Dataset, path: str | Path, fmt: str = "binary") -> None:
    """Write CILD1 binary or CSV; records are grouped per class, train first."""
    order = np.concatenate(
        [np.concatenate([ds.train_idx[c], ds.held_idx[c]]) for c in range(ds.n_classes)]
    )
    x, y = ds.x[order], ds.y[order]
    path = Path(path)
    if fmt == "binary":
        with open(path, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<III", ds.n_classes, ds.dim, ds.n_samples))
            rec = np.zeros(
                ds.n_samples, dtype=np.dtype([("label", "<u2"), ("pix", "<f4", (ds.dim,))])
            )
            rec["label"] = y.astype(np.uint16)
            rec["pix"] = x.astype(np.float32)
            f.write(rec.tobytes())
    elif fmt == "csv":
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["label"] + [f"p{i}" for i in range(ds.dim)])
            for label, row in zip(y, x):
                writer.writerow([int(label)] + [repr(float(v)) for v in row])
    else:
        raise ConfigError(f"unknown dataset format {fmt!r} (expected 'binary' or 'csv')")


def _finish_load(x: np.ndarray, labels: np.ndarray, declared_k: int | None, holdout_frac: float) -> Dataset:
    d = x.shape[1]
    side = math.isqrt(d)
    if side * side != d:
        raise FormatError(f"pixel count {d} is not a perfect square")
    distinct = np.unique(labels)
    if declared_k is not None and distinct.size != declared_k:
        raise FormatError(f"header declares {declared_k} classes, found {distinct.size}")
    mapping = {int(orig): i for i, orig in enumerate(distinct)}
    y = np.array([mapping[int(v)] for v in labels], dtype=np.int64)
    train_idx, held_idx = _split_per_class(y, distinct.size, holdout_frac)
    return Dataset(
        x=x.astype(np.float64),
        y=y,
        n_classes=distinct.size,
        side=side,
        train_idx=train_idx,
        held_idx=held_idx,
        label_mapping=mapping,
    )


def load_dataset(
    path: str | Path, fmt: str | None = None, holdout_frac: float = DEFAULT_HOLDOUT_FRAC
) -> Dataset:
    """Load a CILD1 binary or CSV dataset; labels are remapped to 0..K-1."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "binary"
    if fmt == "csv":
        return _load_csv(path, holdout_frac)
    if fmt != "binary":
        raise ConfigError(f"unknown dataset format {fmt!r} (expected 'binary' or 'csv')")
    blob = path.read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise FormatError(f"{path}: bad magic at byte offset 0 (expected {MAGIC!r})")
    header_end = len(MAGIC) + 12
    if len(blob) < header_end:
        raise FormatError(f"{path}: truncated header at byte offset {len(blob)}")
    k, d, n = struct.unpack("<III", blob[len(MAGIC) : header_end])
    rec_size = 2 + 4 * d
    expected = header_end + n * rec_size
    if len(blob) < expected:
        raise FormatError(
            f"{path}: truncated payload at byte offset {len(blob)} (expected {expected} bytes)"
        )
    if len(blob) > expected:
        raise FormatError(f"{path}: {len(blob) - expected} trailing bytes at offset {expected}")
    rec = np.frombuffer(
        blob, dtype=np.dtype([("label", "<u2"), ("pix", "<f4", (d,))]), count=n, offset=header_end
    )
    return _finish_load(rec["pix"].astype(np.float64), rec["label"].astype(np.int64), k, holdout_frac)


def _load_csv(path: Path, holdout_frac: float) -> Dataset:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file") from None
        d = len(header) - 1
        if d < 1 or header != ["label"] + [f"p{i}" for i in range(d)]:
            raise FormatError(f"{path}: bad CSV header (expected label,p0,...,p{{d-1}})")
        labels, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != d + 1:
                raise FormatError(f"{path}: line {lineno} has {len(row)} fields, expected {d + 1}")
            try:
                labels.append(int(row[0]))
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise FormatError(f"{path}: line {lineno} has a non-numeric field") from None
    if not rows:
        raise FormatError(f"{path}: no data rows")
    return _finish_load(np.array(rows), np.array(labels, dtype=np.int64), None, holdout_frac)


# --- rotation augmentation ---------------------------------------------------

VALID_ROTATIONS = (90, 180, 270)


def rotate_image(grid: np.ndarray, delta: int) -> np.ndarray:
    """Clockwise rotation of a square grid; the index map is (i,j) -> (j, s-1-i)."""
    if delta not in VALID_ROTATIONS:
        raise ConfigError(f"rotation must be one of {VALID_ROTATIONS}, got {delta}")
    grid = np.asarray(grid)
    if grid.ndim != 2 or grid.shape[0] != grid.shape[1]:
        raise ShapeError(f"rotate_image expects a square grid, got {grid.shape}")
    return np.rot90(grid, k=-(delta // 90)).copy()


@dataclass
class RotatedBatch:
    """Rotated copies of a task's training samples with extended labels."""

    x: np.ndarray  # (3N, d)
    y: np.ndarray  # (3N,) extended local labels in [n_t, 4*n_t)
    deltas: np.ndarray  # (3N,) degrees
    origins: np.ndarray  # (3N,) index of the source sample


def augment_rotation(x: np.ndarray, y_local: np.ndarray, n_classes: int, side: int) -> RotatedBatch:
    """Three rotated copies per sample; y' = rot_index * n_t + local class.

    The originals are not duplicated here: they stay in the task's own
    stream, and the two parts are summed separately in the training loss.
    """
    if x.shape[0] == 0:
        raise DataError("cannot augment an empty task")
    if x.shape[1] != side * side:
        raise ShapeError(f"samples of dim {x.shape[1]} do not match side {side}")
    n = x.shape[0]
    grids = x.reshape(n, side, side)
    xs, ys, ds, os_ = [], [], [], []
    for rot_index, delta in enumerate(VALID_ROTATIONS, start=1):
        rotated = np.rot90(grids, k=-(delta // 90), axes=(1, 2))
        xs.append(rotated.reshape(n, side * side))
        ys.append(rot_index * n_classes + y_local)
        ds.append(np.full(n, delta, dtype=np.int64))
        os_.append(np.arange(n, dtype=np.int64))
    return RotatedBatch(
        x=np.concatenate(xs), y=np.concatenate(ys), deltas=np.concatenate(ds), origins=np.concatenate(os_)
    )


# --- task streams ------------------------------------------------------------


class TaskView:
    """One task's classes and data; training data can be released (EFCIL audit).

    Training labels are local (position within class_ids); held-out labels
    stay global because evaluation is over all observed classes.
    """

    def __init__(self, dataset: Dataset, task_id: int, class_ids: list[int]):
        self.task_id = task_id
        self.class_ids = list(class_ids)
        tr = np.concatenate([dataset.train_idx[c] for c in self.class_ids])
        self._train_x: np.ndarray | None = dataset.x[tr]
        self._train_y_local: np.ndarray | None = np.concatenate(
            [np.full(len(dataset.train_idx[c]), i, dtype=np.int64) for i, c in enumerate(self.class_ids)]
        )
        he = np.concatenate([dataset.held_idx[c] for c in self.class_ids])
        self.heldout_x = dataset.x[he]
        self.heldout_y = dataset.y[he]  # global ids
        self.side = dataset.side
        self._released = False

    @property
    def n_classes(self) -> int:
        return len(self.class_ids)

    @property
    def released(self) -> bool:
        return self._released

    @property
    def train_x(self) -> np.ndarray:
        self._check_live()
        return self._train_x

    @property
    def train_y_local(self) -> np.ndarray:
        self._check_live()
        return self._train_y_local

    @property
    def train_y_global(self) -> np.ndarray:
        self._check_live()
        return np.array(self.class_ids, dtype=np.int64)[self._train_y_local]

    def _check_live(self) -> None:
        if self._released:
            raise StateError(
                f"training data of task {self.task_id} was released (exemplar-free audit)"
            )

    def release_training_data(self) -> None:
        self._train_x = None
        self._train_y_local = None
        self._released = True


@dataclass
class TaskStream:
    """Ordered class-disjoint tasks induced by a B/steps protocol."""

    dataset: Dataset
    init_classes: int
    steps: int
    seed: int
    tasks: list[TaskView] = field(default_factory=list)

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    @property
    def task_sizes(self) -> list[int]:
        return [t.n_classes for t in self.tasks]

    @property
    def protocol(self) -> str:
        return f"B{self.init_classes}-{self.steps}"

    def classes_through(self, k: int) -> list[int]:
        out: list[int] = []
        for t in self.tasks[: k + 1]:
            out.extend(t.class_ids)
        return out

    def heldout_sizes(self) -> list[int]:
        return [len(t.heldout_y) for t in self.tasks]


def split_tasks(dataset: Dataset, init_classes: int, steps: int, seed: int) -> TaskStream:
    """Shuffle class ids by seed; first B form task 0, rest split into T equal tasks."""
    k = dataset.n_classes
    if init_classes < 1 or steps < 1:
        raise ProtocolError(f"need B >= 1 and steps >= 1, got B={init_classes}, steps={steps}")
    rest = k - init_classes
    if rest < steps or rest % steps != 0:
        raise ProtocolError(
            f"protocol B{init_classes}-{steps} does not fit K={k}: "
            f"{rest} remaining classes are not divisible into {steps} equal steps"
        )
    order = rng_for(seed, "split").permutation(k).tolist()
    per_step = rest // steps
    views = [TaskView(dataset, 0, order[:init_classes])]
    for t in range(steps):
        start = init_classes + t * per_step
        views.append(TaskView(dataset, t + 1, order[start : start + per_step]))
    return TaskStream(dataset=dataset, init_classes=init_classes, steps=steps, seed=seed, tasks=views)
