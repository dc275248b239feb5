"""Classifier rules and the step-by-step accuracy matrix."""

from __future__ import annotations

import csv

import numpy as np

from .errors import FormatError, MetricError, NormalizationError, StateError
from .model import FeatureExtractor, FrozenExtractor, IncrementalModel, PrototypeStore, features_of


def l2_normalize(rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise NormalizationError("cannot L2-normalize a zero feature vector")
    return rows / norms


def nme_classify(
    extractor: FeatureExtractor | FrozenExtractor,
    store: PrototypeStore,
    x: np.ndarray,
) -> np.ndarray:
    """Nearest class mean over L2-normalized features and prototypes.

    Distances tie toward the lowest class id (prototypes are scanned in
    ascending id order and argmin keeps the first minimum).
    """
    if len(store) == 0:
        raise StateError("prototype store is empty")
    ids, protos = store.matrix()
    feats = l2_normalize(features_of(extractor, x))
    protos = l2_normalize(protos)
    d2 = ((feats[:, None, :] - protos[None, :, :]) ** 2).sum(axis=2)
    return ids[np.argmin(d2, axis=1)]


def head_classify(model: IncrementalModel, x: np.ndarray) -> np.ndarray:
    """Argmax over the rot-index-0 logit slots of every head, as global class ids.

    Rotation-extended slots (rot index 1..3) exist only to shape training and
    are excluded here. Ties go to the lowest global class id.
    """
    if len(model.heads) == 0:
        raise StateError("model has no heads")
    logits = model.forward_logits(x)
    cols, ids = [], []
    for offset, classes in zip(model.heads.offsets(), model.classes_per_head):
        for j, cid in enumerate(classes):
            cols.append(offset + j)
            ids.append(cid)
    order = np.argsort(np.array(ids), kind="stable")
    ids_sorted = np.array(ids, dtype=np.int64)[order]
    eval_logits = logits[:, np.array(cols)[order]]
    return ids_sorted[np.argmax(eval_logits, axis=1)]


def accuracy(pred: np.ndarray, truth: np.ndarray) -> float:
    if pred.shape != truth.shape:
        raise MetricError(f"prediction/label shape mismatch: {pred.shape} vs {truth.shape}")
    if truth.size == 0:
        raise MetricError("cannot score an empty evaluation set")
    return float(np.mean(pred == truth))


class AccuracyMatrix:
    """Lower-triangular a[m][n]: accuracy on task n's held-out set after task m.

    Tasks are numbered 0..n_tasks-1; entry (m, n) exists only for n <= m.
    heldout_sizes, when attached, weight per-step pooled accuracies.
    """

    def __init__(self, n_tasks: int, heldout_sizes: list[int] | None = None):
        if n_tasks < 1:
            raise MetricError(f"need at least one task, got {n_tasks}")
        if heldout_sizes is not None and len(heldout_sizes) != n_tasks:
            raise MetricError(
                f"got {len(heldout_sizes)} held-out sizes for {n_tasks} tasks"
            )
        self.n_tasks = n_tasks
        self.heldout_sizes = list(heldout_sizes) if heldout_sizes is not None else None
        self._cells: dict[tuple[int, int], float] = {}

    def record(self, after_task: int, task: int, acc: float) -> None:
        if not (0 <= task <= after_task < self.n_tasks):
            raise MetricError(f"cell ({after_task}, {task}) is outside the lower triangle")
        if not (0.0 <= acc <= 1.0):
            raise MetricError(f"accuracy {acc} outside [0, 1]")
        self._cells[(after_task, task)] = float(acc)

    def get(self, after_task: int, task: int) -> float:
        key = (after_task, task)
        if key not in self._cells:
            raise MetricError(f"cell ({after_task}, {task}) was never recorded")
        return self._cells[key]

    def row(self, after_task: int) -> list[float]:
        return [self.get(after_task, n) for n in range(after_task + 1)]

    def completed_rows(self) -> int:
        """Number of leading rows (0, 1, ...) that are fully recorded."""
        m = 0
        while m < self.n_tasks and all((m, n) in self._cells for n in range(m + 1)):
            m += 1
        return m

    def is_complete(self) -> bool:
        return self.completed_rows() == self.n_tasks

    def to_rows(self) -> list[list]:
        """CSV rows: header then one row per completed step, blanks above diagonal."""
        rows: list[list] = [["after_task"] + [f"task_{n}" for n in range(self.n_tasks)]]
        for m in range(self.completed_rows()):
            row: list = [m]
            for n in range(self.n_tasks):
                row.append(repr(self.get(m, n)) if n <= m else "")
            rows.append(row)
        return rows

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            csv.writer(f).writerows(self.to_rows())

    @classmethod
    def from_csv(cls, path) -> "AccuracyMatrix":
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        if not rows or not rows[0] or rows[0][0] != "after_task":
            raise FormatError(f"{path}: missing accuracy-matrix header row")
        n_tasks = len(rows[0]) - 1
        expected = ["after_task"] + [f"task_{n}" for n in range(n_tasks)]
        if rows[0] != expected:
            raise FormatError(f"{path}: malformed header {rows[0]!r}")
        mat = cls(n_tasks)
        for line_no, row in enumerate(rows[1:], start=2):
            if len(row) != n_tasks + 1:
                raise FormatError(
                    f"{path}: line {line_no} has {len(row)} fields, expected {n_tasks + 1}"
                )
            try:
                m = int(row[0])
            except ValueError:
                raise FormatError(f"{path}: line {line_no} has non-integer step {row[0]!r}") from None
            for n in range(n_tasks):
                cell = row[n + 1]
                if n > m:
                    if cell != "":
                        raise FormatError(f"{path}: line {line_no} has a value above the diagonal")
                    continue
                try:
                    mat.record(m, n, float(cell))
                except ValueError:
                    raise FormatError(f"{path}: line {line_no} has non-numeric cell {cell!r}") from None
        return mat


def evaluate_step(classify, tasks, after_task: int, matrix: AccuracyMatrix) -> list[float]:
    """Score every seen task's held-out set after training task `after_task`."""
    row = []
    for n in range(after_task + 1):
        view = tasks[n]
        pred = classify(view.heldout_x)
        acc = accuracy(pred, view.heldout_y)
        matrix.record(after_task, n, acc)
        row.append(acc)
    return row
