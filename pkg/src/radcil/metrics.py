"""Benchmark metrics: average incremental accuracy, forgetting, intransigence."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MetricError
from .evaluate import AccuracyMatrix


def step_accuracy(matrix: AccuracyMatrix, m: int) -> float:
    """Pooled accuracy over all seen tasks after task m.

    Tasks are weighted by held-out size when the matrix carries sizes,
    which equals sample-level accuracy over the pooled held-out sets;
    otherwise tasks weigh equally.
    """
    row = np.array(matrix.row(m))
    if matrix.heldout_sizes is None:
        return float(row.mean())
    w = np.array(matrix.heldout_sizes[: m + 1], dtype=np.float64)
    return float((row * w).sum() / w.sum())


def avg_incremental_accuracy(matrix: AccuracyMatrix) -> float:
    """Mean over steps of the pooled accuracy after each step."""
    if not matrix.is_complete():
        raise MetricError(
            f"matrix has {matrix.completed_rows()} of {matrix.n_tasks} rows; cannot average"
        )
    return float(np.mean([step_accuracy(matrix, m) for m in range(matrix.n_tasks)]))


def forgetting(matrix: AccuracyMatrix, k: int) -> tuple[list[float], float]:
    """Per-old-task worst accuracy drop by step k, and their average.

    f_t^k = max over l in {t..k-1} of (a_{l,t} - a_{k,t}); the average runs
    over the k old tasks t in 0..k-1.
    """
    if k < 1:
        raise MetricError("forgetting is undefined before any incremental step (k >= 1)")
    if matrix.completed_rows() < k + 1:
        raise MetricError(f"forgetting at k={k} needs rows 0..{k} recorded")
    per_task = []
    for t in range(k):
        best_past = max(matrix.get(l, t) for l in range(t, k))
        per_task.append(best_past - matrix.get(k, t))
    return per_task, float(np.mean(per_task))


def intransigence(a_k_minus: float | None, matrix: AccuracyMatrix, k: int) -> float:
    """Reference-model accuracy on task k minus the incremental a_{k,k}.

    Negative values mean the incremental model learned task k better than
    the jointly trained reference.
    """
    if a_k_minus is None:
        raise MetricError(f"intransigence at k={k} needs a reference accuracy")
    if not (0.0 <= a_k_minus <= 1.0):
        raise MetricError(f"reference accuracy {a_k_minus} outside [0, 1]")
    return a_k_minus - matrix.get(k, k)


@dataclass
class MetricsReport:
    """All three metrics for one run, full precision."""

    avg_acc: float
    forgetting_by_k: dict[int, float] = field(default_factory=dict)
    intransigence_by_k: dict[int, float] = field(default_factory=dict)
    reference_acc: dict[int, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "avg_acc": self.avg_acc,
            "forgetting_by_k": {str(k): v for k, v in sorted(self.forgetting_by_k.items())},
            "intransigence_by_k": {str(k): v for k, v in sorted(self.intransigence_by_k.items())},
            "reference_acc": {str(k): v for k, v in sorted(self.reference_acc.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            avg_acc=float(d["avg_acc"]),
            forgetting_by_k={int(k): float(v) for k, v in d["forgetting_by_k"].items()},
            intransigence_by_k={int(k): float(v) for k, v in d["intransigence_by_k"].items()},
            reference_acc={int(k): float(v) for k, v in d["reference_acc"].items()},
        )

    def final_forgetting(self) -> float | None:
        return self.forgetting_by_k.get(max(self.forgetting_by_k)) if self.forgetting_by_k else None

    def final_intransigence(self) -> float | None:
        return (
            self.intransigence_by_k.get(max(self.intransigence_by_k))
            if self.intransigence_by_k
            else None
        )


def build_report(matrix: AccuracyMatrix, reference_acc: dict[int, float] | None = None) -> MetricsReport:
    """Compute every metric the matrix (and references, when given) supports."""
    report = MetricsReport(avg_acc=avg_incremental_accuracy(matrix))
    for k in range(1, matrix.n_tasks):
        _, f_k = forgetting(matrix, k)
        report.forgetting_by_k[k] = f_k
    for k, a_ref in sorted((reference_acc or {}).items()):
        report.reference_acc[k] = float(a_ref)
        report.intransigence_by_k[k] = intransigence(a_ref, matrix, k)
    return report


def format_percent(x: float) -> str:
    """Table formatting: percent with one decimal."""
    return f"{100.0 * x:.1f}"
