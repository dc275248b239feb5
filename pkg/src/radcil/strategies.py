"""Training procedures: the shared epoch loop, three strategies, reference models.

Strategies share one batch loop; they differ in head shape, augmentation,
and whether a frozen teacher constrains the features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TaskStream, TaskView, augment_rotation
from .errors import ConfigError, DataError, StateError
from .evaluate import head_classify, nme_classify
from .model import (
    FrozenExtractor,
    IncrementalModel,
    PrototypeStore,
    append_head,
    compute_prototypes,
    freeze_snapshot,
)
from .nn import SGD, backward, cosine_lr, cross_entropy, feature_kl, feature_l2
from .seeding import rng_for

EVAL_MODES = ("heads", "nme")
DISTILL_MODES = ("kl", "l2")
STRATEGIES = ("finetune", "featstar", "rad")


@dataclass
class TrainConfig:
    """Knobs shared by every strategy; alpha/beta/tau only matter with a teacher."""

    alpha: float = 1.0
    beta: float = 1.0
    tau: float = 1.0
    epochs_initial: int = 50
    epochs_incremental: int = 20
    lr_initial: float = 0.1
    lr_incremental: float = 0.001
    batch_size: int = 32
    momentum: float = 0.9
    weight_decay: float = 5e-4
    eval_mode: str = "heads"
    distill_mode: str = "kl"
    rotation: bool = True
    seed: int = 1

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError(f"loss weights must be >= 0, got alpha={self.alpha} beta={self.beta}")
        if self.tau <= 0:
            raise ConfigError(f"temperature must be > 0, got {self.tau}")
        if self.epochs_initial < 1 or self.epochs_incremental < 1:
            raise ConfigError(
                f"epochs must be >= 1, got {self.epochs_initial}/{self.epochs_incremental}"
            )
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.eval_mode not in EVAL_MODES:
            raise ConfigError(f"eval_mode must be one of {EVAL_MODES}, got {self.eval_mode!r}")
        if self.distill_mode not in DISTILL_MODES:
            raise ConfigError(
                f"distill_mode must be one of {DISTILL_MODES}, got {self.distill_mode!r}"
            )

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "tau": self.tau,
            "epochs_initial": self.epochs_initial,
            "epochs_incremental": self.epochs_incremental,
            "lr_initial": self.lr_initial,
            "lr_incremental": self.lr_incremental,
            "batch_size": self.batch_size,
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "eval_mode": self.eval_mode,
            "distill_mode": self.distill_mode,
            "rotation": self.rotation,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class EpochLog:
    """One epoch's losses. distil_weighted is False when the divergence was
    logged but carried zero weight in the objective."""

    task_id: int
    epoch: int
    loss_ce: float
    loss_distil: float | None
    loss_all: float
    lr: float
    distil_weighted: bool = True

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "epoch": self.epoch,
            "loss_ce": self.loss_ce,
            "loss_distil": self.loss_distil,
            "loss_all": self.loss_all,
            "lr": self.lr,
            "distil_weighted": self.distil_weighted,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpochLog":
        return cls(**d)


def _train_epochs(
    model: IncrementalModel,
    x: np.ndarray,
    targets: np.ndarray,
    cfg: TrainConfig,
    *,
    task_id: int,
    epochs: int,
    lr0: float,
    ce_weight: float,
    teacher: FrozenExtractor | None = None,
    distil_weight: float = 0.0,
    stream_tags: tuple = (),
) -> tuple[list[EpochLog], int]:
    """SGD over reshuffled batches; returns (per-epoch logs, optimizer steps).

    Objective per batch: ce_weight*CE(all logits, targets) plus, when a
    teacher is given, distil_weight*divergence(features, teacher features).
    With every weight at zero no parameter moves (updates are skipped so
    weight decay cannot leak in).
    """
    n = x.shape[0]
    if n == 0:
        raise DataError(f"task {task_id} has no training samples")
    params = model.extractor.param_list() + model.heads.param_list()
    opt = SGD(momentum=cfg.momentum, weight_decay=cfg.weight_decay)
    rng = rng_for(cfg.seed, "batches", *(stream_tags or (task_id,)))
    update = ce_weight > 0.0 or (teacher is not None and distil_weight > 0.0)
    logs: list[EpochLog] = []
    for epoch in range(epochs):
        lr = cosine_lr(epoch, epochs, lr0)
        perm = rng.permutation(n)
        ce_sum = 0.0
        distil_sum = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            feats, trace = model.extractor.forward(x[idx])
            logits = model.heads.forward(feats)
            loss_ce, dlogits = cross_entropy(logits, targets[idx])
            ce_sum += loss_ce * idx.size
            dfeat = None
            if teacher is not None:
                t_feats = teacher.features(x[idx])
                if cfg.distill_mode == "kl":
                    loss_d, dstud = feature_kl(feats, t_feats, cfg.tau)
                else:
                    loss_d, dstud = feature_l2(feats, t_feats)
                distil_sum += loss_d * idx.size
                if distil_weight != 0.0:
                    dfeat = distil_weight * dstud
            if update:
                grads = backward(
                    model.extractor, model.heads, trace, dlogits=ce_weight * dlogits, dfeatures=dfeat
                )
                opt.step(params, grads.extractor + grads.heads, lr)
        epoch_ce = ce_sum / n
        if teacher is None:
            log = EpochLog(task_id, epoch, epoch_ce, None, ce_weight * epoch_ce, lr)
        else:
            epoch_d = distil_sum / n
            log = EpochLog(
                task_id,
                epoch,
                epoch_ce,
                epoch_d,
                ce_weight * epoch_ce + distil_weight * epoch_d,
                lr,
                distil_weighted=distil_weight > 0.0,
            )
        logs.append(log)
    return logs, opt.step_count


def _head_targets(model: IncrementalModel, head_index: int, y_extended: np.ndarray) -> np.ndarray:
    return model.heads.offsets()[head_index] + y_extended


def _augmented_training_set(view: TaskView) -> tuple[np.ndarray, np.ndarray]:
    """Original plus rotated samples; labels extended into [0, 4*n_t)."""
    aug = augment_rotation(view.train_x, view.train_y_local, view.n_classes, view.side)
    x = np.concatenate([view.train_x, aug.x])
    y = np.concatenate([view.train_y_local, aug.y])
    return x, y


def train_initial(
    model: IncrementalModel, view: TaskView, cfg: TrainConfig, *, rotation: bool, ce_weight: float | None = None
) -> tuple[list[EpochLog], int]:
    """Full-supervision training of task 0; head 0 must already be attached."""
    if model.trained_tasks != 0 or len(model.heads) != 1:
        raise StateError("initial training expects an untrained model with exactly head 0")
    if rotation:
        x, y_ext = _augmented_training_set(view)
    else:
        x, y_ext = view.train_x, view.train_y_local
    targets = _head_targets(model, 0, y_ext)
    if ce_weight is None:
        # alpha/beta only balance the two-term incremental objective; task 0
        # is plain full supervision, except the degenerate all-zero objective
        weight = 0.0 if cfg.alpha == 0.0 and cfg.beta == 0.0 else 1.0
    else:
        weight = ce_weight
    logs, steps = _train_epochs(
        model, x, targets, cfg,
        task_id=0, epochs=cfg.epochs_initial, lr0=cfg.lr_initial, ce_weight=weight,
    )
    model.trained_tasks = 1
    return logs, steps


def train_task_rad(
    model: IncrementalModel, teacher: FrozenExtractor, view: TaskView, cfg: TrainConfig
) -> tuple[list[EpochLog], int]:
    """One incremental step: CE over new data (rotated when enabled) plus a
    feature-divergence pull toward the frozen initial extractor."""
    t = view.task_id
    if len(model.heads) != t + 1:
        raise StateError(f"task {t} needs its head appended before training")
    if model.trained_tasks != t:
        raise StateError(f"tasks must be trained in order; model is at {model.trained_tasks}")
    teacher.verify()
    if cfg.rotation:
        x, y_ext = _augmented_training_set(view)
    else:
        x, y_ext = view.train_x, view.train_y_local
    targets = _head_targets(model, t, y_ext)
    logs, steps = _train_epochs(
        model, x, targets, cfg,
        task_id=t, epochs=cfg.epochs_incremental, lr0=cfg.lr_incremental,
        ce_weight=cfg.alpha, teacher=teacher, distil_weight=cfg.beta,
    )
    model.trained_tasks = t + 1
    return logs, steps


def train_task_finetune(
    model: IncrementalModel, view: TaskView, cfg: TrainConfig
) -> tuple[list[EpochLog], int]:
    """Plain CE on the new task only; the catastrophic-forgetting lower bound."""
    t = view.task_id
    if len(model.heads) != t + 1:
        raise StateError(f"task {t} needs its head appended before training")
    if model.trained_tasks != t:
        raise StateError(f"tasks must be trained in order; model is at {model.trained_tasks}")
    targets = _head_targets(model, t, view.train_y_local)
    logs, steps = _train_epochs(
        model, view.train_x, targets, cfg,
        task_id=t, epochs=cfg.epochs_incremental, lr0=cfg.lr_incremental, ce_weight=1.0,
    )
    model.trained_tasks = t + 1
    return logs, steps


class Strategy:
    """Owns one model through a task stream; subclasses set the recipe."""

    name = "?"

    def __init__(self, stream: TaskStream, cfg: TrainConfig, layer_dims: list[int]):
        if layer_dims[0] != stream.dataset.dim:
            raise ConfigError(
                f"network input dim {layer_dims[0]} != dataset dim {stream.dataset.dim}"
            )
        self.stream = stream
        self.cfg = cfg
        self.layer_dims = list(layer_dims)
        self.model = IncrementalModel.create(self.layer_dims, cfg.seed)
        self.store = PrototypeStore()
        self.teacher: FrozenExtractor | None = None
        self.logs: list[EpochLog] = []
        self.gradient_steps: list[int] = []

    @property
    def rot_factor(self) -> int:
        return 4 if self.cfg.rotation else 1

    def learn_task(self, t: int) -> list[EpochLog]:
        if t != len(self.gradient_steps):
            raise StateError(f"tasks must be learned in order; next is {len(self.gradient_steps)}")
        view = self.stream.tasks[t]
        logs, steps = self._train(view)
        self.logs.extend(logs)
        self.gradient_steps.append(steps)
        self._after_task(view)
        view.release_training_data()
        return logs

    def classify(self, x: np.ndarray) -> np.ndarray:
        if self.cfg.eval_mode == "nme":
            return nme_classify(self.model.extractor, self.store, x)
        return head_classify(self.model, x)

    def _train(self, view: TaskView) -> tuple[list[EpochLog], int]:
        raise NotImplementedError

    def _after_task(self, view: TaskView) -> None:
        compute_prototypes(
            self.model.extractor, view.train_x, view.train_y_global, self.store, view.task_id
        )


class FinetuneStrategy(Strategy):
    name = "finetune"

    def _train(self, view: TaskView) -> tuple[list[EpochLog], int]:
        append_head(self.model, view.class_ids, 1, self.cfg.seed)
        if view.task_id == 0:
            return train_initial(self.model, view, self.cfg, rotation=False, ce_weight=1.0)
        return train_task_finetune(self.model, view, self.cfg)


class RadStrategy(Strategy):
    name = "rad"

    def _train(self, view: TaskView) -> tuple[list[EpochLog], int]:
        append_head(self.model, view.class_ids, self.rot_factor, self.cfg.seed)
        if view.task_id == 0:
            return train_initial(self.model, view, self.cfg, rotation=self.cfg.rotation)
        return train_task_rad(self.model, self.teacher, view, self.cfg)

    def _after_task(self, view: TaskView) -> None:
        if view.task_id == 0:
            self.teacher = freeze_snapshot(self.model)
        super()._after_task(view)


class FeatStarStrategy(Strategy):
    """Train only task 0, freeze the extractor, then grow prototypes.

    Incremental tasks cost one forward pass each (no gradient steps); the
    classifier is always nearest class mean under the frozen features.
    """

    name = "featstar"

    def _train(self, view: TaskView) -> tuple[list[EpochLog], int]:
        if view.task_id == 0:
            append_head(self.model, view.class_ids, 4, self.cfg.seed)
            return train_initial(self.model, view, self.cfg, rotation=True)
        self.model.trained_tasks = view.task_id + 1
        return [], 0

    def _after_task(self, view: TaskView) -> None:
        if view.task_id == 0:
            self.teacher = freeze_snapshot(self.model)
        compute_prototypes(self.teacher, view.train_x, view.train_y_global, self.store, view.task_id)

    def classify(self, x: np.ndarray) -> np.ndarray:
        return nme_classify(self.teacher, self.store, x)


def make_strategy(name: str, stream: TaskStream, cfg: TrainConfig, layer_dims: list[int]) -> Strategy:
    table = {c.name: c for c in (FinetuneStrategy, FeatStarStrategy, RadStrategy)}
    if name not in table:
        raise ConfigError(f"unknown strategy {name!r}; expected one of {sorted(table)}")
    return table[name](stream, cfg, layer_dims)


def train_reference(
    tasks: list[TaskView], k: int, cfg: TrainConfig, layer_dims: list[int]
) -> tuple[IncrementalModel, float]:
    """Jointly train on tasks 0..k and score task k's held-out set.

    The reference is a fresh extractor with one plain head over every class
    seen through k, trained like an initial task. Callers pass fresh task
    views, since strategies release their training data.
    """
    if not 0 <= k < len(tasks):
        raise ConfigError(f"reference step {k} outside stream of {len(tasks)} tasks")
    classes: list[int] = []
    for view in tasks[: k + 1]:
        classes.extend(view.class_ids)
    x = np.concatenate([v.train_x for v in tasks[: k + 1]])
    y_global = np.concatenate([v.train_y_global for v in tasks[: k + 1]])
    local_of = {c: i for i, c in enumerate(classes)}
    y_local = np.array([local_of[c] for c in y_global.tolist()], dtype=np.int64)

    model = IncrementalModel.create(layer_dims, cfg.seed)
    append_head(model, classes, 1, cfg.seed)
    _train_epochs(
        model, x, y_local, cfg,
        task_id=k, epochs=cfg.epochs_initial, lr0=cfg.lr_initial, ce_weight=1.0,
        stream_tags=("reference", k),
    )
    model.trained_tasks = k + 1
    pred = head_classify(model, tasks[k].heldout_x)
    a_k_minus = float(np.mean(pred == tasks[k].heldout_y))
    return model, a_k_minus
