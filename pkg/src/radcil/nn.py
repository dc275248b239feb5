"""Minimal reverse-mode MLP: feature extractor, linear heads, losses, SGD.

Everything is float64 numpy, single-threaded, and deterministic given a seed.
Hidden layers use ReLU; the final feature layer is linear. Gradients are
hand-derived and checked against central finite differences in the tests.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, LabelError, ShapeError, StateError
from .seeding import rng_for

Array = np.ndarray


def assert_finite(arr: Array, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in {what}")


def _glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> Array:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class ForwardTrace:
    """Per-layer pre-activations/activations retained for one backward pass."""

    layer_dims: tuple[int, ...]
    x: Array
    pre_acts: list[Array]
    acts: list[Array]
    consumed: bool = False


class FeatureExtractor:
    """Stack of (W, b) layers mapping inputs to d-dimensional features."""

    def __init__(self, weights: list[Array], biases: list[Array]):
        self.weights = weights
        self.biases = biases

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return tuple([self.weights[0].shape[0]] + [w.shape[1] for w in self.weights])

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, batch: Array) -> tuple[Array, ForwardTrace]:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim != 2 or batch.shape[1] != self.input_dim:
            raise ShapeError(
                f"batch has shape {batch.shape}, extractor expects (*, {self.input_dim})"
            )
        pre_acts: list[Array] = []
        acts: list[Array] = []
        act = batch
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            pre = act @ w + b
            pre_acts.append(pre)
            act = np.maximum(pre, 0.0) if i < self.n_layers - 1 else pre
            acts.append(act)
        assert_finite(act, "features")
        return act, ForwardTrace(self.layer_dims, x=batch, pre_acts=pre_acts, acts=acts)

    def param_list(self) -> list[Array]:
        out: list[Array] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "FeatureExtractor":
        return FeatureExtractor([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def checksum(self) -> str:
        h = hashlib.sha256()
        h.update(repr(self.layer_dims).encode())
        for p in self.param_list():
            h.update(np.ascontiguousarray(p).tobytes())
        return h.hexdigest()


def init_network(layer_dims: list[int], seed: int) -> FeatureExtractor:
    """Seeded Glorot-uniform weights, zero biases."""
    dims = list(layer_dims)
    if len(dims) < 2 or any(int(d) <= 0 for d in dims):
        raise ConfigError(f"layer_dims must have >= 2 positive entries, got {layer_dims}")
    rng = rng_for(seed, "init")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(_glorot_uniform(rng, fan_in, fan_out))
        biases.append(np.zeros(fan_out))
    return FeatureExtractor(weights, biases)


class Head:
    """Linear map from features to this task's logits.

    Width is n_classes * rot_factor; rot_factor is 4 for rotation-extended
    heads and 1 for plain ones. Slots [0, n_classes) are the real classes.
    """

    def __init__(self, w: Array, b: Array, n_classes: int, rot_factor: int):
        self.w = w
        self.b = b
        self.n_classes = n_classes
        self.rot_factor = rot_factor

    @property
    def width(self) -> int:
        return self.w.shape[1]

    @classmethod
    def create(cls, feature_dim: int, n_classes: int, rot_factor: int, seed: int, tag: object) -> "Head":
        if n_classes < 1 or rot_factor not in (1, 4):
            raise ConfigError(f"bad head spec: n_classes={n_classes} rot_factor={rot_factor}")
        rng = rng_for(seed, "head", tag)
        w = _glorot_uniform(rng, feature_dim, n_classes * rot_factor)
        return cls(w, np.zeros(n_classes * rot_factor), n_classes, rot_factor)


class HeadSet:
    """Ordered per-task heads; logits are their concatenation."""

    def __init__(self, heads: list[Head] | None = None):
        self.heads: list[Head] = heads or []

    def __len__(self) -> int:
        return len(self.heads)

    @property
    def total_width(self) -> int:
        return sum(h.width for h in self.heads)

    def offsets(self) -> list[int]:
        out, acc = [], 0
        for h in self.heads:
            out.append(acc)
            acc += h.width
        return out

    def forward(self, features: Array) -> Array:
        if not self.heads:
            raise StateError("HeadSet is empty")
        d = self.heads[0].w.shape[0]
        if features.ndim != 2 or features.shape[1] != d:
            raise ShapeError(f"features shape {features.shape}, heads expect (*, {d})")
        logits = np.concatenate([features @ h.w + h.b for h in self.heads], axis=1)
        assert_finite(logits, "logits")
        return logits

    def param_list(self) -> list[Array]:
        out: list[Array] = []
        for h in self.heads:
            out.extend((h.w, h.b))
        return out


def _log_softmax(z: Array) -> Array:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(z: Array) -> Array:
    return np.exp(_log_softmax(z))


def cross_entropy(logits: Array, labels) -> tuple[float, Array]:
    """Mean negative log-softmax at the label; returns (loss, dloss/dlogits)."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.ndim != 1 or logits.shape[0] != labels.shape[0]:
        raise ShapeError(f"logits {logits.shape} vs labels {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise LabelError(
            f"label out of range [0, {logits.shape[1]}): {labels.min()}..{labels.max()}"
        )
    n = logits.shape[0]
    log_p = _log_softmax(logits)
    loss = float(-log_p[np.arange(n), labels].mean())
    dlogits = np.exp(log_p)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    assert_finite(dlogits, "cross_entropy gradient")
    return loss, dlogits


def feature_kl(student: Array, teacher: Array, temperature: float) -> tuple[float, Array]:
    """Row-wise KL(softmax(student/T) || softmax(teacher/T)), mean over rows.

    The teacher is a constant: no gradient flows to it. Returns
    (loss, dloss/dstudent).
    """
    if temperature <= 0:
        raise ConfigError(f"temperature must be > 0, got {temperature}")
    if student.shape != teacher.shape:
        raise ShapeError(f"student {student.shape} vs teacher {teacher.shape}")
    n = student.shape[0]
    log_p = _log_softmax(student / temperature)
    log_q = _log_softmax(teacher / temperature)
    p = np.exp(log_p)
    g = log_p - log_q
    row_kl = (p * g).sum(axis=1)
    loss = float(row_kl.mean())
    dstudent = p * (g - row_kl[:, None]) / (temperature * n)
    assert_finite(dstudent, "feature_kl gradient")
    return loss, dstudent


def feature_l2(student: Array, teacher: Array) -> tuple[float, Array]:
    """Mean over rows of 0.5*||student - teacher||^2; gradient to student only."""
    if student.shape != teacher.shape:
        raise ShapeError(f"student {student.shape} vs teacher {teacher.shape}")
    n = student.shape[0]
    diff = student - teacher
    loss = float(0.5 * (diff * diff).sum() / n)
    return loss, diff / n


@dataclass
class Gradients:
    """Parameter gradients, parallel to extractor.param_list() + heads.param_list()."""

    extractor: list[Array]
    heads: list[Array] = field(default_factory=list)


def backward(
    extractor: FeatureExtractor,
    heads: HeadSet | None,
    trace: ForwardTrace,
    dlogits: Array | None = None,
    dfeatures: Array | None = None,
) -> Gradients:
    """Backpropagate from logits and/or a direct feature gradient.

    dlogits goes through the heads (producing head gradients and a feature
    gradient); dfeatures is added on top, so composite losses like
    a*CE + b*KL pass dlogits scaled by a and dfeatures scaled by b.
    """
    if trace.consumed:
        raise StateError("forward trace already consumed by a backward pass")
    if trace.layer_dims != extractor.layer_dims:
        raise StateError(
            f"trace/extractor mismatch: {trace.layer_dims} vs {extractor.layer_dims}"
        )
    trace.consumed = True

    dfeat = np.zeros_like(trace.acts[-1])
    head_grads: list[Array] = []
    if dlogits is not None:
        if heads is None or not heads.heads:
            raise StateError("dlogits given but no heads to backprop through")
        if dlogits.shape != (trace.x.shape[0], heads.total_width):
            raise ShapeError(
                f"dlogits shape {dlogits.shape}, expected ({trace.x.shape[0]}, {heads.total_width})"
            )
        feats = trace.acts[-1]
        for h, off in zip(heads.heads, heads.offsets()):
            dslice = dlogits[:, off : off + h.width]
            head_grads.append(feats.T @ dslice)
            head_grads.append(dslice.sum(axis=0))
            dfeat += dslice @ h.w.T
    if dfeatures is not None:
        if dfeatures.shape != dfeat.shape:
            raise ShapeError(f"dfeatures shape {dfeatures.shape}, expected {dfeat.shape}")
        dfeat = dfeat + dfeatures

    ext_grads: list[Array] = []
    dact = dfeat
    for i in range(extractor.n_layers - 1, -1, -1):
        # final layer is linear; hidden layers gate through ReLU
        dpre = dact if i == extractor.n_layers - 1 else dact * (trace.pre_acts[i] > 0)
        prev_act = trace.x if i == 0 else trace.acts[i - 1]
        ext_grads.append(dpre.sum(axis=0))
        ext_grads.append(prev_act.T @ dpre)
        dact = dpre @ extractor.weights[i].T
    ext_grads.reverse()
    return Gradients(extractor=ext_grads, heads=head_grads)


class SGD:
    """Momentum SGD with weight decay folded into the gradient.

    v <- momentum*v + (g + wd*p); p <- p - lr*v. Buffers are allocated on
    first step and must keep their shapes afterwards.
    """

    def __init__(self, momentum: float = 0.9, weight_decay: float = 5e-4):
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.buffers: list[Array] | None = None
        self.step_count = 0

    def step(self, params: list[Array], grads: list[Array], lr: float) -> None:
        if len(params) != len(grads):
            raise ShapeError(f"{len(params)} params vs {len(grads)} grads")
        if self.buffers is None:
            self.buffers = [np.zeros_like(p) for p in params]
        if len(self.buffers) != len(params):
            raise ShapeError("optimizer buffers do not match parameter list")
        for p, g, v in zip(params, grads, self.buffers):
            if p.shape != g.shape or p.shape != v.shape:
                raise ShapeError(f"param {p.shape} vs grad {g.shape} vs buffer {v.shape}")
            g_eff = g if self.weight_decay == 0.0 else g + self.weight_decay * p
            v *= self.momentum
            v += g_eff
            p -= lr * v
            assert_finite(p, "parameters after sgd step")
        self.step_count += 1


def cosine_lr(epoch: int, total_epochs: int, lr0: float) -> float:
    """lr0 * 0.5 * (1 + cos(pi*epoch/total_epochs)); anneals to exactly 0."""
    if total_epochs <= 0 or epoch < 0 or epoch > total_epochs:
        raise ConfigError(f"epoch {epoch} out of range for total_epochs {total_epochs}")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * epoch / total_epochs))
