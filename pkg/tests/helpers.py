"""Shared fixtures-in-spirit: tiny configs, hand-built datasets, finite differences."""

from __future__ import annotations

import numpy as np

from radcil.data import Dataset
from radcil.harness import ExperimentConfig
from radcil.strategies import TrainConfig


def tiny_train(**over) -> TrainConfig:
    """Short schedules for plumbing tests; numeric claims use the real recipe."""
    base = dict(epochs_initial=2, epochs_incremental=2, batch_size=16)
    base.update(over)
    return TrainConfig(**base)


def tiny_config(out_dir, **over) -> ExperimentConfig:
    base = dict(
        dataset={"synthetic": {"n_classes": 8, "side": 4, "samples_per_class": 12}},
        init_classes=4,
        steps=2,
        strategy="finetune",
        train=tiny_train(),
        seeds=[1],
        hidden_dims=[16, 8],
        out_dir=str(out_dir),
    )
    base.update(over)
    return ExperimentConfig(**base)


def separable_dataset(
    n_classes: int = 2,
    side: int = 4,
    samples_per_class: int = 30,
    seed: int = 0,
    scale: float = 0.8,
    sigma: float = 0.05,
) -> Dataset:
    """Classes far apart relative to noise, so linear models reach ~100%."""
    rng = np.random.default_rng(seed)
    d = side * side
    templates = scale * rng.normal(size=(n_classes, d))
    xs, ys, train_idx, held_idx = [], [], {}, {}
    n_train = int(0.8 * samples_per_class)
    for c in range(n_classes):
        xs.append(templates[c] + sigma * rng.normal(size=(samples_per_class, d)))
        ys.append(np.full(samples_per_class, c, dtype=np.int64))
        start = c * samples_per_class
        train_idx[c] = np.arange(start, start + n_train)
        held_idx[c] = np.arange(start + n_train, start + samples_per_class)
    return Dataset(
        x=np.concatenate(xs),
        y=np.concatenate(ys),
        n_classes=n_classes,
        side=side,
        train_idx=train_idx,
        held_idx=held_idx,
    )


def numeric_grad(loss_fn, params: list[np.ndarray], eps: float = 1e-5) -> list[np.ndarray]:
    """Central differences over every coordinate of every parameter array."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat_p, flat_g = p.reshape(-1), g.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + eps
            hi = loss_fn()
            flat_p[i] = orig - eps
            lo = loss_fn()
            flat_p[i] = orig
            flat_g[i] = (hi - lo) / (2.0 * eps)
        grads.append(g)
    return grads


def max_rel_err(analytic: list[np.ndarray], numeric: list[np.ndarray]) -> float:
    worst = 0.0
    for a, g in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(g)), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - g) / denom)))
    return worst
