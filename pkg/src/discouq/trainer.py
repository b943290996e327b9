"""Minibatch training on the energy-score loss with noise augmentation."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import AdamState, DivergenceError, adam_step, backward
from .loss import batch_energy_loss_and_grad
from .model import forward_traced, init_params


@dataclass
class TrainConfig:
    n_epoch: int = 300
    b_batch: int = 20
    n_b: int = 50
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    shuffle: bool = True
    # arithmetic of the forward/backward pass; weights and Adam moments stay float64
    precision: str = "float32"

    def __post_init__(self):
        for name in ("n_epoch", "b_batch", "n_b"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.precision not in ("float32", "float64"):
            raise ValueError("precision must be 'float32' or 'float64'")

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainHistory:
    loss: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    updates: int = 0

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss", "seconds"])
            for k, (l, s) in enumerate(zip(self.loss, self.seconds), start=1):
                w.writerow([k, repr(l), f"{s:.6f}"])


def augment_batch(x_batch, n_b, rng, noise_dim=1):
    """Repeat each input ``n_b`` times and pair every copy with fresh U[0,1] noise.

    Returns ``(x_rep, a, group)``; rows ``k*n_b .. (k+1)*n_b - 1`` belong to input ``k``.
    """
    if n_b < 1:
        raise ValueError("n_b must be >= 1")
    x_batch = np.atleast_2d(np.asarray(x_batch, dtype=float))
    x_rep = np.repeat(x_batch, n_b, axis=0)
    a = rng.random((x_rep.shape[0], noise_dim))
    group = np.repeat(np.arange(x_batch.shape[0]), n_b)
    return x_rep, a, group


def split(dataset, test_fraction=0.1, seed=0):
    """Seeded shuffle split into ``(train, test)``."""
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    n = len(dataset)
    n_test = int(round(n * test_fraction))
    n_test = min(max(n_test, 1), n - 1) if n > 1 else 0
    if n_test == 0:
        raise ValueError("dataset too small to split")
    perm = np.random.default_rng(seed).permutation(n)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return dataset.subset(train_idx), dataset.subset(test_idx)


def train_step(params, state, x_batch, y_batch, config, rng):
    """One Adam step on one minibatch. Returns ``(params, batch_loss)``."""
    cfg = params.config
    b = x_batch.shape[0]
    x_rep, a, _ = augment_batch(x_batch, config.n_b, rng, cfg.noise_dim)
    tape, out = forward_traced(params, x_rep, a, dtype=np.dtype(config.precision))
    samples = out.value.astype(np.float64).reshape(b, config.n_b, cfg.output_dim)
    losses, grad = batch_energy_loss_and_grad(y_batch, samples)
    loss = float(np.mean(losses))
    if not math.isfinite(loss):
        raise DivergenceError("non-finite loss")
    seed = grad.reshape(out.value.shape)
    grads = backward(tape, out, seed)
    arrays, state = adam_step(params.arrays, grads, state, config.lr, config.beta1, config.beta2, config.eps)
    return type(params)(cfg, arrays), loss


def train(dataset, model_config, train_config, params=None, callback=None):
    """Train from ``init_params(model_config)`` (or ``params``). Returns ``(params, history)``."""
    if len(dataset) < 1:
        raise ValueError("dataset is empty")
    if dataset.output_dim != model_config.output_dim:
        raise ValueError(
            f"dataset has {dataset.output_dim} targets but the model outputs {model_config.output_dim}"
        )
    if dataset.feature_dim != model_config.feature_dim:
        raise ValueError(
            f"dataset has {dataset.feature_dim} features but the model expects {model_config.feature_dim}"
        )
    params = init_params(model_config) if params is None else params.copy()
    state = AdamState.zeros_like(params.arrays)
    rng = np.random.default_rng(train_config.seed)
    history = TrainHistory()
    n = len(dataset)
    X, Y = dataset.features, dataset.targets
    bs = train_config.b_batch
    for epoch in range(1, train_config.n_epoch + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n) if train_config.shuffle else np.arange(n)
        losses, weights = [], []
        for start in range(0, n, bs):
            idx = order[start:start + bs]
            try:
                params, loss = train_step(params, state, X[idx], Y[idx], train_config, rng)
            except DivergenceError as exc:
                raise DivergenceError(f"training diverged in epoch {epoch}: {exc}", epoch=epoch) from exc
            losses.append(loss)
            weights.append(idx.size)
            history.updates += 1
        history.loss.append(float(np.average(losses, weights=weights)))
        history.seconds.append(time.perf_counter() - t0)
        if callback is not None:
            callback(epoch, params, history)
    return params, history
