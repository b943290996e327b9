"""Finite-sample energy-score loss (alpha = 1) and its analytic gradient.

For target ``y`` and ensemble ``s_1 .. s_N``::

    L = 1/N sum_i |y - s_i| - 1/(2 N^2) sum_i sum_{j != i} |s_i - s_j|

Batched helpers take samples of shape ``(B, N, D)`` and targets ``(B, D)``.
"""

from __future__ import annotations

import numpy as np

from .core import ShapeError

SORTED_THRESHOLD = 256


def _as_ensemble(y, samples):
    y = np.atleast_1d(np.asarray(y, dtype=float))
    s = np.asarray(samples, dtype=float)
    if s.ndim == 1:
        s = s[:, None] if y.shape == (1,) else s[None, :]
    if s.ndim != 2 or s.shape[0] < 1:
        raise ShapeError(f"samples must be a non-empty (N, D) array, got shape {s.shape}")
    if s.shape[1] != y.shape[0]:
        raise ShapeError(f"sample dimension {s.shape[1]} != target dimension {y.shape[0]}")
    return y, s


def pairwise_abs_sum(x):
    """``sum_i sum_j |x_i - x_j|`` for scalar samples in O(n log n)."""
    xs = np.sort(np.asarray(x, dtype=float))
    n = xs.size
    coef = 2.0 * np.arange(n) - (n - 1)
    return 2.0 * float(coef @ xs)


def _pairwise_norm_sum(s):
    if s.shape[1] == 1 and s.shape[0] > SORTED_THRESHOLD:
        return pairwise_abs_sum(s[:, 0])
    diff = s[:, None, :] - s[None, :, :]
    return float(np.linalg.norm(diff, axis=-1).sum())


def energy_loss(y, samples):
    y, s = _as_ensemble(y, samples)
    n = s.shape[0]
    attract = np.linalg.norm(s - y, axis=1).sum() / n
    repel = _pairwise_norm_sum(s) / (2.0 * n * n)
    return float(attract - repel)


def _unit(v):
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return np.divide(v, n, out=np.zeros_like(v), where=n > 0)


def energy_loss_grad(y, samples):
    """Gradient of :func:`energy_loss` w.r.t. each sample, shape ``(N, D)``.

    Uses ``v/|v|`` with the zero subgradient at ``v = 0``.
    """
    y, s = _as_ensemble(y, samples)
    n = s.shape[0]
    attract = _unit(s - y) / n
    if s.shape[1] == 1 and n > SORTED_THRESHOLD:
        x = s[:, 0]
        xs = np.sort(x)
        n_less = np.searchsorted(xs, x, side="left")
        n_greater = n - np.searchsorted(xs, x, side="right")
        repel = ((n_less - n_greater) / (n * n))[:, None]
    else:
        repel = _unit(s[:, None, :] - s[None, :, :]).sum(axis=1) / (n * n)
    return attract - repel


def minibatch_loss(batch):
    """Mean energy loss over ``[(y, samples), ...]``."""
    batch = list(batch)
    if not batch:
        raise ValueError("minibatch is empty")
    return float(np.mean([energy_loss(y, s) for y, s in batch]))


def batch_energy_loss(targets, samples):
    """Per-item energy loss for ``targets (B, D)`` and ``samples (B, N, D)``."""
    targets = np.asarray(targets, dtype=float)
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 3 or targets.shape != (samples.shape[0], samples.shape[2]):
        raise ShapeError(f"targets {targets.shape} incompatible with samples {samples.shape}")
    n = samples.shape[1]
    attract = np.linalg.norm(samples - targets[:, None, :], axis=-1).sum(axis=1) / n
    if samples.shape[2] == 1 and n > SORTED_THRESHOLD:
        xs = np.sort(samples[:, :, 0], axis=1)
        coef = 2.0 * np.arange(n) - (n - 1)
        pair = 2.0 * (xs @ coef)
    else:
        diff = samples[:, :, None, :] - samples[:, None, :, :]
        pair = np.linalg.norm(diff, axis=-1).sum(axis=(1, 2))
    return attract - pair / (2.0 * n * n)


def batch_energy_loss_grad(targets, samples):
    """Gradient of ``mean(batch_energy_loss)`` w.r.t. ``samples``."""
    targets = np.asarray(targets, dtype=float)
    samples = np.asarray(samples, dtype=float)
    b, n, d = samples.shape
    attract = _unit(samples - targets[:, None, :]) / n
    if d == 1 and n > SORTED_THRESHOLD:
        x = samples[:, :, 0]
        # sum_j sign(x_i - x_j) = (#less) - (#greater), ties contribute 0
        order = np.sort(x, axis=1)
        n_less = np.empty_like(x)
        n_greater = np.empty_like(x)
        for k in range(b):
            n_less[k] = np.searchsorted(order[k], x[k], side="left")
            n_greater[k] = n - np.searchsorted(order[k], x[k], side="right")
        repel = ((n_less - n_greater) / (n * n))[:, :, None]
    elif d == 1:
        x = samples[:, :, 0]
        repel = (np.sign(x[:, :, None] - x[:, None, :]).sum(axis=2) / (n * n))[:, :, None]
    else:
        repel = _unit(samples[:, :, None, :] - samples[:, None, :, :]).sum(axis=2) / (n * n)
    return (attract - repel) / b


def batch_energy_loss_and_grad(targets, samples):
    """``(per-item losses, gradient of their mean)`` sharing the pairwise distances.

    Same values as :func:`batch_energy_loss` / :func:`batch_energy_loss_grad`.
    """
    targets = np.asarray(targets, dtype=float)
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 3 or targets.shape != (samples.shape[0], samples.shape[2]):
        raise ShapeError(f"targets {targets.shape} incompatible with samples {samples.shape}")
    b, n, d = samples.shape
    if d == 1 and n > SORTED_THRESHOLD:
        return batch_energy_loss(targets, samples), batch_energy_loss_grad(targets, samples)
    resid = samples - targets[:, None, :]
    dist = np.sqrt(np.einsum("bnd,bnd->bn", resid, resid))
    attract = _unit(resid) / n
    if d == 1:
        diff = samples[:, :, None, 0] - samples[:, None, :, 0]
        pair = np.abs(diff).sum(axis=(1, 2))
        repel = np.sign(diff).sum(axis=2)[:, :, None]
    else:
        diff = samples[:, :, None, :] - samples[:, None, :, :]
        r = np.sqrt(np.einsum("bijd,bijd->bij", diff, diff))
        pair = r.sum(axis=(1, 2))
        inv = np.divide(1.0, r, out=np.zeros_like(r), where=r > 0)
        repel = np.einsum("bijd,bij->bid", diff, inv)
    losses = dist.sum(axis=1) / n - pair / (2.0 * n * n)
    grad = (attract - repel / (n * n)) / b
    return losses, grad
