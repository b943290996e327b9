"""Ensemble forecasts and function samples from a trained network."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import forward

CHUNK = 50_000


@dataclass
class EnsembleForecast:
    x: np.ndarray
    samples: np.ndarray  # (M, output_dim)
    noise: np.ndarray  # (M, noise_dim), kept for replay

    @property
    def size(self):
        return self.samples.shape[0]


@dataclass
class FunctionSample:
    a: np.ndarray
    x_grid: np.ndarray
    curve: np.ndarray  # (len(x_grid), output_dim)


def _forward_chunked(params, x, a):
    out = np.empty((x.shape[0], params.config.output_dim))
    for s in range(0, x.shape[0], CHUNK):
        out[s:s + CHUNK] = forward(params, x[s:s + CHUNK], a[s:s + CHUNK])
    return out


def predict_ensemble(params, x, M=500, seed=0):
    """``M`` forward passes at ``x`` with i.i.d. uniform noise."""
    if M < 1:
        raise ValueError("M must be >= 1")
    cfg = params.config
    x = np.atleast_1d(np.asarray(x, dtype=float))
    rng = np.random.default_rng(seed)
    a = rng.random((M, cfg.noise_dim))
    xs = np.broadcast_to(x, (M, x.size))
    return EnsembleForecast(x, _forward_chunked(params, xs, a), a)


def predict_ensembles(params, X, M=500, seed=0):
    """Ensembles at every row of ``X``: array of shape ``(n, M, output_dim)``.

    Row ``i`` uses the noise stream of ``seed`` spawned for that row, so the
    result for one row does not depend on the rest of ``X``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    seeds = np.random.SeedSequence(seed).spawn(X.shape[0])
    out = np.empty((X.shape[0], M, params.config.output_dim))
    for i, row in enumerate(X):
        out[i] = predict_ensemble(params, row, M, np.random.default_rng(seeds[i])).samples
    return out


def ensemble_stats(forecast, levels=(0.05, 0.5, 0.95)):
    """Mean, std and quantiles (linear interpolation of order statistics) per output."""
    s = forecast.samples if isinstance(forecast, EnsembleForecast) else np.asarray(forecast, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    levels = np.asarray(levels, dtype=float)
    if np.any((levels < 0) | (levels > 1)):
        raise ValueError("quantile levels must lie in [0, 1]")
    return {
        "mean": s.mean(axis=0),
        "std": s.std(axis=0),
        "quantiles": np.quantile(s, levels, axis=0, method="linear"),
        "levels": levels,
    }


def quantile_depth(q):
    """``0.5 - |q - 0.5|``: 0.5 at the median, 0 in the extreme tails."""
    q = np.asarray(q, dtype=float)
    return 0.5 - np.abs(q - 0.5)


def empirical_quantile_level(samples, y):
    """Fraction of ensemble members at or below ``y``."""
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    return np.searchsorted(s, y, side="right") / s.size


def point_forecast(params, x, M=500, seed=0):
    return predict_ensemble(params, x, M, seed).samples.mean(axis=0)


def sample_function(params, a, x_grid):
    """Network output along ``x_grid`` with the noise held at ``a``."""
    cfg = params.config
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.shape != (cfg.noise_dim,) or np.any((a < 0) | (a > 1)):
        raise ValueError(f"a must be a point of [0, 1]^{cfg.noise_dim}")
    xg = np.asarray(x_grid, dtype=float)
    xg2 = xg[:, None] if xg.ndim == 1 else xg
    curve = _forward_chunked(params, xg2, np.broadcast_to(a, (xg2.shape[0], a.size)))
    return FunctionSample(a, xg, curve)


def sample_functions(params, count, x_grid, seed=0):
    rng = np.random.default_rng(seed)
    return [sample_function(params, rng.random(params.config.noise_dim), x_grid) for _ in range(count)]


def write_forecast_csv(path, X, ensembles):
    """One row per ensemble member: input id, member index, outputs."""
    ensembles = np.asarray(ensembles)
    d = ensembles.shape[2]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["input_id", "member"] + [f"y{j}" for j in range(d)])
        for i in range(ensembles.shape[0]):
            for m in range(ensembles.shape[1]):
                w.writerow([i, m] + [repr(float(v)) for v in ensembles[i, m]])
