"""Numerical check that the expected energy score is minimised at the truth.

On a discrete grid ``y_1 .. y_K`` with true masses ``p`` the expected loss
of a forecast ``f`` is::

    S(f) = sum_ij p_i f_j |y_i - y_j| - 1/2 sum_ij f_i f_j |y_i - y_j|

which is convex on the simplex (the distance matrix is conditionally
negative definite). Minimising it by exponentiated-gradient descent and
checking that ``f* = p`` gives a witness of strict propriety.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr

SIMPLEX_TOL = 1e-12


class SimplexError(ValueError):
    pass


def as_simplex(f, tol=SIMPLEX_TOL):
    f = np.asarray(f, dtype=float).ravel()
    if f.size < 1 or np.any(f < 0) or not np.all(np.isfinite(f)):
        raise SimplexError("masses must be finite and non-negative")
    if abs(f.sum() - 1.0) > tol:
        raise SimplexError(f"masses sum to {f.sum():.15g}, not 1")
    return f


def _points(grid):
    y = np.asarray(grid, dtype=float)
    return y[:, None] if y.ndim == 1 else y


def distance_matrix(grid):
    y = _points(grid)
    return np.linalg.norm(y[:, None, :] - y[None, :, :], axis=-1)


def grid_span(grid):
    """Widest extent of the grid along any axis."""
    return float(np.ptp(_points(grid), axis=0).max())


def expected_score(f, p, grid, D=None):
    f = as_simplex(f)
    p = as_simplex(p)
    D = distance_matrix(grid) if D is None else D
    if D.shape != (f.size, f.size) or p.size != f.size:
        raise ValueError("f, p and grid sizes disagree")
    Df = D @ f
    return float(p @ Df - 0.5 * f @ Df)


def saddle_residual(f, p, grid, D=None):
    """Largest deviation of ``sum_j (p_j - f_j)|y_i - y_j|`` from its mean over cells."""
    f = np.asarray(f, dtype=float).ravel()
    p = np.asarray(p, dtype=float).ravel()
    D = distance_matrix(grid) if D is None else D
    r = D @ (p - f)
    return float(np.max(np.abs(r - r.mean())))


def total_variation(f, p):
    return 0.5 * float(np.sum(np.abs(np.asarray(f) - np.asarray(p))))


@dataclass
class MinimizationResult:
    f: np.ndarray
    objective: float
    iterations: int
    residual: float
    tv: float
    converged: bool
    objective_trace: list


def minimize_expected_score(p, grid, iters=5000, step=0.5, tol=None, growth=1.05):
    """Exponentiated-gradient minimisation of :func:`expected_score` over the simplex.

    A step is accepted only if it does not increase the objective (the step
    length is halved until it does); accepted steps grow the length by
    ``growth``. Starts from the uniform distribution. ``tol`` is the saddle
    residual regarded as converged (default 1% of the grid span).
    """
    p = as_simplex(p)
    if p.size < 2:
        raise ValueError("need at least two grid cells")
    D = distance_matrix(grid)
    if D.shape[0] != p.size:
        raise ValueError("grid and density sizes disagree")
    span = grid_span(grid)
    tol = 0.01 * span if tol is None else tol
    Dp = D @ p

    def objective(f):
        Df = D @ f
        return float(p @ Df - 0.5 * f @ Df), Df

    logf = np.full(p.size, -np.log(p.size))
    f = np.exp(logf)
    obj, Df = objective(f)
    trace = [obj]
    eta = step
    it = 0
    for it in range(1, iters + 1):
        g = Dp - Df
        while True:
            z = logf - eta * (g - g.min())
            z -= z.max()
            fn = np.exp(z)
            total = fn.sum()
            fn /= total
            on, Dfn = objective(fn)
            if on <= obj or eta < 1e-12:
                break
            eta *= 0.5
        logf = z - np.log(total)
        f, obj, Df = fn, on, Dfn
        trace.append(obj)
        eta = min(eta * growth, 1e3 * step)
        if it % 100 == 0 and saddle_residual(f, p, grid, D) < 1e-10 * span:
            break
    res = saddle_residual(f, p, grid, D)
    return MinimizationResult(f, obj, it, res, total_variation(f, p), res < tol, trace)


# --------------------------------------------------------------------------
# densities on grids
# --------------------------------------------------------------------------


def gaussian_on_grid(grid, mean=0.0, std=1.0):
    """Cell masses of N(mean, std^2) with cells centred on the grid points."""
    y = np.asarray(grid, dtype=float)
    edges = np.concatenate([[-np.inf], 0.5 * (y[1:] + y[:-1]), [np.inf]])
    m = np.diff(ndtr((edges - mean) / std))
    return m / m.sum()


def mixture_on_grid(grid, means, stds, weights=None):
    """Cell masses of a 1-D Gaussian mixture."""
    weights = np.ones(len(means)) if weights is None else np.asarray(weights, dtype=float)
    stds = np.broadcast_to(np.asarray(stds, dtype=float), (len(means),))
    m = sum(w * gaussian_on_grid(grid, mu, s) for w, mu, s in zip(weights, means, stds))
    return m / m.sum()


def point_mass_on_grid(grid, at):
    y = np.asarray(grid, dtype=float)
    m = np.zeros(y.size)
    m[int(np.argmin(np.abs(y - at)))] = 1.0
    return m


def clusters_on_grid(grid, centres, weights, width=1):
    """Masses concentrated on ``2*width+1`` cells around each centre."""
    y = np.asarray(grid, dtype=float)
    m = np.zeros(y.size)
    for c, w in zip(centres, weights):
        k = int(np.argmin(np.abs(y - c)))
        lo, hi = max(k - width, 0), min(k + width + 1, y.size)
        m[lo:hi] += w / (hi - lo)
    return m / m.sum()


def grid_2d(lo, hi, n):
    g = np.linspace(lo, hi, n)
    yy, xx = np.meshgrid(g, g, indexing="ij")
    return np.stack([xx.ravel(), yy.ravel()], axis=1)


def gaussian_on_grid_2d(points, mean=(0.0, 0.0), std=1.0):
    d2 = np.sum((points - np.asarray(mean)) ** 2, axis=1)
    m = np.exp(-0.5 * d2 / std**2)
    return m / m.sum()


def verification_report(result, grid, label=""):
    y = _points(grid)
    return {
        "label": label,
        "cells": int(y.shape[0]),
        "dimension": int(y.shape[1]),
        "grid_min": y.min(axis=0).tolist(),
        "grid_max": y.max(axis=0).tolist(),
        "tv": result.tv,
        "residual": result.residual,
        "iterations": result.iterations,
        "objective": result.objective,
        "converged": bool(result.converged),
    }


def write_report(path, reports):
    Path(path).write_text(json.dumps(reports, indent=2))
