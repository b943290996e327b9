"""Distribution distances and scoring rules for ensemble forecasts.

Grid metrics (JSD, Hellinger, W1, root energy distance) compare two
:class:`DensityGrid` objects cell by cell. Sample metrics (CRPS, KDE
negative log-likelihood, energy distance) work on raw ensembles.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp


class GridMismatchError(ValueError):
    pass


class UnsupportedDimensionError(ValueError):
    pass


class DegenerateEnsembleError(ValueError):
    pass


@dataclass
class DensityGrid:
    """Probability masses on a uniform 1-D or 2-D grid.

    ``edges`` holds one array of cell edges per axis; ``masses`` has one
    entry per cell and sums to one. ``clipped`` counts samples that fell
    outside the grid and were folded into the end cells.
    """

    edges: tuple
    masses: np.ndarray
    clipped: int = 0

    def __post_init__(self):
        self.edges = tuple(np.asarray(e, dtype=float) for e in self.edges)
        self.masses = np.asarray(self.masses, dtype=float)
        if self.masses.shape != tuple(e.size - 1 for e in self.edges):
            raise ValueError(f"masses shape {self.masses.shape} does not match the grid")
        for e in self.edges:
            if np.any(np.diff(e) <= 0):
                raise ValueError("grid edges must be strictly increasing")
        if np.any(self.masses < 0):
            raise ValueError("masses must be non-negative")
        total = self.masses.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"masses sum to {total}, not 1")

    @property
    def ndim(self):
        return len(self.edges)

    @property
    def centers(self):
        return tuple(0.5 * (e[1:] + e[:-1]) for e in self.edges)

    @property
    def widths(self):
        return tuple(np.diff(e) for e in self.edges)

    def same_grid(self, other):
        return self.ndim == other.ndim and all(
            a.shape == b.shape and np.allclose(a, b, rtol=0, atol=1e-12) for a, b in zip(self.edges, other.edges)
        )


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    cells: int = 200

    def edges(self):
        if not self.hi > self.lo:
            raise ValueError("grid upper bound must exceed the lower bound")
        return np.linspace(self.lo, self.hi, self.cells + 1)


def _as_specs(grid_spec):
    if isinstance(grid_spec, GridSpec):
        return (grid_spec,)
    return tuple(grid_spec)


def histogram_density(samples, grid_spec):
    """Normalised histogram of ``samples`` on ``grid_spec`` (a GridSpec or one per axis).

    Samples beyond the grid are folded into the end cells and counted.
    """
    specs = _as_specs(grid_spec)
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise ValueError("cannot build a histogram from an empty sample set")
    if x.shape[1] != len(specs):
        raise ValueError(f"samples have {x.shape[1]} dimensions, grid has {len(specs)}")
    edges = [s.edges() for s in specs]
    index = []
    clipped = np.zeros(x.shape[0], dtype=bool)
    for j, e in enumerate(edges):
        k = np.searchsorted(e, x[:, j], side="right") - 1
        # the right edge belongs to the last cell
        k[x[:, j] == e[-1]] = e.size - 2
        out = (k < 0) | (k > e.size - 2)
        clipped |= out
        index.append(np.clip(k, 0, e.size - 2))
    shape = tuple(e.size - 1 for e in edges)
    counts = np.bincount(np.ravel_multi_index(index, shape), minlength=int(np.prod(shape)))
    masses = counts.reshape(shape) / x.shape[0]
    return DensityGrid(tuple(edges), masses, int(clipped.sum()))


def density_from_masses(edges, masses):
    """Grid density from (possibly unnormalised) cell masses."""
    masses = np.clip(np.asarray(masses, dtype=float), 0.0, None)
    edges = tuple(edges) if isinstance(edges, (tuple, list)) and np.ndim(edges[0]) == 1 else (edges,)
    return DensityGrid(edges, masses / masses.sum())


def _pair(P, Q):
    if not P.same_grid(Q):
        raise GridMismatchError("densities live on different grids")
    return P.masses.ravel(), Q.masses.ravel()


def jsd(P, Q):
    """Jensen-Shannon distance (square root of the divergence, log base 2)."""
    p, q = _pair(P, Q)
    m = 0.5 * (p + q)

    def kl(a):
        nz = a > 0
        return float(np.sum(a[nz] * np.log2(a[nz] / m[nz])))

    div = 0.5 * kl(p) + 0.5 * kl(q)
    return math.sqrt(min(max(div, 0.0), 1.0))


def hellinger(P, Q):
    p, q = _pair(P, Q)
    d = np.sqrt(p) - np.sqrt(q)
    return min(math.sqrt(0.5 * float(d @ d)), 1.0)


def _cdf_gaps(P, Q):
    if P.ndim != 1 or Q.ndim != 1:
        raise UnsupportedDimensionError("CDF-based distances are defined for 1-D grids only")
    p, q = _pair(P, Q)
    # CDF difference at every cell edge, piecewise linear in between
    d = np.concatenate([[0.0], np.cumsum(p - q)])
    return d, P.widths[0]


def wasserstein1(P, Q):
    """First Wasserstein distance.

    Two grids: trapezoid rule on the cumulative masses. Two sample arrays:
    exact integral of the gap between empirical CDFs.
    """
    if isinstance(P, DensityGrid) and isinstance(Q, DensityGrid):
        d, w = _cdf_gaps(P, Q)
        a = np.abs(d)
        return float(np.sum(w * 0.5 * (a[1:] + a[:-1])))
    x = np.sort(np.asarray(P, dtype=float).ravel())
    y = np.sort(np.asarray(Q, dtype=float).ravel())
    allv = np.concatenate([x, y])
    allv.sort(kind="mergesort")
    dx = np.diff(allv)
    fx = np.searchsorted(x, allv[:-1], side="right") / x.size
    fy = np.searchsorted(y, allv[:-1], side="right") / y.size
    return float(np.sum(np.abs(fx - fy) * dx))


def _mean_abs_cross(x, y):
    """``sum_i sum_j |x_i - y_j|`` for 1-D samples via sorting and prefix sums."""
    ys = np.sort(y)
    cs = np.concatenate([[0.0], np.cumsum(ys)])
    k = np.searchsorted(ys, x, side="right")
    below = x * k - cs[k]
    above = (cs[-1] - cs[k]) - x * (ys.size - k)
    return float(np.sum(below + above))


def energy_distance_samples(X, Y):
    """Finite-sample energy distance ``D_E`` (not square-rooted).

    Multivariate inputs use the direct O(mn) double sums; scalar inputs use
    a sort-based evaluation of the same sums.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    X = X[:, None] if X.ndim == 1 else X
    Y = Y[:, None] if Y.ndim == 1 else Y
    if X.shape[1] != Y.shape[1]:
        raise ValueError("sample sets have different dimensions")
    m, n = X.shape[0], Y.shape[0]
    if X.shape[1] == 1:
        x, y = X[:, 0], Y[:, 0]
        xy = _mean_abs_cross(x, y)
        xx = _mean_abs_cross(x, x)
        yy = _mean_abs_cross(y, y)
    else:
        def s(A, B):
            return float(np.linalg.norm(A[:, None, :] - B[None, :, :], axis=-1).sum())

        xy, xx, yy = s(X, Y), s(X, X), s(Y, Y)
    return 2.0 * xy / (m * n) - xx / (m * m) - yy / (n * n)


def energy_dist(P, Q):
    """Square root of the energy distance.

    Grids use ``sqrt(2 * integral (F_p - F_q)^2)`` with piecewise-linear CDFs;
    sample arrays use the finite-sample double sums.
    """
    if isinstance(P, DensityGrid) and isinstance(Q, DensityGrid):
        d, w = _cdf_gaps(P, Q)
        integral = float(np.sum(w * (d[:-1] ** 2 + d[:-1] * d[1:] + d[1:] ** 2) / 3.0))
        return math.sqrt(2.0 * integral)
    return math.sqrt(max(energy_distance_samples(P, Q), 0.0))


def crps_empirical(samples, y):
    """CRPS of an ensemble: ``mean|s - y| - 1/(2 M^2) sum_ij |s_i - s_j|``."""
    s = np.sort(np.asarray(samples, dtype=float).ravel())
    m = s.size
    if m < 1:
        raise ValueError("ensemble is empty")
    coef = 2.0 * np.arange(m) - (m - 1)
    pair = 2.0 * float(coef @ s)
    return float(np.mean(np.abs(s - y)) - pair / (2.0 * m * m))


def scott_bandwidth(samples):
    s = np.asarray(samples, dtype=float).ravel()
    return float(np.std(s, ddof=1) * s.size ** (-1.0 / 5.0))


def nll_kde(samples, y):
    """Negative log of a Gaussian KDE (Scott's bandwidth) evaluated at ``y``."""
    s = np.asarray(samples, dtype=float).ravel()
    if s.size < 2:
        raise DegenerateEnsembleError("KDE needs at least two ensemble members")
    h = scott_bandwidth(s)
    if not h > 0:
        raise DegenerateEnsembleError("ensemble has zero variance")
    z = (np.atleast_1d(np.asarray(y, dtype=float))[:, None] - s[None, :]) / h
    log_dens = logsumexp(-0.5 * z * z, axis=1) - math.log(s.size * h * math.sqrt(2 * math.pi))
    out = -log_dens
    return float(out[0]) if np.ndim(y) == 0 else out


def point_errors(predictions, targets):
    """``(MAE, RMSE)``."""
    p = np.asarray(predictions, dtype=float).ravel()
    t = np.asarray(targets, dtype=float).ravel()
    if p.size == 0:
        raise ValueError("no predictions")
    if p.size != t.size:
        raise ValueError("predictions and targets differ in length")
    e = p - t
    return float(np.mean(np.abs(e))), float(np.sqrt(np.mean(e * e)))


# --------------------------------------------------------------------------
# comparing an ensemble with a known conditional density
# --------------------------------------------------------------------------


def default_grid_1d(samples, truth=None, cells=200, pad_std=3.0):
    """200 cells over the samples and the truth's support, padded by 3 ensemble std."""
    s = np.asarray(samples, dtype=float).ravel()
    lo, hi = float(s.min()), float(s.max())
    if truth is not None:
        tlo, thi = truth.support()
        lo, hi = min(lo, tlo), max(hi, thi)
    pad = pad_std * float(np.std(s))
    lo, hi = lo - pad, hi + pad
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    return GridSpec(lo, hi, cells)


def compare_1d(samples, truth, cells=200):
    """All four grid metrics between an ensemble and a 1-D reference density."""
    spec = default_grid_1d(samples, truth, cells)
    Q = histogram_density(samples, spec)
    P = density_from_masses(Q.edges, truth.cell_masses(Q.edges[0]))
    return {
        "jsd": jsd(P, Q),
        "hellinger": hellinger(P, Q),
        "wd": wasserstein1(P, Q),
        "ed": energy_dist(P, Q),
    }


def compare_2d(samples, truth, cells=100, pad_std=3.0):
    """Hellinger distance between a 2-D ensemble and a 2-D reference density.

    Each axis gets ``cells`` cells over the samples and the truth's support,
    padded by ``pad_std`` ensemble std along that axis (the 1-D rule).
    """
    s = np.asarray(samples, dtype=float)
    pad = pad_std * s.std(axis=0)
    specs = tuple(
        GridSpec(min(s[:, k].min(), lo) - pad[k], max(s[:, k].max(), hi) + pad[k], cells)
        for k, (lo, hi) in enumerate(truth.support())
    )
    Q = histogram_density(s, specs)
    P = density_from_masses(Q.edges, truth.cell_masses(*Q.edges))
    return {"hellinger": hellinger(P, Q)}


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


@dataclass
class MetricReport:
    """Per-evaluation-point metric values plus their averages."""

    points: list = field(default_factory=list)
    values: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def add(self, point, **metrics):
        self.points.append(point)
        for k, v in metrics.items():
            self.values.setdefault(k, []).append(float(v))

    def summary(self):
        return {k: float(np.mean(v)) for k, v in self.values.items()}

    def to_rows(self):
        names = list(self.values)
        rows = [{"point": p, **{k: self.values[k][i] for k in names}} for i, p in enumerate(self.points)]
        rows.append({"point": "mean", **self.summary()})
        return rows

    def to_csv(self, path):
        rows = self.to_rows()
        with Path(path).open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)

    def to_json(self, path):
        doc = {"meta": self.meta, "points": self.points, "values": self.values, "summary": self.summary()}
        Path(path).write_text(json.dumps(doc, indent=2))
