"""Datasets: synthetic generators with their true conditionals, CSV I/O,
and the rank-based quantile-normal transform."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr

SQUARES = (
    ((-1.5, -0.5), (-1.5, -0.5)),
    ((-0.5, 0.5), (0.5, 1.5)),
    ((0.5, 1.5), (-1.5, -0.5)),
)

UNIMODAL_NOISE = 0.4
MULTIMODAL_NOISE = 0.15
RING_NOISE = 0.1
RING_RADIUS = 0.6
RING_HALF_ANGLE = 0.75 * math.pi


class IngestionError(ValueError):
    pass


class DegenerateColumnError(ValueError):
    pass


@dataclass
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    feature_names: list = field(default_factory=list)
    target_names: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.targets = np.asarray(self.targets, dtype=float)
        if self.targets.ndim == 1:
            self.targets = self.targets[:, None]
        if self.features.shape[0] != self.targets.shape[0]:
            raise ValueError("features and targets have different row counts")
        if self.features.shape[0] < 1:
            raise ValueError("dataset is empty")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.targets))):
            raise ValueError("dataset contains non-finite entries")
        if not self.feature_names:
            self.feature_names = [f"x{i}" for i in range(self.feature_dim)]
        if not self.target_names:
            self.target_names = [f"y{i}" for i in range(self.output_dim)]

    def __len__(self):
        return self.features.shape[0]

    @property
    def feature_dim(self):
        return self.features.shape[1]

    @property
    def output_dim(self):
        return self.targets.shape[1]

    def subset(self, index):
        return Dataset(
            self.features[index],
            self.targets[index],
            list(self.feature_names),
            list(self.target_names),
            dict(self.provenance),
        )


# --------------------------------------------------------------------------
# true conditional densities
# --------------------------------------------------------------------------


class GaussianMixture1D:
    """Equal-or-weighted mixture of 1-D Gaussians."""

    def __init__(self, means, sigmas, weights=None):
        self.means = np.atleast_1d(np.asarray(means, dtype=float))
        self.sigmas = np.broadcast_to(np.asarray(sigmas, dtype=float), self.means.shape).copy()
        if weights is None:
            weights = np.full(self.means.shape, 1.0 / self.means.size)
        self.weights = np.asarray(weights, dtype=float) / np.sum(weights)

    def pdf(self, y):
        y = np.asarray(y, dtype=float)[..., None]
        z = (y - self.means) / self.sigmas
        return np.sum(self.weights * np.exp(-0.5 * z * z) / (self.sigmas * math.sqrt(2 * math.pi)), axis=-1)

    def cdf(self, y):
        y = np.asarray(y, dtype=float)[..., None]
        return np.sum(self.weights * ndtr((y - self.means) / self.sigmas), axis=-1)

    def support(self, width=6.0):
        return float(np.min(self.means - width * self.sigmas)), float(np.max(self.means + width * self.sigmas))

    def sample(self, n, rng):
        comp = rng.choice(self.means.size, size=n, p=self.weights)
        return self.means[comp] + self.sigmas[comp] * rng.standard_normal(n)

    def cell_masses(self, edges):
        return np.diff(self.cdf(edges))


class Uniform1D:
    def __init__(self, lo, hi):
        self.lo, self.hi = float(lo), float(hi)

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.where((y >= self.lo) & (y <= self.hi), 1.0 / (self.hi - self.lo), 0.0)

    def cdf(self, y):
        return np.clip((np.asarray(y, dtype=float) - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def support(self, width=None):
        return self.lo, self.hi

    def sample(self, n, rng):
        return rng.uniform(self.lo, self.hi, n)

    def cell_masses(self, edges):
        return np.diff(self.cdf(edges))


class RingDensity2D:
    """``r (cos t, sin t) + N(0, s^2 I)`` with ``t ~ U[-h, h]``."""

    def __init__(self, radius, noise=RING_NOISE, half_angle=RING_HALF_ANGLE, n_angles=512):
        self.radius = float(radius)
        self.noise = float(noise)
        self.half_angle = float(half_angle)
        # Gauss-Legendre nodes for the angular average
        nodes, weights = np.polynomial.legendre.leggauss(n_angles)
        self._theta = self.half_angle * nodes
        self._w = weights / weights.sum()

    def support(self, width=6.0):
        r = abs(self.radius) + width * self.noise
        return (-r, r), (-r, r)

    def sample(self, n, rng):
        theta = rng.uniform(-self.half_angle, self.half_angle, n)
        centre = self.radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        return centre + self.noise * rng.standard_normal((n, 2))

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        cx = self.radius * np.cos(self._theta)
        cy = self.radius * np.sin(self._theta)
        d2 = (y[..., 0:1] - cx) ** 2 + (y[..., 1:2] - cy) ** 2
        dens = np.exp(-0.5 * d2 / self.noise**2) / (2 * math.pi * self.noise**2)
        return dens @ self._w

    def cell_masses(self, edges_x, edges_y):
        """Exact per-angle Gaussian box integrals averaged over the angle."""
        cx = self.radius * np.cos(self._theta)
        cy = self.radius * np.sin(self._theta)
        fx = np.diff(ndtr((np.asarray(edges_x)[:, None] - cx) / self.noise), axis=0)
        fy = np.diff(ndtr((np.asarray(edges_y)[:, None] - cy) / self.noise), axis=0)
        return (fx * self._w) @ fy.T


def unimodal_mean(x):
    return np.exp(np.sin(np.pi * np.asarray(x, dtype=float)))


def true_conditional(name, x):
    """Ground-truth ``p(y | x)`` for a synthetic generator."""
    x = float(x)
    if name == "unimodal":
        return GaussianMixture1D([float(unimodal_mean(x))], UNIMODAL_NOISE)
    if name == "multimodal":
        return GaussianMixture1D([x, math.cos(x), -math.cos(x)], MULTIMODAL_NOISE)
    if name == "squares":
        for (xlo, xhi), (ylo, yhi) in SQUARES:
            if xlo <= x <= xhi:
                return Uniform1D(ylo, yhi)
        raise ValueError(f"x = {x} lies outside every square")
    if name == "ring2d":
        return RingDensity2D(RING_RADIUS * x)
    raise ValueError(f"unknown generator {name!r}")


GENERATOR_DOMAINS = {
    "unimodal": (-1.0, 1.0),
    "multimodal": (-math.pi / 2, math.pi / 2),
    "squares": (-1.5, 1.5),
    "ring2d": (0.0, 1.0),
}


# --------------------------------------------------------------------------
# generators
# --------------------------------------------------------------------------


def _provenance(name, seed, **params):
    return {"generator": name, "seed": seed, "parameters": params}


def gen_unimodal(n=200, seed=0):
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, n)
    y = unimodal_mean(x) + UNIMODAL_NOISE * rng.standard_normal(n)
    return Dataset(x[:, None], y[:, None], ["x"], ["y"], _provenance("unimodal", seed, n=n))


def gen_multimodal(n_per_branch=1000, seed=0):
    if n_per_branch < 1:
        raise ValueError("n_per_branch must be positive")
    rng = np.random.default_rng(seed)
    lo, hi = GENERATOR_DOMAINS["multimodal"]
    xs, ys = [], []
    for branch in (lambda t: t, np.cos, lambda t: -np.cos(t)):
        x = rng.uniform(lo, hi, n_per_branch)
        xs.append(x)
        ys.append(branch(x) + MULTIMODAL_NOISE * rng.standard_normal(n_per_branch))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    return Dataset(
        x[:, None], y[:, None], ["x"], ["y"], _provenance("multimodal", seed, n_per_branch=n_per_branch)
    )


def gen_squares(n=600, seed=0):
    if n < 3 or n % 3:
        raise ValueError("n must be a positive multiple of 3")
    rng = np.random.default_rng(seed)
    k = n // 3
    xs, ys = [], []
    for (xlo, xhi), (ylo, yhi) in SQUARES:
        xs.append(rng.uniform(xlo, xhi, k))
        ys.append(rng.uniform(ylo, yhi, k))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    return Dataset(x[:, None], y[:, None], ["x"], ["y"], _provenance("squares", seed, n=n))


def square_index(x, y):
    """Index of the square containing ``(x, y)``, or -1."""
    for k, ((xlo, xhi), (ylo, yhi)) in enumerate(SQUARES):
        if xlo <= x <= xhi and ylo <= y <= yhi:
            return k
    return -1


def gen_ring2d(n=3000, seed=0):
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 1.0, n)
    theta = rng.uniform(-RING_HALF_ANGLE, RING_HALF_ANGLE, n)
    eps = RING_NOISE * rng.standard_normal((n, 2))
    y = RING_RADIUS * x[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1) + eps
    return Dataset(x[:, None], y, ["x"], ["y1", "y2"], _provenance("ring2d", seed, n=n))


GENERATORS = {
    "unimodal": gen_unimodal,
    "multimodal": gen_multimodal,
    "squares": gen_squares,
    "ring2d": gen_ring2d,
}


def generate(name, seed=0, **params):
    try:
        gen = GENERATORS[name]
    except KeyError:
        raise ValueError(f"unknown generator {name!r}; choose from {sorted(GENERATORS)}") from None
    return gen(seed=seed, **params)


def gen_tabular_standin(n=1030, seed=0):
    """Concrete-sized synthetic regression table: 8 features, heteroscedastic target."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 1.0, (n, 8))
    x[:, 3] = rng.lognormal(0.0, 0.5, n)
    signal = 20 + 15 * x[:, 0] - 10 * x[:, 1] ** 2 + 8 * np.sin(3 * x[:, 2]) + 4 * np.log(x[:, 3]) + 5 * x[:, 4] * x[:, 5]
    noise = (1.0 + 3.0 * x[:, 6]) * rng.standard_normal(n)
    y = signal + noise
    names = [f"feature_{i}" for i in range(8)]
    return Dataset(x, y[:, None], names, ["strength"], _provenance("tabular_standin", seed, n=n))


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------


def save_csv(dataset, path, delimiter=","):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        w.writerow(list(dataset.feature_names) + list(dataset.target_names))
        for xi, yi in zip(dataset.features, dataset.targets):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(v)) for v in yi])


def write_provenance(dataset, path):
    Path(path).write_text(json.dumps(dataset.provenance, indent=2, sort_keys=True))


def load_csv(path, target_columns, delimiter=",", feature_columns=None):
    """Read a header-first numeric CSV. Rows with empty cells are dropped and counted.

    The count is stored in ``dataset.provenance["dropped_rows"]``.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"no such file: {path}")
    if isinstance(target_columns, str):
        target_columns = [target_columns]
    with path.open(newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise IngestionError(f"{path} is empty") from None
        rows = list(reader)
    missing = [c for c in target_columns if c not in header]
    if missing:
        raise IngestionError(f"target column(s) {missing} not found in {path}")
    if feature_columns is None:
        feature_columns = [h for h in header if h not in target_columns]
    else:
        absent = [c for c in feature_columns if c not in header]
        if absent:
            raise IngestionError(f"feature column(s) {absent} not found in {path}")
    f_idx = [header.index(c) for c in feature_columns]
    t_idx = [header.index(c) for c in target_columns]

    feats, targs = [], []
    dropped = 0
    for lineno, row in enumerate(rows, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise IngestionError(f"{path}:{lineno}: expected {len(header)} cells, found {len(row)}")
        cells = [row[i].strip() for i in f_idx + t_idx]
        if any(c == "" or c.lower() in ("na", "nan") for c in cells):
            dropped += 1
            continue
        try:
            values = [float(c) for c in cells]
        except ValueError:
            bad = next(c for c in cells if not _is_float(c))
            raise IngestionError(f"{path}:{lineno}: cannot parse {bad!r} as a number") from None
        if not all(math.isfinite(v) for v in values):
            dropped += 1
            continue
        feats.append(values[: len(f_idx)])
        targs.append(values[len(f_idx):])
    if not feats:
        raise IngestionError(f"{path}: no usable rows")
    return Dataset(
        np.asarray(feats),
        np.asarray(targs),
        list(feature_columns),
        list(target_columns),
        {"source": str(path), "rows": len(feats), "dropped_rows": dropped},
    )


def _is_float(s):
    try:
        float(s)
        return True
    except ValueError:
        return False


# --------------------------------------------------------------------------
# quantile-normal transform
# --------------------------------------------------------------------------

# Acklam's rational approximation to the standard-normal quantile
# (relative error < 1.15e-9), polished by one Halley step against ndtr.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _poly(coef, x):
    out = np.zeros_like(x)
    for c in coef:
        out = out * x + c
    return out


def norm_ppf(p):
    """Inverse standard-normal CDF for ``0 < p < 1``."""
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    z = np.empty_like(p)
    lo = p < _P_LOW
    hi = p > 1 - _P_LOW
    mid = ~(lo | hi)
    q = p[mid] - 0.5
    r = q * q
    z[mid] = _poly(_A, r) * q / (_poly(_B, r) * r + 1.0)
    q = np.sqrt(-2.0 * np.log(p[lo]))
    z[lo] = _poly(_C, q) / (_poly(_D, q) * q + 1.0)
    q = np.sqrt(-2.0 * np.log1p(-p[hi]))
    z[hi] = -_poly(_C, q) / (_poly(_D, q) * q + 1.0)
    # Halley refinement; the upper tail works with 1 - p to avoid cancellation
    e = np.where(hi, (1.0 - p) - ndtr(-z), ndtr(z) - p)
    u = e * math.sqrt(2 * math.pi) * np.exp(0.5 * z * z)
    z = z - u / (1.0 + 0.5 * z * u)
    return z


class QuantileNormalTransform:
    """Per-column map ``raw -> Phi^-1(plotting position)``.

    Fit values get plotting positions ``(r - 0.5) / n`` (ties share the mean
    position), clipped to ``[1e-7, 1 - 1e-7]``. Between fit points the map is
    piecewise linear in normal-score space, so ``invert`` is its exact
    inverse; values outside the fit range are clamped to the extremes.
    """

    CLIP = 1e-7

    def __init__(self, knots, probs):
        self.knots = [np.asarray(k, dtype=float) for k in knots]
        self.probs = [np.asarray(p, dtype=float) for p in probs]
        self.scores = [norm_ppf(p) for p in self.probs]

    @classmethod
    def fit(cls, columns):
        columns = np.asarray(columns, dtype=float)
        if columns.ndim == 1:
            columns = columns[:, None]
        knots, probs = [], []
        n = columns.shape[0]
        for j in range(columns.shape[1]):
            col = np.sort(columns[:, j])
            uniq, first, counts = np.unique(col, return_index=True, return_counts=True)
            if uniq.size < 2:
                raise DegenerateColumnError(f"column {j} is constant")
            # mean rank over a block of ties, 1-based
            mean_rank = first + 0.5 * (counts + 1)
            p = np.clip((mean_rank - 0.5) / n, cls.CLIP, 1 - cls.CLIP)
            knots.append(uniq)
            probs.append(p)
        return cls(knots, probs)

    @property
    def n_columns(self):
        return len(self.knots)

    def _check(self, values):
        values = np.asarray(values, dtype=float)
        squeeze = values.ndim == 1
        values = values[:, None] if squeeze else values
        if values.shape[1] != self.n_columns:
            raise ValueError(f"expected {self.n_columns} columns, got {values.shape[1]}")
        return values, squeeze

    def apply(self, values):
        values, squeeze = self._check(values)
        out = np.empty_like(values)
        for j in range(self.n_columns):
            # clamping to the fit extremes comes from np.interp
            out[:, j] = np.interp(values[:, j], self.knots[j], self.scores[j])
        return out[:, 0] if squeeze else out

    def invert(self, scores):
        scores, squeeze = self._check(scores)
        out = np.empty_like(scores)
        for j in range(self.n_columns):
            out[:, j] = np.interp(scores[:, j], self.scores[j], self.knots[j])
        return out[:, 0] if squeeze else out

    def to_dict(self):
        return {"knots": [k.tolist() for k in self.knots], "probs": [p.tolist() for p in self.probs]}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["knots"], doc["probs"])


def qnt_fit(columns):
    return QuantileNormalTransform.fit(columns)


def qnt_apply(transform, values):
    return transform.apply(values)


def qnt_invert(transform, scores):
    return transform.invert(scores)
