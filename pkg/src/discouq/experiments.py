"""Reproduction drivers: train on a generator, score against the known truth.

Each preset bundles the dataset size, network shape, training schedule and
evaluation protocol for one synthetic study. Repeat ``r`` of a run with base
seed ``s`` uses seed ``s + r`` for data, initialisation, training noise and
ensemble sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import find_peaks

from . import data as D
from .inference import predict_ensemble, predict_ensembles, sample_functions
from .metrics import (
    DegenerateEnsembleError,
    compare_1d,
    compare_2d,
    crps_empirical,
    default_grid_1d,
    histogram_density,
    nll_kde,
    point_errors,
    MetricReport,
)
from .model import ModelConfig
from .trainer import TrainConfig, split, train


@dataclass
class EvalSpec:
    n_points: int = 200
    M: int = 3000
    x_range: tuple = None  # defaults to the generator's domain
    cells: int = None  # 200 for 1-D targets, 100 per axis for 2-D


@dataclass
class Preset:
    generator: str
    data_params: dict
    model: dict
    train: TrainConfig
    evaluation: EvalSpec = field(default_factory=EvalSpec)


PRESETS = {
    "unimodal": Preset(
        "unimodal", {"n": 200}, {"mlp_activation": "tanh"},
        TrainConfig(n_epoch=300, b_batch=20, n_b=50), EvalSpec(200, 3000),
    ),
    "multimodal": Preset(
        "multimodal", {"n_per_branch": 1000}, {"mlp_activation": "tanh"},
        TrainConfig(n_epoch=300, b_batch=150, n_b=50), EvalSpec(100, 10_000),
    ),
    "squares": Preset(
        "squares", {"n": 600}, {"mlp_activation": "tanh"},
        TrainConfig(n_epoch=50, b_batch=80, n_b=20), EvalSpec(100, 3000),
    ),
    "ring2d": Preset(
        "ring2d", {"n": 3000}, {"mlp_activation": "relu", "noise_dim": 2, "output_dim": 2},
        TrainConfig(n_epoch=300, b_batch=300, n_b=100), EvalSpec(21, 100_000),
    ),
}


def preset(name, **overrides):
    """Copy of a preset; ``overrides`` may set ``train``/``evaluation`` fields or model keys."""
    return _derive(PRESETS[name], **overrides)


def _derive(base, **overrides):
    if isinstance(base, str):
        base = PRESETS[base]
    p = Preset(base.generator, dict(base.data_params), dict(base.model), replace(base.train), replace(base.evaluation))
    for key, value in overrides.items():
        if hasattr(p.train, key):
            p.train = replace(p.train, **{key: value})
        elif hasattr(p.evaluation, key):
            p.evaluation = replace(p.evaluation, **{key: value})
        elif key in ModelConfig.__dataclass_fields__:
            p.model[key] = value
        else:
            p.data_params[key] = value
    return p


def model_config_for(dataset, model_overrides, seed):
    kw = {"noise_dim": max(1, dataset.output_dim)}
    kw.update(model_overrides)
    kw.setdefault("output_dim", dataset.output_dim)
    return ModelConfig(feature_dim=dataset.feature_dim, seed=seed, **kw)


def train_preset(p, seed=0):
    ds = D.generate(p.generator, seed=seed, **p.data_params)
    cfg = model_config_for(ds, p.model, seed)
    params, history = train(ds, cfg, replace(p.train, seed=seed))
    return params, history, ds


def evaluate_synthetic(params, generator, spec, seed=0):
    """Per-x distances between the model's ensemble and the true ``p(y|x)``."""
    lo, hi = spec.x_range or D.GENERATOR_DOMAINS[generator]
    xs = np.linspace(lo, hi, spec.n_points)
    report = MetricReport(meta={"generator": generator, "M": spec.M, "n_points": spec.n_points})
    ens = predict_ensembles(params, xs[:, None], spec.M, seed)
    for x, samples in zip(xs, ens):
        truth = D.true_conditional(generator, x)
        if samples.shape[1] == 1:
            report.add(float(x), **compare_1d(samples[:, 0], truth, spec.cells or 200))
        else:
            report.add(float(x), **compare_2d(samples, truth, spec.cells or 100))
    return report


@dataclass
class RunResult:
    reports: list
    histories: list
    params: list

    def summary(self):
        """``{metric: (mean, std)}`` across repeats of the per-run x-averages."""
        keys = self.reports[0].values.keys()
        out = {}
        for k in keys:
            vals = [r.summary()[k] for r in self.reports]
            out[k] = (float(np.mean(vals)), float(np.std(vals)))
        return out


def run_preset(p, repeats=1, seed=0, keep_params=False):
    reports, histories, params_list = [], [], []
    for r in range(repeats):
        params, history, _ = train_preset(p, seed + r)
        reports.append(evaluate_synthetic(params, p.generator, p.evaluation, seed + r))
        histories.append(history)
        if keep_params:
            params_list.append(params)
    return RunResult(reports, histories, params_list)


def find_modes(samples, cells=200, prominence=0.2):
    """Locations of prominent local maxima of the ``cells``-cell histogram.

    A peak counts if its prominence is at least ``prominence`` times the
    tallest cell.
    """
    s = np.asarray(samples, dtype=float).ravel()
    H = histogram_density(s, default_grid_1d(s, cells=cells))
    m = H.masses
    peaks, _ = find_peaks(np.concatenate([[0.0], m, [0.0]]), prominence=prominence * m.max())
    return H.centers[0][peaks - 1]


def modes_match(modes, targets, tol=0.1):
    """True if there is one mode within ``tol`` of each target and no extras."""
    modes = sorted(modes)
    targets = sorted(targets)
    if len(modes) != len(targets):
        return False
    return all(abs(m - t) <= tol for m, t in zip(modes, targets))


def sweep(b_batches, n_bs, seeds=(0,), base="multimodal", activation="relu", **overrides):
    """Hellinger / W1 over a ``b_batch x n_b`` grid with ``n_epoch = 2 * b_batch``.

    ``base`` is a preset name or a :class:`Preset`; ``activation=None`` keeps
    the base preset's activation.
    """
    if not b_batches or not n_bs or not seeds:
        raise ValueError("sweep grid and seed list must be nonempty")
    rows = []
    for b in b_batches:
        for nb in n_bs:
            p = _derive(base, b_batch=b, n_b=nb, n_epoch=2 * b, **overrides)
            if activation is not None:
                p.model["mlp_activation"] = activation
            hd, wd = [], []
            for s in seeds:
                params, _, _ = train_preset(p, s)
                rep = evaluate_synthetic(params, p.generator, p.evaluation, s)
                summ = rep.summary()
                hd.append(summ["hellinger"])
                wd.append(summ["wd"])
            rows.append({
                "b_batch": b, "n_b": nb, "n_epoch": 2 * b,
                "hellinger": float(np.mean(hd)), "hellinger_std": float(np.std(hd)),
                "wd": float(np.mean(wd)), "wd_std": float(np.std(wd)),
            })
    return rows


def function_coverage(curves, x_grid, squares=D.SQUARES):
    """Per square: fraction of its vertical extent spanned by the curves over its x-range."""
    curves = np.asarray(curves)
    x = np.asarray(x_grid)
    out = []
    for (xlo, xhi), (ylo, yhi) in squares:
        inside = (x >= xlo) & (x <= xhi)
        vals = np.clip(curves[:, inside], ylo, yhi)
        out.append(float((vals.max() - vals.min()) / (yhi - ylo)))
    return out


def squares_functions(params, count=10, x_grid=None, seed=0):
    x_grid = np.linspace(-1.5, 1.5, 301) if x_grid is None else np.asarray(x_grid)
    fs = sample_functions(params, count, x_grid, seed)
    return x_grid, np.stack([f.curve[:, 0] for f in fs])


# --------------------------------------------------------------------------
# tabular benchmark
# --------------------------------------------------------------------------

BENCHMARK_TRAIN = TrainConfig(n_epoch=150, b_batch=200, n_b=100)
SMALL_BENCHMARK_TRAIN = TrainConfig(n_epoch=200, b_batch=50, n_b=50)


@dataclass
class BenchmarkResult:
    mae: float
    rmse: float
    crps: float
    nll: float
    per_row: dict
    n_train: int
    n_test: int

    def summary(self):
        return {"mae": self.mae, "rmse": self.rmse, "crps": self.crps, "nll": self.nll,
                "n_train": self.n_train, "n_test": self.n_test}


def benchmark_train_config(n_rows):
    """Schedule used for tabular data; small tables (Concrete scale) get the lighter one."""
    return SMALL_BENCHMARK_TRAIN if n_rows <= 2000 else BENCHMARK_TRAIN


def fit_tabular(dataset, train_config=None, activation="tanh", seed=0, test_fraction=0.1):
    """Split, fit quantile-normal transforms on the training rows, train.

    Returns ``(params, (x_transform, y_transform), train_set, test_set, history)``.
    """
    train_set, test_set = split(dataset, test_fraction, seed)
    tx = D.qnt_fit(train_set.features)
    ty = D.qnt_fit(train_set.targets)
    z_train = D.Dataset(tx.apply(train_set.features), ty.apply(train_set.targets))
    tc = train_config or benchmark_train_config(len(dataset))
    cfg = ModelConfig(
        feature_dim=dataset.feature_dim, noise_dim=dataset.output_dim,
        output_dim=dataset.output_dim, mlp_activation=activation, seed=seed,
    )
    params, history = train(z_train, cfg, replace(tc, seed=seed))
    return params, (tx, ty), train_set, test_set, history


def score_tabular(params, transforms, test_set, M=500, seed=0):
    """MAE/RMSE of the ensemble mean and mean CRPS/NLL, all in original target units."""
    tx, ty = transforms
    if test_set.output_dim != 1:
        raise ValueError("tabular scoring supports a single target column")
    zx = tx.apply(test_set.features)
    seeds = np.random.SeedSequence(seed).spawn(len(test_set))
    crps, nll, mean = [], [], []
    for i, row in enumerate(zx):
        z = predict_ensemble(params, row, M, np.random.default_rng(seeds[i])).samples
        s = ty.invert(z)[:, 0]
        y = float(test_set.targets[i, 0])
        crps.append(crps_empirical(s, y))
        try:
            nll.append(nll_kde(s, y))
        except DegenerateEnsembleError:
            nll.append(math.inf)
        mean.append(float(s.mean()))
    mae, rmse = point_errors(mean, test_set.targets[:, 0])
    per_row = {"crps": crps, "nll": nll, "mean": mean, "target": test_set.targets[:, 0].tolist()}
    return BenchmarkResult(mae, rmse, float(np.mean(crps)), float(np.mean(nll)), per_row, 0, len(test_set))


def benchmark(dataset, train_config=None, activation="tanh", M=500, seed=0):
    params, transforms, train_set, test_set, _ = fit_tabular(dataset, train_config, activation, seed)
    result = score_tabular(params, transforms, test_set, M, seed)
    result.n_train = len(train_set)
    return result
