import math

import numpy as np
import pytest

import discouq.experiments as E
from discouq import data as D
from discouq.trainer import TrainConfig


def test_presets_match_protocols():
    u, m, r = E.PRESETS["unimodal"], E.PRESETS["multimodal"], E.PRESETS["ring2d"]
    assert (u.train.n_epoch, u.train.b_batch, u.train.n_b) == (300, 20, 50)
    assert (u.evaluation.n_points, u.evaluation.M) == (200, 3000)
    assert (m.train.n_epoch, m.train.b_batch, m.train.n_b) == (300, 150, 50)
    assert (m.evaluation.n_points, m.evaluation.M) == (100, 10_000)
    assert (r.train.n_epoch, r.train.b_batch, r.train.n_b) == (300, 300, 100)
    assert r.evaluation.M == 100_000 and r.model["mlp_activation"] == "relu"


def test_preset_overrides_route_to_sections():
    p = E.preset("multimodal", n_epoch=7, M=11, mlp_activation="gcu", n_per_branch=5)
    assert p.train.n_epoch == 7 and p.evaluation.M == 11
    assert p.model["mlp_activation"] == "gcu" and p.data_params["n_per_branch"] == 5
    assert E.PRESETS["multimodal"].train.n_epoch == 300


def test_find_modes_on_true_mixture():
    s = D.true_conditional("multimodal", 0.0).sample(10_000, np.random.default_rng(0))
    modes = E.find_modes(s)
    assert E.modes_match(modes, [-1, 0, 1])


def test_find_modes_unimodal():
    assert len(E.find_modes(np.random.default_rng(1).normal(size=10_000))) == 1


def test_modes_match_rules():
    assert E.modes_match([0.95, 0.0, -1.05], [-1, 0, 1])
    assert not E.modes_match([0.85, 0.0, -1.0], [-1, 0, 1])
    assert not E.modes_match([-1, 0, 1, 2], [-1, 0, 1])


def test_function_coverage_hand_case():
    x = np.linspace(-1.5, 1.5, 7)
    squares = [((-1.5, -0.5), (0.0, 1.0))]
    curves = np.array([[0.25] * 7, [0.75] * 7])
    assert E.function_coverage(curves, x, squares) == [0.5]
    assert E.function_coverage(np.array([[-5.0] * 7, [5.0] * 7]), x, squares) == [1.0]


def test_sweep_rejects_empty():
    with pytest.raises(ValueError):
        E.sweep([], [10])
    with pytest.raises(ValueError):
        E.sweep([20], [10], seeds=())


def tiny(name, **kw):
    return E.preset(name, n_epoch=2, b_batch=10, n_b=3, n_points=3, M=40, **kw)


def test_run_preset_seeds_and_summary():
    p = tiny("unimodal", n=30)
    res = E.run_preset(p, repeats=2, seed=5)
    one = E.run_preset(p, repeats=1, seed=6)
    assert res.reports[1].values == one.reports[0].values
    h = [r.summary()["hellinger"] for r in res.reports]
    assert res.summary()["hellinger"] == (pytest.approx(np.mean(h)), pytest.approx(np.std(h)))


def test_run_preset_deterministic():
    p = tiny("ring2d", n=40, cells=10)
    a, b = E.run_preset(p, 1, 3), E.run_preset(p, 1, 3)
    assert a.reports[0].values == b.reports[0].values


def test_sweep_cells_match_direct_runs():
    rows = E.sweep([2], [3], seeds=(0, 1), base=tiny("multimodal", n_per_branch=10))
    direct = [E.run_preset(E._derive(tiny("multimodal", n_per_branch=10, mlp_activation="relu"),
                                     b_batch=2, n_b=3, n_epoch=4), 1, s).reports[0].summary()["hellinger"]
              for s in (0, 1)]
    assert rows[0]["hellinger"] == np.mean(direct) and rows[0]["n_epoch"] == 4


def test_squares_functions_shape():
    params, _, _ = E.train_preset(tiny("squares", n=30))
    x, curves = E.squares_functions(params)
    assert curves.shape == (10, 301) and x[0] == -1.5 and x[-1] == 1.5


# --- tabular benchmark --------------------------------------------------------


def test_benchmark_train_config_choice():
    assert E.benchmark_train_config(1030) is E.SMALL_BENCHMARK_TRAIN
    assert E.benchmark_train_config(20_640) is E.BENCHMARK_TRAIN


def test_transforms_fit_on_train_rows_only(monkeypatch):
    seen = []
    real = D.qnt_fit

    def spy(x):
        seen.append(len(x))
        return real(x)

    monkeypatch.setattr(D, "qnt_fit", spy)
    ds = D.gen_tabular_standin(n=200, seed=1)
    E.fit_tabular(ds, TrainConfig(n_epoch=1, b_batch=50, n_b=3))
    assert seen == [180, 180]


def test_benchmark_metrics_consistent():
    ds = D.gen_tabular_standin(n=150, seed=2)
    res = E.benchmark(ds, TrainConfig(n_epoch=3, b_batch=30, n_b=5), M=60)
    pr = res.per_row
    assert res.n_train == 135 and res.n_test == 15
    assert res.crps == pytest.approx(np.mean(pr["crps"])) and res.nll == pytest.approx(np.mean(pr["nll"]))
    err = np.array(pr["mean"]) - np.array(pr["target"])
    assert res.mae == pytest.approx(np.mean(np.abs(err))) and res.rmse == pytest.approx(math.sqrt(np.mean(err**2)))
    assert all(math.isfinite(v) for v in pr["crps"] + pr["nll"])
