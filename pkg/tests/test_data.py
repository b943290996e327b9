import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtri

from discouq import data as D
from discouq.metrics import energy_distance_samples


# --- generators -------------------------------------------------------------


@pytest.mark.parametrize("name", sorted(D.GENERATORS))
def test_generators_seeded(name):
    a, b = D.generate(name, seed=3), D.generate(name, seed=3)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.targets, b.targets)
    assert a.provenance["generator"] == name and a.provenance["seed"] == 3


def test_default_sizes():
    assert len(D.gen_unimodal()) == 200
    assert len(D.gen_multimodal()) == 3000
    assert len(D.gen_squares()) == 600
    assert len(D.gen_ring2d()) == 3000


def test_unimodal_conditional_moments():
    # the generator's noise model at fixed x = 0.5
    rng = np.random.default_rng(0)
    y = float(D.unimodal_mean(0.5)) + D.UNIMODAL_NOISE * rng.standard_normal(100_000)
    assert abs(y.mean() - math.e) < 3 * 0.4 / math.sqrt(1e5)
    assert abs(y.std() - 0.4) < 3 * 0.4 / math.sqrt(2e5)
    ds = D.gen_unimodal(n=5000, seed=1)
    assert np.all(np.abs(ds.features) <= 1)


def test_multimodal_modes_at_zero():
    truth = D.true_conditional("multimodal", 0.0)
    np.testing.assert_allclose(sorted(truth.means), [-1, 0, 1])
    ys = np.linspace(-2, 2, 4001)
    pdf = truth.pdf(ys)
    peaks = ys[1:-1][(pdf[1:-1] > pdf[:-2]) & (pdf[1:-1] > pdf[2:])]
    np.testing.assert_allclose(peaks, [-1, 0, 1], atol=2e-3)


def test_multimodal_pdf_formula():
    x, y = 0.4, np.array([-0.3, 0.2, 0.9])
    s = 0.15
    expect = sum(np.exp(-0.5 * ((y - m) / s) ** 2) / (s * math.sqrt(2 * math.pi)) for m in (x, math.cos(x), -math.cos(x))) / 3
    np.testing.assert_allclose(D.true_conditional("multimodal", x).pdf(y), expect, rtol=1e-12)


def test_squares_membership_and_counts():
    ds = D.gen_squares(600, seed=2)
    idx = [D.square_index(x, y) for x, y in zip(ds.features[:, 0], ds.targets[:, 0])]
    assert -1 not in idx
    assert np.bincount(idx).tolist() == [200, 200, 200]
    with pytest.raises(ValueError):
        D.gen_squares(601)


def test_ring_at_zero_isotropic():
    truth = D.true_conditional("ring2d", 0.0)
    s = truth.sample(100_000, np.random.default_rng(0))
    np.testing.assert_allclose(s.mean(axis=0), [0, 0], atol=3e-3)
    np.testing.assert_allclose(np.cov(s.T), 0.01 * np.eye(2), atol=3e-4)


def test_ring_angular_gap():
    ds = D.gen_ring2d(3000, seed=0)
    np.testing.assert_allclose(ds.features[:, 0], np.linspace(0, 1, 3000))
    s = D.true_conditional("ring2d", 1.0).sample(100_000, np.random.default_rng(1))
    theta = np.arctan2(s[:, 1], s[:, 0])
    r = np.hypot(s[:, 0], s[:, 1])
    # points well away from the origin whose angle sits deep inside the gap
    deep = (np.abs(theta) > 0.75 * np.pi + 0.5) & (r > 0.3)
    assert deep.mean() < 0.01


def test_ring_cell_masses_match_samples():
    truth = D.true_conditional("ring2d", 0.7)
    e = np.linspace(-0.9, 0.9, 31)
    m = truth.cell_masses(e, e)
    s = truth.sample(400_000, np.random.default_rng(2))
    h, _, _ = np.histogram2d(s[:, 0], s[:, 1], bins=[e, e])
    assert np.max(np.abs(m - h / len(s))) < 2e-3


@pytest.mark.parametrize("name", sorted(D.GENERATORS))
def test_generator_matches_conditional_sampler(name):
    # pool over x: generated (x, y) vs (x, y ~ truth(x)) at the same x values
    n = 100_000
    params = {"unimodal": {"n": n}, "multimodal": {"n_per_branch": n // 3},
              "squares": {"n": 3 * (n // 3)}, "ring2d": {"n": n}}[name]
    ds = D.generate(name, seed=5, **params)
    rng = np.random.default_rng(6)
    xs = ds.features[:, 0]
    # sample the truth at the generator's own x values, grouped for speed
    ref = np.empty_like(ds.targets)
    order = np.argsort(xs)
    for chunk in np.array_split(order, 400):
        x0 = float(np.median(xs[chunk]))
        if name == "squares":
            for i in chunk:
                ref[i] = D.true_conditional(name, xs[i]).sample(1, rng)
            continue
        ref[chunk] = D.true_conditional(name, x0).sample(len(chunk), rng).reshape(len(chunk), -1)
    sub = rng.choice(len(xs), 3000, replace=False)
    A = np.column_stack([xs[sub], ds.targets[sub]])
    B = np.column_stack([xs[sub], ref[sub]])
    assert energy_distance_samples(A, B) < 0.02


# --- CSV ---------------------------------------------------------------------


def test_csv_round_trip(tmp_path):
    ds = D.Dataset([[1.0, 2.5], [0.1, -3.0], [1e-300, 7.0]], [4.0, 5.0, 1 / 3], ["a", "b"], ["t"])
    D.save_csv(ds, tmp_path / "d.csv")
    back = D.load_csv(tmp_path / "d.csv", "t")
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.targets, ds.targets)
    assert back.feature_names == ["a", "b"] and back.provenance["dropped_rows"] == 0


def test_csv_column_selection(tmp_path):
    (tmp_path / "d.csv").write_text("u,target,v,w\n1,2,3,4\n5,6,7,8\n")
    ds = D.load_csv(tmp_path / "d.csv", ["target"], feature_columns=["w", "u"])
    np.testing.assert_array_equal(ds.features, [[4, 1], [8, 5]])
    np.testing.assert_array_equal(ds.targets[:, 0], [2, 6])


def test_csv_housing_shape(tmp_path):
    names = ["MedInc", "HouseAge", "AveRooms", "AveBedrms", "Population", "AveOccup", "Latitude", "Longitude"]
    rng = np.random.default_rng(0)
    rows = rng.random((20, 9))
    text = ",".join(names + ["MedHouseVal"]) + "\n" + "\n".join(",".join(repr(float(v)) for v in r) for r in rows)
    (tmp_path / "h.csv").write_text(text)
    assert D.load_csv(tmp_path / "h.csv", "MedHouseVal").feature_dim == 8


def test_csv_missing_rows_counted(tmp_path):
    (tmp_path / "d.csv").write_text("x,y\n1,2\n,3\n4,NA\n5,6\n")
    ds = D.load_csv(tmp_path / "d.csv", "y")
    assert len(ds) == 2 and ds.provenance["dropped_rows"] == 2


def test_csv_errors(tmp_path):
    with pytest.raises(D.IngestionError, match="nope.csv"):
        D.load_csv(tmp_path / "nope.csv", "y")
    (tmp_path / "d.csv").write_text("x,y\n1,abc\n")
    with pytest.raises(D.IngestionError, match="abc"):
        D.load_csv(tmp_path / "d.csv", "y")
    (tmp_path / "e.csv").write_text("x,y\n1,2\n")
    with pytest.raises(D.IngestionError, match="z"):
        D.load_csv(tmp_path / "e.csv", "z")


def test_provenance_sidecar(tmp_path):
    ds = D.gen_squares(30, seed=4)
    D.write_provenance(ds, tmp_path / "p.json")
    assert json.loads((tmp_path / "p.json").read_text()) == {"generator": "squares", "parameters": {"n": 30}, "seed": 4}


def test_bundled_standin_shape():
    from discouq.cli import standin_csv_path

    ds = D.load_csv(standin_csv_path(), "strength")
    assert len(ds) == 1030 and ds.feature_dim == 8


# --- quantile-normal transform ------------------------------------------------


def test_norm_ppf_accuracy():
    p = np.concatenate([np.logspace(-12, -1, 200), np.linspace(0.01, 0.99, 500), 1 - np.logspace(-12, -1, 200)])
    assert np.max(np.abs(D.norm_ppf(p) - ndtri(p))) < 1e-12


def test_qnt_moments_large_n():
    x = np.random.default_rng(0).gamma(2.0, size=(2000, 2))
    z = D.qnt_fit(x).apply(x)
    assert np.all(np.abs(z.mean(axis=0)) < 0.05)
    assert np.all((z.std(axis=0) > 0.9) & (z.std(axis=0) < 1.1))


def test_qnt_round_trip():
    x = np.random.default_rng(1).lognormal(size=(500, 3))
    t = D.qnt_fit(x)
    np.testing.assert_allclose(t.invert(t.apply(x)), x, rtol=0, atol=1e-9)


def test_qnt_median_and_extremes():
    x = np.arange(1.0, 102.0)
    t = D.qnt_fit(x)
    assert abs(t.apply(np.array([51.0]))[0]) < 1e-12
    lo, hi = t.apply(np.array([1.0, 101.0]))
    assert abs(hi - ndtri(1 - 0.5 / 101)) < 1e-9 and abs(lo + hi) < 1e-12


def test_qnt_ties_share_rank():
    t = D.qnt_fit(np.array([1.0, 2.0, 2.0, 3.0]))
    # ranks 2 and 3 share 2.5 -> position (2.5 - 0.5) / 4 = 0.5
    assert abs(t.apply(np.array([2.0]))[0]) < 1e-12


def test_qnt_clamps_out_of_range():
    x = np.random.default_rng(2).normal(size=100)
    t = D.qnt_fit(x)
    z = t.apply(np.array([-100.0, 100.0]))
    np.testing.assert_allclose(z, t.apply(np.array([x.min(), x.max()])))


def test_qnt_constant_column():
    with pytest.raises(D.DegenerateColumnError):
        D.qnt_fit(np.column_stack([np.arange(5.0), np.ones(5)]))


def test_qnt_serialises():
    x = np.random.default_rng(3).normal(size=(50, 2))
    t = D.qnt_fit(x)
    u = D.QuantileNormalTransform.from_dict(json.loads(json.dumps(t.to_dict())))
    np.testing.assert_array_equal(u.apply(x), t.apply(x))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=60, unique=True), st.floats(-2e6, 2e6), st.floats(-2e6, 2e6))
def test_qnt_monotone(values, a, b):
    t = D.qnt_fit(np.array(values))
    za, zb = t.apply(np.array([min(a, b), max(a, b)]))
    assert za <= zb
