"""Command-line interface.

Every command resolves its settings in three layers (generator preset, then
``--config`` JSON, then flags), validates them, writes the resolved settings
to ``config.json`` in the output directory and only then starts work.

Exit codes: 0 success, 2 bad configuration or usage, 3 training diverged,
4 propriety verification failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import data as D
from . import experiments as E
from . import propriety as P
from .core import DivergenceError
from .inference import sample_functions
from .model import ModelConfig, load_params, save_params
from .trainer import TrainConfig, split, train

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_UNVERIFIED = 0, 2, 3, 4
OUTPUT_ENV = "DISCOUQ_OUTPUT_DIR"
DEFAULT_OUTPUT = "discouq-output"
STANDIN_CSV = "concrete_standin.csv"
STANDIN_TARGET = "strength"
DEFAULT_REPEATS = 5
METRICS_1D = ("jsd", "hellinger", "wd", "ed")


class ConfigError(ValueError):
    pass


def standin_csv_path():
    """Path of the bundled 1030-row synthetic regression table."""
    return Path(str(resources.files("discouq") / "resources" / STANDIN_CSV))


@dataclass
class RunConfig:
    command: str
    dataset: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    evaluation: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    output_dir: str = DEFAULT_OUTPUT
    seed: int = 0

    def to_dict(self):
        return asdict(self)

    @property
    def generator(self):
        return self.dataset.get("generator")

    def train_config(self):
        return TrainConfig(**{**self.train, "seed": self.seed})

    def eval_spec(self):
        ev = {k: v for k, v in self.evaluation.items() if k in ("n_points", "M", "x_range", "cells")}
        if ev.get("x_range") is not None:
            ev["x_range"] = tuple(ev["x_range"])
        return E.EvalSpec(**ev)

    def validate(self):
        ds = self.dataset
        if ("generator" in ds) == ("csv" in ds):
            raise ConfigError("choose exactly one data source: a generator or a CSV file")
        if "generator" in ds and ds["generator"] not in D.GENERATORS:
            raise ConfigError(f"unknown generator {ds['generator']!r}; choose from {sorted(D.GENERATORS)}")
        if "csv" in ds:
            if not Path(ds["csv"]).is_file():
                raise ConfigError(f"CSV file not found: {ds['csv']}")
            if not ds.get("targets"):
                raise ConfigError("a CSV data source needs at least one --target column")
        known = {f.name for f in fields(ModelConfig)} - {"feature_dim", "seed"}
        unknown = set(self.model) - known
        if unknown:
            raise ConfigError(f"unknown model settings: {sorted(unknown)}")
        try:
            self.train_config()
            spec = self.eval_spec()
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        if spec.M < 1 or spec.n_points < 1:
            raise ConfigError("M and n_points must be >= 1")
        if int(self.evaluation.get("repeats", 1)) < 1:
            raise ConfigError("repeats must be >= 1")
        bad = set(self.evaluation.get("metrics") or ()) - set(METRICS_1D) - {"mae", "rmse", "crps", "nll"}
        if bad:
            raise ConfigError(f"unknown metrics: {sorted(bad)}")
        return self


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _csv_list(kind):
    def parse(text):
        try:
            return [kind(t) for t in text.split(",") if t.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a comma-separated list, got {text!r}") from None
    return parse


def _key_value(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    key, value = text.split("=", 1)
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def _parents():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with any RunConfig sections")
    common.add_argument("--output-dir", help=f"default: ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT}")
    common.add_argument("--seed", type=int)

    data = argparse.ArgumentParser(add_help=False)
    g = data.add_argument_group("data")
    g.add_argument("--generator", choices=sorted(D.GENERATORS))
    g.add_argument("--data-param", action="append", type=_key_value, default=[], metavar="KEY=VALUE")
    g.add_argument("--csv", help="header-first numeric CSV")
    g.add_argument("--target", action="append", help="target column name (repeatable)")
    g.add_argument("--delimiter")
    g.add_argument("--standin", action="store_true", help="use the bundled 1030-row synthetic table")

    model = argparse.ArgumentParser(add_help=False)
    g = model.add_argument_group("model")
    g.add_argument("--activation", dest="mlp_activation", choices=("relu", "selu", "tanh", "gcu"))
    g.add_argument("--hidden-width", type=int)
    g.add_argument("--hidden-layers", type=int)
    g.add_argument("--embedding-dim", type=int)
    g.add_argument("--init-std", type=float)

    tr = argparse.ArgumentParser(add_help=False)
    g = tr.add_argument_group("training")
    g.add_argument("--n-epoch", type=int)
    g.add_argument("--b-batch", type=int)
    g.add_argument("--n-b", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--precision", choices=("float32", "float64"))

    ev = argparse.ArgumentParser(add_help=False)
    g = ev.add_argument_group("evaluation")
    g.add_argument("--n-points", type=int)
    g.add_argument("-M", "--ensemble-size", dest="M", type=int)
    g.add_argument("--x-min", type=float)
    g.add_argument("--x-max", type=float)
    g.add_argument("--repeats", type=int)
    g.add_argument("--metrics", type=_csv_list(str))
    g.add_argument("--cells", type=int)
    return common, data, model, tr, ev


def build_parser():
    common, data, model, tr, ev = _parents()
    parser = argparse.ArgumentParser(prog="discouq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("train", parents=[common, data, model, tr], help="train and save parameters")

    p = sub.add_parser("eval", parents=[common, data, model, tr, ev], help="score forecasts")
    p.add_argument("--params", nargs="+", help="parameter files, one per repeat; omit to train")

    p = sub.add_parser("sweep", parents=[common, data, model, tr, ev], help="b_batch x n_b grid")
    p.add_argument("--b-batches", type=_csv_list(int))
    p.add_argument("--n-bs", type=_csv_list(int))
    p.add_argument("--seeds", type=_csv_list(int))

    p = sub.add_parser("sample-functions", parents=[common, data, ev], help="curves at fixed noise")
    p.add_argument("--params", required=True)
    p.add_argument("--count", type=int)

    p = sub.add_parser("verify-propriety", parents=[common], help="numerical propriety witness")
    p.add_argument("--density", choices=("gaussian", "bimodal", "point", "uniform", "gaussian2d"))
    p.add_argument("--grid-cells", type=int)
    p.add_argument("--lo", type=float)
    p.add_argument("--hi", type=float)
    p.add_argument("--mean", type=float)
    p.add_argument("--std", type=float)
    p.add_argument("--centres", type=_csv_list(float))
    p.add_argument("--weights", type=_csv_list(float))
    p.add_argument("--at", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--tol", type=float)

    p = sub.add_parser("gen-data", parents=[common, data], help="write a synthetic dataset")
    p.add_argument("--tabular", action="store_true", help="write the tabular stand-in instead")

    p = sub.add_parser("benchmark", parents=[common, data, model, tr], help="tabular CSV benchmark")
    p.add_argument("-M", "--ensemble-size", dest="M", type=int)
    p.add_argument("--test-fraction", type=float)
    return parser


_MODEL_FLAGS = ("mlp_activation", "hidden_width", "hidden_layers", "embedding_dim", "init_std")
_TRAIN_FLAGS = ("n_epoch", "b_batch", "n_b", "lr", "precision")
_EVAL_FLAGS = ("n_points", "M", "repeats", "metrics", "cells")
_OPTION_FLAGS = (
    "params", "b_batches", "n_bs", "seeds", "count", "density", "grid_cells", "lo", "hi", "mean",
    "std", "centres", "weights", "at", "iters", "tol", "tabular", "test_fraction",
)


def _flags(args, names):
    return {k: v for k in names if (v := getattr(args, k, None)) is not None and v is not False}


def resolve_config(args):
    """Merge preset defaults, the ``--config`` file and flags into a validated RunConfig."""
    doc = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None

    dataset = dict(doc.get("dataset", {}))
    if getattr(args, "standin", False):
        dataset = {"csv": str(standin_csv_path()), "targets": [STANDIN_TARGET]}
    if getattr(args, "generator", None):
        dataset = {"generator": args.generator, "params": {}}
    if getattr(args, "csv", None):
        dataset = {"csv": args.csv, "targets": args.target or dataset.get("targets", [])}
    elif getattr(args, "target", None) and "csv" in dataset:
        dataset["targets"] = args.target
    if getattr(args, "delimiter", None):
        dataset["delimiter"] = args.delimiter
    if getattr(args, "data_param", None):
        dataset.setdefault("params", {}).update(dict(args.data_param))

    model, train_d, evaluation = {}, {}, {}
    if dataset.get("generator") in E.PRESETS:
        pre = E.PRESETS[dataset["generator"]]
        dataset["params"] = {**pre.data_params, **dataset.get("params", {})}
        model = dict(pre.model)
        train_d = pre.train.to_dict()
        evaluation = asdict(pre.evaluation)
    elif "csv" in dataset:
        model = {"mlp_activation": "tanh"}
        train_d = E.SMALL_BENCHMARK_TRAIN.to_dict()
        evaluation = {"M": 500}
    evaluation.setdefault("repeats", DEFAULT_REPEATS)
    train_d.pop("seed", None)

    model.update(doc.get("model", {}))
    train_d.update(doc.get("train", {}))
    evaluation.update(doc.get("evaluation", {}))
    options = dict(doc.get("options", {}))

    model.update(_flags(args, _MODEL_FLAGS))
    train_d.update(_flags(args, _TRAIN_FLAGS))
    evaluation.update(_flags(args, _EVAL_FLAGS))
    if getattr(args, "x_min", None) is not None or getattr(args, "x_max", None) is not None:
        lo, hi = evaluation.get("x_range") or D.GENERATOR_DOMAINS.get(dataset.get("generator"), (-1.0, 1.0))
        evaluation["x_range"] = [
            args.x_min if args.x_min is not None else lo,
            args.x_max if args.x_max is not None else hi,
        ]
    options.update(_flags(args, _OPTION_FLAGS))
    if args.command == "benchmark" and getattr(args, "M", None) is not None:
        evaluation["M"] = args.M
    train_d.pop("seed", None)

    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    output_dir = args.output_dir or doc.get("output_dir") or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT
    cfg = RunConfig(args.command, dataset, model, train_d, evaluation, options, str(output_dir), seed)
    if args.command in ("verify-propriety",):
        return cfg
    if args.command == "gen-data" and options.get("tabular"):
        return cfg
    return cfg.validate()


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _out(cfg):
    path = Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_config(cfg, out):
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))


def load_dataset(cfg, seed=None):
    ds = cfg.dataset
    if "generator" in ds:
        return D.generate(ds["generator"], seed=cfg.seed if seed is None else seed, **ds.get("params", {}))
    return D.load_csv(ds["csv"], ds["targets"], ds.get("delimiter", ","))


def _model_config(cfg, dataset, seed):
    return E.model_config_for(dataset, cfg.model, seed)


def _check_dims(params, dataset, path):
    c = params.config
    if c.feature_dim != dataset.feature_dim or c.output_dim != dataset.output_dim:
        raise ConfigError(
            f"{path}: model maps {c.feature_dim} features to {c.output_dim} outputs, "
            f"dataset has {dataset.feature_dim} features and {dataset.output_dim} targets"
        )


def _train_one(cfg, seed):
    """Train one model for ``cfg`` with ``seed``. Returns ``(params, extra, history)``."""
    tc = replace(cfg.train_config(), seed=seed)
    if "generator" in cfg.dataset:
        ds = load_dataset(cfg, seed)
        params, history = train(ds, _model_config(cfg, ds, seed), tc)
        return params, {}, history
    ds = load_dataset(cfg)
    frac = float(cfg.options.get("test_fraction", 0.1))
    train_set, _ = split(ds, frac, seed)
    tx, ty = D.qnt_fit(train_set.features), D.qnt_fit(train_set.targets)
    z = D.Dataset(tx.apply(train_set.features), ty.apply(train_set.targets))
    params, history = train(z, _model_config(cfg, z, seed), tc)
    extra = {
        "preprocessing": {"features": tx.to_dict(), "targets": ty.to_dict()},
        "split": {"test_fraction": frac, "seed": seed},
    }
    return params, extra, history


def _summarise(per_repeat):
    keys = per_repeat[0].keys()
    return {k: {"mean": float(np.mean([r[k] for r in per_repeat])),
                "std": float(np.std([r[k] for r in per_repeat]))} for k in keys}


def _write_rows(path, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_train(cfg):
    out = _out(cfg)
    _write_config(cfg, out)
    params, extra, history = _train_one(cfg, cfg.seed)
    save_params(out / "params.json", params, extra)
    history.to_csv(out / "history.csv")
    print(f"trained {params.n_parameters()} parameters, final loss {history.loss[-1]:.6g} -> {out}")
    return EXIT_OK


def cmd_eval(cfg):
    out = _out(cfg)
    _write_config(cfg, out)
    paths = cfg.options.get("params") or []
    repeats = len(paths) if paths else int(cfg.evaluation.get("repeats", 1))
    wanted = cfg.evaluation.get("metrics")
    ds_full = None if "generator" in cfg.dataset else load_dataset(cfg)
    rows, per_repeat = [], []
    for r in range(repeats):
        seed = cfg.seed + r
        if paths:
            params, doc = load_params(paths[r])
            extra = {k: doc[k] for k in ("preprocessing", "split") if k in doc}
        else:
            params, extra, _ = _train_one(cfg, seed)
        if "generator" in cfg.dataset:
            probe = load_dataset(cfg, seed)
            _check_dims(params, probe, paths[r] if paths else "model")
            report = E.evaluate_synthetic(params, cfg.generator, cfg.eval_spec(), seed)
            values = report.values if not wanted else {k: v for k, v in report.values.items() if k in wanted}
            for i, x in enumerate(report.points):
                rows.append({"repeat": r, "x": x, **{k: v[i] for k, v in values.items()}})
            per_repeat.append({k: float(np.mean(v)) for k, v in values.items()})
        else:
            if "preprocessing" not in extra:
                raise ConfigError(f"{paths[r]}: parameter file has no preprocessing section for CSV data")
            tx = D.QuantileNormalTransform.from_dict(extra["preprocessing"]["features"])
            ty = D.QuantileNormalTransform.from_dict(extra["preprocessing"]["targets"])
            _, test_set = split(ds_full, extra["split"]["test_fraction"], extra["split"]["seed"])
            z_probe = D.Dataset(tx.apply(test_set.features), test_set.targets)
            _check_dims(params, z_probe, paths[r] if paths else "model")
            res = E.score_tabular(params, (tx, ty), test_set, int(cfg.evaluation.get("M", 500)), seed)
            for i in range(res.n_test):
                rows.append({"repeat": r, "row": i, **{k: res.per_row[k][i] for k in ("target", "mean", "crps", "nll")}})
            summ = {k: getattr(res, k) for k in ("mae", "rmse", "crps", "nll")}
            per_repeat.append({k: v for k, v in summ.items() if not wanted or k in wanted})
    _write_rows(out / "metrics.csv", rows)
    summary = {"repeats": repeats, "metrics": _summarise(per_repeat)}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    for k, v in summary["metrics"].items():
        print(f"{k:10s} {v['mean']:.6g} +- {v['std']:.3g}")
    return EXIT_OK


def cmd_sweep(cfg):
    if "generator" not in cfg.dataset:
        raise ConfigError("sweep needs a synthetic generator")
    out = _out(cfg)
    _write_config(cfg, out)
    base = E.Preset(cfg.generator, dict(cfg.dataset.get("params", {})), dict(cfg.model),
                    cfg.train_config(), cfg.eval_spec())
    b_batches = cfg.options.get("b_batches", [20, 80, 150])
    n_bs = cfg.options.get("n_bs", [10, 50])
    seeds = cfg.options.get("seeds", [cfg.seed])
    rows = E.sweep(b_batches, n_bs, seeds, base=base, activation=None)
    _write_rows(out / "sweep.csv", rows)
    for row in rows:
        print(f"b_batch={row['b_batch']:4d} n_b={row['n_b']:4d} hellinger={row['hellinger']:.4f} wd={row['wd']:.4f}")
    return EXIT_OK


def cmd_sample_functions(cfg):
    out = _out(cfg)
    _write_config(cfg, out)
    params, _ = load_params(cfg.options["params"])
    count = int(cfg.options.get("count", 10))
    lo, hi = cfg.evaluation.get("x_range") or D.GENERATOR_DOMAINS.get(cfg.generator, (-1.0, 1.0))
    n = int(cfg.evaluation.get("n_points", 200))
    x_grid = np.linspace(lo, hi, n)
    if params.config.feature_dim != 1:
        raise ConfigError("sample-functions needs a model with a single input feature")
    fs = sample_functions(params, count, x_grid, cfg.seed)
    d = params.config.output_dim
    header = ["x"] + [f"f{k}" if d == 1 else f"f{k}_y{j}" for k in range(count) for j in range(d)]
    with (out / "functions.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, x in enumerate(x_grid):
            w.writerow([repr(float(x))] + [repr(float(f.curve[i, j])) for f in fs for j in range(d)])
    noise = [{"function": k, "a": f.a.tolist()} for k, f in enumerate(fs)]
    (out / "noise.json").write_text(json.dumps(noise, indent=2))
    print(f"wrote {count} functions on {n} points -> {out}")
    return EXIT_OK


def propriety_problem(options):
    """Grid and true masses for a named density."""
    kind = options.get("density", "gaussian")
    mean = float(options.get("mean", 0.0))
    std = float(options.get("std", 1.0))
    if kind == "gaussian2d":
        n = int(options.get("grid_cells", 30))
        grid = P.grid_2d(float(options.get("lo", -3.0)), float(options.get("hi", 3.0)), n)
        return grid, P.gaussian_on_grid_2d(grid, (mean, mean), std)
    n = int(options.get("grid_cells", 101))
    if n < 2:
        raise ConfigError("grid_cells must be >= 2")
    grid = np.linspace(float(options.get("lo", -4.0)), float(options.get("hi", 4.0)), n)
    if kind == "gaussian":
        return grid, P.gaussian_on_grid(grid, mean, std)
    if kind == "bimodal":
        centres = options.get("centres", [-2.0, 2.0])
        weights = options.get("weights", [1.0] * len(centres))
        if len(weights) != len(centres):
            raise ConfigError("centres and weights differ in length")
        return grid, P.clusters_on_grid(grid, centres, np.asarray(weights) / np.sum(weights))
    if kind == "point":
        return grid, P.point_mass_on_grid(grid, float(options.get("at", 0.0)))
    if kind == "uniform":
        return grid, np.full(n, 1.0 / n)
    raise ConfigError(f"unknown density {kind!r}")


def cmd_verify_propriety(cfg):
    out = _out(cfg)
    _write_config(cfg, out)
    grid, p = propriety_problem(cfg.options)
    res = P.minimize_expected_score(p, grid, iters=int(cfg.options.get("iters", 5000)), tol=cfg.options.get("tol"))
    report = P.verification_report(res, grid, cfg.options.get("density", "gaussian"))
    P.write_report(out / "report.json", [report])
    print(f"TV {res.tv:.3g}  saddle residual {res.residual:.3g}  iterations {res.iterations}")
    if not res.converged:
        print(f"not converged: residual {res.residual:.3g} exceeds tolerance", file=sys.stderr)
        return EXIT_UNVERIFIED
    return EXIT_OK


def cmd_gen_data(cfg):
    out = _out(cfg)
    _write_config(cfg, out)
    if cfg.options.get("tabular"):
        ds = D.gen_tabular_standin(seed=cfg.seed, **cfg.dataset.get("params", {}))
    else:
        if "generator" not in cfg.dataset:
            raise ConfigError("gen-data needs --generator or --tabular")
        ds = load_dataset(cfg)
    D.save_csv(ds, out / "data.csv")
    D.write_provenance(ds, out / "data.provenance.json")
    print(f"wrote {len(ds)} rows -> {out / 'data.csv'}")
    return EXIT_OK


def cmd_benchmark(cfg):
    if "csv" not in cfg.dataset:
        raise ConfigError("benchmark needs --csv PATH --target COLUMN or --standin")
    out = _out(cfg)
    _write_config(cfg, out)
    ds = load_dataset(cfg)
    params, transforms, train_set, test_set, _ = E.fit_tabular(
        ds, cfg.train_config(), cfg.model.get("mlp_activation", "tanh"), cfg.seed,
        float(cfg.options.get("test_fraction", 0.1)),
    )
    res = E.score_tabular(params, transforms, test_set, int(cfg.evaluation.get("M", 500)), cfg.seed)
    res.n_train = len(train_set)
    summary = res.summary()
    summary["finite_rows"] = bool(all(math.isfinite(v) for v in res.per_row["crps"] + res.per_row["nll"]))
    (out / "benchmark.json").write_text(json.dumps(summary, indent=2))
    rows = [{"row": i, **{k: res.per_row[k][i] for k in ("target", "mean", "crps", "nll")}} for i in range(res.n_test)]
    _write_rows(out / "per_row.csv", rows)
    for k in ("mae", "rmse", "crps", "nll"):
        print(f"{k:5s} {summary[k]:.6g}")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "sample-functions": cmd_sample_functions,
    "verify-propriety": cmd_verify_propriety,
    "gen-data": cmd_gen_data,
    "benchmark": cmd_benchmark,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, D.IngestionError, D.DegenerateColumnError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
