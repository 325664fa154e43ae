"""Command-line front end.

Commands::

    ncmogp toy-gen     --out toy.csv [--seed S] [--config cfg.toml]
    ncmogp train       [--config cfg.toml] [--data data.csv] --out model.json
    ncmogp predict     --model model.json (--inputs pts.csv | --grid lo:hi:n) --out pred.csv
    ncmogp eval        [--config cfg.toml] [--data data.csv] [--resplits R] --out metrics.json
    ncmogp export-plot --model model.json --grid lo:hi:n [--test test.csv] --out plot.csv

``--order``, ``--variant``, ``--restarts`` and ``--seed`` override the
config. Exit codes: 0 success, 2 config error, 3 data error, 4 numerical
failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from dataclasses import replace

import numpy as np

from . import __version__
from . import config as config_mod
from .config import ExperimentConfig
from .dataset import Dataset
from .errors import ConfigError, DataError, NcmogpError
from .inference import initial_params, nlpd, nmse, optimize, predict
from .io import _header_comment, export_csv, ingest_csv, load_model, save_model
from .kernels import KernelParams
from .model import ModelSpec
from .toy import ToySpec, toy_generate

logger = logging.getLogger("ncmogp")


def _fmt(x) -> str:
    return repr(float(x))


def load_data(cfg: ExperimentConfig, path=None) -> Dataset:
    source = path or cfg.data.source
    if source == "toy":
        spec = ToySpec(n_points=cfg.data.n_points, noise_scale=cfg.data.noise_scale)
        return toy_generate(spec, cfg.seed).full
    return ingest_csv(source)


def split_dataset(full: Dataset, split, seed: int):
    """Train/test partition per the split policy (random or held-out ranges)."""
    train_idx, test_idx = [], []
    if split.policy == "random":
        rng = np.random.default_rng(seed)
        for d, n in enumerate(full.sizes):
            k = (
                int(round(split.train_fraction * n))
                if split.train_fraction is not None
                else split.n_train
            )
            if not 0 < k < n:
                raise DataError(
                    f"output {full.names[d]!r}: cannot take {k} training points of {n}"
                )
            perm = rng.permutation(n)
            train_idx.append(np.sort(perm[:k]))
            test_idx.append(np.sort(perm[k:]))
    else:
        unknown = set(split.missing_ranges) - set(full.names)
        if unknown:
            raise ConfigError(f"missing_ranges names unknown outputs {sorted(unknown)}")
        for name, X in zip(full.names, full.inputs):
            held = np.zeros(X.shape[0], dtype=bool)
            for lo, hi in split.missing_ranges.get(name, []):
                held |= (X[:, 0] >= lo) & (X[:, 0] <= hi)
            train_idx.append(np.nonzero(~held)[0])
            test_idx.append(np.nonzero(held)[0])
    return full.subset(train_idx), full.subset(test_idx)


def _init_params(cfg: ExperimentConfig, train: Dataset, spec: ModelSpec) -> KernelParams:
    base = initial_params(train, spec)
    init = cfg.init
    try:
        S = np.asarray(init.sensitivity, float) if init.sensitivity is not None else base.sensitivity
        ell = (
            np.asarray(init.lengthscale, float).reshape(spec.n_kernels, spec.input_dim)
            if init.lengthscale is not None
            else base.lengthscale
        )
        ell_u = (
            np.asarray(init.latent_lengthscale, float).reshape(spec.input_dim)
            if init.latent_lengthscale is not None
            else base.latent_lengthscale
        )
        noise = np.asarray(init.noise_var, float) if init.noise_var is not None else base.noise_var
        params = KernelParams.create(S, ell, ell_u, noise)
    except ValueError as exc:
        raise ConfigError(f"invalid [init] override: {exc}") from exc
    if params.n_kernels != spec.n_kernels or params.log_noise_var.shape[0] != spec.n_outputs:
        raise ConfigError("[init] overrides have the wrong number of entries")
    return params


def _spec_for(cfg: ExperimentConfig, data: Dataset, order=None) -> ModelSpec:
    return ModelSpec(
        order=order or cfg.model.order,
        variant=cfg.model.variant,
        n_outputs=data.n_outputs,
        input_dim=data.input_dim,
    )


def fit(cfg: ExperimentConfig, train: Dataset, spec: ModelSpec, seed: int):
    return optimize(
        train,
        spec,
        restarts=cfg.optimizer.restarts,
        seed=seed,
        init=_init_params(cfg, train, spec),
        maxiter=cfg.optimizer.max_iter,
        gtol=cfg.optimizer.gtol,
    )


def run_toy_gen(cfg: ExperimentConfig, out) -> Dataset:
    spec = ToySpec(n_points=cfg.data.n_points, noise_scale=cfg.data.noise_scale)
    full = toy_generate(spec, cfg.seed).full
    export_csv(full, out, cfg.digest())
    return full


def run_train(cfg: ExperimentConfig, out, data_path=None) -> dict:
    full = load_data(cfg, data_path)
    train, _ = split_dataset(full, cfg.split, cfg.seed)
    spec = _spec_for(cfg, train)
    res = fit(cfg, train, spec, cfg.seed)
    return save_model(
        out,
        spec,
        res.params,
        train,
        seed=cfg.seed,
        config_hash=cfg.digest(),
        config=cfg.to_dict(),
        log_marginal=res.log_marginal,
        trace=[list(t) for t in res.trace],
        restarts=res.restarts,
    )


def _parse_grid(text):
    try:
        lo, hi, n = text.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise ConfigError(f"grid must look like lo:hi:n, got {text!r}") from None
    if n < 2 or not hi > lo:
        raise ConfigError("grid needs hi > lo and n >= 2")
    return np.linspace(lo, hi, n)


def _test_inputs(train: Dataset, inputs=None, grid=None):
    if inputs is not None:
        return ingest_csv(inputs) if not isinstance(inputs, Dataset) else inputs
    if train.input_dim != 1:
        raise DataError("grid prediction supports 1-D inputs only")
    g = _parse_grid(grid)[:, None]
    return Dataset([g] * train.n_outputs, [np.zeros(g.shape[0])] * train.n_outputs, train.names)


def run_predict(model_path, out, inputs=None, grid=None):
    spec, params, train, doc = load_model(model_path)
    test = _test_inputs(train, inputs, grid)
    if test.names != train.names:
        if sorted(test.names) != sorted(train.names):
            raise DataError("test outputs do not match the model's outputs")
        test = test.permuted([test.names.index(n) for n in train.names])
    pred = predict(train, test, spec, params)
    with open(out, "w", newline="") as fh:
        fh.write(_header_comment(doc.get("config_hash")) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        p = spec.input_dim
        w.writerow([f"x{q + 1}" for q in range(p)] + ["output", "mean", "var"])
        for x, d, m, v in zip(test.X, pred.outputs, pred.mean, pred.var):
            w.writerow([_fmt(c) for c in x] + [train.names[d], _fmt(m), _fmt(v)])
    return pred


def evaluate_split(cfg, full, spec, r):
    seed = cfg.seed + r
    train, test = split_dataset(full, cfg.split, seed)
    res = fit(cfg, train, spec, seed)
    pred = predict(train, test, spec, res.params)
    return nmse(pred, test), nlpd(pred, test), res


def run_eval(cfg: ExperimentConfig, out, data_path=None, orders=None, progress=None) -> dict:
    """Train/test over ``cfg.eval.resplits`` partitions for each Volterra order."""
    full = load_data(cfg, data_path)
    orders = list(orders or [cfg.model.order])
    report = {
        "tool_version": __version__,
        "config_hash": cfg.digest(),
        "outputs": full.names,
        "resplits": cfg.eval.resplits,
        "results": {},
    }
    for C in orders:
        spec = _spec_for(cfg, full, C)
        per = []
        for r in range(cfg.eval.resplits):
            e, l, res = evaluate_split(cfg, full, spec, r)
            per.append(
                {
                    "resplit": r,
                    "nmse": e.tolist(),
                    "nlpd": l.tolist(),
                    "nmse_avg": float(e.mean()),
                    "nlpd_avg": float(l.mean()),
                    "log_marginal": res.log_marginal,
                }
            )
            if progress:
                progress(C, r, per[-1])
        e_avg = np.array([p["nmse_avg"] for p in per])
        l_avg = np.array([p["nlpd_avg"] for p in per])
        report["results"][str(spec.order if spec.variant in ("icm", "dgp") else C)] = {
            "variant": spec.variant,
            "order": spec.order,
            "nmse_mean": float(e_avg.mean()),
            "nmse_std": float(e_avg.std(ddof=1)) if len(per) > 1 else 0.0,
            "nlpd_mean": float(l_avg.mean()),
            "nlpd_std": float(l_avg.std(ddof=1)) if len(per) > 1 else 0.0,
            "nmse_per_output": np.mean([p["nmse"] for p in per], axis=0).tolist(),
            "nlpd_per_output": np.mean([p["nlpd"] for p in per], axis=0).tolist(),
            "splits": per,
        }
    with open(out, "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return report


def format_table(report: dict) -> str:
    lines = ["C | NMSE | NLPD"]
    for C, row in report["results"].items():
        lines.append(
            f"{C} | {row['nmse_mean']:.4f} +/- {row['nmse_std']:.4f}"
            f" | {row['nlpd_mean']:.4f} +/- {row['nlpd_std']:.4f}"
        )
    return "\n".join(lines)


def export_plot_data(model_path, out, grid, test=None):
    """Per-output predictive mean and two-standard-deviation band on a grid.

    Rows have ``kind`` = ``grid``, ``train`` or ``test``; training and test
    points carry their observed ``y`` for overlays.
    """
    spec, params, train, doc = load_model(model_path)
    if spec.input_dim != 1:
        raise DataError("plot export supports 1-D inputs only")
    g = _parse_grid(grid)
    lo = min(x.min() for x in train.inputs if x.size)
    hi = max(x.max() for x in train.inputs if x.size)
    span = hi - lo
    if g[0] < lo - 0.5 * span or g[-1] > hi + 0.5 * span:
        warnings.warn(f"grid [{g[0]}, {g[-1]}] extends far beyond the training range [{lo}, {hi}]")
    grid_ds = _test_inputs(train, grid=grid)
    pred = predict(train, grid_ds, spec, params)
    test_ds = ingest_csv(test) if isinstance(test, str) else test
    with open(out, "w", newline="") as fh:
        fh.write(_header_comment(doc.get("config_hash")) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "output", "x1", "mean", "var", "lower", "upper", "halfwidth", "y"])
        for d, name in enumerate(train.names):
            sel = pred.outputs == d
            for x, m, v in zip(grid_ds.inputs[d][:, 0], pred.mean[sel], pred.var[sel]):
                hw = 2.0 * np.sqrt(v)
                w.writerow(["grid", name, _fmt(x), _fmt(m), _fmt(v), _fmt(m - hw), _fmt(m + hw), _fmt(hw), ""])
        for kind, ds in (("train", train), ("test", test_ds)):
            if ds is None:
                continue
            for name, X, y in zip(ds.names, ds.inputs, ds.targets):
                for x, yn in zip(X[:, 0], y):
                    w.writerow([kind, name, _fmt(x), "", "", "", "", "", _fmt(yn)])
    return pred


def _orders(text):
    out = []
    for part in text.split(","):
        if "-" in part:
            a, b = part.split("-")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def _config_from_args(args) -> ExperimentConfig:
    cfg = config_mod.load(args.config) if getattr(args, "config", None) else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "order", None) is not None and len(args.order) == 1:
        cfg = replace(cfg, model=replace(cfg.model, order=args.order[0]))
    if getattr(args, "variant", None) is not None:
        cfg = replace(cfg, model=replace(cfg.model, variant=args.variant))
    if getattr(args, "restarts", None) is not None:
        cfg = replace(cfg, optimizer=replace(cfg.optimizer, restarts=args.restarts))
    if getattr(args, "resplits", None) is not None:
        cfg = replace(cfg, eval=replace(cfg.eval, resplits=args.resplits))
    config_mod.validate(cfg)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ncmogp", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"ncmogp {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, model=True):
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        if model:
            p.add_argument("--order", type=_orders, help="Volterra order C (eval: list, e.g. 1-5)")
            p.add_argument("--variant", choices=["homogeneous", "separable", "icm", "dgp"])
            p.add_argument("--restarts", type=int)

    p = sub.add_parser("toy-gen", help="write the synthetic toy dataset as CSV")
    common(p, model=False)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="fit hyperparameters and write a model file")
    common(p)
    p.add_argument("--data", help="CSV path (default: config data.source)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("predict", help="predictive mean/variance from a model file")
    p.add_argument("--model", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--inputs")
    g.add_argument("--grid")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="train/test metrics over random resplits")
    common(p)
    p.add_argument("--data")
    p.add_argument("--resplits", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("export-plot", help="columnar data for predictive-band plots")
    p.add_argument("--model", required=True)
    p.add_argument("--grid", required=True)
    p.add_argument("--test")
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "toy-gen":
            run_toy_gen(_config_from_args(args), args.out)
        elif args.command == "train":
            run_train(_config_from_args(args), args.out, args.data)
        elif args.command == "predict":
            run_predict(args.model, args.out, inputs=args.inputs, grid=args.grid)
        elif args.command == "eval":
            cfg = _config_from_args(args)
            report = run_eval(cfg, args.out, args.data, orders=args.order)
            print(format_table(report))
        elif args.command == "export-plot":
            export_plot_data(args.model, args.out, args.grid, args.test)
    except NcmogpError as exc:
        print(f"ncmogp: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
