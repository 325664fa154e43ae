"""CSV datasets and JSON model files.

Data CSV: header ``x1,...,xp,output,y``; lines starting with ``#`` are
comments. A blank ``y`` marks a missing observation, which still registers
the output label.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .dataset import Dataset
from .errors import DataError
from .kernels import KernelParams
from .model import ModelSpec

logger = logging.getLogger(__name__)

MODEL_FORMAT = "ncmogp-model"
MODEL_VERSION = 1


@dataclass
class CsvSchema:
    output_column: str = "output"
    target_column: str = "y"
    input_columns: tuple | None = None
    outputs: tuple | None = None


def _header_comment(config_hash=None):
    line = f"# ncmogp {__version__}"
    if config_hash:
        line += f" config={config_hash}"
    return line


def ingest_csv(path, schema: CsvSchema | None = None) -> Dataset:
    """Read a long-format CSV into a :class:`Dataset`.

    Rows keep file order within each output. Outputs are ordered as in
    ``schema.outputs`` or by first appearance.

    Raises
    ------
    DataError
        On malformed rows (with the line number), inconsistent input
        dimension, or an output with no observed values.
    """
    schema = schema or CsvSchema()
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        lines = ((i, ln) for i, ln in enumerate(fh, 1) if ln.strip() and not ln.startswith("#"))
        numbered = list(lines)
    if not numbered:
        raise DataError(f"{path}: no header")
    reader = csv.reader([ln for _, ln in numbered])
    header = [h.strip() for h in next(reader)]
    if schema.output_column not in header or schema.target_column not in header:
        raise DataError(
            f"{path}: header must contain {schema.output_column!r} and {schema.target_column!r}"
        )
    if schema.input_columns is None:
        in_cols = [h for h in header if h not in (schema.output_column, schema.target_column)]
    else:
        in_cols = list(schema.input_columns)
        missing = [c for c in in_cols if c not in header]
        if missing:
            raise DataError(f"{path}: missing input columns {missing}")
    if not in_cols:
        raise DataError(f"{path}: no input columns")
    ix = [header.index(c) for c in in_cols]
    io_, iy = header.index(schema.output_column), header.index(schema.target_column)

    order = list(schema.outputs) if schema.outputs else []
    xs: dict[str, list] = {k: [] for k in order}
    ys: dict[str, list] = {k: [] for k in order}
    for (lineno, _), row in zip(numbered[1:], reader):
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        label = row[io_].strip()
        if not label:
            raise DataError(f"{path}:{lineno}: empty output label")
        if label not in xs:
            if schema.outputs:
                raise DataError(f"{path}:{lineno}: unknown output {label!r}")
            order.append(label)
            xs[label], ys[label] = [], []
        raw_y = row[iy].strip()
        if raw_y == "" or raw_y.lower() == "nan":
            continue
        try:
            x = [float(row[i]) for i in ix]
            y = float(raw_y)
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        if not np.all(np.isfinite(x)) or not np.isfinite(y):
            raise DataError(f"{path}:{lineno}: non-finite value")
        xs[label].append(x)
        ys[label].append(y)
    empty = [k for k in order if not ys[k]]
    if empty:
        raise DataError(f"{path}: output(s) {empty} have no observations")
    ds = Dataset(
        [np.array(xs[k]).reshape(-1, len(in_cols)) for k in order],
        [np.array(ys[k]) for k in order],
        order,
    )
    logger.info("read %s: %s", path, dict(zip(order, ds.sizes)))
    return ds


def export_csv(dataset: Dataset, path, config_hash=None) -> None:
    p = dataset.input_dim
    with open(path, "w", newline="") as fh:
        fh.write(_header_comment(config_hash) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{q + 1}" for q in range(p)] + ["output", "y"])
        for name, X, y in zip(dataset.names, dataset.inputs, dataset.targets):
            for xn, yn in zip(X, y):
                w.writerow([repr(float(v)) for v in xn] + [name, repr(float(yn))])


def _params_dict(params: KernelParams):
    return {
        "sensitivity": params.sensitivity.tolist(),
        "lengthscale": params.lengthscale.tolist(),
        "latent_lengthscale": params.latent_lengthscale.tolist(),
        "noise_var": params.noise_var.tolist(),
        "packed": params.pack().tolist(),
    }


def save_model(path, spec: ModelSpec, params: KernelParams, train: Dataset, **extra) -> dict:
    doc = {
        "format": MODEL_FORMAT,
        "format_version": MODEL_VERSION,
        "tool_version": __version__,
        "spec": asdict(spec),
        "params": _params_dict(params),
        "train": {
            "names": train.names,
            "inputs": [x.tolist() for x in train.inputs],
            "targets": [y.tolist() for y in train.targets],
        },
        **extra,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return doc


def load_model(path):
    """Returns ``(spec, params, train, doc)``."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    if doc.get("format") != MODEL_FORMAT or doc.get("format_version") != MODEL_VERSION:
        raise DataError(f"{path} is not a version-{MODEL_VERSION} {MODEL_FORMAT} file")
    spec = ModelSpec(**doc["spec"])
    K, p = spec.n_kernels, spec.input_dim
    template = KernelParams(np.zeros(K), np.zeros((K, p)), np.zeros(p), np.zeros(spec.n_outputs))
    params = template.unpack(doc["params"]["packed"])
    t = doc["train"]
    train = Dataset(
        [np.array(x, dtype=float).reshape(-1, p) for x in t["inputs"]],
        [np.array(y, dtype=float) for y in t["targets"]],
        t["names"],
    )
    return spec, params, train, doc
