"""Dataset ingestion, train/test handling, run configuration and output schemas."""

from __future__ import annotations

import contextlib
import csv
import json
import math
import sys
from dataclasses import dataclass, field, fields
from typing import Optional

import jsonschema
import numpy as np

from .errors import DataError, ParameterError, ParseError
from .ridge import Dataset

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none", "?"})


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _resolve_target(target_col, header, ncol):
    if target_col is None:
        return ncol - 1
    if isinstance(target_col, str) and not target_col.lstrip("-").isdigit():
        if header is None:
            raise ParameterError(f"target column {target_col!r} given by name but the file has no header")
        if target_col not in header:
            raise ParameterError(f"target column {target_col!r} not found in header {header}")
        return header.index(target_col)
    idx = int(target_col)
    if idx < 0:
        idx += ncol
    if not 0 <= idx < ncol:
        raise ParameterError(f"target column index {target_col} out of range for {ncol} columns")
    return idx


def load_csv(path, target_col=None, has_header=True) -> Dataset:
    """Read a numeric CSV; rows with any missing cell are dropped.

    ``target_col`` is a header name or a column index (default: last column).
    Missing cells are empty strings or one of ``NA``, ``NaN``, ``null``,
    ``None``, ``?`` (case-insensitive). Any other non-numeric cell raises
    :class:`ParseError` carrying its 1-based file row and column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = None
    start = 0
    if has_header:
        if not rows:
            raise DataError(f"{path}: file is empty")
        header = [h.strip() for h in rows[0]]
        start = 1
    body = [(i + 1, r) for i, r in enumerate(rows) if i >= start and any(c.strip() for c in r)]
    if not body:
        raise DataError(f"{path}: no data rows")
    ncol = len(header) if header is not None else len(body[0][1])
    values, dropped = [], 0
    for lineno, row in body:
        if len(row) != ncol:
            raise ParseError(f"{path}: row {lineno} has {len(row)} fields, expected {ncol}", lineno, None)
        parsed, missing = [], False
        for j, cell in enumerate(row):
            tok = cell.strip()
            if tok.lower() in MISSING_TOKENS:
                missing = True
                continue
            try:
                v = float(tok)
            except ValueError:
                raise ParseError(
                    f"{path}: non-numeric value {cell!r} at row {lineno}, column {j + 1}", lineno, j + 1
                ) from None
            if not math.isfinite(v):
                missing = True
            parsed.append(v)
        if missing:
            dropped += 1
        else:
            values.append(parsed)
    if not values:
        raise DataError(f"{path}: no complete rows after dropping {dropped} with missing values")
    t = _resolve_target(target_col, header, ncol)
    A = np.array(values, dtype=np.float64)
    feat = [j for j in range(ncol) if j != t]
    names = [header[j] for j in feat] if header is not None else [f"x{j}" for j in feat]
    meta = {
        "source": str(path),
        "feature_names": names,
        "target_name": header[t] if header is not None else f"x{t}",
        "dropped_rows": dropped,
    }
    return Dataset(A[:, feat], A[:, t], meta)


def write_dataset_csv(data: Dataset, path, feature_names=None, target_name="y"):
    """Write features then target, using ``repr`` so a reload is bit-exact."""
    names = feature_names or data.meta.get("feature_names") or [f"x{j}" for j in range(data.p)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(names) + [target_name])
        for xi, yi in zip(data.X, data.y):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])


# ---------------------------------------------------------------------------
# splitting and standardization
# ---------------------------------------------------------------------------


def _subset(data: Dataset, idx) -> Dataset:
    return Dataset(data.X[idx], data.y[idx], dict(data.meta))


def split(data: Dataset, ratio=0.7, mode="random", seed=0):
    """Train/test split; ``sequential`` keeps row order (first ``ratio`` rows train)."""
    if not 0 < ratio < 1:
        raise ParameterError("split ratio must lie in (0, 1)")
    n_train = int(round(ratio * data.n))
    if n_train < 1 or n_train >= data.n:
        raise DataError(f"split ratio {ratio} leaves an empty side for n={data.n}")
    if mode == "sequential":
        train_idx, test_idx = np.arange(n_train), np.arange(n_train, data.n)
    elif mode == "random":
        perm = np.random.Generator(np.random.Philox(seed)).permutation(data.n)
        train_idx, test_idx = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    else:
        raise ParameterError("split mode must be 'random' or 'sequential'")
    return _subset(data, train_idx), _subset(data, test_idx)


@dataclass(frozen=True)
class StandardizationStats:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float
    kept_columns: tuple
    dropped_columns: tuple


def standardize(train: Dataset, test: Dataset):
    """Center and scale features and target with train-only statistics (ddof=0).

    Zero-variance training columns are removed from both sets and listed in
    ``stats.dropped_columns``.
    """
    if train.p != test.p:
        raise DataError("train and test have different numbers of columns")
    mu = train.X.mean(axis=0)
    sd = train.X.std(axis=0)
    keep = sd > 0
    if not keep.any():
        raise DataError("every feature column is constant on the training set")
    y_mu = float(train.y.mean())
    y_sd = float(train.y.std())
    if y_sd == 0:
        raise DataError("target is constant on the training set")
    kept = tuple(int(j) for j in np.flatnonzero(keep))
    dropped = tuple(int(j) for j in np.flatnonzero(~keep))
    stats = StandardizationStats(mu[keep], sd[keep], y_mu, y_sd, kept, dropped)

    def apply(d: Dataset):
        meta = dict(d.meta)
        names = meta.get("feature_names")
        if names is not None:
            meta["feature_names"] = [names[j] for j in kept]
        meta["dropped_columns"] = list(dropped)
        return Dataset((d.X[:, keep] - stats.x_mean) / stats.x_std, (d.y - y_mu) / y_sd, meta)

    return apply(train), apply(test), stats


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

SUBCOMMANDS = ("fit", "sd-curve", "tune", "asymptotics", "simulate", "multiround", "kernel", "compare-fresh")


@dataclass
class RunConfig:
    subcommand: str
    input: Optional[str] = None
    target_col: Optional[str] = None
    has_header: bool = True
    lambda_min: float = 1e-2
    lambda_max: float = 1e2
    lambda_points: int = 40
    lambdas: Optional[list] = None
    split_ratio: float = 0.7
    split_mode: str = "random"
    seed: int = 0
    standardize: bool = True
    output: Optional[str] = None
    format: str = "csv"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.subcommand not in SUBCOMMANDS:
            raise ParameterError(f"unknown subcommand {self.subcommand!r}")
        if self.lambdas is not None:
            if not self.lambdas or min(self.lambdas) <= 0:
                raise ParameterError("explicit lambdas must be positive")
        elif not (0 < self.lambda_min < self.lambda_max) or self.lambda_points < 1:
            if not (self.lambda_points == 1 and 0 < self.lambda_min == self.lambda_max):
                raise ParameterError("lambda grid needs 0 < lambda-min < lambda-max and points >= 1")
        if not 0 < self.split_ratio < 1:
            raise ParameterError("split ratio must lie in (0, 1)")
        if self.split_mode not in ("random", "sequential"):
            raise ParameterError("split mode must be 'random' or 'sequential'")
        if self.format not in ("csv", "json"):
            raise ParameterError("format must be 'csv' or 'json'")

    def lambda_grid(self):
        if self.lambdas is not None:
            return np.array(sorted(float(v) for v in self.lambdas))
        if self.lambda_points == 1:
            return np.array([float(self.lambda_min)])
        return np.geomspace(self.lambda_min, self.lambda_max, int(self.lambda_points))


CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "input": {"type": "string"},
        "target_col": {"type": ["string", "integer"]},
        "has_header": {"type": "boolean"},
        "lambda_min": {"type": "number", "exclusiveMinimum": 0},
        "lambda_max": {"type": "number", "exclusiveMinimum": 0},
        "lambda_points": {"type": "integer", "minimum": 1},
        "lambdas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "split_ratio": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "split_mode": {"enum": ["random", "sequential"]},
        "seed": {"type": "integer", "minimum": 0},
        "standardize": {"type": "boolean"},
        "output": {"type": "string"},
        "format": {"enum": ["csv", "json"]},
    },
    "additionalProperties": True,
}

CONFIG_FIELDS = {f.name for f in fields(RunConfig)} - {"subcommand", "extra"}


def load_config_file(path) -> dict:
    """Read a JSON key-value config file and validate it."""
    with open(path, encoding="utf-8") as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON ({exc.msg})", exc.lineno, exc.colno) from None
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ParameterError(f"{path}: {exc.message}") from None
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def merge_config(subcommand, flags: dict, file_values: Optional[dict] = None) -> RunConfig:
    """Precedence: explicit flags, then config-file values, then defaults.

    ``flags`` holds only the options the user actually passed; unknown keys go
    to ``RunConfig.extra``.
    """
    merged = dict(file_values or {})
    merged.update({k: v for k, v in flags.items() if v is not None})
    known = {k: v for k, v in merged.items() if k in CONFIG_FIELDS}
    extra = {k: v for k, v in merged.items() if k not in CONFIG_FIELDS}
    if "target_col" in known and known["target_col"] is not None:
        known["target_col"] = str(known["target_col"])
    return RunConfig(subcommand=subcommand, extra=extra, **known)


# ---------------------------------------------------------------------------
# output schemas
# ---------------------------------------------------------------------------

CURVE_COLUMNS = {
    "sd-curve": ["lambda", "r_teacher", "r_pd", "c_cross", "d_gap", "xi_star", "r_sd_star", "degenerate"],
    "tune": ["lambda", "df", "df_pd", "r_hat", "r_pd_hat", "c_hat", "d_hat", "xi_hat", "r_sd_hat", "degenerate"],
    "asymptotics": ["lambda", "kappa", "r_teacher", "r_pd", "c_cross", "d_gap", "xi_star", "r_sd_star", "degenerate"],
    "multiround": ["lambda", "round", "xi", "risk", "degenerate"],
    "kernel": ["lambda", "r_teacher", "r_sd_star", "xi_star", "degenerate"],
    "compare-fresh": ["lambda", "r_teacher", "r_sd_same", "xi_same", "r_sd_fresh_affine", "xi_fresh_affine",
                      "r_sd_fresh_mixed", "xi_fresh_mixed"],
    "fit": ["index", "name", "coef"],
}

_NUM_OR_NULL = {"type": ["number", "null"]}

CURVE_JSON_SCHEMA = {
    "type": "object",
    "required": ["command", "columns", "rows"],
    "properties": {
        "command": {"enum": list(CURVE_COLUMNS)},
        "columns": {"type": "array", "items": {"type": "string"}},
        "rows": {"type": "array", "items": {"type": "array"}},
        "meta": {"type": "object"},
    },
}

SIM_SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["config", "lambda", "empirical", "estimated", "theory", "errors"],
    "properties": {
        "lambda": {"type": "array", "items": {"type": "number"}},
        "empirical": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["mean", "std", "sem"],
                "properties": {k: {"type": "array", "items": _NUM_OR_NULL} for k in ("mean", "std", "sem")},
            },
        },
        "theory": {"type": "object", "additionalProperties": {"type": "array", "items": _NUM_OR_NULL}},
        "errors": {"type": "array"},
    },
}


def _jsonable(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


@contextlib.contextmanager
def _open_out(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            yield fh


def _csv_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_table(path, command, rows, fmt="csv", meta=None):
    """Emit a per-lambda table as CSV (fixed header) or schema-checked JSON.

    ``path`` of ``None`` or ``"-"`` writes to standard output.
    """
    columns = CURVE_COLUMNS[command]
    with _open_out(path) as fh:
        if fmt == "csv":
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for r in rows:
                w.writerow([_csv_cell(v) for v in r])
            return
        doc = {"command": command, "columns": columns,
               "rows": [[_jsonable(v) for v in r] for r in rows], "meta": sanitize(meta or {})}
        jsonschema.validate(doc, CURVE_JSON_SCHEMA)
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def write_json(path, doc, schema=None):
    doc = sanitize(doc)
    if schema is not None:
        jsonschema.validate(doc, schema)
    with _open_out(path) as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def sanitize(obj):
    """Replace non-finite floats by ``None`` recursively (strict JSON)."""
    if isinstance(obj, dict):
        return {k: sanitize(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return sanitize(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return [sanitize(v) for v in obj]
    return _jsonable(obj)
