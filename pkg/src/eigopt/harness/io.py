"""Artifact writers: CSV traces and JSON sidecars.

Every artifact carries the config hash and seed. CSV files start with
``# key=value`` comment lines, then a header row; numbers use ``%.17g``.
JSON floats are written with Python's shortest round-trip representation,
which reproduces the binary value exactly.

CSV columns
-----------
trace:      step, smoothed, raw, lr
designs:    step, xi_0, xi_1, ...
sequential: round, design_*, outcome_*, entropy, rmse_<latent>...
"""
import csv
import json
import os

import numpy as np

FLOAT_FMT = "%.17g"
ENV_OUTPUT_ROOT = "EIGOPT_OUTPUT_ROOT"


def output_root(default="eigopt-out"):
    return os.environ.get(ENV_OUTPUT_ROOT, default)


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % float(v)
    return str(v)


def write_csv(path, columns, rows, meta):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def read_csv(path):
    """Returns ``(meta, columns, array)``."""
    meta = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            k, _, v = line[2:].partition("=")
            meta[k] = v
        else:
            body.append(line)
    rows = list(csv.reader(body))
    cols = rows[0]
    data = np.array([[float(x) for x in r] for r in rows[1:]]) if len(rows) > 1 else np.zeros((0, len(cols)))
    return meta, cols, data


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_json(path, doc):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
    return path


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_trace(out_dir, trace, config_hash, seed, stem="trace"):
    """Trace CSV, design-iterate CSV and final-design JSON for one run."""
    meta = {"config_hash": config_hash, "seed": seed}
    steps = np.arange(trace.steps)
    p1 = write_csv(os.path.join(out_dir, f"{stem}.csv"), ["step", "smoothed", "raw", "lr"],
                   zip(steps, trace.smoothed, trace.raw, trace.lr), meta)
    paths = [p1]
    if len(trace.designs):
        flat = trace.designs.reshape(len(trace.designs), -1)
        cols = ["step"] + [f"xi_{i}" for i in range(flat.shape[1])]
        paths.append(write_csv(os.path.join(out_dir, f"{stem}_designs.csv"), cols,
                               ([s, *row] for s, row in zip(trace.design_steps, flat)), meta))
    return paths
