"""Metric CSV files: export, reading back, multi-seed aggregation and plots."""

import csv
import glob as globmod
import math
import os
import warnings

import numpy as np

from .exceptions import EmptyInputError

METRICS_VERSION = 1
VERSION_COLUMN = "metrics_version"
FIXED_COLUMNS = (VERSION_COLUMN, "iteration", "timestep", "eval_return", "value_distance")


def _columns(records):
    cols = list(FIXED_COLUMNS)
    for r in records:
        for k in r:
            if k not in cols:
                cols.append(k)
    return cols


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if math.isnan(v) else repr(v)


def write_metrics(records, fh):
    """Header row plus one row per record; the first column carries the format version."""
    if not records:
        raise EmptyInputError("no metric records to export")
    cols = _columns(records)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(cols)
    for r in records:
        w.writerow([_fmt(METRICS_VERSION if c == VERSION_COLUMN else r.get(c)) for c in cols])


def export_metrics(records, path):
    with open(path, "w", newline="", encoding="ascii") as fh:
        write_metrics(records, fh)


def read_metrics(path):
    """Returns ``(columns, rows)`` with numeric cells as floats (empty cells become NaN)."""
    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.reader(fh)
        cols = next(reader)
        if not cols or cols[0] != VERSION_COLUMN:
            raise ValueError(f"{path}: not an aslearn metrics file")
        body = list(reader)
    rows = [[float(x) if x != "" else math.nan for x in row] for row in body]
    if any(r[0] != METRICS_VERSION for r in rows):
        raise ValueError(f"{path}: unsupported metrics version")
    return cols, np.array(rows, dtype=np.float64).reshape(len(rows), len(cols))


def aggregate(paths):
    """Mean and std over runs, aligned on ``timestep`` (rows present in every run)."""
    paths = sorted(paths)
    if not paths:
        raise EmptyInputError("no metric files matched")
    tables = [read_metrics(p) for p in paths]
    cols = tables[0][0]
    for c, _ in tables[1:]:
        cols = [x for x in cols if x in c]
    steps = None
    for c, data in tables:
        s = set(data[:, c.index("timestep")].tolist())
        steps = s if steps is None else steps & s
    steps = sorted(steps)
    stacked = []
    for c, data in tables:
        idx = {t: i for i, t in enumerate(data[:, c.index("timestep")])}
        stacked.append(np.array([[data[idx[t], c.index(k)] for k in cols] for t in steps]))
    stacked = np.array(stacked)
    with warnings.catch_warnings():
        # all-NaN columns (e.g. eval_return on non-evaluation rows) stay NaN
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(stacked, axis=0)
        std = np.nanstd(stacked, axis=0)
    return cols, mean, std, len(paths)


def write_aggregate(pattern, out_path=None):
    paths = globmod.glob(pattern, recursive=True)
    cols, mean, std, n = aggregate(paths)
    records = []
    for i in range(mean.shape[0]):
        rec = {"runs": n}
        for j, c in enumerate(cols):
            if c == VERSION_COLUMN:
                continue
            if c in ("iteration", "timestep"):
                rec[c] = int(mean[i, j])
            else:
                rec[c] = mean[i, j]
                rec[f"{c}.std"] = std[i, j]
        records.append(rec)
    if out_path is not None:
        export_metrics(records, out_path)
    return records


PLOT_GROUPS = (
    ("eval_return", "Average episode return", ("eval_return",)),
    ("value_distance", "Average value distance", ("value_distance.",)),
    ("nsrr", "Neutral state rejection ratio", ("nsrr.",)),
    ("targets", "Symmetry transformation targets", ("nu.m_", "target_error")),
)


def plot_metrics(csv_path, out_dir=None):
    """Static line charts of the four metric groups; returns the written PNG paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    cols, data = read_metrics(csv_path)
    out_dir = out_dir or os.path.dirname(os.path.abspath(csv_path))
    os.makedirs(out_dir, exist_ok=True)
    x = data[:, cols.index("timestep")]
    written = []
    for key, title, prefixes in PLOT_GROUPS:
        series = [c for c in cols if not c.endswith(".std")
                  and any(c == p or (p[-1] in "._" and c.startswith(p)) for p in prefixes)]
        if not series:
            continue
        fig, ax = plt.subplots(figsize=(6, 4))
        for c in series:
            y = data[:, cols.index(c)]
            ok = ~np.isnan(y)
            if ok.any():
                ax.plot(x[ok], y[ok], label=c)
        ax.set_xlabel("time step")
        ax.set_title(title)
        if len(series) > 1:
            ax.legend(fontsize=6)
        path = os.path.join(out_dir, f"{key}.png")
        fig.tight_layout()
        fig.savefig(path, dpi=100)
        plt.close(fig)
        written.append(path)
    return written
