"""Run persistence: per-step CSV plus a JSON sidecar, and SVG charts."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .harness import BenchRecord, RunRecord

CSV_HEADER = (
    ["t"]
    + [f"r{i}" for i in range(1, 7)]
    + ["x1", "x2", "x3", "dx1", "dx2", "dx3", "s1", "s2", "s3", "T1", "T2", "V"]
)
CHARTS = ("feature_error", "sliding_surface", "estimator_residuals", "trajectory_3d")


def _fmt(v):
    return repr(float(v))


def json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return json_safe(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _restore_floats(obj):
    if isinstance(obj, dict):
        return {k: _restore_floats(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_restore_floats(v) for v in obj]
    if obj in ("nan", "inf", "-inf"):
        return float(obj)
    return obj


def _prepare_dir(path: Path):
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc}") from exc


def export(record: RunRecord, path) -> tuple[Path, Path]:
    """Write ``<path>.csv`` (one row per step) and ``<path>.json`` (metadata).

    ``path`` may be given with or without the ``.csv`` suffix. The JSON also
    carries the commanded rates and thinned Jacobian samples, which the CSV
    layout has no columns for.
    """
    base = Path(path)
    if base.suffix == ".csv":
        base = base.with_suffix("")
    csv_path, meta_path = base.with_suffix(".csv"), base.with_suffix(".json")
    try:
        with csv_path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for k in range(len(record.t)):
                row = [record.t[k], *record.r[k], *record.x[k], *record.dx[k], *record.s[k], record.T1[k], record.T2[k], record.V[k]]
                w.writerow([_fmt(v) for v in row])
        sidecar = {
            "metadata": record.metadata,
            "r_dot_cmd": record.r_dot_cmd,
            "J": record.J,
            "J_index": record.J_index,
        }
        meta_path.write_text(json.dumps(json_safe(sidecar), indent=1))
    except OSError as exc:
        raise OSError(f"cannot write run record to {base}: {exc}") from exc
    return csv_path, meta_path


def import_record(path) -> RunRecord:
    """Inverse of :func:`export`."""
    base = Path(path)
    if base.suffix in (".csv", ".json"):
        base = base.with_suffix("")
    arr = np.loadtxt(base.with_suffix(".csv"), delimiter=",", skiprows=1, ndmin=2)
    with base.with_suffix(".csv").open() as fh:
        header = fh.readline().strip().split(",")
    if header != CSV_HEADER:
        raise ValueError(f"{base}.csv: unexpected header")
    side = _restore_floats(json.loads(base.with_suffix(".json").read_text()))
    return RunRecord(
        t=arr[:, 0].copy(),
        r=arr[:, 1:7].copy(),
        r_dot_cmd=np.array(side["r_dot_cmd"], dtype=float).reshape(-1, 6),
        x=arr[:, 7:10].copy(),
        dx=arr[:, 10:13].copy(),
        s=arr[:, 13:16].copy(),
        T1=arr[:, 16].copy(),
        T2=arr[:, 17].copy(),
        V=arr[:, 18].copy(),
        J=np.array(side["J"], dtype=float).reshape(-1, 3, 6),
        J_index=np.array(side["J_index"], dtype=int),
        metadata=side["metadata"],
    )


def export_bench(record: BenchRecord, out_dir) -> Path:
    """CSV with ``t`` and one ``T1_<name>``/``T2_<name>`` pair per estimator."""
    out = Path(out_dir)
    _prepare_dir(out)
    names = list(record.T1)
    path = out / "estimator_bench.csv"
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"{m}_{n}" for n in names for m in ("T1", "T2")])
            for k in range(len(record.t)):
                row = [record.t[k]]
                for n in names:
                    row += [_series_at(record.T1[n], k), _series_at(record.T2[n], k)]
                w.writerow([_fmt(v) for v in row])
        (out / "estimator_bench.json").write_text(json.dumps(json_safe(record.metadata), indent=1))
    except OSError as exc:
        raise OSError(f"cannot write estimator benchmark to {out}: {exc}") from exc
    return path


def _series_at(a, k):
    return a[k] if k < len(a) else math.nan


# ---------------------------------------------------------------- plots


def emit_plots(record: RunRecord, out_dir, stem="run") -> list[Path]:
    """One SVG per chart in :data:`CHARTS`."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    _prepare_dir(out)
    paths = []

    def save(fig, name):
        p = out / f"{stem}_{name}.svg"
        try:
            fig.savefig(p, format="svg")
        except OSError as exc:
            raise OSError(f"cannot write plot {p}: {exc}") from exc
        finally:
            plt.close(fig)
        paths.append(p)

    for name, series, label in (
        ("feature_error", record.dx, "feature error"),
        ("sliding_surface", record.s, "sliding variable"),
    ):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for j in range(3):
            ax.plot(record.t, series[:, j], label=f"{label} {j + 1}")
        ax.set_xlabel("t [s]")
        ax.legend(loc="best", fontsize="small")
        save(fig, name)

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(record.t, record.T1, label="T1")
    ax.plot(record.t, record.T2, label="T2")
    ax.set_xlabel("t [s]")
    ax.set_yscale("symlog", linthresh=1e-6)
    ax.legend(loc="best", fontsize="small")
    save(fig, "estimator_residuals")

    fig = plt.figure(figsize=(5, 5))
    ax = fig.add_subplot(projection="3d")
    ax.plot(record.x[:, 0], record.x[:, 1], record.x[:, 2])
    goal = record.x[0] - record.dx[0]
    ax.scatter(*goal, marker="x")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_zlabel("x3")
    save(fig, "trajectory_3d")
    return paths
