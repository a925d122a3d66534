"""``servobench`` command-line entry point.

Exit codes: 0 success, 2 validation error, 3 runtime fault.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness as H
from . import rbf
from .dataset import Dataset, generate_dataset
from .io import json_safe, emit_plots, export, export_bench, import_record
from .world import load_world

log = logging.getLogger("servobench")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3


def _world(path):
    try:
        return load_world(path)
    except (OSError, ValueError, KeyError) as exc:
        raise H.ValidationError(f"cannot load world config {path}: {exc}") from exc


def cmd_gen_data(a):
    world = _world(a.config)
    ds = generate_dataset(world, a.n, a.seed)
    ds.to_csv(a.out)
    print(f"wrote {len(ds)} samples to {a.out}")


def cmd_train(a):
    try:
        ds = Dataset.from_csv(a.data)
    except OSError as exc:
        raise H.ValidationError(f"cannot read dataset {a.data}: {exc}") from exc
    world = _world(a.config)
    dt = world.sensor.dt
    cfg = rbf.TrainConfig(
        neurons_per_net=(a.neurons,) * 6, epochs=a.epochs, seed=a.seed, solver=a.solver, width_scale=a.width_scale
    )
    trip = ds.triples()
    est = rbf.offline_train(trip, cfg, dt=dt)
    est.metadata["reference_weights"] = [w.tolist() for w in rbf.reference_weights(est, trip, dt=dt)]
    try:
        est.save(a.out)
    except OSError as exc:
        raise OSError(f"cannot write model to {a.out}: {exc}") from exc
    print(f"holdout loss {est.metadata['holdout_loss']:.3e}; model written to {a.out}")


def cmd_bench_est(a):
    world = _world(a.config)
    model = H.load_model(a.model)
    rec = H.run_estimator_bench(world, model, duration=a.duration, init=a.init, zero_term=a.zero_term)
    path = export_bench(rec, a.out)
    for name in rec.T1:
        print(f"{name:9s} final T2 {rec.T2[name][-1]:.4e}  mean T1 {np.nanmean(rec.T1[name]):.4e}")
    print(f"wrote {path}")
    if any(rec.metadata["flags"].values()):
        raise H.RuntimeFault(f"estimator diverged: {rec.metadata['flags']}")


def _resolve_model_path(spec: H.ExperimentSpec, spec_path: Path, override):
    if override:
        return H.load_model(override)
    m = spec.estimator.get("model")
    if spec.estimator["kind"] != "rbf":
        return None
    if m is None:
        raise H.ValidationError(f"{spec_path}: rbf estimator needs a 'model' path")
    p = Path(m)
    if not p.is_absolute():
        p = spec_path.parent / p
    return H.load_model(p)


def _run_spec_file(path: Path, model_override=None):
    spec = H.load_spec(path)
    world = _world(spec.world)
    model = _resolve_model_path(spec, path, model_override)
    return H.run_servo(spec, world, model)


def cmd_servo(a):
    rec = _run_spec_file(Path(a.spec), a.model)
    out = Path(a.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    sid = rec.metadata["spec"]["id"]
    csv_path, _ = export(rec, out / sid)
    md = rec.metadata
    print(f"{sid}: success={md['success']} time={md['time_to_success']} final_error={md['final_error']:.4e}")
    print(f"wrote {csv_path}")
    if md["aborted"]:
        raise H.RuntimeFault(f"{sid}: {md['aborted']}")


def cmd_compare(a):
    files = sorted(Path(a.specs).glob("*.json"))
    if not files:
        raise H.ValidationError(f"no spec files in {a.specs}")
    records = [_run_spec_file(f, a.model) for f in files]
    summary = H.compare([], records=records)
    try:
        Path(a.out).write_text(json.dumps(json_safe(summary.to_dict()), indent=1))
    except OSError as exc:
        raise OSError(f"cannot write report to {a.out}: {exc}") from exc
    _print_table(summary.rows)
    print(f"wrote {a.out}")


def cmd_report(a):
    runs = sorted(p for p in Path(a.runs).glob("*.csv"))
    if not runs:
        raise H.ValidationError(f"no run records in {a.runs}")
    records = [import_record(p) for p in runs]
    n = 0
    for p, rec in zip(runs, records):
        n += len(emit_plots(rec, a.plots, stem=p.stem))
    _print_table(H.compare([], records=records).rows)
    print(f"wrote {n} plots to {a.plots}")


def cmd_canned(a):
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    est = {"kind": a.estimator}
    if a.estimator == "rbf":
        est["model"] = str(Path(a.model).resolve()) if a.model else "model.json"
    for spec in H.canned_specs(_world(a.config), estimator=est, controller={"kind": a.controller}):
        (out / f"{spec.id}_{a.controller}.json").write_text(json.dumps(spec.to_dict(), indent=1))
    print(f"wrote 4 specs to {out}")


def _print_table(rows):
    print(f"{'id':8s} {'controller':10s} {'success':>8s} {'t_success':>10s} {'final_err':>10s} {'overshoot':>10s}")
    for r in rows:
        ts = "-" if r["time_to_success"] is None else f"{r['time_to_success']:.2f}"
        print(f"{r['id']:8s} {r['controller']:10s} {str(r['success']):>8s} {ts:>10s} {r['final_error']:10.2e} {r['overshoot']:10.2e}")


def build_parser():
    ap = argparse.ArgumentParser(prog="servobench", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="sample a random-motion training dataset")
    p.add_argument("--config")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="offline-train the RBF Jacobian estimator")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--neurons", type=int, default=64)
    p.add_argument("--epochs", type=int, default=rbf.TrainConfig.epochs)
    p.add_argument("--width-scale", type=float, default=rbf.TrainConfig.width_scale)
    p.add_argument("--solver", choices=("gd", "lstsq"), default="gd")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("bench-est", help="compare Jacobian estimators on the preset trajectory")
    p.add_argument("--config")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--duration", type=float, default=20.0)
    p.add_argument("--init", choices=("zero", "probe"), default="zero")
    p.add_argument("--zero-term", choices=("s", "e"), default="s")
    p.set_defaults(fn=cmd_bench_est)

    p = sub.add_parser("servo", help="run one closed-loop experiment")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model")
    p.set_defaults(fn=cmd_servo)

    p = sub.add_parser("compare", help="run every spec in a directory and rank them")
    p.add_argument("--specs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("report", help="plot exported runs and print their summary")
    p.add_argument("--runs", required=True)
    p.add_argument("--plots", required=True)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("canned", help="write the four stock experiment specs")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--model")
    p.add_argument("--estimator", default="rbf", choices=("rbf", "lkf", "ukf", "rls", "analytic"))
    p.add_argument("--controller", default="ftsm", choices=("ftsm", "pid", "mfac", "mpc"))
    p.set_defaults(fn=cmd_canned)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        a.fn(a)
    except (H.ValidationError, ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (H.RuntimeFault, FloatingPointError, OSError, np.linalg.LinAlgError) as exc:
        print(f"fault: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
