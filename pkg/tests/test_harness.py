import dataclasses
import math

import numpy as np
import pytest

from servobench import harness as H
from servobench import metrics as M


def analytic_spec(world, **kw):
    spec = H.canned_specs(world, estimator={"kind": "analytic"})[0]
    return spec.with_changes(**kw) if kw else spec


def test_zero_error_start_succeeds_immediately(world):
    r0 = world.home.copy()
    for ctl in ("ftsm", "pid", "mfac", "mpc"):
        spec = H.ExperimentSpec("z", r0, H.sense(world, r0), estimator={"kind": "analytic"}, controller={"kind": ctl})
        rec = H.run_servo(spec, world)
        assert rec.success and rec.time_to_success == 0.0
        assert len(rec) == H.HOLD_STEPS
        assert np.array_equal(rec.r_dot_cmd, np.zeros_like(rec.r_dot_cmd))


def test_commands_finite_when_error_hits_exact_zero(world):
    # axis 3 error is exactly zero at the start and axes 1-2 pass through zero later
    r0 = world.home.copy()
    xd = H.sense(world, r0)
    xd[:2] += [0.05, -0.03]
    spec = H.ExperimentSpec("g", r0, xd, estimator={"kind": "analytic"}, duration=2.0, stop_on_success=False)
    rec = H.run_servo(spec, world)
    assert rec.dx[0, 2] == 0.0
    assert np.all(np.isfinite(rec.r_dot_cmd)) and np.all(np.isfinite(rec.s))
    assert rec.metadata["aborted"] is None


def test_servo_is_deterministic(world, small_model):
    spec = H.canned_specs(world, estimator={"kind": "rbf"})[1].with_changes(duration=2.0)
    a = H.run_servo(spec, world, small_model)
    b = H.run_servo(spec, world, small_model)
    for name in H.SERIES + ("J", "J_index"):
        assert np.array_equal(getattr(a, name), getattr(b, name), equal_nan=True), name
    strip = lambda m: {k: v for k, v in m.items() if k != "wall_time"}  # noqa: E731
    assert strip(a.metadata) == strip(b.metadata)


def test_noisy_run_depends_on_seed_only(world):
    noisy = dataclasses.replace(world, sensor=dataclasses.replace(world.sensor, noise_std=1e-3))
    spec = analytic_spec(world, duration=0.5, seed=5)
    a, b = H.run_servo(spec, noisy), H.run_servo(spec, noisy)
    assert np.array_equal(a.x, b.x)
    c = H.run_servo(spec.with_changes(seed=6), noisy)
    assert not np.array_equal(a.x, c.x)


def test_record_shapes_and_uniform_dt(world, small_model):
    rec = H.run_servo(H.canned_specs(world)[0].with_changes(duration=1.0), world, small_model)
    n = len(rec)
    for name in H.SERIES:
        assert len(getattr(rec, name)) == n
    assert np.allclose(np.diff(rec.t), rec.metadata["dt"])
    assert np.array_equal(rec.J_index, np.arange(0, n, H.J_STRIDE))
    assert rec.T2[0] == 0.0 and math.isnan(rec.T1[0])


def test_kinematic_consistency(world):
    rec = H.run_servo(analytic_spec(world, stop_on_success=False, duration=2.0), world)
    dt = rec.metadata["dt"]
    dxs = np.diff(rec.x, axis=0)
    pred = np.array([H.true_jacobian(world, r) @ v * dt for r, v in zip(rec.r[:-1], rec.r_dot_cmd[:-1])])
    big = np.linalg.norm(dxs, axis=1) > 1e-6
    rel = np.linalg.norm(dxs - pred, axis=1)[big] / np.linalg.norm(dxs, axis=1)[big]
    assert rel.max() <= 0.10


def test_t2_telescopes_on_records(world, small_model):
    rec = H.run_servo(H.canned_specs(world)[2].with_changes(duration=1.0), world, small_model)
    assert np.all(np.isfinite(rec.T1[1:])) and np.all(rec.T2 >= 0)
    ds, dr = np.diff(rec.x, axis=0), np.diff(rec.r, axis=0)
    Js = [H.true_jacobian(world, r) for r in rec.r[:-1]]
    ms = M.MetricSeries.start(rec.x[0])
    for k in range(len(dr)):
        M.metric_t2(ms, rec.x[k + 1], Js[k], dr[k])
    assert M.telescoping_gap(ds, Js, dr, ms.T2) <= 1e-10


def test_t2_vanishes_with_exact_jacobian(world, small_model):
    A = np.random.default_rng(0).normal(size=(3, 6))
    rs = world.home + 0.1 * np.sin(np.outer(np.arange(60) * 0.02, np.arange(1, 7)))
    ms = M.MetricSeries.start(A @ rs[0])
    for k in range(1, len(rs)):
        M.metric_t2(ms, A @ rs[k], A, rs[k] - rs[k - 1])
    assert max(ms.T2) <= 1e-12


def test_success_terminated_run_ends_inside_radius(world):
    rec = H.run_servo(analytic_spec(world), world)
    assert rec.success
    assert np.linalg.norm(rec.dx[-1]) <= rec.metadata["spec"]["success_radius"]
    assert np.all(np.linalg.norm(rec.dx[-H.HOLD_STEPS :], axis=1) <= 0.01)


def test_perfect_jacobian_meets_predicted_time(world):
    for spec in H.canned_specs(world, estimator={"kind": "analytic"}):
        rec = H.run_servo(spec, world)
        cert = rec.metadata["certificate"]
        assert rec.success
        assert rec.time_to_success <= 1.5 * cert["predicted_total_time"]


def test_workspace_fault_flag(world):
    m = world.model
    r0 = world.home.copy()
    r0[0] = m.upper[0] - 0.02
    beyond = r0.copy()
    beyond[0] = m.upper[0] + 0.4
    spec = H.ExperimentSpec("w", r0, H.sense(world, beyond), estimator={"kind": "analytic"}, duration=2.0)
    rec = H.run_servo(spec, world)
    assert rec.metadata["workspace_fault"]
    assert not rec.success


@pytest.mark.parametrize(
    "change",
    [
        dict(duration=0.05),
        dict(x_desired=[5.0, 0.0, 0.0]),
        dict(controller={"kind": "nope"}),
        dict(estimator={"kind": "nope"}),
        dict(controller={"kind": "ftsm", "sigma": 2.0}),
        dict(estimator={"kind": "lkf", "init": "guess"}),
    ],
)
def test_validation_errors(world, change):
    with pytest.raises(H.ValidationError):
        H.run_servo(analytic_spec(world).with_changes(**change), world)


def test_spec_rejects_bad_fields(world):
    with pytest.raises(H.ValidationError):
        H.ExperimentSpec("x", np.zeros(5), np.zeros(3))
    with pytest.raises(H.ValidationError):
        H.ExperimentSpec.from_dict({"id": "x", "r_initial": [0] * 6, "x_desired": [0] * 3, "colour": 1})
    r0 = world.model.upper + 0.1
    with pytest.raises(H.ValidationError):
        H.run_servo(H.ExperimentSpec("x", r0, H.sense(world, r0), estimator={"kind": "analytic"}), world)


def test_compare_single_and_empty(world):
    spec = analytic_spec(world)
    rec = H.run_servo(spec, world)
    summary = H.compare([spec], world)
    row = summary.rows[0]
    assert row == H.summarize(rec) | {"T1_mean": row["T1_mean"]}
    assert row["time_to_success"] == rec.time_to_success
    assert row["overshoot"] == M.overshoot(rec.dx)
    assert summary.ranking == [{"rank": 1, "id": spec.id, "controller": "ftsm"}]
    with pytest.raises(H.ValidationError):
        H.compare([], world)


def test_compare_ranks_by_time(world):
    specs = H.canned_specs(world, estimator={"kind": "analytic"})[:2]
    slow = specs[0].with_changes(id="slow", controller={"kind": "pid", "k": 0.5})
    summary = H.compare([slow, specs[1]], world)
    assert [r["id"] for r in summary.ranking] == [specs[1].id, "slow"]


# ---------------------------------------------------------------- estimator bench


def test_bench_linear_plant_all_estimators_converge(world, small_model):
    A = np.random.default_rng(0).normal(scale=0.3, size=(3, 6))
    rec = H.run_estimator_bench(world, small_model, plant_jacobian=A, duration=20.0)
    for name, t1 in rec.T1.items():
        assert t1[-1] <= 1e-3, name
    assert not any(rec.metadata["flags"].values())


def test_bench_is_deterministic(world, small_model):
    a = H.run_estimator_bench(world, small_model, duration=2.0)
    b = H.run_estimator_bench(world, small_model, duration=2.0)
    for name in H.ESTIMATORS:
        assert np.array_equal(a.T1[name], b.T1[name], equal_nan=True)
        assert np.array_equal(a.T2[name], b.T2[name])


def test_bench_flags_divergence(world, small_model):
    rs = np.tile(world.home, (50, 1))
    rs[:, 0] += np.linspace(0, 0.1, 50)
    t = np.arange(50) * world.sensor.dt
    with np.errstate(invalid="ignore"):
        rec = H.run_estimator_bench(
            world, small_model, trajectory=(t, rs), estimators=("rls",), filter_params={"rls": {"p0": np.inf}}
        )
    assert rec.metadata["flags"]["rls"] is not None
    assert len(rec.T1["rls"]) < 50


def test_bench_proposed_starts_more_accurate_than_lkf(world, small_model):
    rec = H.run_estimator_bench(world, small_model, duration=2.0)
    assert np.nanmean(rec.T1["proposed"][:20]) < np.nanmean(rec.T1["lkf"][:20])
