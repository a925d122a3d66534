"""Closed-loop servo runs, the estimator benchmark and run comparison."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import controllers as ctl
from . import ftsm
from . import metrics
from . import rbf
from .estimators import FilterEstimator
from .world import JointState, World, analytic_jacobian, at_limit, camera_observe, forward_kinematics, load_world, step

log = logging.getLogger(__name__)

HOLD_STEPS = 25
WORKSPACE_FAULT_FRACTION = 0.5
J_STRIDE = 10


class ValidationError(ValueError):
    """Bad user input: spec, config or CLI argument."""


class RuntimeFault(RuntimeError):
    """A run could not complete (divergence, non-finite state)."""


# ---------------------------------------------------------------- specs


@dataclass
class ExperimentSpec:
    id: str
    r_initial: np.ndarray
    x_desired: np.ndarray
    estimator: dict = field(default_factory=lambda: {"kind": "rbf"})
    controller: dict = field(default_factory=lambda: {"kind": "ftsm"})
    duration: float = 10.0
    dt: float | None = None
    seed: int = 0
    success_radius: float = 0.01
    hold_steps: int = HOLD_STEPS
    stop_on_success: bool = True
    world: str | None = None

    def __post_init__(self):
        self.r_initial = np.asarray(self.r_initial, dtype=float)
        self.x_desired = np.asarray(self.x_desired, dtype=float)
        if self.r_initial.shape != (6,) or self.x_desired.shape != (3,):
            raise ValidationError("r_initial needs 6 entries and x_desired 3")
        if not (np.all(np.isfinite(self.r_initial)) and np.all(np.isfinite(self.x_desired))):
            raise ValidationError("spec vectors must be finite")
        if not self.duration > 0 or (self.dt is not None and not self.dt > 0):
            raise ValidationError("duration and dt must be positive")
        if not self.success_radius > 0 or self.hold_steps < 1:
            raise ValidationError("success_radius and hold_steps must be positive")
        if "kind" not in self.estimator or "kind" not in self.controller:
            raise ValidationError("estimator and controller need a 'kind'")

    def to_dict(self):
        d = asdict(self)
        d["r_initial"] = self.r_initial.tolist()
        d["x_desired"] = self.x_desired.tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**d)
        except TypeError as exc:
            raise ValidationError(f"bad spec fields: {exc}") from exc

    def with_changes(self, **kw):
        d = self.to_dict()
        d.update(kw)
        return ExperimentSpec.from_dict(d)


def sense(world: World, r, rng=None):
    """Normalised feature vector for joint angles ``r``."""
    x = camera_observe(world.camera, forward_kinematics(world.model, r), world.sensor, rng)
    return x / world.feature_scale


def true_jacobian(world: World, r):
    return analytic_jacobian(world.model, world.camera, r) / world.feature_scale


def validate_spec(spec: ExperimentSpec, world: World):
    dt = spec.dt or world.sensor.dt
    if spec.duration / dt < 10 - 1e-9:
        raise ValidationError(f"duration {spec.duration} s is shorter than 10 steps of {dt} s")
    if np.any(spec.r_initial < world.model.lower) or np.any(spec.r_initial > world.model.upper):
        raise ValidationError("r_initial lies outside the joint limits")
    gap = np.max(np.abs(sense(world, spec.r_initial) - spec.x_desired))
    if not gap < 1.0:
        raise ValidationError(f"initial feature error {gap:.3f} violates |dx_j(0)| < 1")
    return dt


# canned goals: (start offset, goal offset) from home, one per workspace quadrant
_CANNED = {
    "exp1": ([0.25, 0.15, -0.2, 0.1, 0.2, 0.0], [-0.3, -0.2, 0.25, -0.1, -0.15, 0.0]),
    "exp2": ([-0.3, 0.2, -0.1, 0.15, -0.2, 0.0], [0.3, -0.15, 0.2, -0.1, 0.2, 0.0]),
    "exp3": ([0.2, -0.3, 0.3, -0.2, 0.1, 0.0], [-0.25, 0.25, -0.25, 0.2, -0.1, 0.0]),
    "exp4": ([-0.2, -0.25, 0.1, 0.25, 0.25, 0.0], [0.25, 0.3, -0.2, -0.2, -0.25, 0.0]),
}


def canned_specs(world: World | None = None, estimator=None, controller=None, **kw):
    """The four stock experiments: start and goal poses in distinct quadrants."""
    world = world or load_world()
    out = []
    for name, (a, b) in _CANNED.items():
        r0 = world.home + np.asarray(a)
        goal = world.home + np.asarray(b)
        out.append(
            ExperimentSpec(
                id=name,
                r_initial=r0,
                x_desired=sense(world, goal),
                estimator=dict(estimator or {"kind": "rbf"}),
                controller=dict(controller or {"kind": "ftsm"}),
                **kw,
            )
        )
    return out


# ---------------------------------------------------------------- estimators


class AnalyticEstimator:
    """Perfect Jacobian from the simulator (oracle runs)."""

    def __init__(self, world):
        self.world = world

    def jacobian(self, r):
        return true_jacobian(self.world, r)

    def observe(self, *a, **k):
        return None


class RbfOnline:
    """RBF estimator plus one of its online laws (``proposed``, ``pid`` or ``none``)."""

    def __init__(self, est: rbf.RbfJacobianEstimator, law="proposed", **gains):
        self.est = est
        self.law = law
        self.gains = gains

    def jacobian(self, r):
        return self.est.jacobian(r)

    def observe(self, r_prev, dr, dx, s=None, dt=1.0, J_prev=None):
        if self.law == "none":
            return
        J_prev = self.est.jacobian(r_prev) if J_prev is None else J_prev
        r_dot = np.asarray(dr) / dt
        e = (np.asarray(dx) - J_prev @ np.asarray(dr)) / dt
        s = np.zeros(3) if s is None else s
        g = self.gains
        if self.law == "proposed":
            rbf.online_update_proposed(self.est, r_prev, r_dot, e, s, g["n1"], g["alpha2"], g["k3"], dt)
        elif self.law == "pid":
            rbf.online_update_pid(self.est, r_prev, r_dot, e, s, g["n2"], g["n3"], dt)
        else:
            raise ValidationError(f"unknown RBF update law {self.law!r}")


def probe_jacobian(world: World, r, h=0.01):
    """Measured central-difference Jacobian from small joint jogs."""
    J = np.empty((3, 6))
    for i in range(6):
        d = np.zeros(6)
        d[i] = h
        J[:, i] = (sense(world, r + d) - sense(world, r - d)) / (2 * h)
    return J


def load_model(source):
    if isinstance(source, rbf.RbfJacobianEstimator):
        return source.copy()
    if source is None:
        raise ValidationError("an RBF estimator needs a trained model")
    try:
        return rbf.RbfJacobianEstimator.load(source)
    except (OSError, ValueError, KeyError) as exc:
        raise ValidationError(f"cannot load model {source}: {exc}") from exc


def reference_of(est: rbf.RbfJacobianEstimator):
    ref = est.metadata.get("reference_weights")
    if ref is None:
        return None
    return [np.asarray(w, dtype=float) for w in ref]


def build_estimator(cfg: dict, world: World, r0, model=None, ftsm_params=None, pid_params=None):
    kind = cfg["kind"]
    params = {k: v for k, v in cfg.items() if k not in ("kind", "model", "init", "update")}
    if kind == "analytic":
        return AnalyticEstimator(world)
    if kind == "rbf":
        est = load_model(model if model is not None else cfg.get("model"))
        law = cfg.get("update")
        if law is None:
            law = "pid" if pid_params is not None else "proposed"
        if law == "proposed":
            p = ftsm_params or ftsm.FtsmParams()
            return RbfOnline(est, "proposed", n1=params.get("n1", p.n1), alpha2=p.alpha2, k3=params.get("k3", p.k3))
        if law == "pid":
            p = pid_params or ctl.PidParams()
            return RbfOnline(est, "pid", n2=params.get("n2", p.n2), n3=params.get("n3", p.n3))
        return RbfOnline(est, law)
    if kind in ("lkf", "ukf", "rls"):
        init = cfg.get("init", "probe")
        if init == "probe":
            j0 = probe_jacobian(world, r0)
        elif init == "zero":
            j0 = None
        else:
            raise ValidationError(f"unknown estimator init {init!r}")
        try:
            return FilterEstimator.create(kind, j0, **params)
        except TypeError as exc:
            raise ValidationError(f"bad {kind} parameters: {exc}") from exc
    raise ValidationError(f"unknown estimator kind {kind!r}")


def _controller_params(cfg: dict):
    kind = cfg["kind"]
    params = {k: v for k, v in cfg.items() if k != "kind"}
    try:
        if kind == "ftsm":
            return ftsm.FtsmParams.from_dict(params)
        if kind == "pid":
            return ctl.PidParams(**params)
        if kind == "mfac":
            return ctl.MfacParams(**params)
        if kind == "mpc":
            if "Q" in params:
                params["Q"] = np.asarray(params["Q"], dtype=float)
            return ctl.MpcParams(**params)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad {kind} parameters: {exc}") from exc
    raise ValidationError(f"unknown controller kind {kind!r}")


# ---------------------------------------------------------------- records


SERIES = ("t", "r", "r_dot_cmd", "x", "dx", "s", "T1", "T2", "V")


@dataclass
class RunRecord:
    t: np.ndarray
    r: np.ndarray
    r_dot_cmd: np.ndarray
    x: np.ndarray
    dx: np.ndarray
    s: np.ndarray
    T1: np.ndarray
    T2: np.ndarray
    V: np.ndarray
    J: np.ndarray = field(default_factory=lambda: np.zeros((0, 3, 6)))
    J_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    @property
    def success(self):
        return bool(self.metadata.get("success"))

    @property
    def time_to_success(self):
        return self.metadata.get("time_to_success")


def _finish(rows, Js, J_idx, meta):
    arr = {k: np.array(v, dtype=float) for k, v in rows.items()}
    return RunRecord(
        t=arr["t"],
        r=arr["r"].reshape(-1, 6),
        r_dot_cmd=arr["r_dot_cmd"].reshape(-1, 6),
        x=arr["x"].reshape(-1, 3),
        dx=arr["dx"].reshape(-1, 3),
        s=arr["s"].reshape(-1, 3),
        T1=arr["T1"],
        T2=arr["T2"],
        V=arr["V"],
        J=np.array(Js, dtype=float).reshape(-1, 3, 6),
        J_index=np.array(J_idx, dtype=int),
        metadata=meta,
    )


# ---------------------------------------------------------------- servo loop


def run_servo(spec: ExperimentSpec, world: World | None = None, model=None) -> RunRecord:
    """Run one closed-loop experiment.

    Each step senses the feature, differentiates the error, queries the
    estimator, computes a joint-rate command, clamps it to the speed limit
    and integrates the arm. The estimator sees the realised increments on
    the following step. The run stops at ``duration`` or, when
    ``stop_on_success`` is set, once ``|dx| <= success_radius`` has held for
    ``hold_steps`` consecutive samples.
    """
    world = world or load_world(spec.world)
    dt = validate_spec(spec, world)
    cparams = _controller_params(spec.controller)
    ckind = spec.controller["kind"]
    est = build_estimator(
        spec.estimator,
        world,
        spec.r_initial,
        model=model,
        ftsm_params=cparams if ckind == "ftsm" else None,
        pid_params=cparams if ckind == "pid" else None,
    )
    rng = np.random.default_rng(spec.seed)
    n_steps = int(round(spec.duration / dt))
    bound = world.model.max_joint_speed

    W_ref = reference_of(est.est) if isinstance(est, RbfOnline) else None
    if ckind == "ftsm":
        if isinstance(est, RbfOnline) and W_ref is None:
            # no converged reference stored with the model: fall back to the offline weights
            W_ref = [w.copy() for w in est.est.weight_set()]
        k_cert = ftsm.certificate_k(cparams)
        delta = ftsm.certificate_delta(W_ref if W_ref is not None else [np.zeros((3, 0))] * 6, cparams)

    rows = {k: [] for k in SERIES}
    Js, J_idx = [], []
    state = JointState(r=spec.r_initial.copy())
    dx_prev = v_prev = None
    s_prev = None
    J_prev = None
    r_prev = x_prev = None
    hold = 0
    success_at = None
    limit_steps = 0
    clamped_steps = 0
    aborted = None
    ms = None
    lyap = []
    t0 = time.perf_counter()

    for k in range(n_steps + 1):
        t = k * dt
        r = state.r
        x = sense(world, r, rng)
        dx = x - spec.x_desired
        v = np.zeros(3) if dx_prev is None else (dx - dx_prev) / dt
        a = np.zeros(3) if v_prev is None or k < 2 else (v - v_prev) / dt

        if k == 0:
            ms = metrics.MetricSeries.start(x)
            t1 = math.nan
        else:
            dr = r - r_prev
            dxk = x - x_prev
            t1 = metrics.metric_t1(dxk, J_prev, dr)
            metrics.metric_t2(ms, x, J_prev, dr)
            est.observe(r_prev, dr, dxk, s=s_prev, dt=dt, J_prev=J_prev)
        J = est.jacobian(r)
        if not np.all(np.isfinite(J)):
            aborted = "non-finite Jacobian estimate"
            break

        s = np.full(3, math.nan)
        Vk = math.nan
        try:
            if ckind == "ftsm":
                s = ftsm.sliding_surface(dx, v, cparams)
                s_dot = ftsm.sliding_derivative(dx, v, a, cparams)
                raw = ftsm.control_law(J, s, s_dot, v, cparams)
                W_hat = est.est.weight_set() if isinstance(est, RbfOnline) else [np.zeros((3, 0))] * 6
                lv = ftsm.lyapunov(s, W_ref if W_ref is not None else W_hat, W_hat, cparams.k4, t)
                lyap.append(lv)
                Vk = lv.V
            elif ckind == "pid":
                s = dx.copy()
                raw = ctl.pid_control(J, dx, cparams)
            elif ckind == "mfac":
                raw = (ctl.mfac_control(r, J, -dx, cparams) - r) / dt
            else:
                raw = (ctl.mpc_control(r, J, -dx, cparams) - r) / dt
            cmd, clamped = ftsm.clamp_command(raw, bound)
        except (FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
            aborted = f"command failure: {exc}"
            break
        clamped_steps += clamped

        rows["t"].append(t)
        rows["r"].append(r.copy())
        rows["r_dot_cmd"].append(cmd)
        rows["x"].append(x)
        rows["dx"].append(dx)
        rows["s"].append(s)
        rows["T1"].append(t1)
        rows["T2"].append(ms.T2[-1])
        rows["V"].append(Vk)
        if k % J_STRIDE == 0:
            Js.append(J)
            J_idx.append(k)

        if np.any(at_limit(r, world.model)):
            limit_steps += 1
        if np.linalg.norm(dx) <= spec.success_radius:
            hold += 1
            if hold == spec.hold_steps and success_at is None:
                success_at = (k - spec.hold_steps + 1) * dt
                if spec.stop_on_success:
                    break
        else:
            hold = 0
        if k == n_steps:
            break

        r_prev, x_prev, J_prev = r.copy(), x, J
        dx_prev, v_prev, s_prev = dx, v, s if ckind in ("ftsm", "pid") else None
        state = step(state, cmd, world.model, dt)

    n = len(rows["t"])
    meta = {
        "spec": spec.to_dict(),
        "world": world.metadata(),
        "controller": spec.controller["kind"],
        "estimator": spec.estimator["kind"],
        "gains": _gains_dict(cparams),
        "dt": dt,
        "steps": n,
        "success": success_at is not None,
        "time_to_success": success_at,
        "final_error": float(np.linalg.norm(rows["dx"][-1])) if n else math.nan,
        "workspace_fault": bool(n and limit_steps / n > WORKSPACE_FAULT_FRACTION),
        "limit_steps": limit_steps,
        "clamped_steps": int(clamped_steps),
        "aborted": aborted,
        "wall_time": time.perf_counter() - t0,
    }
    if ckind == "ftsm" and len(lyap) >= 3:
        meta["certificate"] = _certificate(lyap, rows, cparams, k_cert, delta)
    if meta["workspace_fault"]:
        log.warning("%s: joints at a limit for %d of %d steps", spec.id, limit_steps, n)
    if aborted:
        log.warning("%s: run aborted (%s)", spec.id, aborted)
    return _finish(rows, Js, J_idx, meta)


def _gains_dict(p):
    d = dict(p.__dict__)
    for k, v in d.items():
        if isinstance(v, np.ndarray):
            d[k] = v.tolist()
    return d


def _certificate(lyap, rows, p, k_cert, delta):
    viol = ftsm.sgpfs_check(lyap, k_cert, p.sigma, delta)
    V0 = lyap[0].V
    t_s = ftsm.predict_reach_time(V0, k_cert, p.sigma, delta, p.varphi)
    idx = min(int(round(t_s / (rows["t"][1] - rows["t"][0]))), len(rows["t"]) - 1)
    pred = ftsm.predict_convergence(V0, rows["dx"][idx], p, delta, k_cert)
    return {
        "k": k_cert,
        "delta": delta,
        "violation_fraction": viol,
        "V0": V0,
        "reach_floor": ftsm.reach_floor(k_cert, p.sigma, delta, p.varphi),
        "predicted_reach_time": t_s,
        "predicted_total_time": pred.total,
    }


# ---------------------------------------------------------------- estimator bench


ESTIMATORS = ("proposed", "lkf", "ukf", "rls")


def preset_trajectory(world: World, duration=20.0, dt=None):
    """Smooth multi-sine joint motion about the home pose."""
    dt = dt or world.sensor.dt
    t = np.arange(int(round(duration / dt)) + 1) * dt
    amp = np.array([0.3, 0.25, 0.3, 0.3, 0.3, 0.3])
    freq = np.array([0.11, 0.07, 0.13, 0.05, 0.09, 0.03])
    r = world.home + amp * np.sin(2 * np.pi * np.outer(t, freq))
    return t, np.clip(r, world.model.lower, world.model.upper)


@dataclass
class BenchRecord:
    t: np.ndarray
    T1: dict
    T2: dict
    metadata: dict = field(default_factory=dict)


def run_estimator_bench(
    world: World | None = None,
    model=None,
    trajectory=None,
    duration=20.0,
    ftsm_params: ftsm.FtsmParams | None = None,
    filter_params: dict | None = None,
    init: str = "zero",
    estimators=ESTIMATORS,
    plant_jacobian=None,
    zero_term: str = "s",
) -> BenchRecord:
    """Drive every estimator along the same open-loop joint trajectory.

    There is no target, so one term of the proposed law has to go.
    ``zero_term="s"`` (default) drops the surface term and keeps the
    prediction-error term and decay. ``zero_term="e"`` sets ``n1 = 0`` and
    feeds a surface built from the displacement from the first sample.
    ``plant_jacobian`` swaps the arm for a linear plant ``x = J r`` (oracle
    tests).
    """
    if zero_term not in ("s", "e"):
        raise ValidationError("zero_term must be 's' or 'e'")
    world = world or load_world()
    p = ftsm_params or ftsm.FtsmParams()
    fp = filter_params or {}
    if trajectory is None:
        t, rs = preset_trajectory(world, duration)
    else:
        t, rs = (np.asarray(a, dtype=float) for a in trajectory)
    dt = float(t[1] - t[0])
    if plant_jacobian is not None:
        Jp = np.asarray(plant_jacobian, dtype=float)
        xs = rs @ Jp.T
    else:
        xs = np.array([sense(world, r) for r in rs])

    if zero_term == "s":
        surf = np.zeros_like(xs)
    else:
        disp = xs - xs[0]
        vel = np.vstack([np.zeros(3), np.diff(disp, axis=0) / dt])
        surf = ftsm.sliding_surface(disp, vel, p)

    T1, T2, flags = {}, {}, {}
    for name in estimators:
        if name == "proposed":
            n1 = p.n1 if zero_term == "s" else 0.0
            est = RbfOnline(load_model(model), "proposed", n1=n1, alpha2=p.alpha2, k3=p.k3)
        else:
            j0 = probe_jacobian(world, rs[0]) if init == "probe" else None
            est = FilterEstimator.create(name, j0, **fp.get(name, {}))
        ms = metrics.MetricSeries.start(xs[0])
        t1 = [math.nan]
        flag = None
        for k in range(1, len(t)):
            dr = rs[k] - rs[k - 1]
            ds = xs[k] - xs[k - 1]
            J = est.jacobian(rs[k - 1])
            if not np.all(np.isfinite(J)):
                flag = f"diverged at step {k}"
                break
            t1.append(metrics.metric_t1(ds, J, dr))
            metrics.metric_t2(ms, xs[k], J, dr)
            est.observe(rs[k - 1], dr, ds, s=surf[k - 1], dt=dt, J_prev=J)
        T1[name] = np.array(t1)
        T2[name] = np.array(ms.T2)
        flags[name] = flag
    meta = {"dt": dt, "steps": len(t), "flags": flags, "init": init, "zero_term": zero_term, "world": world.name}
    return BenchRecord(t=t, T1=T1, T2=T2, metadata=meta)


# ---------------------------------------------------------------- comparison


@dataclass
class ReportSummary:
    rows: list
    ranking: list

    def to_dict(self):
        return {"rows": self.rows, "ranking": self.ranking}


def summarize(rec: RunRecord) -> dict:
    cert = rec.metadata.get("certificate") or {}
    T1 = rec.T1[np.isfinite(rec.T1)]
    return {
        "id": rec.metadata["spec"]["id"],
        "controller": rec.metadata["controller"],
        "estimator": rec.metadata["estimator"],
        "success": rec.success,
        "time_to_success": rec.time_to_success,
        "final_error": rec.metadata["final_error"],
        "overshoot": metrics.overshoot(rec.dx),
        "T1_mean": float(T1.mean()) if T1.size else math.nan,
        "T2_final": float(rec.T2[-1]) if len(rec.T2) else math.nan,
        "sgpfs_violation_fraction": cert.get("violation_fraction"),
        "workspace_fault": rec.metadata["workspace_fault"],
        "aborted": rec.metadata["aborted"],
    }


def compare(specs, world: World | None = None, model=None, records=None) -> ReportSummary:
    """Run (or take pre-computed ``records`` for) each spec and rank by time to success."""
    specs = list(specs)
    if records is None:
        if not specs:
            raise ValidationError("compare needs at least one spec")
        records = [run_servo(s, world, model) for s in specs]
    if not records:
        raise ValidationError("compare needs at least one run")
    rows = [summarize(r) for r in records]
    order = sorted(
        range(len(rows)),
        key=lambda i: (rows[i]["time_to_success"] is None, rows[i]["time_to_success"] or math.inf, rows[i]["final_error"]),
    )
    ranking = [{"rank": n + 1, "id": rows[i]["id"], "controller": rows[i]["controller"]} for n, i in enumerate(order)]
    return ReportSummary(rows=rows, ranking=ranking)


def load_spec(path) -> ExperimentSpec:
    import json

    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read spec {path}: {exc}") from exc
    return ExperimentSpec.from_dict(d)
