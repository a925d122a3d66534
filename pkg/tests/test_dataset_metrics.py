import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from servobench import metrics as M
from servobench.dataset import CSV_HEADER, Dataset, generate_dataset
from servobench.harness import true_jacobian


@pytest.fixture(scope="module")
def ds(world):
    return generate_dataset(world, 1000, seed=11)


def test_dataset_is_deterministic(world, ds):
    again = generate_dataset(world, 1000, seed=11)
    assert np.array_equal(ds.r, again.r) and np.array_equal(ds.x, again.x)
    other = generate_dataset(world, 1000, seed=12)
    assert not np.array_equal(ds.r, other.r)


def test_dataset_minimum_size(world):
    with pytest.raises(ValueError, match="100"):
        generate_dataset(world, 99, seed=0)
    assert len(generate_dataset(world, 100, seed=0)) == 100
    assert len(generate_dataset(world, 201, seed=0)) == 201


def test_dataset_respects_limits_and_speed(world, ds):
    m = world.model
    assert np.all(ds.r >= m.lower) and np.all(ds.r <= m.upper)
    r, dr, _ = ds.triples()
    assert np.abs(dr).max() / world.sensor.dt <= m.max_joint_speed
    assert len(r) == len(ds) - len(ds.episode_starts())


def test_feature_increments_are_first_order(world, ds):
    r, dr, dx = ds.triples()
    pred = np.einsum("kij,kj->ki", np.array([true_jacobian(world, q) for q in r[::10]]), dr[::10])
    rel = np.linalg.norm(dx[::10] - pred, axis=1) / np.maximum(np.linalg.norm(dx[::10], axis=1), 1e-12)
    assert np.median(rel) < 0.05


def test_dataset_csv_roundtrip(tmp_path, ds):
    p = tmp_path / "d.csv"
    ds.to_csv(p)
    assert p.read_text().splitlines()[0].split(",") == CSV_HEADER
    back = Dataset.from_csv(p)
    assert np.array_equal(back.r, ds.r) and np.array_equal(back.x, ds.x) and np.array_equal(back.t, ds.t)
    with pytest.raises(OSError, match="nope"):
        ds.to_csv(tmp_path / "nope" / "d.csv")


def test_split_on_episode_boundaries(ds):
    train, hold = ds.split_episodes(0.2)
    assert len(train) + len(hold) == len(ds)
    assert hold.t[0] == 0.0


# ---------------------------------------------------------------- T1 / T2


def test_t1_trivial():
    J = np.arange(18.0).reshape(3, 6)
    dr = np.linspace(-1, 1, 6)
    assert M.metric_t1(J @ dr, J, dr) == 0.0
    assert M.metric_t1(np.array([3.0, 4.0, 0.0]), J, np.zeros(6)) == 5.0


def test_t2_starts_at_zero_and_accumulates():
    ms = M.MetricSeries.start([1.0, 2.0, 3.0])
    assert ms.T2 == [0.0]
    J = np.zeros((3, 6))
    ms, t2 = M.metric_t2(ms, [1.0, 2.0, 5.0], J, np.ones(6))
    assert t2 == 2.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31))
def test_t2_telescopes(seed):
    g = np.random.default_rng(seed)
    n = 40
    s = np.cumsum(g.normal(size=(n + 1, 3)), axis=0)
    Js = g.normal(size=(n, 3, 6))
    drs = g.normal(size=(n, 6))
    ms = M.MetricSeries.start(s[0])
    for k in range(n):
        M.metric_t2(ms, s[k + 1], Js[k], drs[k])
    assert M.telescoping_gap(np.diff(s, axis=0), Js, drs, ms.T2) <= 1e-10 * (1 + np.abs(s).max())


# ---------------------------------------------------------------- response statistics


def test_overshoot_and_sign_changes():
    e = np.zeros((6, 3))
    e[:, 0] = [1.0, 0.5, -0.2, 0.1, -0.05, 0.0]
    e[:, 1] = [1.0, 0.5, 0.2, 0.1, 0.05, 0.01]  # never crosses
    assert M.axis_first_crossings(e)[:2] == [2, None]
    assert M.overshoot(e) == pytest.approx(0.2)
    assert M.sign_changes(e) == 3
    assert M.sign_changes(e, deadband=0.15) == 1


def test_time_to_band():
    e = np.array([[1.0, -1.0], [0.5, -0.05], [0.01, 0.0]])
    assert M.time_to_band(e, 0.1, 0.5) == pytest.approx(1.0)
    assert M.time_to_band(e, 1e-4, 0.5) is None


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (20, 3), elements=st.floats(-1, 1)))
def test_statistics_are_sign_symmetric(e):
    assert M.overshoot(-e) == M.overshoot(e)
    assert M.sign_changes(-e) == M.sign_changes(e)
    assert M.sign_changes(e, 0.1) <= M.sign_changes(e)
