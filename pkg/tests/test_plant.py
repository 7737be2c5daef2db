import numpy as np
import pytest

from tubempc.boxes import Box, contains
from tubempc.errors import UsageError
from tubempc.plant import (Dataset, DatasetPlan, NoiseSpec, TaskSpec,
                           affine_system, collect_dataset, cuberoot_system,
                           sample_truncated_normal, step_true, substream)

from conftest import make_affine_dataset


def quiet_noise():
    return NoiseSpec([0.0], [0.0], [1e-12])


def test_cuberoot_noise_free_step():
    sys = cuberoot_system(quiet_noise())
    assert np.isclose(step_true(sys, [8.0], [0.0], w=np.zeros(1))[0], 2.0)
    assert np.isclose(step_true(sys, [0.0], [0.5], w=np.zeros(1))[0], 0.5)


def test_step_with_noise_stays_in_band():
    sys = cuberoot_system(NoiseSpec([0.0], [0.2], [0.05]))
    rng = substream(0, 1)
    for _ in range(200):
        nxt = step_true(sys, [4.0], [0.0], rng=rng)[0]
        assert np.cbrt(4.0) - 0.05 <= nxt <= np.cbrt(4.0) + 0.05


def test_truncated_normal_always_within_tau():
    spec = NoiseSpec([0.0], [0.2], [0.05])
    rng = substream(1, 1)
    draws = np.array([sample_truncated_normal(spec, rng)[0]
                      for _ in range(10_000)])
    assert np.all(np.abs(draws) <= 0.05)


def test_truncated_normal_wide_tau_matches_normal_mean():
    sigma = 0.2
    spec = NoiseSpec([0.3], [sigma], [100 * sigma])
    rng = substream(2, 1)
    k = 4000
    draws = np.array([sample_truncated_normal(spec, rng)[0] for _ in range(k)])
    assert abs(draws.mean() - 0.3) < 3 * sigma / np.sqrt(k)


def test_truncated_normal_sigma_zero_returns_mu():
    spec = NoiseSpec([0.4], [0.0], [0.1])
    assert sample_truncated_normal(spec, substream(3, 1))[0] == 0.4


def test_truncated_normal_deterministic_given_seed():
    spec = NoiseSpec([0.0], [0.2], [0.05])
    a = [sample_truncated_normal(spec, substream(7, 1))[0] for _ in range(5)]
    b = [sample_truncated_normal(spec, substream(7, 1))[0] for _ in range(5)]
    assert a == b


def test_disturbance_box():
    spec = NoiseSpec([0.1], [0.2], [0.05])
    w = spec.disturbance_box()
    assert np.allclose(w.center, 0.1) and np.allclose(w.radius, 0.05)


def test_collect_dataset_counts_and_exactness():
    data = make_affine_dataset(a=0.0, A=0.9, m_records=80)
    assert len(data) == 80
    assert np.allclose(data.x_plus, 0.9 * data.x + data.u, atol=1e-9)


def test_collect_dataset_rejects_underdetermined():
    sys = cuberoot_system(quiet_noise())
    plan = DatasetPlan(1, Box.from_bounds([-1.0], [1.0]),
                       Box.from_bounds([-1.0], [1.0]))
    with pytest.raises(UsageError):
        collect_dataset(sys, plan)


def test_collect_dataset_noise_always_in_box():
    spec = NoiseSpec([0.0], [0.2], [0.05])
    sys = cuberoot_system(spec)
    plan = DatasetPlan(2000, Box.from_bounds([-2.0], [4.5]),
                       Box.from_bounds([-1.0], [1.0]), noisy=True, seed=5)
    data = collect_dataset(sys, plan)
    w = data.x_plus - np.cbrt(data.x) - data.u
    assert np.all(np.abs(w) <= 0.05 + 1e-12)


def test_dataset_replay_reproduces_targets():
    data = make_affine_dataset(a=2.0, A=0.5, m_records=50)
    assert np.allclose(data.f_targets(), 2.0 + 0.5 * data.x, atol=1e-9)


def test_dataset_csv_roundtrip(tmp_path):
    data = make_affine_dataset(m_records=20)
    path = tmp_path / "d.csv"
    data.to_csv(path)
    loaded = Dataset.from_csv(path, data.B)
    assert np.array_equal(loaded.x, data.x)
    assert np.array_equal(loaded.x_plus, data.x_plus)
    assert np.array_equal(loaded.u, data.u)
    header = path.read_text().splitlines()[0]
    assert header == "x_0,xplus_0,u_0"


def test_dataset_seed_reproducible():
    a = make_affine_dataset(seed=9)
    b = make_affine_dataset(seed=9)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.x_plus, b.x_plus)


def test_task_spec_validation():
    goal = Box([0.0], [0.1])
    X = Box.from_bounds([-1.0], [1.0])
    U = Box.from_bounds([-1.0], [1.0])
    TaskSpec([0.5], [0.0], [0.0], goal, X, U, 5, 3)
    with pytest.raises(UsageError):
        TaskSpec([0.5], [0.5], [0.0], goal, X, U, 5, 3)   # x_f outside goal
    with pytest.raises(UsageError):
        TaskSpec([0.5], [0.0], [2.0], goal, X, U, 5, 3)   # u_f outside U
    with pytest.raises(UsageError):
        TaskSpec([0.5], [0.0], [0.0], Box([0.0], [2.0]), X, U, 5, 3)  # goal > X


def test_affine_system_step():
    sys = affine_system([1.0], [[0.5]], [[2.0]], quiet_noise())
    nxt = step_true(sys, [2.0], [0.25], w=np.zeros(1))
    assert np.isclose(nxt[0], 1.0 + 1.0 + 0.5)
