import numpy as np
import pytest

import tubempc.linearizer as lin_mod
from tubempc.boxes import contains
from tubempc.errors import UsageError
from tubempc.estimator import KernelSpec, estimate_at, local_fit, point_estimate
from tubempc.linearizer import linearize_at, linearize_trajectory

from conftest import make_affine_dataset


def test_affine_data_grows_to_cap():
    data = make_affine_dataset(a=2.0, A=0.5, m_records=80)
    spec = KernelSpec(bandwidth=3.0, ridge=0.0)
    res = linearize_at(data, [0.0], dx=0.1, eps_lin=0.01, spec=spec,
                       max_steps=12)
    assert res.capped
    assert res.steps_taken == 12
    assert np.isclose(res.region.radius[0], 1.2)


def test_cuberoot_region_shrinks_near_curvature(cuberoot_data, cuberoot_cfg):
    spec = cuberoot_cfg.build_kernel()
    wide = linearize_at(cuberoot_data, [4.0], 0.05, 0.01, spec, 50)
    narrow = linearize_at(cuberoot_data, [0.2], 0.05, 0.01, spec, 50)
    assert narrow.region.radius[0] < wide.region.radius[0]


def test_quadratic_oracle_halting(monkeypatch):
    # force the estimate to x^2 and the model to the tangent at 0, so the
    # accepted half-width h obeys h^2 <= eps < (h + dx)^2 exactly
    data = make_affine_dataset(m_records=30)
    from tubempc.estimator import LocalFit

    monkeypatch.setattr(lin_mod, "estimate_at",
                        lambda d, g, s: np.array([float(g[0]) ** 2]))
    monkeypatch.setattr(
        lin_mod, "local_fit",
        lambda d, q, s: LocalFit(np.zeros(1), np.zeros((1, 1)),
                                 np.atleast_1d(np.asarray(q, float)), 5, 1.0))
    dx, eps = 0.05, 0.013
    res = linearize_at(data, [0.0], dx, eps, KernelSpec(bandwidth=1.0), 50)
    h = res.region.radius[0]
    assert h ** 2 <= eps < (h + dx) ** 2
    assert not res.capped


def test_error_bound_holds_on_returned_grid(cuberoot_data, cuberoot_cfg):
    spec = cuberoot_cfg.build_kernel()
    res = linearize_at(cuberoot_data, [1.0], 0.05, 0.01, spec, 50)
    for g in res.grid:
        err = np.max(np.abs(estimate_at(cuberoot_data, g, spec)
                            - res.model.predict(g)))
        assert err <= res.eps_lin + 1e-12


def test_monotone_in_eps(cuberoot_data, cuberoot_cfg):
    spec = cuberoot_cfg.build_kernel()
    small = linearize_at(cuberoot_data, [1.5], 0.05, 0.002, spec, 50)
    large = linearize_at(cuberoot_data, [1.5], 0.05, 0.02, spec, 50)
    assert np.all(small.region.radius <= large.region.radius)


def test_region_radius_multiple_of_dx(cuberoot_data, cuberoot_cfg):
    spec = cuberoot_cfg.build_kernel()
    for q in (0.5, 1.0, 3.0):
        res = linearize_at(cuberoot_data, [q], 0.07, 0.01, spec, 50)
        ratio = res.region.radius[0] / 0.07
        assert abs(ratio - round(ratio)) < 1e-9


def test_model_matches_estimate_at_center(cuberoot_data, cuberoot_cfg):
    spec = cuberoot_cfg.build_kernel()
    res = linearize_at(cuberoot_data, [2.0], 0.05, 0.01, spec, 50)
    fit = local_fit(cuberoot_data, [2.0], spec)
    assert np.allclose(res.model.predict([2.0]), point_estimate(fit),
                       atol=1e-12)
    assert contains(res.region, [2.0])


def test_linearization_spread_radius_is_eps():
    data = make_affine_dataset(m_records=40)
    res = linearize_at(data, [0.0], 0.1, 0.007, KernelSpec(bandwidth=3.0), 5)
    assert np.allclose(res.model.linearization_spread.radius, 0.007)
    assert np.allclose(res.model.linearization_spread.center, 0.0)


def test_two_dim_grid_lattice():
    # 2-d affine data: the grid is the full lattice, (2s+1)^2 points
    rng = np.random.default_rng(3)
    xs = rng.uniform(-2, 2, (60, 2))
    ys = xs @ np.array([[0.5, 0.1], [0.0, 0.3]]).T + np.array([1.0, -0.5])
    from tubempc.plant import Dataset
    data = Dataset(xs, ys, np.zeros((60, 1)), np.zeros((2, 1)))
    res = linearize_at(data, [0.0, 0.0], 0.2, 0.05,
                       KernelSpec(bandwidth=4.0, ridge=0.0), 3)
    assert res.steps_taken == 3
    assert len(res.grid) == (2 * 3 + 1) ** 2


def test_trajectory_singleton_matches_single(cuberoot_data, cuberoot_cfg):
    spec = cuberoot_cfg.build_kernel()
    single = linearize_at(cuberoot_data, [1.0], 0.05, 0.01, spec, 50)
    traj = linearize_trajectory(cuberoot_data, [[1.0]], 0.05, 0.01, spec, 50)
    assert len(traj) == 1
    assert np.array_equal(traj[0].region.radius, single.region.radius)
    assert np.array_equal(traj[0].model.A_hat, single.model.A_hat)


def test_trajectory_order_and_membership(cuberoot_data, cuberoot_cfg):
    spec = cuberoot_cfg.build_kernel()
    points = np.linspace(4.0, -1.0, 6)
    results = linearize_trajectory(cuberoot_data, [[p] for p in points],
                                   0.05, 0.01, spec, 50)
    assert len(results) == 6
    for p, res in zip(points, results):
        assert contains(res.region, [p])


def test_trajectory_duplicate_points_identical(cuberoot_data, cuberoot_cfg):
    spec = cuberoot_cfg.build_kernel()
    results = linearize_trajectory(cuberoot_data, [[0.7], [0.7]], 0.05, 0.01,
                                   spec, 50)
    assert np.array_equal(results[0].region.radius, results[1].region.radius)
    assert np.array_equal(results[0].model.a_hat, results[1].model.a_hat)


def test_bad_arguments():
    data = make_affine_dataset(m_records=20)
    spec = KernelSpec(bandwidth=2.0)
    with pytest.raises(UsageError):
        linearize_at(data, [0.0], -0.1, 0.01, spec, 5)
    with pytest.raises(UsageError):
        linearize_at(data, [0.0], 0.1, 0.0, spec, 5)
    with pytest.raises(UsageError):
        linearize_at(data, [0.0], 0.1, 0.01, spec, 0)
    with pytest.raises(UsageError):
        linearize_trajectory(data, [], 0.1, 0.01, spec, 5)


def test_audit_shells_recorded(cuberoot_data, cuberoot_cfg):
    res = linearize_at(cuberoot_data, [1.0], 0.05, 0.01,
                       cuberoot_cfg.build_kernel(), 50)
    steps = [row[0] for row in res.audit]
    assert steps == list(range(len(steps)))
    assert all(row[1] >= 1 for row in res.audit)
