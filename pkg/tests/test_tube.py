import numpy as np
import pytest

from tubempc.boxes import Box, contains
from tubempc.errors import UsageError
from tubempc.linearizer import AffineModel
from tubempc.tube import ErrorTube, propagate_tube, tighten_constraints


def scalar_model(A, s_radius, l_radius, region_radius=5.0):
    return AffineModel(
        a_hat=np.zeros(1), A_hat=np.array([[A]]), B=np.eye(1),
        region=Box([0.0], [region_radius]),
        linearization_spread=Box([0.0], [l_radius]),
        estimation_spread=Box([0.0], [s_radius]))


def test_hand_recursion():
    # A=0.5, W +-0.05, S +-0.02, L +-0.01: E1 = +-0.08, E2 = 0.5*0.08+0.08
    models = [scalar_model(0.5, 0.02, 0.01) for _ in range(2)]
    tube = propagate_tube(models, Box([0.0], [0.05]), 0.05)
    assert np.allclose(tube.sets[0].radius, 0.0)
    assert np.isclose(tube.sets[1].radius[0], 0.08)
    assert np.isclose(tube.sets[2].radius[0], 0.12)


def test_zero_boxes_stay_zero():
    models = [scalar_model(0.7, 0.0, 0.0) for _ in range(4)]
    tube = propagate_tube(models, Box([0.0], [0.0]), 0.05)
    for box in tube.sets:
        assert np.allclose(box.radius, 0.0) and np.allclose(box.center, 0.0)


def test_memoryless_when_A_zero():
    models = [scalar_model(0.0, 0.02, 0.01) for _ in range(3)]
    tube = propagate_tube(models, Box([0.0], [0.05]), 0.05)
    for k in (1, 2, 3):
        assert np.isclose(tube.sets[k].radius[0], 0.08)


def test_contractive_fixed_point():
    # constant contractive A: radii approach r_inf = inc / (1 - |A|)
    inc = 0.05 + 0.02 + 0.01
    A = 0.6
    models = [scalar_model(A, 0.02, 0.01) for _ in range(60)]
    tube = propagate_tube(models, Box([0.0], [0.05]), 0.05)
    r_inf = inc / (1 - A)
    assert abs(tube.sets[-1].radius[0] - r_inf) < 1e-8
    # and the recursion is monotone toward it
    radii = [b.radius[0] for b in tube.sets]
    assert all(radii[i] <= radii[i + 1] + 1e-12 for i in range(len(radii) - 1))


def test_monte_carlo_containment():
    # sampled error trajectories never leave the recursion's boxes
    rng = np.random.default_rng(8)
    A_list = [0.5, -0.8, 0.3, 0.9]
    models = [scalar_model(A, 0.02, 0.01) for A in A_list]
    W = Box([0.0], [0.05])
    tube = propagate_tube(models, W, 0.05)
    n_mc = 100_000
    e = np.zeros(n_mc)
    for k, A in enumerate(A_list):
        w = rng.uniform(-0.05, 0.05, n_mc)
        s = rng.uniform(-0.02, 0.02, n_mc)
        l = rng.uniform(-0.01, 0.01, n_mc)
        e = A * e + w + s + l
        r = tube.sets[k + 1].radius[0]
        assert np.all(np.abs(e) <= r + 1e-12)


def test_monotone_in_disturbance():
    models = [scalar_model(0.5, 0.02, 0.01) for _ in range(5)]
    small = propagate_tube(models, Box([0.0], [0.05]), 0.05)
    large = propagate_tube(models, Box([0.0], [0.08]), 0.05)
    for a, b in zip(small.sets, large.sets):
        assert np.all(b.radius >= a.radius - 1e-12)


def test_propagate_requires_spread():
    m = AffineModel(np.zeros(1), np.eye(1) * 0.5, np.eye(1),
                    Box([0.0], [1.0]), Box([0.0], [0.01]))
    with pytest.raises(UsageError):
        propagate_tube([m], Box([0.0], [0.05]), 0.05)
    with pytest.raises(UsageError):
        propagate_tube([], Box([0.0], [0.05]), 0.05)


def test_components_audit():
    models = [scalar_model(0.5, 0.02, 0.01)]
    tube = propagate_tube(models, Box([0.0], [0.05]), 0.05)
    step = tube.components[0]
    assert np.isclose(step.disturbance.radius[0], 0.05)
    assert np.isclose(step.estimation_spread.radius[0], 0.02)
    assert np.isclose(step.linearization_spread.radius[0], 0.01)
    assert np.isclose(step.propagated.radius[0], 0.0)


def test_tighten_basic_and_empty():
    models = [scalar_model(0.0, 0.0, 0.0) for _ in range(2)]
    tube = ErrorTube([Box([0.0], [0.0]), Box([0.0], [0.2]), Box([0.0], [0.3])],
                     0.05, [])
    regions = [Box([0.0], [1.0]), Box([0.0], [0.1])]
    goal = Box([0.0], [0.5])
    tightened = tighten_constraints(regions, goal, tube)
    assert np.isclose(tightened[0].radius[0], 1.0)     # E_0 is zero
    assert tightened[1].is_empty                       # 0.1 - 0.2 < 0
    assert np.isclose(tightened[2].radius[0], 0.2)     # goal minus E_2


def test_tighten_length_mismatch():
    tube = ErrorTube([Box([0.0], [0.0]), Box([0.0], [0.1])], 0.05, [])
    with pytest.raises(UsageError):
        tighten_constraints([], Box([0.0], [1.0]), tube)
