import numpy as np
import pytest

from tubempc.config import default_affine_config, default_cuberoot_config
from tubempc.plant import collect_dataset


@pytest.fixture(scope="session")
def cuberoot_cfg():
    return default_cuberoot_config()


@pytest.fixture(scope="session")
def cuberoot_sys(cuberoot_cfg):
    return cuberoot_cfg.build_system()


@pytest.fixture(scope="session")
def cuberoot_task(cuberoot_cfg):
    return cuberoot_cfg.build_task()


@pytest.fixture(scope="session")
def cuberoot_data(cuberoot_cfg, cuberoot_sys):
    return collect_dataset(cuberoot_sys, cuberoot_cfg.build_dataset_plan())


@pytest.fixture(scope="session")
def cuberoot_loop_cfg(cuberoot_cfg):
    return cuberoot_cfg.build_loop_config()


@pytest.fixture(scope="session")
def affine_cfg():
    return default_affine_config()


def make_affine_dataset(a=2.0, A=0.5, m_records=60, lo=-5.0, hi=5.0, seed=3):
    """Noise-free records from the scalar affine map f(x) = a + A x."""
    from tubempc.boxes import Box
    from tubempc.plant import (DatasetPlan, NoiseSpec, affine_system,
                               collect_dataset)
    noise = NoiseSpec([0.0], [0.0], [1e-12])
    sys = affine_system([a], [[A]], [[1.0]], noise)
    plan = DatasetPlan(m_records, Box.from_bounds([lo], [hi]),
                       Box.from_bounds([-2.0], [2.0]), seed=seed)
    return collect_dataset(sys, plan)
