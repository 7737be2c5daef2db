"""Experiment configuration: a versioned, JSON-round-trippable schema and
builders that turn a config into plant/task/controller objects."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .boxes import Box
from .errors import UsageError
from .estimator import KernelSpec
from .loop import ControllerKind, LoopConfig
from .plant import (DatasetPlan, NoiseSpec, TaskSpec, TrueSystem,
                    affine_system, cuberoot_system)

SCHEMA_VERSION = 1


@dataclass
class SystemConfig:
    name: str = "cuberoot"            # "cuberoot" or "affine"
    affine_a: list = field(default_factory=lambda: [0.0])
    affine_A: list = field(default_factory=lambda: [[0.5]])
    affine_B: list = field(default_factory=lambda: [[1.0]])


@dataclass
class NoiseConfig:
    mu: list = field(default_factory=lambda: [0.0])
    sigma: list = field(default_factory=lambda: [0.2])
    tau: list = field(default_factory=lambda: [0.05])


@dataclass
class TaskConfig:
    x_s: list = field(default_factory=lambda: [4.0])
    x_f: list = field(default_factory=lambda: [-1.0])
    u_f: list = field(default_factory=lambda: [0.0])
    goal_center: list = field(default_factory=lambda: [-1.0])
    goal_radius: list = field(default_factory=lambda: [0.1])
    state_low: list = field(default_factory=lambda: [-3.0])
    state_high: list = field(default_factory=lambda: [5.0])
    input_low: list = field(default_factory=lambda: [-3.0])
    input_high: list = field(default_factory=lambda: [3.0])
    n_steps: int = 8
    t0_horizon: int = 6


@dataclass
class KernelConfig:
    bandwidth: float | None = 0.4
    min_support: int = 3
    ridge: float = 1e-8


@dataclass
class LinearizationConfig:
    dx: float = 0.05
    eps_lin: float = 0.01
    max_steps: int = 50


@dataclass
class EstimationConfig:
    alpha: float = 0.05
    b_reps: int = 200
    center_band: bool = True


@dataclass
class CostConfig:
    Q: list = field(default_factory=lambda: [[1.0]])
    R: list = field(default_factory=lambda: [[100.0]])
    Q_terminal: list = field(default_factory=lambda: [[1.0]])


@dataclass
class DatasetConfig:
    m_records: int = 200
    state_low: list = field(default_factory=lambda: [-2.0])
    state_high: list = field(default_factory=lambda: [4.5])
    noisy: bool = False
    seed: int = 7


@dataclass
class RunConfig:
    seeds: list = field(default_factory=lambda: list(range(10)))
    controllers: list = field(default_factory=lambda: [
        "proposed", "linear", "unconstrained"])
    naive_tols: list = field(default_factory=lambda: [
        round(0.1 * k, 1) for k in range(1, 11)])
    open_loop_plot_step: int = 4


@dataclass
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    system: SystemConfig = field(default_factory=SystemConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    task: TaskConfig = field(default_factory=TaskConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    linearization: LinearizationConfig = field(default_factory=LinearizationConfig)
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    cost: CostConfig = field(default_factory=CostConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    run: RunConfig = field(default_factory=RunConfig)
    output_dir: str = "out"

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise UsageError("config must be a JSON object")
        version = d.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise UsageError(f"unsupported config schema version {version}")
        cfg = ExperimentConfig()
        sections = {
            "system": SystemConfig, "noise": NoiseConfig, "task": TaskConfig,
            "kernel": KernelConfig, "linearization": LinearizationConfig,
            "estimation": EstimationConfig, "cost": CostConfig,
            "dataset": DatasetConfig, "run": RunConfig,
        }
        for key, cls in sections.items():
            if key in d:
                base = getattr(cfg, key)
                fields = {f for f in base.__dataclass_fields__}
                unknown = set(d[key]) - fields
                if unknown:
                    raise UsageError(f"unknown config keys in {key}: {sorted(unknown)}")
                setattr(cfg, key, cls(**d[key]))
        if "output_dir" in d:
            cfg.output_dir = str(d["output_dir"])
        unknown = set(d) - set(sections) - {"schema_version", "output_dir"}
        if unknown:
            raise UsageError(f"unknown top-level config keys: {sorted(unknown)}")
        return cfg

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @staticmethod
    def from_json_file(path) -> "ExperimentConfig":
        path = Path(path)
        try:
            with path.open() as fh:
                return ExperimentConfig.from_dict(json.load(fh))
        except FileNotFoundError as exc:
            raise UsageError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config is not valid JSON: {exc}") from exc

    # -- builders ----------------------------------------------------------

    def build_system(self) -> TrueSystem:
        noise = NoiseSpec(self.noise.mu, self.noise.sigma, self.noise.tau)
        if self.system.name == "cuberoot":
            return cuberoot_system(noise)
        if self.system.name == "affine":
            return affine_system(self.system.affine_a, self.system.affine_A,
                                 self.system.affine_B, noise)
        raise UsageError(f"unknown system {self.system.name!r}")

    def build_task(self) -> TaskSpec:
        t = self.task
        return TaskSpec(
            x_s=t.x_s, x_f=t.x_f, u_f=t.u_f,
            goal=Box(np.asarray(t.goal_center, dtype=float),
                     np.asarray(t.goal_radius, dtype=float)),
            state_box=Box.from_bounds(t.state_low, t.state_high),
            input_box=Box.from_bounds(t.input_low, t.input_high),
            n_steps=t.n_steps, t0_horizon=t.t0_horizon)

    def build_kernel(self) -> KernelSpec:
        return KernelSpec(self.kernel.bandwidth, self.kernel.min_support,
                          self.kernel.ridge)

    def build_dataset_plan(self) -> DatasetPlan:
        d = self.dataset
        return DatasetPlan(
            m_records=d.m_records,
            state_box=Box.from_bounds(d.state_low, d.state_high),
            input_box=Box.from_bounds(self.task.input_low, self.task.input_high),
            noisy=d.noisy, seed=d.seed)

    def build_loop_config(self) -> LoopConfig:
        return LoopConfig(
            kernel=self.build_kernel(),
            dx=self.linearization.dx,
            eps_lin=self.linearization.eps_lin,
            max_steps=self.linearization.max_steps,
            alpha=self.estimation.alpha,
            b_reps=self.estimation.b_reps,
            Q=np.asarray(self.cost.Q, dtype=float),
            R=np.asarray(self.cost.R, dtype=float),
            Q_terminal=np.asarray(self.cost.Q_terminal, dtype=float),
            center_band=self.estimation.center_band)

    def controller_kinds(self) -> list:
        return [parse_controller(c) for c in self.run.controllers]


def parse_controller(text: str) -> ControllerKind:
    """'proposed' | 'linear' | 'unconstrained' | 'naive:<tol>'."""
    if isinstance(text, ControllerKind):
        return text
    parts = str(text).split(":")
    if parts[0] == "naive":
        if len(parts) != 2:
            raise UsageError("naive controller must be written naive:<tol>")
        try:
            return ControllerKind("naive", float(parts[1]))
        except ValueError as exc:
            raise UsageError(f"bad naive tolerance {parts[1]!r}") from exc
    if len(parts) != 1:
        raise UsageError(f"bad controller spec {text!r}")
    return ControllerKind(parts[0])


def default_cuberoot_config() -> ExperimentConfig:
    """Benchmark configuration for the scalar cube-root plant."""
    return ExperimentConfig()


def default_affine_config() -> ExperimentConfig:
    """Exactly affine sanity-check plant with negligible noise and wide
    constraints; the robust controller should match plain MPC here."""
    cfg = ExperimentConfig()
    cfg.system = SystemConfig(name="affine", affine_a=[2.0],
                              affine_A=[[0.5]], affine_B=[[1.0]])
    cfg.noise = NoiseConfig(mu=[0.0], sigma=[0.0], tau=[1e-9])
    cfg.task = TaskConfig(
        x_s=[8.0], x_f=[4.0], u_f=[0.0],
        goal_center=[4.0], goal_radius=[0.5],
        state_low=[-20.0], state_high=[20.0],
        input_low=[-10.0], input_high=[10.0],
        n_steps=8, t0_horizon=5)
    cfg.kernel = KernelConfig(bandwidth=4.0)
    cfg.linearization = LinearizationConfig(dx=0.5, eps_lin=1e-6, max_steps=50)
    cfg.cost = CostConfig(Q=[[1.0]], R=[[1.0]], Q_terminal=[[1.0]])
    cfg.dataset = DatasetConfig(m_records=200, state_low=[-12.0],
                                state_high=[12.0], noisy=False, seed=11)
    return cfg


BUILTIN_CONFIGS = {
    "cuberoot": default_cuberoot_config,
    "affine": default_affine_config,
}
