"""Closed-loop controllers.

Four controllers run against the true plant under a shared, pre-drawn
disturbance stream per seed, so cross-controller comparisons are paired:

* proposed      -- adaptive linearization regions, bootstrap spread,
                   error-tube tightening, shrinking-horizon fallback.
* unconstrained -- same per-stage models, but no region/tightening
                   constraints.
* linear        -- one model fit at the current state, used for the whole
                   horizon, fixed horizon, plain constraints.
* naive         -- fixed-radius regions around the previous plan instead
                   of adaptive ones; no error tube.

Bookkeeping conventions (the strategy needs a previous plan which does
not exist before the first feasible solve):

* When no plan is available, linearization anchors are regenerated as
  equally spaced points from the current state to the goal state, with a
  duplicated terminal point; at t = 0 this is the required equally
  spaced initialization from the start state.
* When both the full and the shrunk problem are infeasible, the proposed
  controller applies the next element of the last open-loop input
  sequence (zero when none exists) and records a safety_fallback event;
  the baselines apply zero input.
* At t = 0 the shrunk fallback reuses the current step's own sets (there
  is no previous step).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .boxes import Box, contains, intersect, pontryagin_diff
from .errors import UsageError
from .estimator import KernelSpec, local_fit
from .ftocp import build_ftocp, mpc_policy, solve_ftocp, stage_cost
from .linearizer import AffineModel, linearize_trajectory
from .plant import (STREAM_NOISE, Dataset, TaskSpec, TrueSystem,
                    sample_truncated_normal, step_true, substream)
from .tube import ErrorTube, propagate_tube
from . import estimator


@dataclass(frozen=True)
class ControllerKind:
    name: str
    tol: float | None = None

    def __post_init__(self):
        if self.name not in ("proposed", "linear", "unconstrained", "naive"):
            raise UsageError(f"unknown controller {self.name!r}")
        if self.name == "naive":
            if self.tol is None or self.tol <= 0:
                raise UsageError("naive controller needs tol > 0")
        elif self.tol is not None:
            raise UsageError(f"{self.name} takes no tol")

    def label(self) -> str:
        return f"naive(tol={self.tol:g})" if self.name == "naive" else self.name


@dataclass(frozen=True)
class LoopConfig:
    """Shared controller knobs (model fitting, regions, tube, cost)."""

    kernel: KernelSpec
    dx: float
    eps_lin: float
    max_steps: int
    alpha: float
    b_reps: int
    Q: np.ndarray
    R: np.ndarray
    Q_terminal: np.ndarray
    center_band: bool = True


@dataclass
class ClosedLoopTrace:
    controller: str
    seed: int
    states: list = field(default_factory=list)
    inputs: list = field(default_factory=list)
    horizons: list = field(default_factory=list)
    feasible_flags: list = field(default_factory=list)
    open_loop_plans: list = field(default_factory=list)
    tubes: list = field(default_factory=list)
    linearizations: list = field(default_factory=list)
    events: list = field(default_factory=list)
    cumulative_cost: float = 0.0
    reached_goal: bool = False
    steps_to_goal: int | None = None

    def final_state(self) -> np.ndarray:
        return self.states[-1]


def draw_noise_sequence(sys: TrueSystem, n_steps: int, seed: int) -> list:
    """Disturbances w_0..w_{n_steps-1}; a pure function of the seed, so
    every controller sees the same stream."""
    rng = substream(seed, STREAM_NOISE)
    return [sample_truncated_normal(sys.noise, rng) for _ in range(n_steps)]


def _anchors_from(plan: list | None, x_t: np.ndarray, x_f: np.ndarray,
                  horizon: int) -> list:
    """Linearization points for the next solve: the carried plan padded
    with its terminal point, or a fresh equally spaced fallback."""
    if plan:
        pts = [np.asarray(p, dtype=float) for p in plan]
    else:
        pts = [x_t + s * (x_f - x_t) for s in np.linspace(0.0, 1.0, horizon)] \
            if horizon > 1 else [x_t.copy()]
    while len(pts) < horizon + 1:
        pts.append(pts[-1].copy())
    return pts[:horizon + 1]


@dataclass
class _StepSets:
    """Artifacts of one full-horizon attempt, kept for the next step's
    shrunk fallback."""

    models: list
    regions: list            # stage constraint boxes (already cut to X)
    tube: ErrorTube | None


def _proposed_sets(data: Dataset, anchors: list, task: TaskSpec,
                   cfg: LoopConfig, disturbance: Box, boot_key: tuple,
                   audit_sink: list | None) -> _StepSets:
    horizon = len(anchors) - 1
    results = linearize_trajectory(data, anchors, cfg.dx, cfg.eps_lin,
                                   cfg.kernel, cfg.max_steps)
    if audit_sink is not None:
        audit_sink.append(results)
    models = []
    for k in range(horizon):
        spread = estimator.estimation_error_set(
            data, results[k].grid, cfg.kernel, cfg.alpha, cfg.b_reps,
            seed=boot_key + (k,), center_band=cfg.center_band)
        models.append(results[k].model.with_estimation_spread(spread))
    tube = propagate_tube(models, disturbance, cfg.alpha)
    regions = [intersect(results[k].region, task.state_box)
               for k in range(horizon)]
    return _StepSets(models, regions, tube)


def _naive_sets(data: Dataset, anchors: list, task: TaskSpec, cfg: LoopConfig,
                tol: float) -> _StepSets:
    horizon = len(anchors) - 1
    models, regions = [], []
    for k in range(horizon):
        fit = local_fit(data, anchors[k], cfg.kernel)
        region = Box(np.asarray(anchors[k], dtype=float),
                     np.full(data.n, tol))
        models.append(AffineModel(fit.a_hat, fit.A_hat, data.B.copy(), region,
                                  Box(np.zeros(data.n), np.zeros(data.n)),
                                  Box(np.zeros(data.n), np.zeros(data.n))))
        regions.append(intersect(region, task.state_box))
    return _StepSets(models, regions, None)


def _unconstrained_sets(data: Dataset, anchors: list, task: TaskSpec,
                        cfg: LoopConfig) -> _StepSets:
    horizon = len(anchors) - 1
    models, regions = [], []
    for k in range(horizon):
        fit = local_fit(data, anchors[k], cfg.kernel)
        models.append(AffineModel(fit.a_hat, fit.A_hat, data.B.copy(),
                                  task.state_box,
                                  Box(np.zeros(data.n), np.zeros(data.n)),
                                  Box(np.zeros(data.n), np.zeros(data.n))))
        regions.append(task.state_box)
    return _StepSets(models, regions, None)


def _tightened(sets: _StepSets, task: TaskSpec, horizon: int, offset: int):
    """Stage boxes, terminal box and initial membership set for a solve
    using ``sets`` shifted by ``offset`` steps (0 = full attempt, 1 =
    shrunk fallback reusing the previous step's sets)."""
    stage_boxes = []
    for j in range(horizon):
        region = sets.regions[offset + j]
        if sets.tube is not None:
            region = pontryagin_diff(region, sets.tube.sets[offset + j])
        stage_boxes.append(region)
    terminal = task.goal
    if sets.tube is not None:
        terminal = pontryagin_diff(terminal, sets.tube.sets[offset + horizon])
    init_set = None
    if offset > 0 and sets.tube is not None:
        e0 = sets.tube.sets[offset]
        init_set = Box(e0.center.copy(), e0.radius.copy())
    models = sets.models[offset:offset + horizon]
    return models, stage_boxes, terminal, init_set


def _solve_horizon(sets: _StepSets, task: TaskSpec, cfg: LoopConfig,
                   x_t: np.ndarray, horizon: int, offset: int):
    models, stage_boxes, terminal, init_set = _tightened(sets, task, horizon,
                                                         offset)
    problem = build_ftocp(models, stage_boxes, terminal, task.input_box, x_t,
                          cfg.Q, cfg.R, cfg.Q_terminal, task.x_f,
                          init_set=init_set)
    return solve_ftocp(problem)


def _run_shrinking(sys: TrueSystem, task: TaskSpec, data: Dataset,
                   cfg: LoopConfig, seed: int, kind: ControllerKind) -> ClosedLoopTrace:
    """Shared loop for the proposed, unconstrained and naive controllers."""
    noise = draw_noise_sequence(sys, task.n_steps, seed)
    disturbance = sys.noise.disturbance_box()
    trace = ClosedLoopTrace(kind.label(), seed)
    x = task.x_s.copy()
    trace.states.append(x.copy())
    horizon = task.t0_horizon
    plan: list | None = None
    pending_inputs: list = []
    carried: _StepSets | None = None
    zero_u = np.zeros(sys.m)

    for t in range(task.n_steps):
        if contains(task.goal, x):
            trace.reached_goal = True
            trace.steps_to_goal = t
            return trace
        if horizon < 1:
            if not any(ev == "horizon_exhausted" for _, ev in trace.events):
                trace.events.append((t, "horizon_exhausted"))
            u, sol, sets, feasible = zero_u.copy(), None, None, False
        else:
            anchors = _anchors_from(plan, x, task.x_f, horizon)
            audit = trace.linearizations if kind.name == "proposed" else None
            if kind.name == "proposed":
                sets = _proposed_sets(data, anchors, task, cfg, disturbance,
                                      (seed, t), audit)
            elif kind.name == "naive":
                sets = _naive_sets(data, anchors, task, cfg, kind.tol)
            else:
                sets = _unconstrained_sets(data, anchors, task, cfg)
            sol = _solve_horizon(sets, task, cfg, x, horizon, offset=0)
            feasible = sol.feasible
            if not feasible:
                fb_source = carried if carried is not None else sets
                fb = None
                if horizon - 1 >= 1 and len(fb_source.models) >= horizon:
                    fb = _solve_horizon(fb_source, task, cfg, x, horizon - 1,
                                        offset=1)
                if fb is not None and fb.feasible:
                    trace.events.append((t, "shrunk_horizon"))
                    sol = fb
                else:
                    trace.events.append((t, "safety_fallback"))
                    sol = None

            if sol is not None:
                u = mpc_policy(sol)
            elif kind.name == "proposed" and pending_inputs:
                u = np.asarray(pending_inputs[0], dtype=float)
            else:
                u = zero_u.copy()
            u = np.clip(u, task.input_box.lower, task.input_box.upper)

        trace.feasible_flags.append(feasible)
        trace.horizons.append(horizon)
        trace.open_loop_plans.append([s.copy() for s in sol.x_seq] if sol else None)
        trace.tubes.append(sets.tube if sets is not None else None)
        trace.cumulative_cost += stage_cost(x, u, cfg.Q, cfg.R, task.x_f)
        trace.inputs.append(u.copy())
        x = step_true(sys, x, u, w=noise[t])
        trace.states.append(x.copy())

        if sol is not None:
            plan = [s.copy() for s in sol.x_seq[1:]]
            pending_inputs = [v.copy() for v in sol.u_seq[1:]]
            horizon = horizon if feasible else max(horizon - 1, 0)
        else:
            plan = plan[1:] if plan and len(plan) > 1 else None
            pending_inputs = pending_inputs[1:] if pending_inputs else []
            horizon = max(horizon - 1, 0)
        carried = sets if sets is not None else carried

    if contains(task.goal, x):
        trace.reached_goal = True
        trace.steps_to_goal = task.n_steps
    return trace


def run_proposed(sys: TrueSystem, task: TaskSpec, data: Dataset,
                 cfg: LoopConfig, seed: int) -> ClosedLoopTrace:
    return _run_shrinking(sys, task, data, cfg, seed, ControllerKind("proposed"))


def run_unconstrained(sys: TrueSystem, task: TaskSpec, data: Dataset,
                      cfg: LoopConfig, seed: int) -> ClosedLoopTrace:
    return _run_shrinking(sys, task, data, cfg, seed,
                          ControllerKind("unconstrained"))


def run_naive(sys: TrueSystem, task: TaskSpec, data: Dataset, cfg: LoopConfig,
              seed: int, tol: float) -> ClosedLoopTrace:
    return _run_shrinking(sys, task, data, cfg, seed,
                          ControllerKind("naive", tol))


def run_linear(sys: TrueSystem, task: TaskSpec, data: Dataset, cfg: LoopConfig,
               seed: int) -> ClosedLoopTrace:
    """One model around the current state for the whole horizon; fixed
    horizon, no regions, no tube."""
    noise = draw_noise_sequence(sys, task.n_steps, seed)
    trace = ClosedLoopTrace("linear", seed)
    x = task.x_s.copy()
    trace.states.append(x.copy())
    horizon = task.t0_horizon
    zero_u = np.zeros(sys.m)

    for t in range(task.n_steps):
        if contains(task.goal, x):
            trace.reached_goal = True
            trace.steps_to_goal = t
            return trace
        fit = local_fit(data, x, cfg.kernel)
        model = AffineModel(fit.a_hat, fit.A_hat, data.B.copy(),
                            task.state_box,
                            Box(np.zeros(sys.n), np.zeros(sys.n)),
                            Box(np.zeros(sys.n), np.zeros(sys.n)))
        problem = build_ftocp([model] * horizon, [task.state_box] * horizon,
                              task.goal, task.input_box, x, cfg.Q, cfg.R,
                              cfg.Q_terminal, task.x_f)
        sol = solve_ftocp(problem)
        if sol.feasible:
            u = mpc_policy(sol)
        else:
            trace.events.append((t, "infeasible_zero_input"))
            u = zero_u.copy()
        u = np.clip(u, task.input_box.lower, task.input_box.upper)

        trace.feasible_flags.append(sol.feasible)
        trace.horizons.append(horizon)
        trace.open_loop_plans.append(
            [s.copy() for s in sol.x_seq] if sol.feasible else None)
        trace.tubes.append(None)
        trace.cumulative_cost += stage_cost(x, u, cfg.Q, cfg.R, task.x_f)
        trace.inputs.append(u.copy())
        x = step_true(sys, x, u, w=noise[t])
        trace.states.append(x.copy())

    if contains(task.goal, x):
        trace.reached_goal = True
        trace.steps_to_goal = task.n_steps
    return trace


def run_controller(kind: ControllerKind, sys: TrueSystem, task: TaskSpec,
                   data: Dataset, cfg: LoopConfig, seed: int) -> ClosedLoopTrace:
    if kind.name == "proposed":
        return run_proposed(sys, task, data, cfg, seed)
    if kind.name == "linear":
        return run_linear(sys, task, data, cfg, seed)
    if kind.name == "unconstrained":
        return run_unconstrained(sys, task, data, cfg, seed)
    return run_naive(sys, task, data, cfg, seed, kind.tol)
