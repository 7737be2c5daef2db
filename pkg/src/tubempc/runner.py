"""Experiment orchestration: data generation, estimation diagnostics,
controller comparison, the naive-tolerance sweep and the property
selftest.  Every command writes CSV ground truth plus deterministic SVG
renderings and a JSON manifest with the resolved configuration."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import estimator
from .boxes import Box, affine_image, box_subset, contains, minkowski_sum, \
    pontryagin_diff
from .config import ExperimentConfig, parse_controller
from .errors import UsageError
from .estimator import KernelSpec, local_fit
from .ftocp import stage_cost
from .linearizer import linearize_trajectory
from .loop import ClosedLoopTrace, ControllerKind, run_controller
from .plant import (Dataset, collect_dataset, step_true, substream,
                    STREAM_SELFTEST)
from .svgplot import LineChart
from .tube import propagate_tube


def _ensure_dir(path) -> Path:
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc}") from exc
    return path


def _write_manifest(out: Path, cfg: ExperimentConfig, command: str,
                    extra: dict | None = None) -> Path:
    manifest = {"command": command, "config": cfg.to_dict()}
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    with path.open("w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_csv(path: Path, header: list, rows: list) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


# -- generate-data ---------------------------------------------------------

def cmd_generate_data(cfg: ExperimentConfig, out_dir) -> dict:
    if cfg.dataset.m_records < 1:
        raise UsageError("dataset.m_records must be positive")
    out = _ensure_dir(out_dir)
    sys = cfg.build_system()
    data = collect_dataset(sys, cfg.build_dataset_plan())
    data_path = out / "dataset.csv"
    data.to_csv(data_path)
    _write_manifest(out, cfg, "generate-data",
                    {"records": len(data), "dataset": data_path.name})
    return {"dataset": data_path, "records": len(data)}


# -- estimate ---------------------------------------------------------------

def cmd_estimate(cfg: ExperimentConfig, out_dir, dataset_path=None,
                 grid_points: int = 81) -> dict:
    out = _ensure_dir(out_dir)
    sys = cfg.build_system()
    if dataset_path is not None:
        data = Dataset.from_csv(dataset_path, sys.B)
    else:
        data = collect_dataset(sys, cfg.build_dataset_plan())
    if len(data) == 0:
        raise UsageError("empty dataset")
    if data.n != 1:
        raise UsageError("the estimation report supports scalar systems only")
    spec = cfg.build_kernel()
    lo = float(cfg.dataset.state_low[0])
    hi = float(cfg.dataset.state_high[0])
    queries = np.linspace(lo, hi, grid_points)
    rows = []
    for i, q in enumerate(queries):
        f_true = float(np.atleast_1d(sys.f(np.array([q])))[0])
        f_hat = float(estimator.estimate_at(data, [q], spec)[0])
        band = estimator.bootstrap_band(data, [q], spec, cfg.estimation.alpha,
                                        cfg.estimation.b_reps, seed=(cfg.dataset.seed, i))
        rows.append([float(q), f_true, f_hat, float(band.lower[0]),
                     float(band.upper[0])])
    csv_path = out / "estimate.csv"
    _write_csv(csv_path, ["x", "f_true", "f_hat", "lower", "upper"], rows)

    chart = LineChart("Estimated vs true dynamics", "x", "f(x)")
    xs = [r[0] for r in rows]
    chart.add("true", xs, [r[1] for r in rows], color="#333333")
    chart.add("estimate", xs, [r[2] for r in rows], color="#d62728")
    chart.add("band low", xs, [r[3] for r in rows], color="#1f77b4", dashed=True)
    chart.add("band high", xs, [r[4] for r in rows], color="#1f77b4", dashed=True)
    svg_path = out / "estimate.svg"
    chart.write(svg_path)
    _write_manifest(out, cfg, "estimate", {"grid_points": grid_points})
    return {"csv": csv_path, "svg": svg_path, "rows": rows}


# -- compare -----------------------------------------------------------------

def _trace_rows(trace: ClosedLoopTrace, Q, R, x_f) -> list:
    events = {t: name for t, name in trace.events}
    rows = []
    cost = 0.0
    n_in = len(trace.inputs)
    for t in range(n_in):
        cost += stage_cost(trace.states[t], trace.inputs[t], Q, R, x_f)
        rows.append(
            [t]
            + [float(v) for v in trace.states[t]]
            + [float(v) for v in trace.inputs[t]]
            + [trace.horizons[t], int(trace.feasible_flags[t]), float(cost),
               events.get(t, "")]
        )
    rows.append(
        [n_in]
        + [float(v) for v in trace.states[n_in]]
        + [""] * len(trace.inputs[0] if trace.inputs else [0.0])
        + ["", "", float(cost), "goal" if trace.reached_goal else ""]
    )
    return rows


def write_trace_csv(path: Path, trace: ClosedLoopTrace, Q, R, x_f) -> None:
    n = trace.states[0].shape[0]
    m = trace.inputs[0].shape[0] if trace.inputs else 1
    header = (["t"] + [f"x_{i}" for i in range(n)] + [f"u_{j}" for j in range(m)]
              + ["horizon", "feasible", "cost_so_far", "event"])
    _write_csv(path, header, _trace_rows(trace, Q, R, x_f))


def write_tube_csv(path: Path, trace: ClosedLoopTrace) -> None:
    """Per-step tube dump for the last solve that produced one."""
    rows = []
    for t, tube in enumerate(trace.tubes):
        if tube is None:
            continue
        for k, box in enumerate(tube.sets):
            comp = tube.components[k - 1] if k >= 1 else None
            rows.append(
                [t, k]
                + [float(v) for v in box.center]
                + [float(v) for v in box.radius]
                + ([float(comp.disturbance.radius[0]),
                    float(comp.estimation_spread.radius[0]),
                    float(comp.linearization_spread.radius[0])]
                   if comp is not None and box.dim == 1 else ["", "", ""])
            )
    if not rows:
        return
    n = trace.states[0].shape[0]
    header = (["t", "k"] + [f"center_{i}" for i in range(n)]
              + [f"radius_{i}" for i in range(n)] + ["w_r", "s_r", "l_r"])
    _write_csv(path, header, rows)


def _slug(kind: ControllerKind) -> str:
    if kind.name == "naive":
        return f"naive_tol{kind.tol:g}".replace(".", "p")
    return kind.name


def _run_single(cfg_dict: dict, controller: str, seed: int) -> ClosedLoopTrace:
    cfg = ExperimentConfig.from_dict(cfg_dict)
    sys = cfg.build_system()
    task = cfg.build_task()
    data = collect_dataset(sys, cfg.build_dataset_plan())
    loop_cfg = cfg.build_loop_config()
    return run_controller(parse_controller(controller), sys, task, data,
                          loop_cfg, seed)


def run_many(cfg: ExperimentConfig, controllers: list, seeds: list,
             jobs: int = 1) -> dict:
    """Traces keyed by (controller label, seed); parallel over runs."""
    cfg_dict = cfg.to_dict()
    tasks = [(str(c), int(s)) for c in controllers for s in seeds]
    results = {}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {
                (c, s): pool.submit(_run_single, cfg_dict, c, s)
                for c, s in tasks
            }
            for key, fut in futures.items():
                results[key] = fut.result()
    else:
        for c, s in tasks:
            results[(c, s)] = _run_single(cfg_dict, c, s)
    return results


def summarize(traces: dict) -> list:
    """Rows: controller, runs, success_rate, mean_cost, mean_steps_to_goal,
    fallback_events."""
    by_controller: dict = {}
    for (ctrl, _seed), trace in traces.items():
        by_controller.setdefault(ctrl, []).append(trace)
    rows = []
    for ctrl in sorted(by_controller):
        runs = by_controller[ctrl]
        succ = [r for r in runs if r.reached_goal]
        steps = [r.steps_to_goal for r in succ]
        fallbacks = sum(
            sum(1 for _t, ev in r.events if ev == "safety_fallback")
            for r in runs)
        rows.append([
            ctrl, len(runs), float(len(succ)) / len(runs),
            float(np.mean([r.cumulative_cost for r in runs])),
            float(np.mean(steps)) if steps else float("nan"),
            fallbacks,
        ])
    return rows


def cmd_compare(cfg: ExperimentConfig, out_dir, jobs: int = 1) -> dict:
    out = _ensure_dir(out_dir)
    sys = cfg.build_system()
    task = cfg.build_task()
    Q = np.asarray(cfg.cost.Q, dtype=float)
    R = np.asarray(cfg.cost.R, dtype=float)
    seeds = list(cfg.run.seeds)
    controllers = list(cfg.run.controllers)
    try:
        traces = run_many(cfg, controllers, seeds, jobs)
    except Exception as exc:
        raise RuntimeError(f"comparison run failed: {exc}") from exc

    for (ctrl, seed), trace in traces.items():
        kind = parse_controller(ctrl)
        write_trace_csv(out / f"trace_{_slug(kind)}_seed{seed}.csv", trace,
                        Q, R, task.x_f)
        if kind.name == "proposed":
            write_tube_csv(out / f"tube_{_slug(kind)}_seed{seed}.csv", trace)

    rows = summarize(traces)
    _write_csv(out / "summary.csv",
               ["controller", "runs", "success_rate", "mean_cost",
                "mean_steps_to_goal", "safety_fallbacks"], rows)

    if sys.n == 1:
        palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
        chart = LineChart("Closed-loop trajectories", "t", "x")
        chart.hspan = (float(task.goal.lower[0]), float(task.goal.upper[0]))
        for i, ctrl in enumerate(controllers):
            for seed in seeds:
                tr = traces[(ctrl, seed)]
                label = parse_controller(ctrl).label() if seed == seeds[0] else ""
                chart.add(label, list(range(len(tr.states))),
                          [s[0] for s in tr.states],
                          color=palette[i % len(palette)])
        chart.write(out / "closed_loop.svg")

        t_star = cfg.run.open_loop_plot_step
        plan_chart = LineChart(f"Open-loop plans at t={t_star}", "k", "x")
        plan_chart.hspan = (float(task.goal.lower[0]), float(task.goal.upper[0]))
        for i, ctrl in enumerate(controllers):
            tr = traces[(ctrl, seeds[0])]
            if t_star < len(tr.open_loop_plans) and tr.open_loop_plans[t_star]:
                plan = tr.open_loop_plans[t_star]
                plan_chart.add(parse_controller(ctrl).label(),
                               list(range(t_star, t_star + len(plan))),
                               [p[0] for p in plan],
                               color=palette[i % len(palette)], dashed=True)
            xs = [s[0] for s in tr.states]
            plan_chart.add("", list(range(len(xs))), xs,
                           color=palette[i % len(palette)])
        plan_chart.write(out / "open_loop.svg")

    _write_manifest(out, cfg, "compare",
                    {"seeds": seeds, "controllers": controllers})
    return {"summary": rows, "traces": traces, "out": out}


# -- sweep-naive --------------------------------------------------------------

def cmd_sweep_naive(cfg: ExperimentConfig, out_dir, jobs: int = 1) -> dict:
    out = _ensure_dir(out_dir)
    seeds = list(cfg.run.seeds)
    controllers = ["proposed"] + [f"naive:{tol:g}" for tol in cfg.run.naive_tols]
    traces = run_many(cfg, controllers, seeds, jobs)
    prop = [traces[("proposed", s)] for s in seeds]
    prop_mean = float(np.mean([r.cumulative_cost for r in prop]))
    rows = []
    for tol in cfg.run.naive_tols:
        runs = [traces[(f"naive:{tol:g}", s)] for s in seeds]
        succ = [r for r in runs if r.reached_goal]
        mean_cost = float(np.mean([r.cumulative_cost for r in runs]))
        rows.append([float(tol), len(runs), float(len(succ)) / len(runs),
                     mean_cost, mean_cost / prop_mean if prop_mean > 0
                     else float("nan")])
    _write_csv(out / "sweep.csv",
               ["tol", "runs", "success_rate", "mean_cost",
                "cost_ratio_vs_proposed"], rows)
    _write_manifest(out, cfg, "sweep-naive",
                    {"proposed_mean_cost": prop_mean, "seeds": seeds})
    return {"rows": rows, "proposed_mean_cost": prop_mean, "traces": traces,
            "out": out}


# -- selftest ------------------------------------------------------------------

@dataclass
class SuiteResult:
    name: str
    passed: bool
    checks: int
    detail: str = ""


def suite_box_algebra(n_pairs: int = 1000, seed: int = 2024,
                      pontryagin=pontryagin_diff) -> SuiteResult:
    """Brute-force vertex-enumeration checks of the box operations."""
    rng = substream(seed, STREAM_SELFTEST, 1)
    checks = 0
    for _ in range(n_pairs):
        dim = int(rng.integers(1, 4))
        a = Box(rng.uniform(-2, 2, dim), rng.uniform(0, 1.5, dim))
        b = Box(rng.uniform(-2, 2, dim), rng.uniform(0, 1.5, dim))
        s = minkowski_sum(a, b)
        va, vb = a.vertices(), b.vertices()
        sums = va[:, None, :] + vb[None, :, :]
        if not np.allclose(sums.reshape(-1, dim).min(axis=0), s.lower) or \
           not np.allclose(sums.reshape(-1, dim).max(axis=0), s.upper):
            return SuiteResult("box-algebra", False, checks,
                               "minkowski bound mismatch")
        d = pontryagin(a, b)
        if not d.is_empty:
            back = minkowski_sum(d, b)
            if not box_subset(back, a, tol=1e-9):
                return SuiteResult("box-algebra", False, checks,
                                   "erosion not contained after re-summing")
        A = rng.uniform(-2, 2, (dim, dim))
        img = affine_image(A, a)
        mapped = va @ A.T
        if not np.allclose(mapped.min(axis=0), img.lower) or \
           not np.allclose(mapped.max(axis=0), img.upper):
            return SuiteResult("box-algebra", False, checks,
                               "affine image bound mismatch")
        inner = Box(a.center, a.radius * rng.uniform(0, 1, dim))
        shifted = Box(inner.center + rng.uniform(-0.2, 0.2, dim), inner.radius)
        expect = bool(np.all(shifted.lower >= a.lower - 1e-12)
                      and np.all(shifted.upper <= a.upper + 1e-12))
        if box_subset(shifted, a, tol=1e-12) != expect:
            return SuiteResult("box-algebra", False, checks,
                               "subset test disagrees with bounds")
        checks += 1
    return SuiteResult("box-algebra", True, checks)


def suite_regression_oracle(n_sets: int = 100, seed: int = 2025) -> SuiteResult:
    """local_fit against an explicitly assembled weighted LS solve."""
    rng = substream(seed, STREAM_SELFTEST, 2)
    checks = 0
    for _ in range(n_sets):
        n = int(rng.integers(1, 3))
        m_pts = int(rng.integers(n + 2, 11))
        xs = rng.uniform(-2, 2, (m_pts, n))
        ys = rng.uniform(-2, 2, (m_pts, n))
        data = Dataset(xs, ys, np.zeros((m_pts, 1)), np.zeros((n, 1)))
        q = rng.uniform(-1, 1, n)
        spec = KernelSpec(bandwidth=float(rng.uniform(2.0, 6.0)),
                          min_support=n + 1, ridge=1e-10)
        fit = local_fit(data, q, spec)
        # oracle: scalar loops over the normal equations
        w = np.array([max(0.0, 0.75 * (1 - np.sum((q - xs[j]) ** 2)
                                       / fit.bandwidth_used ** 2))
                      for j in range(m_pts)])
        p = n + 1
        G = np.zeros((p, p))
        rhs = np.zeros((p, n))
        for j in range(m_pts):
            zj = np.concatenate([[1.0], xs[j]])
            G += w[j] * np.outer(zj, zj)
            rhs += w[j] * np.outer(zj, ys[j])
        G += 1e-10 * np.eye(p)
        coef = np.linalg.solve(G, rhs)
        dev = max(float(np.max(np.abs(coef[0] - fit.a_hat))),
                  float(np.max(np.abs(coef[1:].T - fit.A_hat))))
        if dev > 1e-10:
            return SuiteResult("regression-oracle", False, checks,
                               f"deviation {dev:.2e}")
        checks += 1
    return SuiteResult("regression-oracle", True, checks)


def suite_tube_containment(cfg: ExperimentConfig, steps: int = 8,
                           n_mc: int = 500, seed: int = 2026) -> SuiteResult:
    """Monte Carlo check that true-state deviations stay inside the tube
    at the expected rate, on a zero-input nominal rollout."""
    sys = cfg.build_system()
    data = collect_dataset(sys, cfg.build_dataset_plan())
    spec = cfg.build_kernel()
    loop_cfg = cfg.build_loop_config()
    anchors = [np.asarray(cfg.task.x_s, dtype=float)]
    for _ in range(steps):
        anchors.append(estimator.estimate_at(data, anchors[-1], spec))
    results = linearize_trajectory(data, anchors, loop_cfg.dx,
                                   loop_cfg.eps_lin, spec, loop_cfg.max_steps)
    models = []
    for k in range(steps):
        spread = estimator.estimation_error_set(
            data, results[k].grid, spec, loop_cfg.alpha, loop_cfg.b_reps,
            seed=(seed, k), center_band=loop_cfg.center_band)
        models.append(results[k].model.with_estimation_spread(spread))
    tube = propagate_tube(models, sys.noise.disturbance_box(), loop_cfg.alpha)

    rng = substream(seed, STREAM_SELFTEST, 3)
    alive = np.ones(n_mc, dtype=bool)
    rates = []
    states = np.tile(np.asarray(cfg.task.x_s, dtype=float), (n_mc, 1))
    u0 = np.zeros(sys.m)
    for k in range(steps):
        for i in range(n_mc):
            states[i] = step_true(sys, states[i], u0, rng=rng)
        for i in range(n_mc):
            if alive[i] and not contains(tube.sets[k + 1],
                                         states[i] - anchors[k + 1]):
                alive[i] = False
        rates.append(float(np.mean(alive)))
    alpha = loop_cfg.alpha
    bounds = [(1 - alpha) ** (k + 1) - 0.05 for k in range(steps)]
    ok = all(r >= b for r, b in zip(rates, bounds))
    detail = " ".join(f"k={k + 1}:{r:.3f}>={b:.3f}"
                      for k, (r, b) in enumerate(zip(rates, bounds)))
    return SuiteResult("tube-containment", ok, n_mc * steps, detail)


def cmd_selftest(cfg: ExperimentConfig, out_dir=None,
                 pontryagin=pontryagin_diff) -> dict:
    suites = [
        suite_box_algebra(pontryagin=pontryagin),
        suite_regression_oracle(),
        suite_tube_containment(cfg),
    ]
    lines = []
    for s in suites:
        status = "PASS" if s.passed else "FAIL"
        line = f"[{status}] {s.name}: {s.checks} checks"
        if s.detail:
            line += f" ({s.detail})"
        lines.append(line)
    report = "\n".join(lines) + "\n"
    if out_dir is not None:
        out = _ensure_dir(out_dir)
        (out / "selftest.txt").write_text(report)
        _write_manifest(out, cfg, "selftest",
                        {"passed": all(s.passed for s in suites)})
    return {"suites": suites, "report": report,
            "passed": all(s.passed for s in suites)}
