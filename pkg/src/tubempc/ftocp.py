"""Finite-time optimal control problem over an affine time-varying model.

The problem is assembled in condensed form: states are eliminated
through the dynamics, leaving decision variables [x_0, u_0..u_{T-1}].
Box constraints become dense inequality rows; degenerate (zero-width)
sides become equality rows.  The backend is cvxopt's interior-point QP,
wrapped behind a small contract: global optimum with a checked KKT
residual, or an explicit infeasibility flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from cvxopt import matrix as cvx_matrix
from cvxopt import solvers as cvx_solvers

from .boxes import Box, contains, intersect
from .errors import SolverError, UsageError
from .linearizer import AffineModel

KKT_TOL = 1e-6          # optimality contract on feasible solves
FEAS_TOL = 1e-7         # infeasibility detection, looser than optimality
_DEGENERATE_RADIUS = 1e-12
_SOLVER_OPTIONS = {
    "show_progress": False,
    "abstol": 1e-10,
    "reltol": 1e-10,
    "feastol": 1e-9,
    "maxiters": 200,
}


def stage_cost(x, u, Q, R, x_f) -> float:
    dx = np.atleast_1d(x) - np.atleast_1d(x_f)
    u = np.atleast_1d(u)
    return float(dx @ np.atleast_2d(Q) @ dx + u @ np.atleast_2d(R) @ u)


@dataclass(frozen=True)
class FtocpProblem:
    models: list                      # AffineModel, length T
    stage_boxes: list                 # Box | None per stage 0..T-1
    terminal_box: Box
    input_box: Box
    x_t: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Q_terminal: np.ndarray
    x_f: np.ndarray
    init_set: Box | None = None       # membership box for x_0 - x_t; None = equality
    infeasible_reason: str | None = field(default=None)

    @property
    def T(self) -> int:
        return len(self.models)

    @property
    def n(self) -> int:
        return self.x_t.shape[0]

    @property
    def m(self) -> int:
        return self.models[0].B.shape[1]

    @property
    def state_var_count(self) -> int:
        return (self.T + 1) * self.n

    @property
    def input_var_count(self) -> int:
        return self.T * self.m

    def dump_text(self) -> str:
        """Plain-text dump of the assembled QP for external cross-checks."""
        H, g, const, G, h, A, b, _ = _assemble(self)
        lines = ["# condensed QP: minimize v' H v + g' v + const",
                 f"# v = [x_0 ({self.n}), u_0..u_{{{self.T - 1}}} ({self.m} each)]",
                 f"const = {const!r}", "H ="]
        lines += [" ".join(repr(x) for x in row) for row in H]
        lines.append("g = " + " ".join(repr(x) for x in g))
        lines.append(f"# inequalities G v <= h ({G.shape[0]} rows)")
        for row, rhs in zip(G, h):
            lines.append(" ".join(repr(x) for x in row) + " | " + repr(rhs))
        lines.append(f"# equalities A v = b ({A.shape[0]} rows)")
        for row, rhs in zip(A, b):
            lines.append(" ".join(repr(x) for x in row) + " | " + repr(rhs))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class FtocpSolution:
    feasible: bool
    u_seq: list
    x_seq: list
    cost: float
    solver_stats: dict


def _validate_cost(Q, R, Q_terminal):
    for name, M, strict in (("Q", Q, False), ("R", R, True),
                            ("Q_terminal", Q_terminal, False)):
        M = np.atleast_2d(M)
        if not np.allclose(M, M.T, atol=1e-10):
            raise UsageError(f"{name} must be symmetric")
        eigs = np.linalg.eigvalsh(M)
        if strict and eigs.min() <= 0:
            raise UsageError(f"{name} must be positive definite")
        if not strict and eigs.min() < -1e-10:
            raise UsageError(f"{name} must be positive semidefinite")


def build_ftocp(models: list, stage_boxes: list, terminal_box: Box,
                input_box: Box, x_t, Q, R, Q_terminal, x_f,
                init_set: Box | None = None) -> FtocpProblem:
    """Assemble the horizon-T problem; empty constraint sets mark it
    infeasible by construction without invoking the solver."""
    if not models:
        raise UsageError("need at least one model (T >= 1)")
    x_t = np.atleast_1d(np.asarray(x_t, dtype=float))
    x_f = np.atleast_1d(np.asarray(x_f, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    Q_terminal = np.atleast_2d(np.asarray(Q_terminal, dtype=float))
    _validate_cost(Q, R, Q_terminal)
    n = x_t.shape[0]
    T = len(models)
    if len(stage_boxes) != T:
        raise UsageError(f"{len(stage_boxes)} stage boxes for horizon {T}")
    for model in models:
        if model.A_hat.shape != (n, n) or model.B.shape[0] != n:
            raise UsageError("model dimensions inconsistent with x_t")
    if terminal_box.dim != n or any(b is not None and b.dim != n for b in stage_boxes):
        raise UsageError("constraint box dimension mismatch")

    reason = None
    if terminal_box.is_empty:
        reason = "terminal set empty after tightening"
    elif input_box.is_empty:
        reason = "input set empty"
    elif any(b is not None and b.is_empty for b in stage_boxes):
        reason = "a stage set is empty after tightening"
    elif init_set is None and stage_boxes[0] is not None \
            and not contains(stage_boxes[0], x_t):
        reason = "current state outside the stage-0 set"
    elif init_set is not None and init_set.is_empty:
        reason = "initial membership set empty"

    return FtocpProblem(models, list(stage_boxes), terminal_box, input_box,
                        x_t, Q, R, Q_terminal, x_f, init_set, reason)


def _state_maps(p: FtocpProblem):
    """x_k = G_k v + d_k over v = [x_0, u_0..u_{T-1}]."""
    n, m, T = p.n, p.m, p.T
    nv = n + T * m
    maps, offsets = [], []
    Gk = np.zeros((n, nv))
    Gk[:, :n] = np.eye(n)
    dk = np.zeros(n)
    maps.append(Gk)
    offsets.append(dk)
    for k, model in enumerate(p.models):
        Gn = model.A_hat @ Gk
        Gn[:, n + k * m:n + (k + 1) * m] += model.B
        dn = model.a_hat + model.A_hat @ dk
        maps.append(Gn)
        offsets.append(dn)
        Gk, dk = Gn, dn
    return maps, offsets


def _add_box_rows(rows_G, rhs_G, rows_A, rhs_A, M, d, box: Box):
    """Constrain M v + d to lie in box; degenerate sides become equalities."""
    for i in range(box.dim):
        lo = box.lower[i] - d[i]
        hi = box.upper[i] - d[i]
        if box.radius[i] <= _DEGENERATE_RADIUS:
            rows_A.append(M[i])
            rhs_A.append(box.center[i] - d[i])
        else:
            rows_G.append(M[i])
            rhs_G.append(hi)
            rows_G.append(-M[i])
            rhs_G.append(-lo)


def _reduce_equalities(A: np.ndarray, b: np.ndarray):
    """Full-row-rank equivalent of A v = b, or None when inconsistent."""
    if A.shape[0] == 0:
        return A, b
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    tol = max(A.shape) * (s[0] if s.size else 0.0) * np.finfo(float).eps
    rank = int(np.sum(s > max(tol, 1e-13)))
    Ur = U[:, :rank]
    resid = b - Ur @ (Ur.T @ b)
    if np.max(np.abs(resid), initial=0.0) > 1e-9:
        return None
    A_red = s[:rank, None] * Vt[:rank]
    b_red = Ur.T @ b
    return A_red, b_red


def _assemble(p: FtocpProblem):
    n, m, T = p.n, p.m, p.T
    nv = n + T * m
    maps, offsets = _state_maps(p)

    H = np.zeros((nv, nv))
    g = np.zeros(nv)
    const = 0.0
    for k in range(T):
        Gk, dk = maps[k], offsets[k]
        e = dk - p.x_f
        H += Gk.T @ p.Q @ Gk
        g += 2.0 * Gk.T @ p.Q @ e
        const += float(e @ p.Q @ e)
    GT, dT = maps[T], offsets[T]
    e = dT - p.x_f
    H += GT.T @ p.Q_terminal @ GT
    g += 2.0 * GT.T @ p.Q_terminal @ e
    const += float(e @ p.Q_terminal @ e)
    for k in range(T):
        sl = slice(n + k * m, n + (k + 1) * m)
        H[sl, sl] += p.R

    rows_G, rhs_G, rows_A, rhs_A = [], [], [], []
    # Initial condition: equality x_0 = x_t, or membership x_t - x_0 in E_0.
    x0_box = None
    if p.init_set is None:
        for i in range(n):
            rows_A.append(maps[0][i])
            rhs_A.append(p.x_t[i])
    else:
        x0_box = Box(p.x_t - p.init_set.center, p.init_set.radius)
        if p.stage_boxes[0] is not None:
            x0_box = intersect(x0_box, p.stage_boxes[0])
    if x0_box is not None:
        _add_box_rows(rows_G, rhs_G, rows_A, rhs_A, maps[0], offsets[0], x0_box)
    for k in range(1, T):
        if p.stage_boxes[k] is not None:
            _add_box_rows(rows_G, rhs_G, rows_A, rhs_A, maps[k], offsets[k],
                          p.stage_boxes[k])
    _add_box_rows(rows_G, rhs_G, rows_A, rhs_A, maps[T], offsets[T],
                  p.terminal_box)
    for k in range(T):
        sel = np.zeros((m, nv))
        sel[:, n + k * m:n + (k + 1) * m] = np.eye(m)
        _add_box_rows(rows_G, rhs_G, rows_A, rhs_A, sel, np.zeros(m), p.input_box)

    G = np.asarray(rows_G, dtype=float).reshape(len(rows_G), nv)
    h = np.asarray(rhs_G, dtype=float)
    A = np.asarray(rows_A, dtype=float).reshape(len(rows_A), nv)
    b = np.asarray(rhs_A, dtype=float)
    return H, g, const, G, h, A, b, (maps, offsets)


def _recheck(p: FtocpProblem, x_seq, u_seq) -> float:
    """Largest constraint violation of a candidate trajectory."""
    worst = 0.0

    def box_viol(box: Box, x):
        return float(np.max(np.maximum(np.abs(x - box.center) - box.radius, 0.0)))

    if p.init_set is None:
        worst = max(worst, float(np.max(np.abs(x_seq[0] - p.x_t))))
    else:
        shifted = Box(p.x_t - p.init_set.center, p.init_set.radius)
        worst = max(worst, box_viol(shifted, x_seq[0]))
    for k, model in enumerate(p.models):
        pred = model.predict(x_seq[k]) + model.B @ u_seq[k]
        worst = max(worst, float(np.max(np.abs(x_seq[k + 1] - pred))))
        if p.stage_boxes[k] is not None:
            worst = max(worst, box_viol(p.stage_boxes[k], x_seq[k]))
        worst = max(worst, box_viol(p.input_box, u_seq[k]))
    worst = max(worst, box_viol(p.terminal_box, x_seq[-1]))
    return worst


def _kkt_residual(H, g, G, h, A, b, v, z, y) -> float:
    grad = 2.0 * H @ v + g
    if G.shape[0]:
        grad = grad + G.T @ z
    if A.shape[0]:
        grad = grad + A.T @ y
    resid = float(np.max(np.abs(grad)))
    if G.shape[0]:
        slack = h - G @ v
        resid = max(resid, float(np.max(-np.minimum(slack, 0.0), initial=0.0)))
        resid = max(resid, float(np.max(np.abs(z * slack), initial=0.0)))
        resid = max(resid, float(np.max(-np.minimum(z, 0.0), initial=0.0)))
    if A.shape[0]:
        resid = max(resid, float(np.max(np.abs(A @ v - b), initial=0.0)))
    return resid


def _infeasible(reason: str) -> FtocpSolution:
    return FtocpSolution(False, [], [], float("inf"), {"reason": reason})


def _min_violation(G, h, A, b) -> float:
    """Phase-1 LP: smallest uniform inequality slack t with G v <= h + t,
    A v = b.  Positive values certify infeasibility."""
    nv = G.shape[1]
    c = np.zeros(nv + 1)
    c[-1] = 1.0
    G1 = np.hstack([G, -np.ones((G.shape[0], 1))])
    G1 = np.vstack([G1, np.concatenate([np.zeros(nv), [-1.0]])])
    h1 = np.concatenate([h, [1.0]])         # bound t >= -1 for boundedness
    A1 = np.hstack([A, np.zeros((A.shape[0], 1))]) if A.shape[0] else None
    try:
        out = cvx_solvers.lp(
            cvx_matrix(c), cvx_matrix(G1), cvx_matrix(h1),
            cvx_matrix(A1) if A1 is not None else None,
            cvx_matrix(b) if A.shape[0] else None,
            options=dict(_SOLVER_OPTIONS))
    except (ValueError, ArithmeticError) as exc:
        raise SolverError(f"phase-1 feasibility LP failed: {exc}") from exc
    if out["status"] != "optimal":
        raise SolverError(f"phase-1 feasibility LP status {out['status']!r}")
    return float(out["x"][-1])


def solve_ftocp(p: FtocpProblem) -> FtocpSolution:
    """Solve to global optimality or report infeasibility.

    Raises SolverError only on backend non-convergence; infeasibility is
    a regular result.
    """
    if p.infeasible_reason is not None:
        return _infeasible(p.infeasible_reason)
    H, g, const, G, h, A, b, (maps, offsets) = _assemble(p)

    if A.shape[0]:
        reduced = _reduce_equalities(A, b)
        if reduced is None:
            return _infeasible("inconsistent equality constraints")
        A, b = reduced

    q = cvx_matrix(g)
    Gm = cvx_matrix(G) if G.shape[0] else None
    hm = cvx_matrix(h) if G.shape[0] else None
    Am = cvx_matrix(A) if A.shape[0] else None
    bm = cvx_matrix(b) if A.shape[0] else None
    out = None
    for ridge in (0.0, 1e-9):
        P = cvx_matrix(2.0 * H + ridge * np.eye(H.shape[0]))
        try:
            out = cvx_solvers.qp(P, q, Gm, hm, Am, bm,
                                 options=dict(_SOLVER_OPTIONS))
            break
        except (ValueError, ArithmeticError) as exc:
            # The interior-point method can fail outright on infeasible or
            # near-degenerate data; classify via the phase-1 LP.
            if G.shape[0]:
                t_star = _min_violation(G, h, A, b)
                if t_star > FEAS_TOL:
                    return _infeasible(
                        f"phase-1 certificate, violation {t_star:.2e}")
            if ridge > 0.0:
                raise SolverError(f"QP backend failed: {exc}") from exc

    status = out["status"]
    if status == "primal infeasible":
        return _infeasible("solver infeasibility certificate")
    if status == "dual infeasible":
        raise SolverError("dual infeasibility on a bounded problem")

    v = np.asarray(out["x"]).reshape(-1)
    z = np.asarray(out["z"]).reshape(-1) if G.shape[0] else np.zeros(0)
    y = np.asarray(out["y"]).reshape(-1) if A.shape[0] else np.zeros(0)
    x_seq = [maps[k] @ v + offsets[k] for k in range(p.T + 1)]
    u_seq = [v[p.n + k * p.m:p.n + (k + 1) * p.m].copy() for k in range(p.T)]
    violation = _recheck(p, x_seq, u_seq)
    kkt = _kkt_residual(H, g, G, h, A, b, v, z, y)

    if status != "optimal":
        # 'unknown': accept only a numerically verified optimum.
        if violation > FEAS_TOL or kkt > 1e-5:
            raise SolverError(f"solver stopped with status {status!r} "
                              f"(violation {violation:.2e}, kkt {kkt:.2e})")
    cost = float(v @ H @ v + g @ v + const)
    stats = {
        "iterations": int(out["iterations"]),
        "kkt_residual": kkt,
        "max_violation": violation,
        "status": status,
    }
    return FtocpSolution(True, u_seq, x_seq, cost, stats)


def mpc_policy(sol: FtocpSolution) -> np.ndarray:
    """First input of a feasible plan."""
    if not sol.feasible:
        raise UsageError("no policy from an infeasible solution")
    return sol.u_seq[0]
