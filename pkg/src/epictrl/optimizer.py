"""Projected gradient method with Barzilai-Borwein steps and nonmonotone line search."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, LineSearchError
from .grid import Grid
from .model import ControlLayout, ControlSchedule, ModelParams
from .objective import cost, gradient_via_adjoint
from .state_solver import StateField, Trajectory, solve_forward

_MAX_BACKTRACKS = 60


@dataclass(frozen=True)
class OptimizerConfig:
    """Tunables of the projected BB iteration.

    `rel_tol` stops the loop once the iterate change, relative to the
    previous iterate norm, falls below it.  The remaining fields are the
    usual nonmonotone Armijo and step-safeguard constants.
    """

    max_iters: int = 500
    rel_tol: float = 1e-8
    memory: int = 10
    sufficient_decrease: float = 1e-4
    backtrack: float = 0.5
    bb_min: float = 1e-8
    bb_max: float = 1e8
    bb_variant: str = "bb1"

    def __post_init__(self):
        if not 0.0 < self.backtrack < 1.0:
            raise ConfigurationError("backtrack", f"must lie in (0, 1), got {self.backtrack}")
        if not 0.0 < self.sufficient_decrease < 1.0:
            raise ConfigurationError(
                "sufficient_decrease", f"must lie in (0, 1), got {self.sufficient_decrease}"
            )
        if not self.bb_min < self.bb_max:
            raise ConfigurationError("bb_min", f"needs bb_min < bb_max, got {self.bb_min}, {self.bb_max}")
        if self.memory < 1:
            raise ConfigurationError("memory", f"must be at least 1, got {self.memory}")
        if self.bb_variant not in ("bb1", "bb2"):
            raise ConfigurationError("bb_variant", f"must be 'bb1' or 'bb2', got {self.bb_variant}")


@dataclass
class IterationRecord:
    iteration: int
    cost: float
    grad_norm: float
    step_size: float
    backtracks: int
    change_ratio: float
    stationarity: float


@dataclass
class OptimizeLog:
    """Per-iteration history plus the recorded stop reason."""

    records: list = field(default_factory=list)
    stop_reason: str = ""

    def rows(self):
        for r in self.records:
            yield (
                r.iteration,
                r.cost,
                r.grad_norm,
                r.step_size,
                r.backtracks,
                r.change_ratio,
                r.stationarity,
            )


def project(u: np.ndarray, u_bar: float) -> np.ndarray:
    """Orthogonal projection onto the box [0, u_bar]."""
    return np.clip(u, 0.0, u_bar)


def bb_step(s: np.ndarray, y_diff: np.ndarray, cfg: OptimizerConfig) -> float:
    """Barzilai-Borwein step from iterate difference s and gradient difference y.

    Nonpositive curvature maps to bb_max; otherwise the raw quotient is
    clamped into [bb_min, bb_max].
    """
    sy = float(np.vdot(s, y_diff))
    if cfg.bb_variant == "bb1":
        num, den = float(np.vdot(s, s)), sy
    else:
        num, den = sy, float(np.vdot(y_diff, y_diff))
    if den <= 0.0 or sy <= 0.0:
        return cfg.bb_max
    return float(min(max(num / den, cfg.bb_min), cfg.bb_max))


def nonmonotone_search(
    u: np.ndarray,
    grad: np.ndarray,
    trial_step: float,
    cost_history,
    cfg: OptimizerConfig,
    evaluate,
    u_bar: float,
):
    """Backtrack until the projected trial point undercuts the recent cost window.

    `evaluate(candidate) -> (cost, payload)` evaluates the projected
    candidate.  Acceptance at step tau requires

        J(P(u - tau grad)) <= max(recent costs) - c/tau * ||P(u - tau grad) - u||^2,

    the projected-gradient Armijo rule against the window maximum.
    Returns (accepted point, accepted step, backtracks, cost, payload).
    """
    if len(cost_history) == 0:
        raise ValueError("cost_history must be nonempty")
    ref = max(cost_history[-cfg.memory:])
    step_size = trial_step
    for m in range(_MAX_BACKTRACKS + 1):
        candidate = project(u - step_size * grad, u_bar)
        d2 = float(np.sum((candidate - u) ** 2))
        j_cand, payload = evaluate(candidate)
        if j_cand <= ref - cfg.sufficient_decrease / step_size * d2:
            return candidate, step_size, m, j_cand, payload
        step_size *= cfg.backtrack
    raise LineSearchError(
        f"no acceptable step after {_MAX_BACKTRACKS} backtracks",
        diagnostics={
            "trial_step": trial_step,
            "window_max": ref,
            "last_step": step_size / cfg.backtrack,
            "last_cost": j_cand,
        },
    )


def optimize(
    y0: StateField,
    schedule0: ControlSchedule,
    grid: Grid,
    params: ModelParams,
    layout: ControlLayout = None,
    cfg: OptimizerConfig = None,
):
    """Minimize the reduced cost over admissible vaccination schedules.

    Iterates forward solve -> adjoint gradient -> BB trial step ->
    nonmonotone search -> projection until the relative iterate change
    drops below cfg.rel_tol or max_iters is reached.  Returns
    (best schedule, its Trajectory, OptimizeLog); the best-cost iterate is
    returned even if a later nonmonotone step ended higher.
    """
    cfg = cfg or OptimizerConfig()
    if layout is None:
        layout = schedule0.layout
    u_bar = params.u_bar

    def evaluate(u_values: np.ndarray):
        sched = ControlSchedule(u_values, layout)
        traj = solve_forward(y0, sched, grid, params, layout)
        report = cost(traj, sched, grid, params)
        return report.j_total, (sched, traj)

    u = project(schedule0.values, u_bar)
    j_cur, (sched_cur, traj_cur) = evaluate(u)
    history = [j_cur]
    best_cost, best_values = j_cur, u.copy()
    log = OptimizeLog()

    grad = None
    u_prev = None
    grad_prev = None
    for k in range(cfg.max_iters):
        grad = gradient_via_adjoint(sched_cur, traj_cur, grid, params, layout)
        grad_inf = float(np.max(np.abs(grad))) if grad.size else 0.0
        grad_norm = float(np.linalg.norm(grad))
        stationarity = float(
            np.linalg.norm(project(u - grad, u_bar) - u) / max(1.0, np.linalg.norm(u))
        )
        if grad_inf == 0.0:
            log.records.append(
                IterationRecord(k, j_cur, grad_norm, 0.0, 0, 0.0, stationarity)
            )
            log.stop_reason = "zero gradient"
            break
        if k == 0:
            trial = 1.0 / grad_inf
        else:
            trial = bb_step(u - u_prev, grad - grad_prev, cfg)
        u_new, step_size, backtracks, j_new, (sched_new, traj_new) = nonmonotone_search(
            u, grad, trial, history, cfg, evaluate, u_bar
        )
        u_norm = float(np.linalg.norm(u))
        change = float(np.linalg.norm(u_new - u))
        change_ratio = change / u_norm if u_norm > 0.0 else change
        log.records.append(
            IterationRecord(k, j_new, grad_norm, step_size, backtracks, change_ratio, stationarity)
        )
        history.append(j_new)
        if j_new <= best_cost:
            best_cost, best_values = j_new, u_new.copy()
        u_prev, grad_prev = u, grad
        u, j_cur, sched_cur, traj_cur = u_new, j_new, sched_new, traj_new
        if change_ratio < cfg.rel_tol:
            log.stop_reason = "iterate change below rel_tol"
            break
    else:
        log.stop_reason = "max_iters reached"

    best_schedule = ControlSchedule(best_values, layout)
    if np.array_equal(best_values, u):
        best_traj = traj_cur
    else:
        best_traj = solve_forward(y0, best_schedule, grid, params, layout)
    return best_schedule, best_traj, log
