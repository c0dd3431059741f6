"""Independent oracles: finite-difference gradients, brute-force quadrature
and manufactured-solution forcing.

Everything here deliberately avoids the optimized code paths it is meant
to check: the nonlocal operators are naive Python loops, gradients come
from central differences of the full forward solve, and manufactured
forcing terms are evaluated from closed forms with adaptive quadrature
for the kernel moments.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .grid import Grid
from .model import (
    I,
    N_COMP,
    R,
    S,
    V,
    ControlLayout,
    ControlSchedule,
    ModelParams,
)
from .nonlocal_op import ForceOfInfection
from .objective import cost
from .state_solver import StateField, solve_forward

_BRUTE_FORCE_NODE_LIMIT = 10_000


@dataclass(frozen=True)
class OracleReport:
    """Outcome of one oracle comparison."""

    name: str
    computed: float
    reference: float
    abs_err: float
    rel_err: float
    tolerance: float
    passed: bool

    @classmethod
    def compare(cls, name, computed, reference, tolerance, relative=True) -> "OracleReport":
        abs_err = abs(computed - reference)
        scale = max(abs(reference), 1e-300)
        rel_err = abs_err / scale
        err = rel_err if relative else abs_err
        return cls(
            name=name,
            computed=float(computed),
            reference=float(reference),
            abs_err=float(abs_err),
            rel_err=float(rel_err),
            tolerance=float(tolerance),
            passed=bool(err <= tolerance),
        )


def fd_gradient(
    y0: StateField,
    schedule: ControlSchedule,
    grid: Grid,
    params: ModelParams,
    layout: ControlLayout = None,
    epsilon: float = 1e-3,
) -> np.ndarray:
    """Central-difference gradient of the reduced cost, one solve pair per coordinate.

    Values are divided by the step length dt on top of the usual 2*eps,
    converting euclidean partials of the discrete cost into the
    time-density (L2) gradient convention used by `reduced_gradient`.
    """
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if layout is None:
        layout = schedule.layout

    def reduced_cost(values: np.ndarray) -> float:
        sched = ControlSchedule(values, layout)
        traj = solve_forward(y0, sched, grid, params, layout)
        return cost(traj, sched, grid, params).j_total

    base = schedule.values
    grad = np.zeros_like(base)
    it = np.nditer(base, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        bumped = base.copy()
        bumped[idx] += epsilon
        j_plus = reduced_cost(bumped)
        bumped[idx] -= 2.0 * epsilon
        j_minus = reduced_cost(bumped)
        grad[idx] = (j_plus - j_minus) / (2.0 * epsilon * grid.dt)
    return grad


def _guard_grid(grid: Grid) -> None:
    if grid.na * grid.nx > _BRUTE_FORCE_NODE_LIMIT:
        raise ValueError(
            f"brute-force oracle limited to {_BRUTE_FORCE_NODE_LIMIT} nodes, "
            f"got {grid.na} x {grid.nx}"
        )


def brute_force_lambda(i_field: np.ndarray, grid: Grid, params: ModelParams) -> ForceOfInfection:
    """Force of infection by plain nested loops; small grids only."""
    _guard_grid(grid)
    i_field = np.asarray(i_field, dtype=float)
    wa, wx, x = grid.age_trap_w, grid.space_trap_w, grid.x_nodes
    profile = np.zeros(grid.nx)
    for m_out in range(grid.nx):
        acc = 0.0
        for alpha in range(grid.na):
            for xi in range(grid.nx):
                acc += wa[alpha] * wx[xi] * float(params.kernel(x[xi], x[m_out])) * i_field[alpha, xi]
        profile[m_out] = acc
    return ForceOfInfection(space_profile=profile, na=grid.na)


def brute_force_lambda_adjoint(
    y_layer: np.ndarray, p_layer: np.ndarray, grid: Grid, params: ModelParams
) -> np.ndarray:
    """I-slot adjoint source by plain nested loops; small grids only."""
    _guard_grid(grid)
    y = np.asarray(y_layer, dtype=float)
    p = np.asarray(p_layer, dtype=float)
    wa, wx, x = grid.age_trap_w, grid.space_trap_w, grid.x_nodes
    out = np.zeros((grid.na, grid.nx))
    for xi in range(grid.nx):
        acc = 0.0
        for a in range(grid.na):
            for m in range(grid.nx):
                bracket = (
                    y[S, a, m] * p[S, a, m]
                    + params.phi1 * y[V, a, m] * p[V, a, m]
                    - (y[S, a, m] + params.phi1 * y[V, a, m] + params.phi2 * y[R, a, m])
                    * p[I, a, m]
                    + params.phi2 * y[R, a, m] * p[R, a, m]
                )
                acc += wa[a] * wx[m] * float(params.kernel(x[m], x[xi])) * bracket
        out[:, xi] = acc
    return out


class ManufacturedSolution:
    """Closed-form target w(t, a, x) shared by all four compartments.

    Carries the symbolic derivatives and integral moments the forcing
    construction needs; the defaults implement

        w = exp(-t - a) (1 + cos(pi x)),

    whose normal derivative vanishes at x = 0, 1, so the Neumann wall is
    exactly compatible.
    """

    def __init__(self, params: ModelParams, x_lo: float = 0.0, x_hi: float = 1.0):
        self.params = params
        self.x_lo, self.x_hi = x_lo, x_hi
        self._kernel_moment_cache = {}
        q, _ = quad(
            lambda a: params.beta_birth(a) * np.exp(-a), 0.0, params.a_max, epsabs=1e-13
        )
        self._beta_moment = q

    def field(self, t: float, a_nodes: np.ndarray, x_nodes: np.ndarray) -> np.ndarray:
        return np.exp(-t - a_nodes)[:, None] * (1.0 + np.cos(np.pi * x_nodes))[None, :]

    def delta_field(self, t, a_nodes, x_nodes) -> np.ndarray:
        """Transport derivative (d/dt + d/da) of the target."""
        return -2.0 * self.field(t, a_nodes, x_nodes)

    def laplacian_field(self, t, a_nodes, x_nodes) -> np.ndarray:
        return (
            -np.pi**2
            * np.exp(-t - a_nodes)[:, None]
            * np.cos(np.pi * x_nodes)[None, :]
        )

    def _kernel_moment(self, x_nodes: np.ndarray) -> np.ndarray:
        """integral over the domain of kernel(x, xi) (1 + cos(pi xi)) d xi."""
        key = x_nodes.tobytes()
        if key not in self._kernel_moment_cache:
            vals = np.empty(len(x_nodes))
            for m, xv in enumerate(x_nodes):
                pts = [p for p in (xv - 0.1, xv, xv + 0.1) if self.x_lo < p < self.x_hi]
                vals[m], _ = quad(
                    lambda xi: float(self.params.kernel(xv, xi)) * (1.0 + np.cos(np.pi * xi)),
                    self.x_lo,
                    self.x_hi,
                    points=pts,
                    epsabs=1e-13,
                    limit=200,
                )
            self._kernel_moment_cache[key] = vals
        return self._kernel_moment_cache[key]

    def lambda_profile(self, t: float, x_nodes: np.ndarray) -> np.ndarray:
        """Exact force of infection generated by the target's I component."""
        age_factor = 1.0 - np.exp(-self.params.a_max)
        return np.exp(-t) * age_factor * self._kernel_moment(x_nodes)

    def birth_integral(self, t: float, x_nodes: np.ndarray) -> np.ndarray:
        """Exact fertility integral of the summed compartments."""
        return 4.0 * np.exp(-t) * self._beta_moment * (1.0 + np.cos(np.pi * x_nodes))


def manufactured_forcing(y_star: ManufacturedSolution, grid: Grid, params: ModelParams):
    """Forcing and birth-correction hooks that make `y_star` an exact solution.

    The interior forcing is f = delta y* + L y* + Lambda(y*) y* - sigma
    Laplace y* with zero control; the birth hook replaces the homogeneous
    newborn condition by the mismatch between the target's age-0 trace
    and its exact fertility integral.
    """
    mu = np.asarray(params.mu(grid.a_nodes), dtype=float)
    sig = {
        S: np.asarray(params.sigma_s(grid.a_nodes), dtype=float),
        V: np.asarray(params.sigma_v(grid.a_nodes), dtype=float),
        I: np.asarray(params.sigma_i(grid.a_nodes), dtype=float),
        R: np.asarray(params.sigma_r(grid.a_nodes), dtype=float),
    }
    react = {
        S: mu - params.c,
        V: mu + params.c,
        I: mu + params.d_I + params.gamma,
        R: mu - params.gamma,
    }
    couple = {
        S: 1.0,
        V: params.phi1,
        I: -(1.0 + params.phi1 + params.phi2),
        R: params.phi2,
    }

    def forcing(t: float, g: Grid) -> np.ndarray:
        w = y_star.field(t, g.a_nodes, g.x_nodes)
        dw = y_star.delta_field(t, g.a_nodes, g.x_nodes)
        lap = y_star.laplacian_field(t, g.a_nodes, g.x_nodes)
        lam = y_star.lambda_profile(t, g.x_nodes)
        f = np.empty((N_COMP, g.na, g.nx))
        for comp in range(N_COMP):
            f[comp] = (
                dw
                + react[comp][:, None] * w
                + couple[comp] * lam[None, :] * w
                - sig[comp][:, None] * lap
            )
        return f

    def birth_forcing(t: float, g: Grid) -> np.ndarray:
        trace = y_star.field(t, np.zeros(1), g.x_nodes)[0]
        b = np.tile(trace, (N_COMP, 1))
        b[S] -= y_star.birth_integral(t, g.x_nodes)
        return b

    return forcing, birth_forcing


def manufactured_state(y_star: ManufacturedSolution, grid: Grid, t: float) -> StateField:
    """Target evaluated on the grid at time t, identical in all compartments."""
    w = y_star.field(t, grid.a_nodes, grid.x_nodes)
    return StateField(np.tile(w, (N_COMP, 1, 1)))


def manufactured_run_error(grid: Grid, params: ModelParams, y_star: ManufacturedSolution) -> float:
    """Relative weighted-L2 error of the final layer against the target."""
    forcing, birth_forcing = manufactured_forcing(y_star, grid, params)
    y0 = manufactured_state(y_star, grid, 0.0)
    traj = solve_forward(
        y0, None, grid, params, forcing=forcing, birth_forcing=birth_forcing
    )
    exact = manufactured_state(y_star, grid, grid.t_nodes[-1]).data
    diff = traj.layers[-1].data - exact
    wa, wx = grid.age_trap_w, grid.space_trap_w
    num = sum(wa @ (diff[c] ** 2) @ wx for c in range(N_COMP))
    den = sum(wa @ (exact[c] ** 2) @ wx for c in range(N_COMP))
    return float(np.sqrt(num / den))


def observed_orders(errors) -> list:
    """log2 ratios of consecutive errors on a halving ladder."""
    errors = list(errors)
    return [float(np.log2(errors[k] / errors[k + 1])) for k in range(len(errors) - 1)]
