"""Forward SVIR solver marching along characteristics.

Each time step advances every age cohort one node along its
characteristic (t, a) -> (t + dt, a + dt).  The linear reaction,
diffusion and vaccination terms are integrated with Crank-Nicolson; the
bilinear infection terms are extrapolated with a two-step
Adams-Bashforth rule (one-step bootstrap).  Diffusion uses the standard
second-order Laplacian with mirrored ghost nodes for the homogeneous
Neumann walls.

Within one step the S and V components couple implicitly through the
vaccination and immunity-loss exchanges; they are solved together as one
pentadiagonal system in interleaved (S_0, V_0, S_1, V_1, ...) ordering,
while I and R reduce to tridiagonal solves (R after I, so the recovery
influx uses the freshly solved infectious values).  All per-age systems
are stacked into a single banded matrix so the whole layer advances with
three LAPACK calls.

The age-0 node of every layer is set by the birth law after the interior
sweep; the oldest node has no successor, so mass ages out at a_max.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import NumericalError
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
    age_class_masks,
    expand_control,
    region_masks,
)
from .nonlocal_op import ForceOfInfection, apply_lambda, kernel_matrix


@dataclass
class StateField:
    """One time layer of the four compartments, indexed (compartment, age, space)."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=float)
        if self.data.ndim != 3 or self.data.shape[0] != N_COMP:
            raise ValueError(f"expected (4, na, nx) data, got shape {self.data.shape}")

    @property
    def s(self) -> np.ndarray:
        return self.data[S]

    @property
    def v(self) -> np.ndarray:
        return self.data[V]

    @property
    def i(self) -> np.ndarray:
        return self.data[I]

    @property
    def r(self) -> np.ndarray:
        return self.data[R]

    @classmethod
    def zeros(cls, grid: Grid) -> "StateField":
        return cls(np.zeros((N_COMP, grid.na, grid.nx)))

    @classmethod
    def constant(cls, grid: Grid, s=0.0, v=0.0, i=0.0, r=0.0) -> "StateField":
        data = np.empty((N_COMP, grid.na, grid.nx))
        for comp, val in zip((S, V, I, R), (s, v, i, r)):
            data[comp] = val
        return cls(data)


@dataclass
class Trajectory:
    """Forward solution: one StateField per time node plus the birth boundary values."""

    layers: list
    births: list

    def __len__(self) -> int:
        return len(self.layers)


def neumann_laplacian(field: np.ndarray, dx: float) -> np.ndarray:
    """Second-order Laplacian on the last axis with mirrored ghost nodes."""
    out = np.empty_like(field)
    out[..., 1:-1] = field[..., :-2] - 2.0 * field[..., 1:-1] + field[..., 2:]
    out[..., 0] = 2.0 * (field[..., 1] - field[..., 0])
    out[..., -1] = 2.0 * (field[..., -2] - field[..., -1])
    out /= dx * dx
    return out


def _band_limits(half: np.ndarray, nx: int) -> tuple[np.ndarray, np.ndarray]:
    """Couplings to the right/left neighbour per (age, node), ghost-doubled at walls."""
    na1 = half.shape[0]
    up = np.zeros((na1, nx))
    lo = np.zeros((na1, nx))
    up[:, : nx - 1] = -half[:, None]
    up[:, 0] = -2.0 * half
    lo[:, 1:] = -half[:, None]
    lo[:, nx - 1] = -2.0 * half
    return up, lo


def _stack_tridiag(diag: np.ndarray, up: np.ndarray, lo: np.ndarray) -> np.ndarray:
    """Stack per-age tridiagonal systems into one (3, n) banded array."""
    n = diag.size
    ab = np.zeros((3, n))
    ab[1] = diag.ravel()
    ab[0, 1:] = up.ravel()[:-1]
    ab[2, : n - 1] = lo.ravel()[1:]
    return ab


class ForwardStepper:
    """Precomputed operators for repeated forward steps on one (grid, params) pair."""

    def __init__(self, grid: Grid, params: ModelParams):
        self.grid = grid
        self.params = params
        dt, dx = grid.dt, grid.dx
        self.hdt = 0.5 * dt
        a = grid.a_nodes
        mu = np.asarray(params.mu(a), dtype=float)
        self.sigma = np.array(
            [params.sigma_s(a), params.sigma_v(a), params.sigma_i(a), params.sigma_r(a)],
            dtype=float,
        )
        if np.any(self.sigma < 0.0):
            raise NumericalError("diffusion coefficients must be nonnegative")

        # Diagonal reaction rates per compartment and age (control added per step).
        rate = np.empty((N_COMP, grid.na))
        rate[S] = mu
        rate[V] = mu + params.c
        rate[I] = mu + params.d_I + params.gamma
        rate[R] = mu
        self.rate = rate

        # Explicit-side multipliers at the source ages a_0 .. a_{na-2}.
        self.ecoef = 1.0 - self.hdt * rate[:, :-1]
        self.half_sig_old = self.hdt * self.sigma[:, :-1]

        # Implicit templates at the target ages a_1 .. a_{na-1}.
        nx = grid.nx
        half_new = self.hdt * self.sigma[:, 1:] / (dx * dx)
        diag = 1.0 + self.hdt * rate[:, 1:, None] + 2.0 * half_new[:, :, None]
        diag = np.broadcast_to(diag, (N_COMP, grid.na - 1, nx)).copy()
        ups, los = zip(*(_band_limits(half_new[c], nx) for c in range(N_COMP)))

        n_sv = 2 * (grid.na - 1) * nx
        ab_sv = np.zeros((5, n_sv))
        ab_sv[2, 0::2] = diag[S].ravel()
        ab_sv[2, 1::2] = diag[V].ravel()
        ab_sv[1, 1::2] = -self.hdt * params.c  # immunity loss feeds S from V
        ab_sv[0, 0::2][1:] = ups[S].ravel()[:-1]
        ab_sv[0, 1::2][1:] = ups[V].ravel()[:-1]
        ab_sv[4, 0::2][:-1] = los[S].ravel()[1:]
        ab_sv[4, 1::2][:-1] = los[V].ravel()[1:]
        self._ab_sv0 = ab_sv
        self._ab_i = _stack_tridiag(diag[I], ups[I], los[I])
        self._ab_r = _stack_tridiag(diag[R], ups[R], los[R])

        self.kmat = kernel_matrix(grid, params)
        beta = np.asarray(params.beta_birth(a), dtype=float)
        self.birth_row = grid.age_trap_w * beta

    def force_profile(self, layer: np.ndarray) -> np.ndarray:
        """Spatial force-of-infection profile of one (4, na, nx) layer."""
        g = self.grid
        return self.kmat @ (g.space_trap_w * (g.age_trap_w @ layer[I]))

    def bilinear(self, layer: np.ndarray, lam: np.ndarray) -> np.ndarray:
        """Infection coupling term as it stands on the left-hand side."""
        p = self.params
        out = np.empty_like(layer)
        exp_s = layer[S]
        exp_v = p.phi1 * layer[V]
        exp_r = p.phi2 * layer[R]
        out[S] = -lam * exp_s
        out[V] = -lam * exp_v
        out[R] = -lam * exp_r
        out[I] = lam * (exp_s + exp_v + exp_r)
        return out

    def birth(self, layer: np.ndarray) -> np.ndarray:
        """Newborn boundary values (4, nx); only S receives births."""
        b = np.zeros((N_COMP, self.grid.nx))
        b[S] = self.birth_row @ layer.sum(axis=0)
        return b

    def advance(
        self,
        layer: np.ndarray,
        lam: np.ndarray,
        bil_prev: np.ndarray,
        u_now: np.ndarray,
        u_next: np.ndarray,
        f_now: np.ndarray = None,
        f_next: np.ndarray = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        """One characteristic step; returns (new layer with zeroed age-0 node, bilinear
        term of the incoming layer for the next step's extrapolation).

        `bil_prev` is the bilinear field of the layer one step earlier
        (None on the first step, which then falls back to one-step
        Adams-Bashforth).
        """
        g, p = self.grid, self.params
        hdt, dt = self.hdt, g.dt
        bil_now = self.bilinear(layer, lam)

        n_ab = bil_now[:, :-1, :].copy()
        if bil_prev is not None and g.na > 2:
            n_ab[:, 1:, :] = 1.5 * bil_now[:, 1:-1, :] - 0.5 * bil_prev[:, :-2, :]

        old = layer[:, :-1, :]
        rhs = self.ecoef[:, :, None] * old
        rhs += self.half_sig_old[:, :, None] * neumann_laplacian(old, g.dx)
        rhs += dt * n_ab
        rhs[S] -= hdt * u_now[:-1, :] * old[S]
        rhs[S] += hdt * p.c * old[V]
        rhs[V] += hdt * u_now[:-1, :] * old[S]
        rhs[R] += hdt * p.gamma * old[I]
        if f_now is not None:
            rhs += hdt * (f_now[:, :-1, :] + f_next[:, 1:, :])

        u_new = u_next[1:, :].ravel()
        ab = self._ab_sv0.copy()
        ab[2, 0::2] += hdt * u_new
        ab[3, 0::2] = -hdt * u_new
        z = np.empty(2 * rhs[S].size)
        z[0::2] = rhs[S].ravel()
        z[1::2] = rhs[V].ravel()
        sol = solve_banded((2, 2), ab, z, overwrite_ab=True, overwrite_b=True, check_finite=False)

        shape = (g.na - 1, g.nx)
        new = np.zeros((N_COMP, g.na, g.nx))
        new[S, 1:, :] = sol[0::2].reshape(shape)
        new[V, 1:, :] = sol[1::2].reshape(shape)
        new[I, 1:, :] = solve_banded(
            (1, 1), self._ab_i, rhs[I].ravel(), overwrite_b=True, check_finite=False
        ).reshape(shape)
        rhs[R] += hdt * p.gamma * new[I, 1:, :]
        new[R, 1:, :] = solve_banded(
            (1, 1), self._ab_r, rhs[R].ravel(), overwrite_b=True, check_finite=False
        ).reshape(shape)
        return new, bil_now


def compute_birth(layer: StateField, grid: Grid, params: ModelParams) -> np.ndarray:
    """Birth-law boundary values B(x) of one layer, shape (4, nx).

    B_S integrates the fertility-weighted total population over age; the
    fertility rate vanishes at age 0, so the (possibly stale) age-0 node
    contributes nothing.  V, I, R newborn values are zero.
    """
    data = layer.data if isinstance(layer, StateField) else np.asarray(layer, dtype=float)
    beta = np.asarray(params.beta_birth(grid.a_nodes), dtype=float)
    b = np.zeros((N_COMP, grid.nx))
    b[S] = (grid.age_trap_w * beta) @ data.sum(axis=0)
    return b


def step(
    current: StateField,
    prev: StateField,
    lambda_now: ForceOfInfection,
    lambda_prev: ForceOfInfection,
    u_now: np.ndarray,
    u_next: np.ndarray,
    grid: Grid,
    params: ModelParams,
    stepper: ForwardStepper = None,
) -> StateField:
    """Advance one layer along the characteristics.

    `prev` and `lambda_prev` supply the history for the Adams-Bashforth
    extrapolation of the infection terms; pass None for both on the first
    step (one-step bootstrap).  The returned layer has a zero age-0 node;
    apply `compute_birth` to close the boundary.
    """
    if stepper is None:
        stepper = ForwardStepper(grid, params)
    bil_prev = None
    if prev is not None:
        bil_prev = stepper.bilinear(prev.data, lambda_prev.space_profile)
    new, _ = stepper.advance(
        current.data, lambda_now.space_profile, bil_prev, u_now, u_next
    )
    if not np.all(np.isfinite(new)):
        raise NumericalError("forward step produced non-finite values")
    return StateField(new)


def solve_forward(
    y0: StateField,
    schedule: ControlSchedule,
    grid: Grid,
    params: ModelParams,
    layout: ControlLayout = None,
    forcing=None,
    birth_forcing=None,
) -> Trajectory:
    """March the system over all time nodes.

    The control is piecewise constant: schedule.values[n] acts on
    [t_n, t_{n+1}) and is used at both Crank-Nicolson endpoints of step n.
    `forcing(t, grid) -> (4, na, nx)` and `birth_forcing(t, grid) -> (4, nx)`
    are verification hooks (manufactured solutions); production runs leave
    them unset.
    """
    if layout is None and schedule is not None:
        layout = schedule.layout
    values = None
    if schedule is not None:
        values = schedule.values
        if values.shape[0] != grid.nt - 1:
            raise ValueError(
                f"schedule has {values.shape[0]} step layers, grid wants {grid.nt - 1}"
            )
    stepper = ForwardStepper(grid, params)
    amask = rmask = None
    if values is not None:
        amask = age_class_masks(layout, grid).astype(float)
        rmask = region_masks(layout, grid).astype(float)

    def control_field(n: int) -> np.ndarray:
        if values is None:
            return np.zeros((grid.na, grid.nx))
        return np.einsum("ij,ja,ix->ax", values[n], amask, rmask)

    first = y0.data.copy()
    b0 = stepper.birth(first)
    if birth_forcing is not None:
        b0 = b0 + birth_forcing(grid.t_nodes[0], grid)
    first[:, 0, :] = b0
    layers = [StateField(first)]
    births = [b0]

    bil_prev = None
    f_next = forcing(grid.t_nodes[0], grid) if forcing is not None else None
    for n in range(grid.nt - 1):
        cur = layers[-1].data
        lam = stepper.force_profile(cur)
        u_field = control_field(n)
        f_now, f_next = f_next, (
            forcing(grid.t_nodes[n + 1], grid) if forcing is not None else None
        )
        new, bil_prev = stepper.advance(cur, lam, bil_prev, u_field, u_field, f_now, f_next)
        b = stepper.birth(new)
        if birth_forcing is not None:
            b = b + birth_forcing(grid.t_nodes[n + 1], grid)
        new[:, 0, :] = b
        layers.append(StateField(new))
        births.append(b)
    last = layers[-1].data
    if not np.all(np.isfinite(last)):
        raise NumericalError("forward solve produced non-finite values")
    return Trajectory(layers=layers, births=births)


def total_infectious(traj: Trajectory, grid: Grid) -> np.ndarray:
    """Time series of the age-space integral of the infectious compartment."""
    wa, wx = grid.age_trap_w, grid.space_trap_w
    return np.array([wa @ layer.data[I] @ wx for layer in traj.layers])
