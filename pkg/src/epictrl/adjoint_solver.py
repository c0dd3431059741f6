"""Backward-in-time-and-age adjoint solver.

The adjoint system runs the forward machinery under time-age reversal:
layers march from t = T down to 0 and each age node k of the new layer is
reached from node k+1 of the layer above along the reversed
characteristic.  The terminal layer (t = T) and the oldest-age node of
every layer are zero.

The transposed reaction and control exchanges are integrated with
Crank-Nicolson like the forward solver (S and V again form one
pentadiagonal pair; R is solved before I so the transposed recovery
coupling uses fresh values).  Everything that depends on the stored
trajectory or nonlocally on the adjoint itself - the transposed
infection terms, the nonlocal adjoint source, the observation source and
the transposed birth coupling - is collected in one explicit field and
extrapolated with the two-step Adams-Bashforth rule in reversed time
(one-step bootstrap at t = T and at the oldest admissible age).

The birth law transposes into a source beta(a) * p_S(t, a=0, x) acting on
every compartment's adjoint equation: individuals of any compartment
reproduce, and their newborns enter S, so each adjoint picks up the
marginal value of a newborn susceptible.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

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
from .nonlocal_op import apply_lambda_adjoint, kernel_matrix
from .state_solver import StateField, Trajectory, _band_limits, _stack_tridiag, neumann_laplacian


@dataclass
class AdjointField:
    """One time layer of the adjoint variables, indexed (compartment, age, space)."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=float)
        if self.data.ndim != 3 or self.data.shape[0] != N_COMP:
            raise ValueError(f"expected (4, na, nx) data, got shape {self.data.shape}")

    @property
    def p_s(self) -> np.ndarray:
        return self.data[S]

    @property
    def p_v(self) -> np.ndarray:
        return self.data[V]

    @property
    def p_i(self) -> np.ndarray:
        return self.data[I]

    @property
    def p_r(self) -> np.ndarray:
        return self.data[R]


def adjoint_birth_source(p_layer: AdjointField, grid: Grid, params: ModelParams) -> np.ndarray:
    """Transposed birth coupling beta(a) * p_S(a=0, x), shape (na, nx)."""
    data = p_layer.data if isinstance(p_layer, AdjointField) else np.asarray(p_layer, dtype=float)
    beta = np.asarray(params.beta_birth(grid.a_nodes), dtype=float)
    return beta[:, None] * data[S, 0, :][None, :]


class BackwardStepper:
    """Precomputed operators for the reversed characteristic march."""

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
        rate = np.empty((N_COMP, grid.na))
        rate[S] = mu
        rate[V] = mu + params.c
        rate[I] = mu + params.d_I + params.gamma
        rate[R] = mu
        self.rate = rate

        # Explicit side sits at the source ages a_1 .. a_{na-1}.
        self.ecoef = 1.0 - self.hdt * rate[:, 1:]
        self.half_sig_old = self.hdt * self.sigma[:, 1:]

        # Implicit templates at the target ages a_0 .. a_{na-2}.
        nx = grid.nx
        half_new = self.hdt * self.sigma[:, :-1] / (dx * dx)
        diag = 1.0 + self.hdt * rate[:, :-1, None] + 2.0 * half_new[:, :, None]
        diag = np.broadcast_to(diag, (N_COMP, grid.na - 1, nx)).copy()
        ups, los = zip(*(_band_limits(half_new[c], nx) for c in range(N_COMP)))

        n_sv = 2 * (grid.na - 1) * nx
        ab_sv = np.zeros((5, n_sv))
        ab_sv[2, 0::2] = diag[S].ravel()
        ab_sv[2, 1::2] = diag[V].ravel()
        ab_sv[3, 0::2] = -self.hdt * params.c  # transposed immunity loss: V-adjoint <- S-adjoint
        ab_sv[0, 0::2][1:] = ups[S].ravel()[:-1]
        ab_sv[0, 1::2][1:] = ups[V].ravel()[:-1]
        ab_sv[4, 0::2][:-1] = los[S].ravel()[1:]
        ab_sv[4, 1::2][:-1] = los[V].ravel()[1:]
        self._ab_sv0 = ab_sv
        self._ab_i = _stack_tridiag(diag[I], ups[I], los[I])
        self._ab_r = _stack_tridiag(diag[R], ups[R], los[R])

        self.kmat = kernel_matrix(grid, params)
        self.beta_nodes = np.asarray(params.beta_birth(a), dtype=float)
        self.g = params.g

    def force_profile(self, layer: np.ndarray) -> np.ndarray:
        g = self.grid
        return self.kmat @ (g.space_trap_w * (g.age_trap_w @ layer[I]))

    def explicit_field(self, y_layer: np.ndarray, p_layer: np.ndarray) -> np.ndarray:
        """Trajectory- and adjoint-dependent terms treated explicitly, (4, na, nx).

        Collects the transposed infection matrix, the nonlocal adjoint
        source, the observation source g^T g y and the transposed birth
        coupling, with the signs they carry on the reversed-march
        right-hand side.
        """
        p = self.params
        lam = self.force_profile(y_layer)
        e = np.empty_like(y_layer)
        e[S] = lam * (p_layer[S] - p_layer[I])
        e[V] = p.phi1 * lam * (p_layer[V] - p_layer[I])
        e[R] = p.phi2 * lam * (p_layer[R] - p_layer[I])
        e[I] = apply_lambda_adjoint(y_layer, p_layer, self.grid, p, kmat=self.kmat)
        gy = np.tensordot(self.g, y_layer, axes=1)
        for comp in range(N_COMP):
            if self.g[comp] != 0.0:
                e[comp] += self.g[comp] * gy
        e -= self.beta_nodes[:, None] * p_layer[S, 0, :][None, :]
        return e

    def retreat(
        self,
        p_layer: np.ndarray,
        e_ab: np.ndarray,
        u_field: np.ndarray,
    ) -> np.ndarray:
        """One reversed characteristic step from a known layer to the earlier one."""
        g, p = self.grid, self.params
        hdt, dt = self.hdt, g.dt

        old = p_layer[:, 1:, :]
        rhs = self.ecoef[:, :, None] * old
        rhs += self.half_sig_old[:, :, None] * neumann_laplacian(old, g.dx)
        rhs -= dt * e_ab
        rhs[S] -= hdt * u_field[1:, :] * old[S]
        rhs[S] += hdt * u_field[1:, :] * old[V]
        rhs[V] += hdt * p.c * old[S]
        rhs[I] += hdt * p.gamma * old[R]

        shape = (g.na - 1, g.nx)
        new = np.zeros((N_COMP, g.na, g.nx))
        new[R, :-1, :] = solve_banded(
            (1, 1), self._ab_r, rhs[R].ravel(), overwrite_b=True, check_finite=False
        ).reshape(shape)
        rhs[I] += hdt * p.gamma * new[R, :-1, :]
        new[I, :-1, :] = solve_banded(
            (1, 1), self._ab_i, rhs[I].ravel(), overwrite_b=True, check_finite=False
        ).reshape(shape)

        u_new = u_field[:-1, :].ravel()
        ab = self._ab_sv0.copy()
        ab[2, 0::2] += hdt * u_new
        ab[1, 1::2] = -hdt * u_new  # transposed vaccination: S-adjoint <- V-adjoint
        z = np.empty(2 * rhs[S].size)
        z[0::2] = rhs[S].ravel()
        z[1::2] = rhs[V].ravel()
        sol = solve_banded((2, 2), ab, z, overwrite_ab=True, overwrite_b=True, check_finite=False)
        new[S, :-1, :] = sol[0::2].reshape(shape)
        new[V, :-1, :] = sol[1::2].reshape(shape)
        return new


def backward_march(
    traj: Trajectory,
    schedule: ControlSchedule,
    grid: Grid,
    params: ModelParams,
    layout: ControlLayout = None,
):
    """Yield adjoint layers (n, data) from n = nt-1 down to n = 0.

    Consumers that only reduce over layers (gradient assembly) can stream
    from this generator without holding the whole adjoint in memory.
    """
    if len(traj.layers) != grid.nt:
        raise ValueError(f"trajectory has {len(traj.layers)} layers, grid wants {grid.nt}")
    if layout is None and schedule is not None:
        layout = schedule.layout
    values = schedule.values if schedule is not None else None
    if values is not None and values.shape[0] != grid.nt - 1:
        raise ValueError(
            f"schedule has {values.shape[0]} step layers, grid wants {grid.nt - 1}"
        )
    stepper = BackwardStepper(grid, params)
    amask = rmask = None
    if values is not None:
        amask = age_class_masks(layout, grid).astype(float)
        rmask = region_masks(layout, grid).astype(float)

    def control_field(n: int) -> np.ndarray:
        if values is None:
            return np.zeros((grid.na, grid.nx))
        return np.einsum("ij,ja,ix->ax", values[n], amask, rmask)

    p_cur = np.zeros((N_COMP, grid.na, grid.nx))
    yield grid.nt - 1, p_cur
    e_next = stepper.explicit_field(traj.layers[-1].data, p_cur)
    e_next2 = None
    for n in range(grid.nt - 2, -1, -1):
        e_ab = e_next[:, 1:, :].copy()
        if e_next2 is not None and grid.na > 2:
            e_ab[:, :-1, :] = 1.5 * e_next[:, 1:-1, :] - 0.5 * e_next2[:, 2:, :]
        p_cur = stepper.retreat(p_cur, e_ab, control_field(n))
        yield n, p_cur
        if n > 0:
            e_next2 = e_next
            e_next = stepper.explicit_field(traj.layers[n].data, p_cur)


def solve_backward(
    traj: Trajectory,
    schedule: ControlSchedule,
    grid: Grid,
    params: ModelParams,
    layout: ControlLayout = None,
) -> list:
    """Full adjoint solution as a list of AdjointField, index n <-> time node t_n."""
    out = [None] * grid.nt
    for n, data in backward_march(traj, schedule, grid, params, layout):
        out[n] = AdjointField(data.copy())
    return out
