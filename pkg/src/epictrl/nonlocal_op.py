"""Nonlocal infection operator and its adjoint.

Both directions integrate with the same composite trapezoid weights over
age and space, so the discrete pairing identity

    <Lambda(h) y, p> == <h, adjoint_source(y, p)>

holds to roundoff, not merely to discretization order.
"""

from dataclasses import dataclass

import numpy as np

from .grid import Grid
from .model import I, R, S, V, ModelParams


@dataclass(frozen=True)
class ForceOfInfection:
    """Per-node infection pressure Lambda(a, x).

    The baseline kernel is age independent, so the field is stored as a
    spatial profile and exposed as a read-only (na, nx) broadcast view.
    """

    space_profile: np.ndarray
    na: int

    @property
    def values(self) -> np.ndarray:
        return np.broadcast_to(self.space_profile, (self.na, len(self.space_profile)))


def kernel_matrix(grid: Grid, params: ModelParams) -> np.ndarray:
    """Nodal kernel values k[i, j] = kernel(x_i, x_j)."""
    x = grid.x_nodes
    return params.kernel(x[:, None], x[None, :])


def apply_lambda(
    i_field: np.ndarray, grid: Grid, params: ModelParams, kmat: np.ndarray = None
) -> ForceOfInfection:
    """Force of infection from an infectious field on the grid nodes.

    Lambda(x) = sum_a sum_xi w_a[a] w_x[xi] kernel(x_xi, x) I[a, xi];
    constant in age for the age-independent kernel.
    """
    i_field = np.asarray(i_field, dtype=float)
    if i_field.shape != (grid.na, grid.nx):
        raise ValueError(f"expected field shape ({grid.na}, {grid.nx}), got {i_field.shape}")
    if kmat is None:
        kmat = kernel_matrix(grid, params)
    age_integrated = grid.age_trap_w @ i_field
    profile = kmat @ (grid.space_trap_w * age_integrated)
    return ForceOfInfection(space_profile=profile, na=grid.na)


def apply_lambda_adjoint(
    y_layer: np.ndarray,
    p_layer: np.ndarray,
    grid: Grid,
    params: ModelParams,
    kmat: np.ndarray = None,
) -> np.ndarray:
    """I-slot source of the adjoint nonlocal operator, shape (na, nx).

    Only perturbations of the infectious compartment feed back through
    the kernel, so the other compartment slots of the adjoint source are
    identically zero and are not returned.  The bracket pairs the state
    against the adjoint through the infection coupling matrix:

        S p_S + phi1 V p_V - (S + phi1 V + phi2 R) p_I + phi2 R p_R.
    """
    y_layer = np.asarray(y_layer, dtype=float)
    p_layer = np.asarray(p_layer, dtype=float)
    if y_layer.shape != p_layer.shape or y_layer.shape != (4, grid.na, grid.nx):
        raise ValueError(
            f"expected two (4, {grid.na}, {grid.nx}) fields, got {y_layer.shape}, {p_layer.shape}"
        )
    if kmat is None:
        kmat = kernel_matrix(grid, params)
    bracket = (
        y_layer[S] * p_layer[S]
        + params.phi1 * y_layer[V] * p_layer[V]
        - (y_layer[S] + params.phi1 * y_layer[V] + params.phi2 * y_layer[R]) * p_layer[I]
        + params.phi2 * y_layer[R] * p_layer[R]
    )
    age_integrated = grid.age_trap_w @ bracket
    profile = kmat @ (grid.space_trap_w * age_integrated)
    return np.broadcast_to(profile, (grid.na, grid.nx))


def lambda_bound_constant(grid: Grid, params: ModelParams) -> float:
    """Discrete operator-norm bound max_x sum_xi w_xi kernel(x, xi)."""
    kmat = kernel_matrix(grid, params)
    return float(np.max(kmat @ grid.space_trap_w))
