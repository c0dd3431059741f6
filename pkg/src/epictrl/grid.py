"""Aligned time-age-space discretization.

Time and age share one step (dt == da), so every node lies on a
characteristic line of the aging operator and the solvers can march
exactly along characteristics without interpolation.  Space is a uniform
1-D mesh on [x_lo, x_hi].  Integrals over age and space use composite
trapezoid weights built here once and shared by every solver.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

_REL_TOL = 1e-9


def _exact_count(span: float, step: float, name: str) -> int:
    """Number of intervals in `span / step`, required to be an integer."""
    if step <= 0.0:
        raise ConfigurationError(name, f"step must be positive, got {step}")
    ratio = span / step
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > _REL_TOL * max(1.0, abs(ratio)):
        raise ConfigurationError(
            name, f"{span} is not an integer multiple of step {step} (ratio {ratio})"
        )
    return n


@dataclass(frozen=True)
class GridSpec:
    """User-facing discretization request.

    T, a_max and the spatial extent must be integer multiples of their
    steps; violations raise ConfigurationError naming the field.
    """

    T: float
    a_max: float
    dt: float
    dx: float
    x_lo: float = 0.0
    x_hi: float = 1.0

    def validate(self) -> None:
        for name in ("T", "a_max", "dt", "dx"):
            if getattr(self, name) <= 0.0:
                raise ConfigurationError(name, f"must be positive, got {getattr(self, name)}")
        if self.x_hi <= self.x_lo:
            raise ConfigurationError("x_hi", f"must exceed x_lo, got [{self.x_lo}, {self.x_hi}]")
        _exact_count(self.T, self.dt, "T")
        _exact_count(self.a_max, self.dt, "a_max")
        _exact_count(self.x_hi - self.x_lo, self.dx, "dx")


@dataclass(frozen=True)
class Grid:
    """Realized mesh with node coordinates and trapezoid quadrature weights.

    Immutable after construction; safe to share across workers.
    """

    spec: GridSpec
    nt: int
    na: int
    nx: int
    t_nodes: np.ndarray
    a_nodes: np.ndarray
    x_nodes: np.ndarray
    age_trap_w: np.ndarray = field(repr=False)
    space_trap_w: np.ndarray = field(repr=False)

    @property
    def dt(self) -> float:
        return self.spec.dt

    @property
    def dx(self) -> float:
        return self.spec.dx


def _trapezoid_weights(n_nodes: int, h: float) -> np.ndarray:
    w = np.full(n_nodes, h)
    w[0] = 0.5 * h
    w[-1] = 0.5 * h
    return w


def build_grid(spec: GridSpec) -> Grid:
    """Build the aligned mesh for `spec`.

    Node coordinates are formed by direct multiplication (i * dt), never
    by repeated addition, so there is no accumulation drift over long
    marches.
    """
    spec.validate()
    nt = _exact_count(spec.T, spec.dt, "T") + 1
    na = _exact_count(spec.a_max, spec.dt, "a_max") + 1
    nx = _exact_count(spec.x_hi - spec.x_lo, spec.dx, "dx") + 1
    t_nodes = np.arange(nt) * spec.dt
    a_nodes = np.arange(na) * spec.dt
    x_nodes = spec.x_lo + np.arange(nx) * spec.dx
    grid = Grid(
        spec=spec,
        nt=nt,
        na=na,
        nx=nx,
        t_nodes=t_nodes,
        a_nodes=a_nodes,
        x_nodes=x_nodes,
        age_trap_w=_trapezoid_weights(na, spec.dt),
        space_trap_w=_trapezoid_weights(nx, spec.dx),
    )
    for arr in (grid.t_nodes, grid.a_nodes, grid.x_nodes, grid.age_trap_w, grid.space_trap_w):
        arr.flags.writeable = False
    return grid


def characteristic_shift(na: int) -> tuple[list[tuple[int, int]], int]:
    """Index pairs (target, source) linking consecutive layers along characteristics.

    Age node k >= 1 of the next time layer is fed by node k-1 of the
    current layer (unit-speed aging with da == dt).  Node 0 has no
    predecessor; it is the birth boundary, returned as the second element.
    """
    pairs = [(k, k - 1) for k in range(1, na)]
    return pairs, 0
