"""SVIR model coefficients and the finite-dimensional control parameterization.

Compartment order is (S, V, I, R) throughout the package.  The reaction
matrix L, the control operator and the infection coupling matrix follow
the sign convention of the governing system

    (d/dt + d/da) y + L y + Lambda(y) y + K(u) y = sigma(a) Laplace y,

so L and the coupling matrix sit on the left-hand side.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, DomainError
from .grid import Grid

S, V, I, R = 0, 1, 2, 3
N_COMP = 4

RateFn = Callable[[np.ndarray], np.ndarray]
KernelFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ModelParams:
    """All model coefficients.

    Rate functions must accept scalar or ndarray age/position arguments
    and evaluate elementwise.  `d_I` is the infection-induced death rate
    and `c` the rate of loss of vaccine protection; `phi1`/`phi2` are the
    residual exposure factors of vaccinated/recovered individuals.
    """

    a_max: float
    c: float
    phi1: float
    phi2: float
    d_I: float
    gamma: float
    mu: RateFn
    beta_birth: RateFn
    kernel: KernelFn
    sigma_s: RateFn
    sigma_v: RateFn
    sigma_i: RateFn
    sigma_r: RateFn
    g: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0, 0.0]))
    alpha: float = 500.0
    u_bar: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "g", np.asarray(self.g, dtype=float))
        if self.g.shape != (N_COMP,):
            raise ConfigurationError("g", f"expected 4 weights, got shape {self.g.shape}")
        for name in ("c", "d_I", "gamma", "alpha", "u_bar"):
            if getattr(self, name) < 0.0:
                raise ConfigurationError(name, f"must be nonnegative, got {getattr(self, name)}")
        for name in ("phi1", "phi2"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ConfigurationError(name, f"must lie in [0, 1], got {val}")
        if self.a_max <= 0.0:
            raise ConfigurationError("a_max", f"must be positive, got {self.a_max}")

    def validate_on_grid(self, grid: Grid) -> None:
        """Check kernel symmetry and diffusion positivity on the mesh nodes."""
        x = grid.x_nodes
        k = self.kernel(x[:, None], x[None, :])
        if not np.array_equal(k, k.T):
            raise ConfigurationError("kernel", "not symmetric on the grid nodes")
        for name, fn in (
            ("sigma_s", self.sigma_s),
            ("sigma_v", self.sigma_v),
            ("sigma_i", self.sigma_i),
            ("sigma_r", self.sigma_r),
        ):
            vals = np.asarray(fn(grid.a_nodes), dtype=float)
            if not np.all(vals > 0.0):
                raise ConfigurationError(name, "diffusion must be strictly positive on [0, a_max]")


def table1_params(
    a_max: float = 1.0,
    alpha: float = 500.0,
    u_bar: float = 10.0,
    g=(0.0, 0.0, 1.0, 0.0),
) -> ModelParams:
    """Baseline parameter set used in the numerical experiments."""
    return ModelParams(
        a_max=a_max,
        c=0.18564,
        phi1=0.0052,
        phi2=0.00062,
        d_I=0.0018,
        gamma=0.278574,
        mu=lambda a: np.exp(-a) * a**5,
        beta_birth=lambda a: (6.78 / a_max) * a**2 * (a_max - a) * (1.0 + np.sin(np.pi * a / a_max)),
        kernel=lambda x, xi: np.maximum(0.1 - np.abs(x - xi), 0.0),
        sigma_s=lambda a: 0.1 * np.exp(-0.1 * a),
        sigma_v=lambda a: 0.1 * np.exp(-0.1 * a),
        sigma_i=lambda a: 0.05 * np.exp(-0.1 * a),
        sigma_r=lambda a: 0.1 * np.exp(-0.1 * a),
        g=np.asarray(g, dtype=float),
        alpha=alpha,
        u_bar=u_bar,
    )


def _check_age(a, params: ModelParams) -> None:
    a = np.asarray(a, dtype=float)
    if np.any(a < 0.0) or np.any(a > params.a_max):
        raise DomainError(f"age {a} outside [0, {params.a_max}]")


def reaction_matrix(a: float, x: float, params: ModelParams) -> np.ndarray:
    """Linear reaction matrix L(a, x), rows and columns ordered (S, V, I, R).

    The x argument is accepted for interface generality; the baseline
    coefficients depend on age only.
    """
    _check_age(a, params)
    mu = float(params.mu(np.asarray(a, dtype=float)))
    L = np.zeros((N_COMP, N_COMP))
    L[S, S] = mu
    L[S, V] = -params.c
    L[V, V] = mu + params.c
    L[I, I] = mu + params.d_I + params.gamma
    L[R, I] = -params.gamma
    L[R, R] = mu
    return L


def birth_weight(a, params: ModelParams) -> np.ndarray:
    """Fertility rate; newborns all enter the S compartment."""
    _check_age(a, params)
    return params.beta_birth(np.asarray(a, dtype=float))


def kernel_eval(x, xi, params: ModelParams) -> np.ndarray:
    """Infection kernel between positions x and xi (age independent)."""
    return params.kernel(np.asarray(x, dtype=float), np.asarray(xi, dtype=float))


def infection_coupling_matrix(params: ModelParams) -> np.ndarray:
    """Matrix C so the nonlocal term on the left-hand side is Lambda * (C @ y).

    Row I collects the infections gained from S, V, R exposure; rows
    S, V, R carry the matching losses scaled by their exposure factors.
    """
    C = np.zeros((N_COMP, N_COMP))
    C[S, S] = 1.0
    C[V, V] = params.phi1
    C[I, S] = -1.0
    C[I, V] = -params.phi1
    C[I, R] = -params.phi2
    C[R, R] = params.phi2
    return C


@dataclass(frozen=True)
class ControlLayout:
    """Vaccination regions and age classes of the finite-dimensional control.

    `regions` are M mutually disjoint open spatial intervals; `age_breaks`
    are the N+1 ascending edges of the age classes [a_{j-1}, a_j].
    """

    regions: tuple
    age_breaks: tuple

    def __post_init__(self):
        regions = tuple((float(lo), float(hi)) for lo, hi in self.regions)
        breaks = tuple(float(b) for b in self.age_breaks)
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "age_breaks", breaks)
        if len(breaks) < 2 or any(b1 >= b2 for b1, b2 in zip(breaks, breaks[1:])):
            raise ConfigurationError("age_breaks", f"must be strictly increasing, got {breaks}")
        for lo, hi in regions:
            if lo >= hi:
                raise ConfigurationError("regions", f"empty interval ({lo}, {hi})")
        for (lo1, hi1), (lo2, hi2) in zip(sorted(regions), sorted(regions)[1:]):
            if hi1 > lo2:
                raise ConfigurationError(
                    "regions", f"intervals ({lo1}, {hi1}) and ({lo2}, {hi2}) overlap"
                )

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    @property
    def n_age_classes(self) -> int:
        return len(self.age_breaks) - 1


def region_masks(layout: ControlLayout, grid: Grid) -> np.ndarray:
    """Boolean (M, nx) node membership of each open region interval.

    Nodes exactly on a region edge are excluded (the intervals are open).
    """
    x = grid.x_nodes
    return np.array([(x > lo) & (x < hi) for lo, hi in layout.regions])


def age_class_masks(layout: ControlLayout, grid: Grid) -> np.ndarray:
    """Boolean (N, na) node membership of each age class.

    A node exactly on a shared break a_j belongs to the lower class
    [a_{j-1}, a_j], so the classes partition the covered nodes.  The
    first class keeps its own lower edge a_0.
    """
    a = grid.a_nodes
    breaks = layout.age_breaks
    masks = []
    for j in range(layout.n_age_classes):
        lo, hi = breaks[j], breaks[j + 1]
        if j == 0:
            masks.append((a >= lo) & (a <= hi))
        else:
            masks.append((a > lo) & (a <= hi))
    return np.array(masks)


def expand_control(u_layer: np.ndarray, layout: ControlLayout, grid: Grid) -> np.ndarray:
    """Expand one (M, N) control matrix into a nodal (na, nx) field.

    u(a, x) = sum_ij u_ij * 1_region_i(x) * 1_class_j(a); nodes outside
    every region or class get zero.
    """
    u_layer = np.asarray(u_layer, dtype=float)
    M, N = layout.n_regions, layout.n_age_classes
    if u_layer.shape != (M, N):
        raise ConfigurationError(
            "u_layer", f"expected shape ({M}, {N}), got {u_layer.shape}"
        )
    rmask = region_masks(layout, grid).astype(float)
    amask = age_class_masks(layout, grid).astype(float)
    return np.einsum("ij,ja,ix->ax", u_layer, amask, rmask)


@dataclass
class ControlSchedule:
    """Piecewise-constant control: values[n] applies on [t_n, t_{n+1})."""

    values: np.ndarray
    layout: ControlLayout

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3 or self.values.shape[1:] != (
            self.layout.n_regions,
            self.layout.n_age_classes,
        ):
            raise ConfigurationError(
                "values",
                f"expected (steps, {self.layout.n_regions}, {self.layout.n_age_classes}), "
                f"got {self.values.shape}",
            )

    @classmethod
    def zeros(cls, grid: Grid, layout: ControlLayout) -> "ControlSchedule":
        return cls(
            np.zeros((grid.nt - 1, layout.n_regions, layout.n_age_classes)), layout
        )
