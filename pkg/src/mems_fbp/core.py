"""Grids, parameters, state containers, quadrature, and finite differences.

The membrane deflection u lives on a uniform 1-D grid over [-1, 1]; the gap
potential lives on the tensor grid of x with a normalized vertical coordinate
eta in [0, 1] (the physical gap is rescaled onto a fixed rectangle).  Every
other module consumes the containers and stencils defined here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the membrane model.

    lam    -- applied voltage strength (lambda >= 0); external files spell it "lambda"
    eps    -- device aspect ratio (>= 0); eps = 0 selects the small-gap reduction
    beta   -- bending stiffness (> 0)
    tau    -- stretching stiffness (>= 0)
    gamma  -- inertia parameter (>= 0); gamma = 0 selects the parabolic flow
    """

    lam: float
    eps: float
    beta: float = 1.0
    tau: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.eps < 0:
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        if self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")

    @property
    def small_gap(self) -> bool:
        return self.eps == 0.0


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Uniform grid on [-1, 1] with an odd number of nodes (so x=0 is a node)."""

    n: int
    x: np.ndarray
    h: float

    @classmethod
    def of_size(cls, n: int) -> "Grid1D":
        if n < 11:
            raise ValueError(f"grid needs at least 11 nodes, got {n}")
        if n % 2 == 0:
            raise ValueError(f"node count must be odd for a node at x=0, got {n}")
        x = np.linspace(-1.0, 1.0, n)
        return cls(n=n, x=x, h=2.0 / (n - 1))


@dataclass(frozen=True, eq=False)
class Grid2D:
    """Tensor grid: Grid1D in x crossed with a uniform eta-grid on [0, 1]."""

    gx: Grid1D
    m: int
    eta: np.ndarray
    k: float

    @classmethod
    def of_size(cls, gx: Grid1D, m: int) -> "Grid2D":
        if m < 11:
            raise ValueError(f"vertical grid needs at least 11 nodes, got {m}")
        eta = np.linspace(0.0, 1.0, m)
        return cls(gx=gx, m=m, eta=eta, k=1.0 / (m - 1))


@dataclass(frozen=True, eq=False)
class DeflectionState:
    """Deflection u (and velocity v when the model has inertia) at time t.

    Endpoint values of u and v must vanish (clamped membrane).  States produced
    by the steppers satisfy this exactly; externally supplied profiles are
    checked to 1e-12 and snapped.
    """

    t: float
    u: np.ndarray
    v: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "u", _clamped(self.u, "deflection"))
        if self.v is not None:
            object.__setattr__(self, "v", _clamped(self.v, "velocity"))

    @property
    def admissible(self) -> bool:
        """True while the membrane stays strictly above the ground plate."""
        return float(np.min(self.u)) > -1.0


def _clamped(values: np.ndarray, label: str) -> np.ndarray:
    out = np.array(values, dtype=float)
    if abs(out[0]) > 1e-12 or abs(out[-1]) > 1e-12:
        raise ValueError(f"{label} endpoints must vanish (clamped)")
    out[0] = 0.0
    out[-1] = 0.0
    return out


def quad1d(grid: Grid1D, values: np.ndarray) -> float:
    """Composite trapezoid approximation of the integral over [-1, 1]."""
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.n,):
        raise ValueError(f"expected {grid.n} samples, got shape {values.shape}")
    return float(np.trapezoid(values, dx=grid.h))


def quad2d(grid: Grid2D, values: np.ndarray) -> float:
    """Tensor-trapezoid approximation of the integral over [-1,1] x [0,1]."""
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.gx.n, grid.m):
        raise ValueError(
            f"expected shape {(grid.gx.n, grid.m)}, got {values.shape}"
        )
    return float(np.trapezoid(np.trapezoid(values, dx=grid.k, axis=1), dx=grid.gx.h))


def diff1(values: np.ndarray, step: float, axis: int = -1) -> np.ndarray:
    """First derivative: centered in the interior, 2nd-order one-sided at the ends."""
    values = np.asarray(values, dtype=float)
    if values.shape[axis] < 5:
        raise ValueError("need at least 5 samples along the axis")
    return np.gradient(values, step, axis=axis, edge_order=2)


def diff2(values: np.ndarray, step: float, axis: int = -1) -> np.ndarray:
    """Second derivative: centered in the interior, 2nd-order one-sided at the ends."""
    v = np.asarray(values, dtype=float)
    if v.shape[axis] < 5:
        raise ValueError("need at least 5 samples along the axis")
    v = np.moveaxis(v, axis, -1)
    d = np.empty_like(v)
    d[..., 1:-1] = v[..., 2:] - 2.0 * v[..., 1:-1] + v[..., :-2]
    d[..., 0] = 2.0 * v[..., 0] - 5.0 * v[..., 1] + 4.0 * v[..., 2] - v[..., 3]
    d[..., -1] = 2.0 * v[..., -1] - 5.0 * v[..., -2] + 4.0 * v[..., -3] - v[..., -4]
    d /= step * step
    return np.moveaxis(d, -1, axis)


def dx1(grid: Grid1D, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.n,):
        raise ValueError(f"expected {grid.n} samples, got shape {values.shape}")
    return diff1(values, grid.h)


def dx2(grid: Grid1D, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.n,):
        raise ValueError(f"expected {grid.n} samples, got shape {values.shape}")
    return diff2(values, grid.h)


def l2_norm(grid: Grid1D, values: np.ndarray) -> float:
    """Continuum-scaled L2 norm under trapezoid quadrature."""
    return float(np.sqrt(quad1d(grid, np.asarray(values, dtype=float) ** 2)))


def h2_norm(grid: Grid1D, values: np.ndarray) -> float:
    """Discrete H2 norm, used by the runaway guard in the time stepper."""
    v = np.asarray(values, dtype=float)
    return float(
        np.sqrt(
            quad1d(grid, v**2)
            + quad1d(grid, dx1(grid, v) ** 2)
            + quad1d(grid, dx2(grid, v) ** 2)
        )
    )


def h4_norm(grid: Grid1D, values: np.ndarray) -> float:
    """Sobolev H4 norm: sum of squared L2 norms of derivatives of order 0..4.

    This package fixes this convention wherever an H4 norm enters a reported
    constant, and tags serialized outputs with it.
    """
    v = np.asarray(values, dtype=float)
    d1 = dx1(grid, v)
    d2 = dx2(grid, v)
    d3 = dx1(grid, d2)
    d4 = dx2(grid, d2)
    total = 0.0
    for d in (v, d1, d2, d3, d4):
        total += quad1d(grid, d**2)
    return float(np.sqrt(total))


H4_NORM_CONVENTION = "sum-of-squared-L2-norms-of-derivatives-0-to-4"


def profile_zero(grid: Grid1D) -> np.ndarray:
    return np.zeros(grid.n)


def profile_polynomial_well(grid: Grid1D, depth: float) -> np.ndarray:
    """Clamped-compatible well u0(x) = -depth*(1-x^2)^2; needs depth < 1."""
    if not 0 <= depth < 1:
        raise ValueError(f"well depth must lie in [0, 1), got {depth}")
    return -depth * (1.0 - grid.x**2) ** 2
