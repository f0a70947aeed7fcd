"""Steady states, continuation to the pull-in fold, stability, and bounds.

The stationary problem F(u; lam) = A u + lam g(u) = 0 is solved by damped
Newton with a dense finite-difference Jacobian (the reaction is nonlocal, so
each column costs one potential solve).  A natural continuation in lam rides
the minimal branch until Newton stops converging; step halving then brackets
the fold, which is the numerical pull-in threshold lambda*.  The module also
evaluates the weighted steady-state identities and the closed-form
non-existence level lambda_c(eps) they imply.
"""

from __future__ import annotations

import multiprocessing
import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from . import beam, core, elliptic
from .core import DeflectionState, ModelParams
from .dynamics import EvolutionSetup

RESIDUAL_TOL = 1e-9
_ARMIJO_SLOPE = 1e-4
_MIN_ALPHA = 2.0**-10
_FD_DELTA = 1e-6
_PARALLEL_MIN_COLS = 64


def worker_count() -> int:
    """Worker cap for Jacobian columns (and parameter sweeps).

    ``MEMS_FBP_THREADS`` overrides; the default is the available core
    count.  Everything else in a single run stays single-threaded so that
    results are reproducible.
    """
    raw = os.environ.get("MEMS_FBP_THREADS", "").strip()
    if raw:
        return max(1, int(raw))
    return os.cpu_count() or 1


def residual_floor(setup: EvolutionSetup, u: np.ndarray) -> float:
    """Roundoff floor of ``||A u + lam g||_inf`` for a float64-stored u.

    The stored deflection carries per-node representation error up to
    eps*|u|; the stencil amplifies it by the absolute coefficient sums
    16*beta/h^4 and 4*tau/h^2.  No converged residual can sit below this
    level on fine grids, so Newton's stopping test adds it to the base
    tolerance (at desk-scale grids the floor is far below 1e-9 and the
    base tolerance is the whole story).
    """
    g = setup.grid
    p = setup.params
    amp = 16.0 * p.beta / g.h**4 + 4.0 * p.tau / g.h**2
    return float(np.finfo(float).eps * amp * np.max(np.abs(u)))


class SteadyConvergenceError(RuntimeError):
    """Newton failed to reach the residual tolerance."""


@dataclass(frozen=True, eq=False)
class SteadyState:
    """A converged stationary deflection and its derived fields."""

    lam: float
    u: np.ndarray
    g: np.ndarray
    gamma_m: np.ndarray  # vertical field strength at the membrane
    G: np.ndarray  # (1 + eps^2 u'^2) * gamma_m^2
    newton_iters: int
    residual_norm: float
    potential: elliptic.PotentialField

    @property
    def state(self) -> DeflectionState:
        return DeflectionState(t=0.0, u=self.u)


@dataclass(frozen=True, eq=False)
class Branch:
    """Minimal steady branch from lam = 0 up to the fold (or lambda_max)."""

    points: list[SteadyState]
    lambda_star: float | None
    stability: list[float]  # smallest linearization eigenvalue per point


@dataclass(frozen=True, eq=False)
class NonexistenceBound:
    """Analytic level above which no steady state can exist."""

    eps: float
    eps_star: float
    alpha_eps: float
    K1: float
    lambda_c: float | None


@dataclass(frozen=True, eq=False)
class IdentityReport:
    """Both steady-state integral identities evaluated on one state.

    ``balance_*`` is the equality: eigenfunction-weighted reaction equals
    the matching weighted field energy, so the residual vanishes under
    refinement.  ``comparison_margin`` is the inequality: weighted vertical
    field energy minus the weighted gap integral, nonnegative up to
    discretization error.
    """

    balance_lhs: float
    balance_rhs: float
    balance_residual: float
    balance_relative: float
    comparison_margin: float


def _reaction_values(
    u: np.ndarray, setup: EvolutionSetup, tight: bool = True
) -> np.ndarray:
    # tight potential solves by default: Newton's residual tolerance sits
    # far below the trace noise a fast solve leaves behind
    state = DeflectionState(t=0.0, u=u)
    return elliptic.compute_reaction(
        state, setup.params.eps, setup.grid2d, tight=tight
    ).g


def _interior_residual(
    u: np.ndarray, lam: float, setup: EvolutionSetup
) -> np.ndarray:
    # compensated beam action: the residual tolerance is far below the
    # roundoff a plain 1/h^4-scaled matvec leaves behind on fine grids
    F = beam.matvec_compensated(setup.op, u[1:-1])
    if lam != 0.0:
        F = F + lam * _reaction_values(u, setup)[1:-1]
    return F


def steady_residual(u: DeflectionState, lam: float, setup: EvolutionSetup) -> np.ndarray:
    """F(u; lam) = A u + lam g(u), zero-padded at the clamped endpoints."""
    if np.min(u.u) <= -1.0:
        raise ValueError("deflection reaches the ground plate")
    out = np.zeros_like(u.u)
    out[1:-1] = _interior_residual(u.u, lam, setup)
    return out


def _jacobian(u: np.ndarray, lam: float, setup: EvolutionSetup) -> np.ndarray:
    """Dense Jacobian: exact beam block plus FD reaction columns.

    The beam part is linear, so its finite differences are reproduced
    exactly by the assembled matrix (and without the 1/h^4 roundoff an
    actual difference quotient would inject); only the reaction is
    differenced, at one elliptic solve per column.
    """
    J = setup.op.dense()
    if lam == 0.0:
        return J
    ni = u.shape[0] - 2
    # plain solves suffice here: difference quotients at delta = 1e-6 sit
    # orders of magnitude above the refinement tolerance
    base = _reaction_values(u, setup, tight=False)[1:-1]
    cols = _fd_reaction_columns(u, setup, ni)
    J += (lam / _FD_DELTA) * (cols - base[:, None])
    return J


# State handed to forked Jacobian workers.  Children inherit it (and the
# warm potential factorization) by copy-on-write, so nothing heavyweight
# crosses the pipe; only column indices go out and column values come back.
_FD_STATE: tuple[np.ndarray, EvolutionSetup] | None = None


def _fd_column_block(span: tuple[int, int]) -> np.ndarray:
    u, setup = _FD_STATE
    lo, hi = span
    out = np.empty((u.shape[0] - 2, hi - lo))
    pert = u.copy()
    for j in range(lo, hi):
        pert[j + 1] = u[j + 1] + _FD_DELTA
        out[:, j - lo] = _reaction_values(pert, setup, tight=False)[1:-1]
        pert[j + 1] = u[j + 1]
    return out


def _fd_reaction_columns(
    u: np.ndarray, setup: EvolutionSetup, ni: int
) -> np.ndarray:
    """Reaction values at all column perturbations, (ni, ni), fixed order."""
    global _FD_STATE
    _FD_STATE = (u, setup)
    try:
        workers = min(worker_count(), ni)
        if workers <= 1 or ni < _PARALLEL_MIN_COLS:
            return _fd_column_block((0, ni))
        edges = np.linspace(0, ni, workers + 1).astype(int)
        spans = list(zip(edges[:-1], edges[1:]))
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(workers) as pool:
            blocks = pool.map(_fd_column_block, spans)
        return np.hstack(blocks)
    finally:
        _FD_STATE = None


def _finalize(
    u: np.ndarray, lam: float, setup: EvolutionSetup, iters: int, fnorm: float
) -> SteadyState:
    p = setup.params
    state = DeflectionState(t=0.0, u=u)
    # full mode even at eps = 0 so the potential is always attached
    reaction = elliptic.compute_reaction(
        state, p.eps, setup.grid2d, mode=elliptic.MODE_FULL, tight=True
    )
    one_u = 1.0 + u
    gamma_m = reaction.potential.trace / one_u
    dxu = core.dx1(setup.grid, u)
    G = (1.0 + p.eps**2 * dxu**2) * gamma_m**2
    return SteadyState(
        lam=lam, u=u.copy(), g=reaction.g, gamma_m=gamma_m, G=G,
        newton_iters=iters, residual_norm=fnorm, potential=reaction.potential,
    )


def newton_steady(
    lam: float,
    guess: DeflectionState,
    setup: EvolutionSetup,
    kappa_stop: float = 0.01,
    max_iter: int = 50,
) -> SteadyState:
    """Damped Newton iteration for the stationary problem at fixed lam."""
    if lam < 0.0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    if not guess.admissible:
        raise ValueError("guess must satisfy min(u) > -1")
    u = guess.u.copy()
    F = _interior_residual(u, lam, setup)
    fnorm = float(np.max(np.abs(F)))
    for it in range(max_iter):
        if fnorm <= RESIDUAL_TOL + residual_floor(setup, u):
            return _finalize(u, lam, setup, it, fnorm)
        J = _jacobian(u, lam, setup)
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise SteadyConvergenceError(f"singular Jacobian at lam={lam:.6g}") from exc
        alpha = 1.0
        while True:
            u_try = u.copy()
            u_try[1:-1] = u[1:-1] + alpha * step
            if np.min(u_try) > -1.0 + kappa_stop:
                F_try = _interior_residual(u_try, lam, setup)
                f_try = float(np.max(np.abs(F_try)))
                if f_try <= (1.0 - _ARMIJO_SLOPE * alpha) * fnorm:
                    u, F, fnorm = u_try, F_try, f_try
                    break
            alpha *= 0.5
            if alpha < _MIN_ALPHA:
                raise SteadyConvergenceError(
                    f"line search stalled at lam={lam:.6g} (|F|={fnorm:.3e})"
                )
    if fnorm <= RESIDUAL_TOL + residual_floor(setup, u):
        return _finalize(u, lam, setup, max_iter, fnorm)
    raise SteadyConvergenceError(
        f"no convergence in {max_iter} iterations at lam={lam:.6g} (|F|={fnorm:.3e})"
    )


def continuation(
    setup: EvolutionSetup,
    lambda_max: float,
    dlambda0: float,
    kappa_stop: float = 0.01,
    compute_stability: bool = True,
) -> Branch:
    """Trace the minimal branch from lam = 0; halve steps to bracket the fold.

    The fold is declared when the continuation step falls below
    1e-8 * dlambda0; lambda_star is then the last converged lam.  Reaching
    lambda_max without a failure leaves lambda_star = None.
    """
    if dlambda0 <= 0.0 or lambda_max <= 0.0:
        raise ValueError("lambda_max and dlambda0 must be positive")
    zero = DeflectionState(t=0.0, u=np.zeros(setup.grid.n))
    points = [newton_steady(0.0, zero, setup, kappa_stop)]
    stability: list[float] = []
    if compute_stability:
        stability.append(float(linear_stability(points[0], setup)[0]))
    lam = 0.0
    step = dlambda0
    floor = 1e-8 * dlambda0
    fold_found = False
    while lam < lambda_max:
        if step < floor:
            fold_found = True
            break
        lam_try = min(lam + step, lambda_max)
        guess = DeflectionState(t=0.0, u=points[-1].u)
        try:
            st = newton_steady(lam_try, guess, setup, kappa_stop)
        except SteadyConvergenceError:
            step *= 0.5
            continue
        points.append(st)
        if compute_stability:
            stability.append(float(linear_stability(st, setup)[0]))
        lam = lam_try
        step = min(step * 1.2, dlambda0)
    return Branch(
        points=points,
        lambda_star=lam if fold_found else None,
        stability=stability,
    )


_EIG_TOL = 1e-10
_EIG_CAP = 10_000


def linear_stability(
    steady: SteadyState, setup: EvolutionSetup, count: int = 3
) -> np.ndarray:
    """Smallest eigenvalues of the symmetrized FD Jacobian at a steady state.

    Deflated inverse power iteration seeded with the first sine modes; the
    state is stable when the smallest eigenvalue is positive (the evolution
    is the negative gradient flow of the energy).
    """
    J = _jacobian(steady.u, steady.lam, setup)
    S = 0.5 * (J + J.T)
    ni = S.shape[0]
    try:
        lu = sla.lu_factor(S)
    except sla.LinAlgError:  # pragma: no cover - fold-point singularity
        lu = sla.lu_factor(S + 1e-12 * np.eye(ni))
    # Rayleigh quotients of a matrix with O(beta/h^4) entries carry an
    # irreducible rounding jitter of eps*||S||; without this floor the
    # increment test cannot be met once the smallest eigenvalue nears zero
    # at a fold.
    jitter = float(np.finfo(float).eps) * float(np.abs(S).sum(axis=1).max())
    x_int = setup.grid.x[1:-1]
    found: list[np.ndarray] = []
    eigs: list[float] = []
    for kmode in range(count):
        v = np.sin((kmode + 1) * np.pi * (x_int + 1.0) / 2.0)
        for w in found:
            v -= (w @ v) * w
        v /= np.linalg.norm(v)
        mu = np.inf
        for _ in range(_EIG_CAP):
            v = sla.lu_solve(lu, v)
            for w in found:
                v -= (w @ v) * w
            v /= np.linalg.norm(v)
            mu_new = float(v @ (S @ v))
            if abs(mu_new - mu) <= _EIG_TOL * max(1.0, abs(mu_new)) + jitter:
                mu = mu_new
                break
            mu = mu_new
        else:
            raise RuntimeError("stability eigenvalue iteration did not converge")
        found.append(v.copy())
        eigs.append(mu)
    return np.array(sorted(eigs))


def steady_identities(
    steady: SteadyState, eigpair, setup: EvolutionSetup
) -> IdentityReport:
    """Evaluate the weighted integral identities satisfied by steady states.

    Volume integrals over the deformed gap are computed on the fixed
    rectangle with the (1+u) Jacobian.  The curvature weight (second
    derivative of zeta1) is corrected to exact zero mean, which the clamped
    boundary conditions give in the continuum.
    """
    p = setup.params
    g1, g2 = setup.grid, setup.grid2d
    u = steady.u
    one_u = 1.0 + u
    z = eigpair.zeta1
    field = steady.potential
    phi = field.phi
    dxu = core.dx1(g1, u)
    U = dxu / one_u
    dphix = core.diff1(phi, g1.h, axis=0)
    dphie = core.diff1(phi, g2.k, axis=1)
    e2 = p.eps**2
    lhs = core.quad1d(g1, z * (1.0 + e2 * dxu**2) * steady.gamma_m)
    horiz = dphix - g2.eta[None, :] * U[:, None] * dphie
    dirichlet = core.quad2d(
        g2,
        z[:, None] * (e2 * horiz**2 * one_u[:, None] + dphie**2 / one_u[:, None]),
    )
    w = core.dx2(g1, z)
    w = w - core.quad1d(g1, w) / 2.0  # exact zero mean, as clamping dictates
    volume = -0.5 * e2 * core.quad2d(g2, phi**2 * w[:, None] * one_u[:, None])
    line = 0.5 * e2 * core.quad1d(g1, u * w)
    rhs = dirichlet + volume + line
    resid = abs(lhs - rhs)
    vertical = core.quad2d(g2, z[:, None] * dphie**2 / one_u[:, None])
    margin = vertical - core.quad1d(g1, z / one_u)
    return IdentityReport(
        balance_lhs=lhs,
        balance_rhs=rhs,
        balance_residual=resid,
        balance_relative=resid / max(1.0, abs(lhs)),
        comparison_margin=margin,
    )


def nonexistence_bound(
    params: ModelParams, eigpair, grid: core.Grid1D
) -> NonexistenceBound:
    """Closed-form level lambda_c(eps) above which no steady state exists.

    Defined for eps below eps_star; eps = 0 gets the algebraic limit
    (mu1 + beta)^2 / (2 beta) of the same expression.
    """
    d2l1 = eigpair.zeta1_dx2_l1
    eps_star = d2l1**-0.5
    eps = params.eps
    alpha = min(1.0, eps**2)
    K1 = (4.0 * params.beta + 2.0 * params.tau + 4.5 * params.beta) * core.h4_norm(
        grid, eigpair.zeta1
    )
    mu1 = eigpair.mu1
    beta = params.beta
    if eps >= eps_star:
        lam_c = None
    elif eps == 0.0:
        lam_c = (mu1 + beta) ** 2 / (2.0 * beta)
    else:
        lam_c = (
            eps**2
            / (2.0 * alpha * beta)
            * (mu1 + (K1 + beta / eps**2) * alpha) ** 2
            / (1.0 - eps**2 * d2l1) ** 2
        )
    return NonexistenceBound(
        eps=eps, eps_star=eps_star, alpha_eps=alpha, K1=K1, lambda_c=lam_c
    )
