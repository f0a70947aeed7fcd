"""Stationary solver, continuation to the fold, stability, and bounds."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mems_fbp import beam, core, dynamics, steady
from mems_fbp.core import DeflectionState, Grid1D, Grid2D, ModelParams


def make_setup(n=101, m=31, eps=0.0, beta=1.0, tau=0.0):
    grid2d = Grid2D.of_size(Grid1D.of_size(n), m)
    params = ModelParams(lam=0.0, eps=eps, beta=beta, tau=tau)
    return dynamics.EvolutionSetup.create(params, grid2d)


@pytest.fixture(scope="module")
def gap_setup():
    return make_setup()


@pytest.fixture(scope="module")
def full_setup():
    return make_setup(eps=0.1)


def zero_guess(setup):
    return DeflectionState(t=0.0, u=np.zeros(setup.grid.n))


@pytest.fixture(scope="module")
def branch(gap_setup):
    return steady.continuation(gap_setup, lambda_max=10.0, dlambda0=0.5)


class TestResidual:
    def test_zero_deflection_unit_forcing(self, gap_setup):
        # g(0) = 1, A 0 = 0: the residual is lam at every interior node
        F = steady.steady_residual(zero_guess(gap_setup), 1.0, gap_setup)
        assert F[0] == 0.0 and F[-1] == 0.0
        assert_allclose(F[1:-1], 1.0, rtol=1e-14)

    def test_linearized_load_balance(self, gap_setup):
        # u solving A u = -lam*1 leaves only the O(lam^2) reaction remainder
        lam = 1e-4
        u = np.zeros(gap_setup.grid.n)
        u[1:-1] = np.linalg.solve(
            gap_setup.op.dense(), -lam * np.ones(gap_setup.grid.n - 2)
        )
        F = steady.steady_residual(DeflectionState(t=0.0, u=u), lam, gap_setup)
        assert np.max(np.abs(F)) <= 1e-6

    def test_rejects_contact(self, gap_setup):
        u = np.zeros(gap_setup.grid.n)
        u[50] = -1.0
        with pytest.raises(ValueError):
            steady.steady_residual(DeflectionState(t=0.0, u=u), 1.0, gap_setup)

    def test_floor_scales_with_stiffness(self, gap_setup):
        u = 0.3 * gap_setup.eigpair.zeta1
        fl = steady.residual_floor(gap_setup, u)
        assert fl > 0.0
        assert_allclose(
            fl,
            np.finfo(float).eps * 16.0 / gap_setup.grid.h**4 * np.max(np.abs(u)),
            rtol=1e-12,
        )
        assert steady.residual_floor(gap_setup, 2.0 * u) == 2.0 * fl


class TestNewton:
    def test_lambda_zero_is_flat(self, gap_setup):
        st = steady.newton_steady(0.0, zero_guess(gap_setup), gap_setup)
        assert st.newton_iters <= 1
        assert np.all(st.u == 0.0)
        assert st.residual_norm == 0.0
        assert_allclose(st.g, 1.0, rtol=1e-14)

    def test_moderate_lambda_converges(self, gap_setup):
        st = steady.newton_steady(2.0, zero_guess(gap_setup), gap_setup)
        floor = steady.residual_floor(gap_setup, st.u)
        assert st.residual_norm <= steady.RESIDUAL_TOL + floor
        assert np.all(st.u[1:-1] < 0.0) and np.min(st.u) > -1.0
        assert np.max(np.abs(st.u - st.u[::-1])) <= 1e-10
        # recorded fields are consistent with each other
        assert_allclose(st.G, st.g, rtol=1e-13)
        assert_allclose(st.gamma_m**2, st.g, rtol=1e-13)  # eps = 0

    def test_warm_start_counts_fewer_iterations(self, gap_setup):
        cold = steady.newton_steady(2.0, zero_guess(gap_setup), gap_setup)
        warm = steady.newton_steady(
            2.1, DeflectionState(t=0.0, u=cold.u), gap_setup
        )
        assert warm.newton_iters <= cold.newton_iters

    def test_above_fold_fails(self, gap_setup):
        with pytest.raises(steady.SteadyConvergenceError):
            steady.newton_steady(8.0, zero_guess(gap_setup), gap_setup,
                                 max_iter=25)

    def test_standoff_rejection(self, gap_setup):
        # all candidate iterates sit below -1 + kappa_stop and are refused
        u = core.profile_polynomial_well(gap_setup.grid, 0.6)
        deep = DeflectionState(t=0.0, u=u)
        with pytest.raises(steady.SteadyConvergenceError):
            steady.newton_steady(2.0, deep, gap_setup, kappa_stop=0.5)

    def test_inadmissible_guess(self, gap_setup):
        u = np.zeros(gap_setup.grid.n)
        u[50] = -1.5
        with pytest.raises(ValueError):
            steady.newton_steady(1.0, DeflectionState(t=0.0, u=u), gap_setup)


class TestAsymptotics:
    def test_remainder_is_quadratic(self, gap_setup):
        # U_lam = -lam (1-x^2)^2 / 24 + O(lam^2) for the pure beam
        x = gap_setup.grid.x
        lead = (1.0 - x**2) ** 2 / 24.0
        ratios = {}
        for lam in (1e-2, 5e-3):
            st = steady.newton_steady(lam, zero_guess(gap_setup), gap_setup)
            ratios[lam] = np.max(np.abs(st.u + lam * lead)) / lam**2
        assert 0.5 <= ratios[1e-2] / ratios[5e-3] <= 2.0


class TestContinuation:
    def test_finds_fold(self, branch):
        assert branch.lambda_star is not None
        assert branch.lambda_star == branch.points[-1].lam
        assert 3.0 < branch.lambda_star < 6.0

    def test_minimum_strictly_deepens(self, branch):
        mins = np.array([np.min(p.u) for p in branch.points])
        assert np.all(np.diff(mins) < 0.0)
        assert mins[-1] > -1.0
        assert np.all(np.array([np.max(p.u) for p in branch.points]) <= 0.0)

    def test_stability_decreases_to_zero(self, branch, gap_setup):
        stab = np.array(branch.stability)
        assert_allclose(stab[0], gap_setup.eigpair.mu1, rtol=1e-6)
        assert np.all(stab > 0.0)
        assert np.all(np.diff(stab[-5:]) < 0.0)
        assert stab[-1] < 0.1 * stab[0]

    def test_no_fold_below_threshold(self, gap_setup):
        br = steady.continuation(gap_setup, lambda_max=2.0, dlambda0=0.5)
        assert br.lambda_star is None
        assert br.points[-1].lam == 2.0
        lams = [p.lam for p in br.points]
        assert lams == sorted(lams)

    def test_stability_can_be_skipped(self, gap_setup):
        br = steady.continuation(gap_setup, lambda_max=1.0, dlambda0=0.5,
                                 compute_stability=False)
        assert br.stability == []


class TestLinearStability:
    def test_matches_beam_spectrum_at_zero_load(self, gap_setup):
        st = steady.newton_steady(0.0, zero_guess(gap_setup), gap_setup)
        eigs = steady.linear_stability(st, gap_setup)
        assert eigs.shape == (3,)
        assert_allclose(eigs[0], gap_setup.eigpair.mu1, rtol=1e-6)
        assert np.all(np.diff(eigs) > 0.0)

    def test_load_softens_the_spectrum(self, gap_setup):
        st0 = steady.newton_steady(0.0, zero_guess(gap_setup), gap_setup)
        st2 = steady.newton_steady(2.0, zero_guess(gap_setup), gap_setup)
        e0 = steady.linear_stability(st0, gap_setup)
        e2 = steady.linear_stability(st2, gap_setup)
        assert e2[0] < e0[0]


class TestJacobianWorkers:
    def test_worker_count_env_override(self, monkeypatch):
        monkeypatch.setenv("MEMS_FBP_THREADS", "5")
        assert steady.worker_count() == 5
        monkeypatch.setenv("MEMS_FBP_THREADS", "")
        assert steady.worker_count() >= 1

    def test_parallel_columns_match_serial(self, gap_setup, monkeypatch):
        st = steady.newton_steady(2.0, zero_guess(gap_setup), gap_setup)
        monkeypatch.setenv("MEMS_FBP_THREADS", "1")
        serial = steady._jacobian(st.u, 2.0, gap_setup)
        monkeypatch.setenv("MEMS_FBP_THREADS", "2")
        pooled = steady._jacobian(st.u, 2.0, gap_setup)
        assert np.array_equal(serial, pooled)


class TestIdentities:
    def test_flat_membrane(self, full_setup):
        st = steady.newton_steady(0.0, zero_guess(full_setup), full_setup)
        rep = steady.steady_identities(st, full_setup.eigpair, full_setup)
        assert abs(rep.balance_residual) <= 1e-8
        assert rep.comparison_margin >= -1e-8

    def test_loaded_membrane(self, full_setup):
        st = steady.newton_steady(2.0, zero_guess(full_setup), full_setup)
        rep = steady.steady_identities(st, full_setup.eigpair, full_setup)
        assert rep.balance_relative <= 1e-2
        assert rep.comparison_margin >= -1e-8
        assert rep.balance_lhs > 0.0 and rep.balance_rhs > 0.0


class TestNonexistenceBound:
    @pytest.fixture()
    def eig(self, gap_setup):
        return gap_setup.eigpair

    def test_threshold_and_weights(self, gap_setup, eig):
        bound = steady.nonexistence_bound(
            gap_setup.params, eig, gap_setup.grid
        )
        assert_allclose(bound.eps_star, eig.zeta1_dx2_l1 ** -0.5, rtol=1e-12)
        assert 0.40 < bound.eps_star < 0.43
        assert bound.alpha_eps == 0.0  # eps = 0 in this setup
        assert bound.lambda_c is not None

    def test_small_gap_level(self, gap_setup, eig):
        bound = steady.nonexistence_bound(
            gap_setup.params, eig, gap_setup.grid
        )
        beta = gap_setup.params.beta
        assert_allclose(
            bound.lambda_c, (eig.mu1 + beta) ** 2 / (2.0 * beta), rtol=1e-12
        )

    def test_tiny_eps_approaches_small_gap_level(self, gap_setup, eig):
        params = ModelParams(lam=0.0, eps=1e-4, beta=1.0, tau=0.0)
        bound = steady.nonexistence_bound(params, eig, gap_setup.grid)
        target = (eig.mu1 + 1.0) ** 2 / 2.0
        assert abs(bound.lambda_c - target) <= 1e-3 * target

    def test_alpha_saturates(self, gap_setup, eig):
        params = ModelParams(lam=0.0, eps=0.1, beta=1.0, tau=0.0)
        bound = steady.nonexistence_bound(params, eig, gap_setup.grid)
        assert bound.alpha_eps == pytest.approx(0.01)
        big = ModelParams(lam=0.0, eps=2.0, beta=1.0, tau=0.0)
        assert steady.nonexistence_bound(big, eig, gap_setup.grid).alpha_eps == 1.0

    def test_no_level_beyond_threshold(self, gap_setup, eig):
        params = ModelParams(lam=0.0, eps=0.9, beta=1.0, tau=0.0)
        bound = steady.nonexistence_bound(params, eig, gap_setup.grid)
        assert bound.lambda_c is None
        assert bound.eps >= bound.eps_star

    def test_fold_sits_below_the_level(self, gap_setup):
        br = steady.continuation(gap_setup, lambda_max=10.0, dlambda0=1.0,
                                 compute_stability=False)
        bound = steady.nonexistence_bound(
            gap_setup.params, gap_setup.eigpair, gap_setup.grid
        )
        assert br.lambda_star is not None
        assert br.lambda_star <= bound.lambda_c
