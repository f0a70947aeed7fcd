"""Transformed potential problem: exactness, convergence, reaction, energy."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mems_fbp import core, elliptic
from mems_fbp.core import DeflectionState, Grid1D, Grid2D


@pytest.fixture(scope="module")
def grids():
    g1 = Grid1D.of_size(101)
    return g1, Grid2D.of_size(g1, 51)


@pytest.fixture(scope="module")
def well(grids):
    g1, _ = grids
    return DeflectionState(t=0.0, u=core.profile_polynomial_well(g1, 0.4))


def zero_state(g1):
    return DeflectionState(t=0.0, u=np.zeros(g1.n))


class TestCoefficients:
    def test_zero_deflection(self, grids):
        g1, g2 = grids
        c = elliptic.build_coefficients(zero_state(g1), 0.25, g2)
        assert_allclose(c.a11, 0.0625)
        assert_allclose(c.a12, 0.0)
        assert_allclose(c.a22, 1.0)
        assert_allclose(c.b1, 0.0)
        assert_allclose(c.b2, 0.0)
        assert_allclose(c.f, 0.0)

    def test_pointwise_a22(self, grids):
        # at a node with u = -0.5 and u' = 0 the vertical coefficient is 4
        g1, g2 = grids
        u = DeflectionState(t=0.0, u=core.profile_polynomial_well(g1, 0.5))
        c = elliptic.build_coefficients(u, 0.1, g2)
        mid = g1.n // 2  # the well bottom: u = -0.5, u' = 0
        assert c.a22[mid, 0] == pytest.approx(4.0)

    def test_even_u_parities(self, grids, well):
        g1, g2 = grids
        c = elliptic.build_coefficients(well, 0.1, g2)
        assert np.max(np.abs(c.a12 + c.a12[::-1, :])) < 1e-12  # odd in x
        assert np.max(np.abs(c.a22 - c.a22[::-1, :])) < 1e-12  # even in x

    def test_rejects_touchdown(self, grids):
        g1, g2 = grids
        u = np.zeros(g1.n)
        u[g1.n // 2] = -1.0
        with pytest.raises(ValueError, match="ground plate"):
            elliptic.build_coefficients(DeflectionState(t=0.0, u=u), 0.1, g2)


class TestSolvePotential:
    def test_zero_deflection_any_eps(self, grids):
        g1, g2 = grids
        for eps in (0.0, 0.1, 1.0):
            c = elliptic.build_coefficients(zero_state(g1), eps, g2)
            fld = elliptic.solve_potential(c, g2)
            assert np.max(np.abs(fld.phi - g2.eta[None, :])) <= 1e-12
            assert np.max(np.abs(fld.trace - 1.0)) <= 1e-12

    def test_small_gap_any_deflection(self, grids, well):
        g1, g2 = grids
        c = elliptic.build_coefficients(well, 0.0, g2)
        fld = elliptic.solve_potential(c, g2)
        assert np.max(np.abs(fld.phi - g2.eta[None, :])) <= 1e-12

    def test_dirichlet_data_bit_exact(self, grids, well):
        g1, g2 = grids
        c = elliptic.build_coefficients(well, 0.2, g2)
        fld = elliptic.solve_potential(c, g2)
        assert np.all(fld.phi[:, 0] == 0.0)
        assert np.all(fld.phi[:, -1] == 1.0)
        assert np.all(fld.phi[0, :] == g2.eta)
        assert np.all(fld.phi[-1, :] == g2.eta)

    def test_maximum_principle(self, grids):
        g1, g2 = grids
        for depth, eps in [(0.2, 0.1), (0.6, 0.3), (0.85, 1.0)]:
            u = DeflectionState(t=0.0, u=core.profile_polynomial_well(g1, depth))
            c = elliptic.build_coefficients(u, eps, g2)
            fld = elliptic.solve_potential(c, g2)
            assert fld.phi.min() >= -1e-8
            assert fld.phi.max() <= 1.0 + 1e-8

    def test_even_u_gives_even_phi(self, grids, well):
        g1, g2 = grids
        c = elliptic.build_coefficients(well, 0.3, g2)
        fld = elliptic.solve_potential(c, g2)
        assert np.max(np.abs(fld.phi - fld.phi[::-1, :])) <= 1e-10

    def test_discrete_round_trip(self, grids, well):
        # feeding the discrete operator's own output back as data must return
        # the input to solver tolerance (no truncation error in the loop)
        g1, g2 = grids
        c = elliptic.build_coefficients(well, 0.3, g2)
        solver = elliptic.PotentialSolver(g2)
        x, eta = g1.x[:, None], g2.eta[None, :]
        target = np.sin(np.pi * (x + 1) / 2) * eta * (1 - eta)
        solver._load(c)
        rhs = np.zeros((g1.n, g2.m))
        rhs[1:-1, 1:-1] = (solver._A @ target[1:-1, 1:-1].ravel()).reshape(
            solver._shape_int
        )
        w = solver.solve_correction(c, rhs)
        assert np.max(np.abs(w - target)) <= 1e-9


def manufactured_error(n, m, eps=0.3, depth=0.4):
    g1 = Grid1D.of_size(n)
    g2 = Grid2D.of_size(g1, m)
    u = DeflectionState(t=0.0, u=core.profile_polynomial_well(g1, depth))
    c = elliptic.build_coefficients(u, eps, g2)
    x, eta = g1.x[:, None], g2.eta[None, :]
    s, co = np.sin(np.pi * (x + 1) / 2), np.cos(np.pi * (x + 1) / 2)
    target = s * eta * (1 - eta)
    rhs = (
        c.a11 * (-np.pi**2 / 4) * target
        + 2 * c.a12 * (np.pi / 2) * co * (1 - 2 * eta)
        + c.a22 * (-2 * s)
        - c.f * s * (1 - 2 * eta)
    )
    w = elliptic.shared_solver(g2).solve_correction(c, rhs)
    return np.max(np.abs(w - target))


def test_manufactured_solution_second_order():
    e_coarse = manufactured_error(101, 51)
    e_fine = manufactured_error(201, 101)
    order = np.log2(e_coarse / e_fine)
    assert 1.6 <= order <= 2.4


class TestReaction:
    def test_zero_deflection_full(self, grids):
        g1, g2 = grids
        r = elliptic.compute_reaction(zero_state(g1), 0.4, g2)
        assert r.mode == "full"
        assert np.max(np.abs(r.g - 1.0)) <= 1e-12
        assert r.potential is not None

    def test_small_gap_closed_form(self, grids):
        g1, g2 = grids
        u = DeflectionState(t=0.0, u=core.profile_polynomial_well(g1, 0.5))
        r = elliptic.compute_reaction(u, 0.0, g2)
        assert r.mode == "small-gap"
        assert r.g[g1.n // 2] == pytest.approx(4.0)

    def test_reduction_consistency(self, grids, well):
        # forcing full mode at eps=0 must agree with the closed form
        g1, g2 = grids
        rf = elliptic.compute_reaction(well, 0.0, g2, mode="full")
        rs = elliptic.compute_reaction(well, 0.0, g2, mode="small-gap")
        assert np.max(np.abs(rf.g - rs.g)) <= 1e-12

    def test_small_gap_limit_order(self, grids, well):
        # g_eps approaches the closed form at second order in eps
        g1, g2 = grids
        base = elliptic.compute_reaction(well, 0.0, g2).g
        gaps = []
        for eps in (0.2, 0.1, 0.05):
            gaps.append(
                np.max(np.abs(elliptic.compute_reaction(well, eps, g2).g - base))
            )
        order1 = np.log2(gaps[0] / gaps[1])
        order2 = np.log2(gaps[1] / gaps[2])
        assert 1.5 <= order1 <= 2.5
        assert 1.5 <= order2 <= 2.5

    def test_nonnegative_and_even(self, grids, well):
        g1, g2 = grids
        r = elliptic.compute_reaction(well, 0.25, g2)
        assert np.all(r.g >= 0.0)
        assert np.max(np.abs(r.g - r.g[::-1])) <= 1e-10

    def test_rejects_bad_mode(self, grids, well):
        g1, g2 = grids
        with pytest.raises(ValueError, match="mode"):
            elliptic.compute_reaction(well, 0.1, g2, mode="sideways")


class TestEnergy:
    def test_reference_value_at_zero(self, grids):
        g1, g2 = grids
        u0 = zero_state(g1)
        r = elliptic.compute_reaction(u0, 0.5, g2)
        assert elliptic.electrostatic_energy(u0, r.potential, 0.5) == pytest.approx(
            2.0, abs=1e-6
        )
        assert elliptic.ee_upper_bound(u0, 0.5, g1) == pytest.approx(2.0, abs=1e-12)

    def test_small_gap_closed_form(self, grids, well):
        g1, g2 = grids
        c = elliptic.build_coefficients(well, 0.0, g2)
        fld = elliptic.solve_potential(c, g2)
        got = elliptic.electrostatic_energy(well, fld, 0.0)
        assert got == pytest.approx(core.quad1d(g1, 1 / (1 + well.u)), abs=1e-10)

    def test_upper_bound_holds(self, grids):
        g1, g2 = grids
        for depth, eps in [(0.3, 0.1), (0.5, 0.4), (0.7, 1.0)]:
            u = DeflectionState(t=0.0, u=core.profile_polynomial_well(g1, depth))
            r = elliptic.compute_reaction(u, eps, g2)
            ee = elliptic.electrostatic_energy(u, r.potential, eps)
            assert ee <= elliptic.ee_upper_bound(u, eps, g1) + 1e-6

    def test_snapshot_mismatch_rejected(self, grids, well):
        g1, g2 = grids
        r = elliptic.compute_reaction(well, 0.1, g2)
        other = DeflectionState(t=0.0, u=core.profile_polynomial_well(g1, 0.2))
        with pytest.raises(ValueError, match="different deflection"):
            elliptic.electrostatic_energy(other, r.potential, 0.1)
        with pytest.raises(ValueError, match="different deflection"):
            elliptic.electrostatic_energy(well, r.potential, 0.3)
