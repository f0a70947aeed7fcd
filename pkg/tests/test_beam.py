"""Clamped fourth-order operator: stencil exactness, algebra, eigenpair."""

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.optimize import brentq

from mems_fbp import beam, core


@pytest.fixture(scope="module")
def grid41():
    return core.Grid1D.of_size(41)


def test_apply_quartic_exact(grid41):
    # (1-x^2)^2 is clamped-compatible with constant fourth derivative 24
    op = beam.assemble(grid41, beta=1.0, tau=0.0)
    out = beam.apply(op, (1.0 - grid41.x**2) ** 2)
    assert np.max(np.abs(out[1:-1] - 24.0)) <= 1e-8
    assert out[0] == 0.0 and out[-1] == 0.0


def test_apply_quartic_with_tension(grid41):
    # -tau * v'' adds tau*(4 - 12 x^2); the centered second difference carries
    # a uniform 2*h^2 defect on a quartic, so match to that stencil accuracy
    op = beam.assemble(grid41, beta=1.0, tau=2.0)
    v = (1.0 - grid41.x**2) ** 2
    expected = 24.0 + 2.0 * (4.0 - 12.0 * grid41.x**2)
    out = beam.apply(op, v)
    assert np.max(np.abs(out[1:-1] - expected[1:-1])) <= 5.0 * grid41.h**2


def test_apply_second_order_convergence():
    errs = []
    for n in (101, 201):
        g = core.Grid1D.of_size(n)
        op = beam.assemble(g, beta=1.0, tau=0.0)
        v = np.sin(np.pi * (g.x + 1.0) / 2.0) ** 2 * (1.0 - g.x**2)
        x, c, s = g.x, np.cos(np.pi * g.x), np.sin(np.pi * g.x)
        exact = np.pi**4 * c * (1.0 - x**2) / 2.0 - 4.0 * np.pi**3 * s * x + 6.0 * np.pi**2 * c
        errs.append(np.max(np.abs(beam.apply(op, v)[1:-1] - exact[1:-1])))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.15)


def test_assemble_rejects_bad_coefficients(grid41):
    with pytest.raises(ValueError):
        beam.assemble(grid41, beta=0.0, tau=0.0)
    with pytest.raises(ValueError):
        beam.assemble(grid41, beta=1.0, tau=-1.0)


def test_matrix_structurally_symmetric():
    # the strong form of symmetry: stored entries mirror exactly
    g = core.Grid1D.of_size(101)
    A = beam.assemble(g, beta=1.0, tau=1.5).dense()
    assert np.max(np.abs(A - A.T)) == 0.0


def test_bilinear_form_symmetry():
    # the inner-product gap is pure summation roundoff, which rides on the
    # 1/h^4 entry scale; a coarse grid keeps it inside the absolute bound
    g = core.Grid1D.of_size(21)
    op = beam.assemble(g, beta=1.0, tau=1.5)
    rng = np.random.default_rng(1234)
    for _ in range(20):
        u = rng.standard_normal(g.n - 2)
        v = rng.standard_normal(g.n - 2)
        gap = abs(op.matvec(u) @ v - u @ op.matvec(v))
        assert gap <= 1e-10 * np.linalg.norm(u) * np.linalg.norm(v)


def test_matrix_positive_definite():
    g = core.Grid1D.of_size(101)
    op = beam.assemble(g, beta=1.0, tau=0.0)
    rng = np.random.default_rng(99)
    for _ in range(5):
        u = rng.standard_normal(g.n - 2)
        assert u @ op.matvec(u) > 0.0


def test_solve_shifted_zero_shift_is_identity(grid41):
    op = beam.assemble(grid41, beta=1.0, tau=0.0)
    rhs = np.cos(grid41.x)
    w = beam.solve_shifted(op, 0.0, rhs)
    assert_allclose(w[1:-1], rhs[1:-1])
    assert w[0] == 0.0 and w[-1] == 0.0


def test_solve_shifted_round_trip():
    g = core.Grid1D.of_size(101)
    op = beam.assemble(g, beta=1.0, tau=0.5)
    v = (1.0 - g.x**2) ** 2 * np.cos(3.0 * g.x)
    c = 0.37
    rhs = np.zeros(g.n)
    rhs[1:-1] = v[1:-1] + c * op.matvec(v[1:-1])
    w = beam.solve_shifted(op, c, rhs)
    assert np.max(np.abs(w - np.where(np.abs(g.x) < 1.0, v, 0.0))) <= 1e-9


def test_solve_shifted_even_data_gives_even_solution():
    g = core.Grid1D.of_size(101)
    op = beam.assemble(g, beta=1.0, tau=0.0)
    w = beam.solve_shifted(op, 1.0, np.ones(g.n))
    assert np.max(np.abs(w - w[::-1])) <= 1e-12


def test_solve_shifted_rejects_negative_shift(grid41):
    op = beam.assemble(grid41, beta=1.0, tau=0.0)
    with pytest.raises(ValueError):
        beam.solve_shifted(op, -0.1, np.zeros(grid41.n))


class TestPrincipalEigenpair:
    def _analytic_mu1(self):
        kappa = brentq(lambda k: np.cosh(2 * k) * np.cos(2 * k) - 1.0, 2.0, 2.5, xtol=1e-13)
        return kappa**4

    def test_matches_characteristic_root(self):
        g = core.Grid1D.of_size(401)
        ep = beam.principal_eigenpair(beam.assemble(g, beta=1.0, tau=0.0))
        assert ep.mu1 == pytest.approx(self._analytic_mu1(), rel=1e-3)

    def test_eigenfunction_normalization(self):
        g = core.Grid1D.of_size(201)
        ep = beam.principal_eigenpair(beam.assemble(g, beta=1.0, tau=0.0))
        assert np.all(ep.zeta1[1:-1] > 0.0)
        assert ep.zeta1[0] == 0.0 and ep.zeta1[-1] == 0.0
        assert core.quad1d(g, ep.zeta1) == pytest.approx(1.0, abs=1e-10)
        assert ep.zeta1_dx2_l1 > 0.0

    def test_scaling_in_beta(self):
        g = core.Grid1D.of_size(201)
        mu_a = beam.principal_eigenpair(beam.assemble(g, beta=1.0, tau=0.0)).mu1
        mu_b = beam.principal_eigenpair(beam.assemble(g, beta=2.0, tau=0.0)).mu1
        assert mu_b == pytest.approx(2.0 * mu_a, rel=1e-10)

    def test_tension_raises_eigenvalue(self):
        g = core.Grid1D.of_size(201)
        mu_0 = beam.principal_eigenpair(beam.assemble(g, beta=1.0, tau=0.0)).mu1
        mu_1 = beam.principal_eigenpair(beam.assemble(g, beta=1.0, tau=1.0)).mu1
        assert mu_1 > mu_0

    def test_residual_of_eigenpair(self):
        g = core.Grid1D.of_size(201)
        op = beam.assemble(g, beta=1.0, tau=0.0)
        ep = beam.principal_eigenpair(op)
        res = op.matvec(ep.zeta1[1:-1]) - ep.mu1 * ep.zeta1[1:-1]
        assert np.linalg.norm(res) <= 1e-6 * np.linalg.norm(ep.zeta1[1:-1]) * ep.mu1
