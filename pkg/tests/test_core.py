"""Grid, quadrature, derivative, and container sanity checks."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from mems_fbp import core


def test_grid1d_layout():
    g = core.Grid1D.of_size(101)
    assert g.n == 101
    assert g.x[0] == -1.0 and g.x[-1] == 1.0
    assert_allclose(g.h, 0.02)
    assert_allclose(np.diff(g.x), g.h)


@pytest.mark.parametrize("n", [10, 9, 12, 100])
def test_grid1d_rejects_bad_sizes(n):
    with pytest.raises(ValueError):
        core.Grid1D.of_size(n)


def test_grid2d_layout():
    g2 = core.Grid2D.of_size(core.Grid1D.of_size(101), 51)
    assert g2.eta[0] == 0.0 and g2.eta[-1] == 1.0
    assert_allclose(g2.k, 0.02)
    with pytest.raises(ValueError):
        core.Grid2D.of_size(core.Grid1D.of_size(101), 9)


def test_quad1d_linear_exact():
    g = core.Grid1D.of_size(51)
    assert_allclose(core.quad1d(g, 2.0 * g.x + 3.0), 6.0, atol=1e-14)


def test_quad1d_second_order():
    errs = []
    for n in (51, 101):
        g = core.Grid1D.of_size(n)
        errs.append(abs(core.quad1d(g, np.cos(g.x)) - 2 * np.sin(1.0)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_quad2d_separable():
    g2 = core.Grid2D.of_size(core.Grid1D.of_size(51), 41)
    vals = np.outer(1.0 - g2.gx.x**2, g2.eta)  # integral = (4/3)*(1/2)
    err1d = core.quad1d(g2.gx, 1.0 - g2.gx.x**2) - 4.0 / 3.0
    assert core.quad2d(g2, vals) == pytest.approx(2.0 / 3.0 + err1d / 2.0, abs=1e-13)


def test_dx2_convergence():
    errs = []
    for n in (101, 201):
        g = core.Grid1D.of_size(n)
        errs.append(np.max(np.abs(core.dx2(g, np.sin(g.x)) + np.sin(g.x))))
    assert errs[0] / errs[1] > 3.0


def test_dx1_matches_gradient_edges():
    g = core.Grid1D.of_size(101)
    d = core.dx1(g, g.x**2)
    assert_allclose(d, 2.0 * g.x, atol=1e-10)


def test_norms_on_reference_profile():
    g = core.Grid1D.of_size(401)
    u = (1.0 - g.x**2) ** 2
    assert core.l2_norm(g, u) == pytest.approx(np.sqrt(core.quad1d(g, u * u)))
    assert core.h2_norm(g, u) > core.l2_norm(g, u)
    assert core.h4_norm(g, u) > core.h2_norm(g, u)


def test_model_params_validation():
    p = core.ModelParams(lam=1.0, eps=0.1)
    assert p.beta == 1.0 and p.tau == 0.0 and p.gamma == 0.0
    assert not p.small_gap
    assert core.ModelParams(lam=0.0, eps=0.0).small_gap
    for bad in (
        dict(lam=-1.0, eps=0.1),
        dict(lam=1.0, eps=-0.1),
        dict(lam=1.0, eps=0.1, beta=0.0),
        dict(lam=1.0, eps=0.1, tau=-1.0),
        dict(lam=1.0, eps=0.1, gamma=-0.5),
    ):
        with pytest.raises(ValueError):
            core.ModelParams(**bad)


class TestDeflectionState:
    def test_snaps_tiny_endpoint_noise(self):
        g = core.Grid1D.of_size(51)
        u = -0.3 * (1.0 - g.x**2) ** 2
        u[0] = 5e-13
        s = core.DeflectionState(t=0.0, u=u)
        assert s.u[0] == 0.0 and s.u[-1] == 0.0
        assert s.admissible

    def test_rejects_nonzero_endpoints(self):
        g = core.Grid1D.of_size(51)
        u = np.zeros(g.n)
        u[-1] = 1e-6
        with pytest.raises(ValueError):
            core.DeflectionState(t=0.0, u=u)

    def test_velocity_also_clamped(self):
        u = np.zeros(51)
        v = np.zeros(51)
        v[0] = 1e-3
        with pytest.raises(ValueError):
            core.DeflectionState(t=0.0, u=u, v=v)

    def test_admissible_flag(self):
        u = np.zeros(51)
        u[25] = -1.01
        s = core.DeflectionState(t=0.0, u=u)
        assert not s.admissible

    def test_copies_input(self):
        u = np.zeros(51)
        s = core.DeflectionState(t=0.0, u=u)
        u[10] = -0.5
        assert s.u[10] == 0.0


def test_profile_polynomial_well():
    g = core.Grid1D.of_size(101)
    u = core.profile_polynomial_well(g, 0.4)
    assert u.min() == pytest.approx(-0.4)
    assert u[0] == 0.0 and u[-1] == 0.0
    with pytest.raises(ValueError):
        core.profile_polynomial_well(g, 1.0)
    assert_allclose(core.profile_zero(g), 0.0)
