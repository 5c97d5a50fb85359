import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deep_uzawa.problems import exact_boundary_layer
from deep_uzawa.reference_fd import (FdGrid, boundary_layer_data, fd_inner_solve, fd_saddle_point,
                                     fd_uzawa, iteration_spectral_radius, lemma_identity_check)

EPS = 0.1
F, G = boundary_layer_data(EPS)


def exact_flux(eps):
    s = np.sqrt(1 / eps)
    d = s / (1 + np.exp(-s)) * (1 - np.exp(-s))  # u*'(0) = -u*'(1)
    return np.array([-eps * d, -eps * d])


def test_grid_operators():
    grid = FdGrid(9)
    assert grid.h == pytest.approx(0.1) and grid.mass.sum() == pytest.approx(1.0)
    x = grid.x
    assert grid.stiff_apply(np.ones_like(x)) == pytest.approx(np.zeros_like(x), abs=1e-12)
    a, b = grid.energy_norms(x)
    assert a == pytest.approx(1.0) and b == pytest.approx(1 / 3, abs=grid.h**2)


def test_exact_flux_reproduces_dirichlet_solution_at_second_order():
    errs = []
    for n in (99, 199, 399):
        grid = FdGrid(n)
        u = fd_inner_solve(exact_flux(EPS), 0.0, EPS, F, G, grid)
        errs.append(np.abs(u - exact_boundary_layer(grid.x, EPS)).max())
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert errs[0] < 5e-4 and np.all(np.abs(rates - 2) < 0.1)


def test_penalty_limit_and_zero_data():
    grid = FdGrid(199)
    g = lambda x: 0.3  # noqa: E731
    traces = [fd_inner_solve([0, 0], gamma, EPS, F, g, grid)[[0, -1]] for gamma in (1e2, 1e4, 1e6)]
    gaps = [np.abs(t - 0.3).max() for t in traces]
    assert gaps[0] > gaps[1] > gaps[2] and gaps[2] < 1e-5
    assert np.array_equal(fd_inner_solve([0, 0], 2.0, EPS, 0.0, 0.0, grid), np.zeros(grid.size))


def test_saddle_point_multiplier_is_the_flux():
    grid = FdGrid(999)
    u, lam = fd_saddle_point(EPS, F, G, grid)
    assert u[0] == 0 and u[-1] == 0
    np.testing.assert_allclose(lam, exact_flux(EPS), rtol=1e-3)
    # the constrained solution is the inner minimiser at lam*
    np.testing.assert_allclose(fd_inner_solve(lam, 0.0, EPS, F, G, grid), u, atol=1e-12)
    np.testing.assert_allclose(fd_inner_solve(lam, 3.0, EPS, F, G, grid), u, atol=1e-12)


def test_convergent_regime_reaches_tolerance():
    grid = FdGrid(999)
    hist = fd_uzawa(2.0, 1.0, EPS, F, G, grid, k_max=2000)
    lam_err = hist.lam_err
    assert np.all(np.diff(lam_err[lam_err > 1e-13]) < 0)
    assert hist.h1_err[-1] <= 1e-10


def test_zero_step_freezes_the_iteration():
    grid = FdGrid(99)
    hist = fd_uzawa(1.0, 0.0, EPS, F, G, grid, k_max=5, lam0=[0.2, -0.1])
    assert all(np.array_equal(l, hist.lam[0]) for l in hist.lam)
    assert len(set(hist.h1_err)) == 1
    assert iteration_spectral_radius(1.0, 0.0, EPS, grid) == pytest.approx(1.0)


def test_divergent_regime_grows():
    grid = FdGrid(199)
    rho = 1.5 * 2 / 3.2  # beyond 2 / largest Schur eigenvalue for gamma = 0
    assert iteration_spectral_radius(0.0, rho, EPS, grid) > 1
    hist = fd_uzawa(0.0, rho, EPS, F, G, grid, k_max=60)
    assert hist.lam_err[-1] > 10 * hist.lam_err[0]


def test_error_identities_hold_at_every_iterate():
    grid = FdGrid(199)
    hist = fd_uzawa(0.5, 0.7, EPS, F, G, grid, k_max=40)
    for k in range(hist.steps):
        res = lemma_identity_check(hist, k)
        assert res.recursion <= 1e-10 and res.energy <= 1e-10


def test_identities_vanish_at_the_solution():
    grid = FdGrid(99)
    _, lam_star = fd_saddle_point(EPS, F, G, grid)
    hist = fd_uzawa(1.0, 1.0, EPS, F, G, grid, k_max=1, lam0=lam_star)
    res = lemma_identity_check(hist, 0)
    assert res.recursion <= 1e-15 and res.energy <= 1e-15
    assert np.abs(hist.trace_err[0]).max() <= 1e-12


@settings(max_examples=10, deadline=None)
@given(s=st.floats(0.1, 10))
def test_identities_are_homogeneous_of_degree_two(s):
    grid = FdGrid(49)
    lam0 = np.array([0.3, -0.4])

    def sides(scale):
        hist = fd_uzawa(0.5, 0.7, EPS, lambda x: scale * np.ones_like(x), lambda x: 0.2 * scale, grid,
                        k_max=1, lam0=scale * lam0)
        dl = hist.lam[0] - hist.lam_star
        eb = hist.trace_err[0]
        return dl @ dl, dl @ eb
    a = np.array(sides(1.0))
    b = np.array(sides(s))
    np.testing.assert_allclose(b, s**2 * a, rtol=1e-9)


def test_radius_increases_beyond_the_optimum():
    grid = FdGrid(199)
    rhos = np.linspace(0.05, 3.0, 60)
    radii = np.array([iteration_spectral_radius(1.0, r, EPS, grid) for r in rhos])
    k = int(np.argmin(radii))
    assert np.all(np.diff(radii[k + 1:]) > 0)
    assert np.all(np.abs(np.diff(radii)) < 0.2)  # sampled continuity


def test_history_export_uses_the_run_schema():
    grid = FdGrid(49)
    hist = fd_uzawa(2.0, 1.0, EPS, F, G, grid, k_max=7).to_run_history()
    assert len(hist.rows) == 7
    assert [r.uzawa_step for r in hist.rows] == list(range(1, 8))
