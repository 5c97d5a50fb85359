import math

import mpmath
import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from deep_uzawa import autodiff as ad
from deep_uzawa.network import init_params
from deep_uzawa.problems import (NotStarShapedSupported, boundary_l2_error, boundary_layer_problem,
                                 exact_boundary_layer, exact_highdim, exact_lshape, h1_error_1d,
                                 highdim_problem, l2_error, lshape_laplacian, lshape_problem,
                                 lshape_source, lshape_source_jet, trace_constant_bound)
from deep_uzawa.sampling import Domain

mpmath.mp.dps = 30


def mp_boundary_layer(x, eps):
    s = mpmath.sqrt(1 / mpmath.mpf(eps))
    return 1 - (mpmath.exp(-s * x) + mpmath.exp(s * (x - 1))) / (1 + mpmath.exp(-s))


def mp_norm(eps):
    return float(mpmath.sqrt(mpmath.quad(lambda x: mp_boundary_layer(x, eps) ** 2, [0, 0.5, 1])))


# boundary layer ------------------------------------------------------------

def test_boundary_layer_values():
    x = np.array([0.0, 0.5, 1.0])
    u = exact_boundary_layer(x, 0.1)
    assert u[0] == pytest.approx(0, abs=1e-15) and u[2] == pytest.approx(0, abs=1e-15)
    assert u[1] == pytest.approx(float(mp_boundary_layer(mpmath.mpf("0.5"), "0.1")), rel=1e-14)
    assert u[1] == pytest.approx(0.605229025128570, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(x=st.floats(0, 1), eps=st.floats(1e-4, 10))
def test_boundary_layer_symmetric_and_bounded(x, eps):
    a = exact_boundary_layer(np.array([x, 1 - x]), eps)
    assert a[0] == pytest.approx(a[1], abs=1e-13)
    assert -1e-15 <= a[0] <= 1


def test_boundary_layer_stable_for_tiny_eps():
    u = exact_boundary_layer(np.linspace(0, 1, 11), 1e-8)
    assert np.isfinite(u).all() and u[5] == pytest.approx(1.0)


@pytest.mark.parametrize("eps", [0.1, 0.01])
def test_exact_norm_against_high_precision_quadrature(eps):
    assert boundary_layer_problem(eps).exact_norm() == pytest.approx(mp_norm(eps), rel=1e-6)


def test_zero_network_error_is_the_exact_norm():
    p = init_params(3, 4, 1, seed=0)
    with torch.no_grad():
        p.flat.zero_()
    prob = boundary_layer_problem(0.1)
    assert l2_error(p, prob) == pytest.approx(0.454192953947888, rel=1e-6)
    assert l2_error(p, prob, relative=True) == pytest.approx(1.0, rel=1e-12)


def test_exact_model_has_zero_errors():
    prob = boundary_layer_problem(0.1)
    model = lambda p, x: exact_boundary_layer(x[..., 0], 0.1)  # noqa: E731
    assert l2_error(None, prob, model) == 0.0
    assert boundary_l2_error(None, prob, model) < 1e-15
    assert h1_error_1d(None, prob, model) == 0.0


def test_residual_of_boundary_layer_solution():
    x = torch.tensor([[0.3]])
    j = exact_boundary_layer(ad.coordinate_jet(x)[..., 0], 0.1)
    assert abs(float(-0.1 * j.d2[0, 0] + j.v[0] - 1.0)) < 1e-9


# L-shape -------------------------------------------------------------------

def test_lshape_values():
    assert exact_lshape(0.0, 0.0) == 0.0
    assert exact_lshape(-1.0, 1.0) == pytest.approx(0.0, abs=1e-15)
    assert exact_lshape(-0.5, 0.5) == pytest.approx(0.5 ** (4 / 3), rel=1e-12)
    assert exact_lshape(-0.5, 0.5) == pytest.approx(0.39685026, rel=1e-7)


def test_lshape_laplacian_against_finite_differences():
    def u(x, y):
        return float(exact_lshape(x, y))
    x, y, h = -0.5, 0.5, 1e-3
    fd = (u(x + h, y) + u(x - h, y) + u(x, y + h) + u(x, y - h) - 4 * u(x, y)) / h**2
    assert float(lshape_laplacian(np.array(x), np.array(y))) == pytest.approx(fd, rel=1e-6)


def test_lshape_source_hand_and_jet_forms_agree():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (200, 2))
    pts = pts[~((pts[:, 0] > 0) & (pts[:, 1] < 0))]
    hand = lshape_source(pts[:, 0], pts[:, 1], 1e-3)
    jet = lshape_source_jet(pts[:, 0], pts[:, 1], 1e-3)
    np.testing.assert_allclose(hand, np.asarray(jet), rtol=1e-9, atol=1e-12)


def test_lshape_source_without_diffusion_is_the_solution():
    x, y = np.array([-0.5, 0.3, -0.2]), np.array([0.5, 0.4, -0.7])
    np.testing.assert_allclose(lshape_source(x, y, 0.0), exact_lshape(x, y), rtol=1e-14)


def test_lshape_problem_grids():
    prob = lshape_problem()
    assert prob.eval_grid.weights.sum() == pytest.approx(3.0, rel=1e-12)
    assert prob.boundary_eval.weights.sum() == pytest.approx(8.0, rel=1e-12)
    g = prob.data.g(prob.boundary_eval.points)
    np.testing.assert_allclose(g, exact_lshape(prob.boundary_eval.points[:, 0], prob.boundary_eval.points[:, 1]))


# high-dimensional ball -------------------------------------------------------

def test_highdim_values():
    assert exact_highdim(np.eye(6)[:1])[0] == 0.0
    x = np.zeros((1, 6))
    x[0, :2] = 1 / math.sqrt(2)
    assert exact_highdim(x)[0] == pytest.approx(0.5, rel=1e-15)
    with pytest.raises(ValueError):
        exact_highdim(np.zeros((1, 3)))
    with pytest.raises(ValueError):
        highdim_problem(5)


@pytest.mark.parametrize("d", [2, 4, 8])
def test_highdim_solution_is_harmonic(d):
    x = torch.as_tensor(np.random.default_rng(d).uniform(-1, 1, (50, d)))
    j = exact_highdim(ad.coordinate_jet(x))
    assert float(j.d2.sum(0).abs().max()) <= 1e-12


def test_monte_carlo_metric_is_reproducible():
    p = init_params(3, 6, 4, seed=1)
    a, b = highdim_problem(4), highdim_problem(4)
    assert l2_error(p, a) == l2_error(p, b)
    assert a.relative_l2


# trace constant -------------------------------------------------------------

def test_trace_constant_examples():
    assert trace_constant_bound(Domain.interval(), 0.5).c_tr == pytest.approx(1 + math.sqrt(2), rel=1e-15)
    assert trace_constant_bound(Domain.ball(2), [0.0, 0.0]).c_tr == pytest.approx(1 + math.sqrt(2), rel=1e-15)
    tb = trace_constant_bound(Domain.interval(), 0.5, epsilon=0.1, gamma=0.0)
    assert tb.rho_max == pytest.approx(0.2 / (1 + math.sqrt(2)) ** 2, rel=1e-14)
    with pytest.raises(NotStarShapedSupported):
        trace_constant_bound(Domain.lshape(), [-0.5, 0.5])


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.01, 0.5), b=st.floats(0.01, 0.5))
def test_trace_constant_grows_off_centre(a, b):
    lo, hi = sorted((a, b))
    assert trace_constant_bound(Domain.interval(), hi).c_tr <= trace_constant_bound(Domain.interval(), lo).c_tr
    r_lo, r_hi = 1 - hi, 1 - lo  # offsets into the ball
    c1 = trace_constant_bound(Domain.ball(3), [r_lo - 0.5, 0, 0]).c_tr
    c2 = trace_constant_bound(Domain.ball(3), [r_hi - 0.5, 0, 0]).c_tr
    assert c1 <= c2 or math.isclose(c1, c2)
