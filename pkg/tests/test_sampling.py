import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from deep_uzawa.sampling import (LSHAPE_SEGMENTS, Domain, ResampleSchedule, Sampler, ball_volume,
                                 lshape_contains, lshape_segment_index, rng_stream, sample_boundary,
                                 sample_interior, sphere_area)

DOMAINS = [Domain.interval(), Domain.lshape(), Domain.ball(2), Domain.ball(4), Domain.ball(7)]


def test_measures():
    assert ball_volume(2) == pytest.approx(math.pi, rel=1e-15)
    assert ball_volume(3) == pytest.approx(4 * math.pi / 3, rel=1e-15)
    assert sphere_area(3) == pytest.approx(4 * math.pi, rel=1e-15)
    assert sphere_area(4) == pytest.approx(2 * math.pi**2, rel=1e-15)
    assert Domain.lshape().volume == 3.0 and Domain.lshape().boundary_measure == 8.0


def test_interval_midpoint_rule():
    ps = sample_interior(Domain.interval(), 4)
    assert ps.points[:, 0].tolist() == [0.125, 0.375, 0.625, 0.875]
    assert ps.weights.tolist() == [0.25] * 4


def test_interval_boundary_is_the_endpoints():
    ps = sample_boundary(Domain.interval(), 2)
    assert ps.points[:, 0].tolist() == [0.0, 1.0] and ps.weights.tolist() == [1.0, 1.0]
    with pytest.raises(ValueError):
        sample_boundary(Domain.interval(), 3)


@pytest.mark.parametrize("dom", DOMAINS, ids=lambda d: f"{d.kind}{d.dim}")
@settings(max_examples=15, deadline=None)
@given(n=st.integers(1, 300), seed=st.integers(0, 2**32 - 1))
def test_weights_sum_to_measure_and_points_lie_in_domain(dom, n, seed):
    ps = sample_interior(dom, n, rng_stream(seed, "interior"))
    assert ps.points.shape == (n, dom.dim)
    assert ps.weights.sum() == pytest.approx(dom.volume, rel=1e-12)
    assert dom.contains(ps.points).all()
    if dom.kind != "interval":
        assert np.all(ps.weights == dom.volume / n)
    nb = 2 if dom.kind == "interval" else n
    bs = sample_boundary(dom, nb, rng_stream(seed, "boundary"))
    assert bs.weights.sum() == pytest.approx(dom.boundary_measure, rel=1e-12)
    if dom.kind == "ball":
        assert np.abs(np.linalg.norm(bs.points, axis=1) - 1).max() <= 1e-12
    if dom.kind == "lshape":
        assert (lshape_segment_index(bs.points) >= 0).all()


def test_ball_weights_and_sphere_points():
    ps = sample_interior(Domain.ball(2), 1000, rng_stream(0, "interior"))
    assert ps.weights.sum() == pytest.approx(math.pi, abs=1e-12)
    bs = sample_boundary(Domain.ball(4), 1000, rng_stream(0, "boundary"))
    assert np.abs(np.linalg.norm(bs.points, axis=1) - 1).max() <= 1e-12


@pytest.mark.parametrize("D", [2, 4, 8])
def test_ball_is_uniform_in_radius(D):
    # uniform in the ball iff |x|^D is uniform on [0, 1]
    ps = sample_interior(Domain.ball(D), 4000, rng_stream(3, "interior"))
    r = np.linalg.norm(ps.points, axis=1)
    assert stats.kstest(r**D, "uniform").pvalue > 1e-3


def test_sphere_is_isotropic():
    bs = sample_boundary(Domain.ball(4), 8000, rng_stream(4, "boundary"))
    # each coordinate of a uniform point on S^3 has mean 0 and variance 1/4
    assert np.abs(bs.points.mean(0)).max() < 4 * math.sqrt(0.25 / 8000)
    np.testing.assert_allclose((bs.points**2).mean(0), 0.25, atol=0.02)


def test_lshape_quadrant_fraction():
    n = 30000
    ps = sample_interior(Domain.lshape(), n, rng_stream(1, "interior"))
    frac = np.mean((ps.points[:, 0] > 0) & (ps.points[:, 1] > 0))
    sigma = math.sqrt((1 / 3) * (2 / 3) / n)
    assert abs(frac - 1 / 3) <= 3 * sigma
    assert not lshape_contains(ps.points[(ps.points[:, 0] > 0) & (ps.points[:, 1] < 0)]).any()
    assert (np.hypot(ps.points[:, 0], ps.points[:, 1]) > 1e-6).all()


def test_lshape_segment_histogram():
    n = 16000
    bs = sample_boundary(Domain.lshape(), n, rng_stream(2, "boundary"))
    counts = np.bincount(lshape_segment_index(bs.points), minlength=len(LSHAPE_SEGMENTS))
    assert counts.sum() == n
    # all pieces have unit length: chi-square against the uniform multinomial
    assert stats.chisquare(counts).pvalue > 1e-3
    sigma = math.sqrt(n * (1 / 8) * (7 / 8))
    assert np.abs(counts - n / 8).max() <= 4 * sigma


def test_lshape_contains():
    pts = np.array([[-0.5, -0.5], [0.5, 0.5], [0.5, -0.5], [0.0, 0.0], [1.0, 0.5], [1.1, 0.0]])
    assert lshape_contains(pts).tolist() == [True, True, False, True, True, False]
    assert lshape_contains(pts, closed=False).tolist() == [True, True, False, False, False, False]


def test_streams_are_deterministic_and_independent():
    a = rng_stream(5, "interior", 3).standard_normal(4)
    b = rng_stream(5, "interior", 3).standard_normal(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, rng_stream(5, "boundary", 3).standard_normal(4))
    assert not np.array_equal(a, rng_stream(5, "interior", 4).standard_normal(4))
    assert not np.array_equal(a, rng_stream(6, "interior", 3).standard_normal(4))


def test_schedule_every_ten():
    s = ResampleSchedule(10, 8, 8)
    assert [s.draw_index(e) for e in (0, 9, 10, 19, 20)] == [0, 0, 1, 1, 2]
    assert ResampleSchedule(math.inf, 8, 8).draw_index(10**9) == 0
    for bad in [(0, 8, 8), (10, 0, 8), (10, 8, 0), (-1, 8, 8)]:
        with pytest.raises(ValueError):
            ResampleSchedule(*bad)


def test_sampler_redraws_per_block_and_is_reproducible():
    dom = Domain.ball(4)
    s = Sampler(dom, ResampleSchedule(10, 16, 16), seed=9)
    first = s.interior(0)
    assert s.interior(9) is first
    second = s.interior(10)
    assert not np.array_equal(first.points, second.points)
    twin = Sampler(dom, ResampleSchedule(10, 16, 16), seed=9)
    assert np.array_equal(twin.interior(10).points, second.points)
    assert np.array_equal(twin.boundary(3).points, s.boundary(3).points)


def test_fixed_sampler_never_changes():
    s = Sampler(Domain.lshape(), ResampleSchedule(math.inf, 32, 32), seed=0)
    assert s.interior(0) is s.interior(123456)


def test_point_set_csv(tmp_path):
    ps = sample_interior(Domain.lshape(), 5, rng_stream(0, "interior"))
    path = tmp_path / "pts.csv"
    ps.to_csv(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert path.read_text().splitlines()[0] == "x0,x1,weight"
    assert np.array_equal(data[:, :2], ps.points) and np.array_equal(data[:, 2], ps.weights)
