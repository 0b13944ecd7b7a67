import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from cadspot.model import Arc, Circle, CubicBezier, Drawing, Ellipse, QuadBezier, Segment
from cadspot.sampler import DenseSampler, arc_length, resolve_jobs, sample_drawing, sample_primitive

from conftest import KINDS, polyline_length, random_primitive, sample_stations


def adaptive_bezier_length(ctrl, tol=1e-9):
    """Chord/control-polygon bisection, independent of the library's quadrature."""
    ctrl = np.asarray(ctrl, dtype=float)

    def split(c):
        left, right = [c[0]], [c[-1]]
        cur = c
        while len(cur) > 1:
            cur = 0.5 * (cur[:-1] + cur[1:])
            left.append(cur[0])
            right.append(cur[-1])
        return np.array(left), np.array(right[::-1])

    def rec(c, depth):
        chord = float(np.hypot(*(c[-1] - c[0])))
        poly = float(np.sum(np.hypot(*np.diff(c, axis=0).T)))
        if poly - chord < tol or depth > 50:
            # Gravesen's estimate
            return (2 * chord + (len(c) - 2) * poly) / len(c)
        a, b = split(c)
        return rec(a, depth + 1) + rec(b, depth + 1)

    return rec(ctrl, 0)


def test_segment_length():
    assert arc_length(Segment(0, (0, 0), (3, 4))) == 5.0


def test_circle_length():
    assert math.isclose(arc_length(Circle(0, (2, 2), 1.0)), 2 * math.pi, rel_tol=1e-15)


def test_cubic_length_matches_subdivision_oracle():
    ctrl = ((0, 0), (0, 1), (1, 1), (1, 0))
    oracle = adaptive_bezier_length(ctrl)
    assert math.isclose(arc_length(CubicBezier(0, ctrl)), oracle, rel_tol=1e-9)
    poly = polyline_length(CubicBezier(0, ctrl).point(np.linspace(0, 1, 200001)))
    assert math.isclose(oracle, poly, rel_tol=1e-8)


@pytest.mark.parametrize("kind", ["ellipse", "arc", "cubic", "quad"])
def test_curve_length_matches_quadrature(kind):
    rng = np.random.default_rng(7)
    for _ in range(25):
        p = random_primitive(rng, kind)
        speed = lambda t: float(np.hypot(*p.derivative(np.array([t]))[0]))
        ref, _ = quad(speed, 0.0, 1.0, limit=500, epsabs=1e-12, epsrel=1e-12)
        assert math.isclose(arc_length(p), ref, rel_tol=1e-8)


def test_open_samples_keep_endpoints():
    s = sample_primitive(Segment(0, (0, 0), (1, 0)), 0.3)
    assert np.allclose(s[:, 0], [0, 0.3, 0.6, 0.9, 1.0])
    s = sample_primitive(Segment(0, (0, 0), (0.6, 0)), 0.3)
    assert np.allclose(s[:, 0], [0, 0.3, 0.6])


def test_short_primitives():
    assert len(sample_primitive(Segment(0, (0, 0), (0.01, 0)), 0.14)) == 2
    assert len(sample_primitive(Circle(0, (0, 0), 0.001), 0.14)) == 3
    assert sample_primitive(Segment(0, (1, 1), (1, 1)), 0.14).tolist() == [[1.0, 1.0]]


def test_closed_samples_do_not_repeat_origin():
    c = Circle(0, (0, 0), 1.0)
    s = sample_primitive(c, 0.1)
    assert len(s) == math.ceil(2 * math.pi / 0.1)
    assert not np.allclose(s[0], s[-1])


def test_invalid_interval():
    for d in (0, -1, float("nan"), float("inf")):
        with pytest.raises(ValueError):
            sample_primitive(Segment(0, (0, 0), (1, 0)), d)


@pytest.mark.parametrize("kind", KINDS)
def test_interior_spacing_is_d(kind):
    rng = np.random.default_rng(3)
    d = 0.14
    for _ in range(10):
        p = random_primitive(rng, kind, scale=3.0)
        pts = sample_primitive(p, d)
        if len(pts) < 4:
            continue
        gaps = np.diff(sample_stations(p, pts, d))
        interior = gaps if p.closed else gaps[:-1]
        assert np.allclose(interior, d, rtol=0.01)


def test_cloud_layout_and_thread_independence():
    rng = np.random.default_rng(0)
    d = Drawing.from_primitives([random_primitive(rng, KINDS[i % len(KINDS)], i) for i in range(60)])
    a = sample_drawing(d, 0.14, n_jobs=1)
    b = sample_drawing(d, 0.14, n_jobs=4)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.owner, b.owner)
    assert a.points.shape[1] == 3 and np.all(a.points[:, 2] == 0)
    assert np.all(np.diff(a.owner) >= 0)
    assert a.offsets[-1] == len(a)
    assert np.array_equal(a.points_of(5)[:, :2], sample_primitive(d[5], 0.14))


def test_empty_drawing_rejected():
    with pytest.raises(ValueError):
        sample_drawing(Drawing.from_primitives([]))


def test_resolve_jobs_env(monkeypatch):
    monkeypatch.setenv("CADSPOT_THREADS", "3")
    assert resolve_jobs(None) == 3
    assert resolve_jobs(2) == 2
    monkeypatch.delenv("CADSPOT_THREADS")
    assert resolve_jobs(None) >= 1


def test_dense_sampler_estimator():
    d = Drawing.from_primitives([Segment(0, (0, 0), (1, 0))])
    est = DenseSampler(interval=0.25, scale=2.0)
    cloud = est.fit(d).transform(d)
    assert len(cloud) == 9
    assert est.get_params()["interval"] == 0.25
    with pytest.raises(ValueError):
        DenseSampler(interval=-1).fit(d)


@settings(max_examples=80, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(0.1, 30.0), st.floats(0.0, 6.28))
def test_segment_sample_count(d, length, angle):
    p = Segment(0, (0.0, 0.0), (length * math.cos(angle), length * math.sin(angle)))
    s = sample_primitive(p, d)
    expected = math.floor(length / d + 1e-9) + 1
    if length - (expected - 1) * d > 1e-9 * d:
        expected += 1
    assert len(s) == max(expected, 2)
    assert np.allclose(s[0], p.start) and np.allclose(s[-1], p.end)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.floats(0.1, 6.2))
def test_elliptic_arc_samples_lie_on_curve(rx, ry, sweep):
    a = Arc(0, (1.0, -2.0), rx, ry, 0.3, 0.5, sweep)
    pts = sample_primitive(a, 0.14)
    c = np.array(a.center)
    rot = np.array([[math.cos(0.3), math.sin(0.3)], [-math.sin(0.3), math.cos(0.3)]])
    local = (rot @ (pts - c).T).T
    assert np.allclose((local[:, 0] / rx) ** 2 + (local[:, 1] / ry) ** 2, 1.0, atol=1e-9)
    gaps = np.hypot(*np.diff(pts, axis=0).T)
    assert np.all(gaps[:-1] <= 0.14 + 1e-9)


def test_quad_and_ellipse_total_length_consistent():
    q = QuadBezier(0, ((0, 0), (2, 3), (4, 0)))
    e = Ellipse(0, (0, 0), 3, 1)
    for p in (q, e):
        pts = sample_primitive(p, 0.01)
        approx = polyline_length(np.vstack([pts, pts[:1]]) if p.closed else pts)
        assert math.isclose(approx, arc_length(p), rel_tol=1e-4)
