import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from revbend.profile import (impose_degenerate_point, ProfileCurve, SurfaceParam, degenerate_profile, find_height_critical_points,
                             morse_report, polyline_self_intersects, signed_curvature, torus_profile)

coef = st.floats(-1.0, 1.0, allow_nan=False)


def _direct(c, s):
    """c0 + sum c_{2j-1} cos(js) + c_{2j} sin(js)."""
    out = np.full_like(s, c[0])
    for j in range(1, (len(c) - 1) // 2 + 1):
        out += c[2 * j - 1] * np.cos(j * s) + c[2 * j] * np.sin(j * s)
    return out


@settings(max_examples=50, deadline=None)
@given(st.lists(coef, min_size=1, max_size=9))
def test_fourier_matches_direct_sum(c):
    curve = ProfileCurve(tuple([3.0] + c[1:]), tuple(c))
    s = np.linspace(0, 2 * np.pi, 37)
    cc = curve.h_coeffs
    np.testing.assert_allclose(curve.h(s), _direct(cc, s), atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.lists(coef, min_size=3, max_size=9), st.integers(1, 3))
def test_derivatives_match_finite_differences(c, order):
    curve = ProfileCurve((3.0,), tuple(c))
    s = np.linspace(0.1, 6.0, 11)
    h = 1e-4
    fd = (curve.h(s + h, order - 1) - curve.h(s - h, order - 1)) / (2 * h)
    np.testing.assert_allclose(curve.h(s, order), fd, atol=1e-6 * (1 + np.max(np.abs(fd))))


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
def test_circle_curvature(a):
    curve = torus_profile(4.0, a)
    s = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    np.testing.assert_allclose(np.abs(signed_curvature(curve, s)), 1 / a, rtol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-math.pi, math.pi))
def test_rotation_preserves_distances(theta):
    curve = ProfileCurve((3.0, 1.0, 0.2), (0.0, 0.3, 1.0))
    rc = curve.rotated(theta)
    s = np.linspace(0, 2 * np.pi, 50)
    p = np.column_stack([curve.r(s), curve.h(s)])
    q = np.column_stack([rc.r(s), rc.h(s)])
    dp = np.linalg.norm(p[:, None] - p[None], axis=-1)
    dq = np.linalg.norm(q[:, None] - q[None], axis=-1)
    np.testing.assert_allclose(dp, dq, atol=1e-12)


def test_torus_critical_points():
    cps = find_height_critical_points(torus_profile())
    assert [round(c.s, 12) for c in cps] == [round(math.pi / 2, 12), round(3 * math.pi / 2, 12)]
    assert [c.index_sign for c in cps] == [-1, 1]
    assert not any(c.degenerate for c in cps)


def test_morse_count_even_and_alternating():
    for curve in (torus_profile(), ProfileCurve((3.0, 1.0, 0.0, 0.0, 0.15), (0.0, 0.0, 1.0, 0.1, 0.0))):
        rep = morse_report(curve)
        assert rep.is_morse
        signs = [c.index_sign for c in rep.critical_points]
        assert len(signs) % 2 == 0
        assert all(a == -b for a, b in zip(signs, signs[1:] + signs[:1]))


def test_degenerate_profile_rejected():
    rep = morse_report(degenerate_profile())
    assert not rep.is_morse
    assert rep.offenders and all(abs(c.curvature) < 1e-8 for c in rep.offenders)


def test_validate_flags_self_intersection():
    figure_eight = ProfileCurve((3.0, 1.0, 0.0), (0.0, 0.0, 0.0, 0.0, 1.0))
    assert any("intersect" in p or "injective" in p for p in figure_eight.validate())
    assert torus_profile().validate() == []


def test_polyline_intersection():
    bow_tie = np.array([[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]])
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    assert polyline_self_intersects(bow_tie, np.roll(bow_tie, -1, axis=0))
    assert not polyline_self_intersects(square, np.roll(square, -1, axis=0))


def test_surface_param_shapes_and_metric():
    surf = SurfaceParam.from_curve(torus_profile(), 32, 16)
    assert surf.F().shape == (32, 16, 3)
    E = np.sum(surf.F_s() ** 2, axis=-1)
    G = np.sum(surf.F_t() ** 2, axis=-1)
    np.testing.assert_allclose(E, 1.0, atol=1e-14)
    np.testing.assert_allclose(G, np.broadcast_to(surf.r[:, None] ** 2, G.shape), rtol=1e-13)
    np.testing.assert_allclose(np.sum(surf.F_s() * surf.F_t(), axis=-1), 0.0, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_imposed_degenerate_point_is_found(seed):
    # includes cases where h' has a double root and a simple root inside one grid cell
    rng = np.random.default_rng(seed)
    base = degenerate_profile()
    r = np.array(base.r_coeffs) + 1e-2 * rng.normal(size=len(base.r_coeffs))
    h = np.array(base.h_coeffs) + 1e-2 * rng.normal(size=len(base.h_coeffs))
    s0 = np.pi / 2 + 0.05 * rng.normal()
    c = impose_degenerate_point(ProfileCurve(tuple(r), tuple(h)), s0)
    rep = morse_report(c)
    assert not rep.is_morse
    assert any(p.degenerate and abs(p.s - s0) < 1e-5 for p in rep.critical_points)
