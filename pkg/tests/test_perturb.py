import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from revbend.errors import AdmissibilityViolation, CapCollision, PocketOutOfBounds
from revbend.perturb import (SupportBox, cap_critical_points, check_admissible, check_pocket_shape, insert_pocket,
                             pocket_polynomials, rotate_to_morse, smoothstep, with_pocket_amplitude)
from revbend.profile import ProfileCurve, degenerate_profile, torus_profile

BOX = SupportBox(0.5, 10.0, -5.0, 5.0)


@given(st.floats(0.01, 0.99), st.integers(1, 3))
def test_smoothstep_derivatives(v, order):
    h = 1e-6
    fd = (smoothstep(v + h, order - 1) - smoothstep(v - h, order - 1)) / (2 * h)
    assert float(smoothstep(v, order)) == pytest.approx(float(fd), abs=1e-5)


def test_smoothstep_ends_are_flat():
    assert smoothstep(0.0) == 0.0 and smoothstep(1.0) == 1.0
    for order in (1, 2):
        assert smoothstep(0.0, order) == 0.0 and smoothstep(1.0, order) == 0.0
    with pytest.raises(ValueError):
        smoothstep(0.5, 4)


@settings(max_examples=60, deadline=None)
@given(st.floats(1.0, 5.0), st.floats(-2.0, 2.0), st.floats(0.01, 0.2), st.floats(0.05, 0.9))
def test_pocket_polynomials_shape(x0, slope, delta2, frac):
    f0, f1, c0 = pocket_polynomials(x0, slope, delta2, frac * x0)
    assert check_pocket_shape(f0, f1) == []
    # inflections of the dent at w = +-1
    assert f1.deriv(2)(1.0) == pytest.approx(0.0, abs=1e-9 * max(1.0, abs(f1.deriv(2)(0.0))))
    assert f1.deriv(2)(-1.0) == pytest.approx(0.0, abs=1e-9 * max(1.0, abs(f1.deriv(2)(0.0))))
    assert c0 > 0


@pytest.fixture(scope="module")
def capped():
    return cap_critical_points(torus_profile())


def test_torus_caps(capped):
    assert capped.n == 2
    ks = sorted(c.K for c in capped.caps)
    # osculating parabola of a unit circle: K = -+1/2
    assert ks == pytest.approx([-0.5, 0.5], rel=1e-6)
    for c in capped.caps:
        assert c.x0 == pytest.approx(3.0, abs=1e-9)
        assert abs(c.z0) == pytest.approx(1.0, abs=1e-9)
    count, signs = capped.critical_census()
    assert count == 2 and sorted(signs) == [-1, 1]


def test_trace_is_continuous(capped):
    x, z = capped.trace(256)
    steps = np.hypot(np.diff(x), np.diff(z))
    assert np.max(steps) < 20 * np.median(steps)
    assert np.min(x) > 0


def test_segment_graph_follows_source_curve(capped):
    curve = torus_profile()
    for seg in capped.segments:
        z = np.linspace(seg.za, seg.zb, 50)[5:-5]
        x = seg.R(z)
        # every point lies on the unit circle about (3, 0) away from the caps
        np.testing.assert_allclose(np.hypot(x - 3.0, z), 1.0, atol=1e-6)
    assert curve.validate() == []


def test_pocket_family(capped):
    seg = capped.segments[0]
    z0 = 0.5 * (seg.za + seg.zb)
    d2 = 0.05 * (seg.zb - seg.za)
    p = insert_pocket(capped, 0, z0, d2, amplitude_fraction=0.2)
    new = p.segments[0]
    pk = new.pocket
    z_in = np.linspace(z0 - 2 * d2, z0 + 2 * d2, 41)
    np.testing.assert_allclose(new.R(z_in, t=0.0), pk.f0_eval(z_in), rtol=1e-12)
    np.testing.assert_allclose(new.R(z_in, t=1.0), pk.f1_eval(z_in), rtol=1e-12)
    z_out = np.concatenate([np.linspace(seg.za + 0.01, z0 - 3.01 * d2, 10), np.linspace(z0 + 3.01 * d2, seg.zb - 0.01, 10)])
    for t in (0.0, 0.4, 1.0):
        np.testing.assert_allclose(new.R(z_out, t=t), seg.R(z_out), rtol=1e-12)
    # C^2 across every pocket breakpoint
    for b in pk.breakpoints:
        for order in range(3):
            lo, hi = new.R(np.array([b - 1e-9]), order, t=0.7), new.R(np.array([b + 1e-9]), order, t=0.7)
            assert float(lo[0]) == pytest.approx(float(hi[0]), rel=1e-5, abs=1e-5)
    assert p.set_pocket_t(0, 0.3).segments[0].pocket.t == 0.3
    q = with_pocket_amplitude(p, 0, 2 * pk.amplitude)
    assert q.segments[0].pocket.amplitude == pytest.approx(2 * pk.amplitude)
    assert q.segments[0].pocket.z0 == pk.z0


def test_pocket_out_of_bounds(capped):
    seg = capped.segments[0]
    with pytest.raises(PocketOutOfBounds):
        insert_pocket(capped, 0, seg.za + 0.01, 0.1)


def test_admissibility(capped):
    assert check_admissible(capped, BOX).admissible
    tight = SupportBox(2.5, 3.5, -2.0, 2.0)
    rep = check_admissible(capped, tight)
    assert not rep.admissible and rep.clearance < 0


def test_rotate_to_morse():
    fixed, step = rotate_to_morse(degenerate_profile(), BOX, 0.2)
    assert step.params["theta"] != 0
    assert step.max_displacement > 0
    with pytest.raises(ValueError):
        rotate_to_morse(degenerate_profile(), BOX, 0.0)
    with pytest.raises(AdmissibilityViolation):
        rotate_to_morse(degenerate_profile(), SupportBox(2.5, 3.5, -0.5, 0.5), 0.2)


def test_morse_curve_is_not_rotated():
    _, step = rotate_to_morse(torus_profile(), BOX, 0.2)
    assert step.params["theta"] == 0.0


@settings(max_examples=10, deadline=None)
@given(st.floats(0.0, 0.3), st.floats(-0.3, 0.3))
def test_capping_keeps_alternating_census(c2, s2):
    curve = ProfileCurve((3.0, 1.0, 0.0, c2, 0.0), (0.0, 0.0, 1.0, 0.0, s2 * 0.3))
    if not curve.validate() == []:
        return
    try:
        prof = cap_critical_points(curve)
    except ValueError:
        return  # not Morse
    except CapCollision:
        return  # x turns within the cap reach, rejected as specified
    count, signs = prof.critical_census()
    assert count % 2 == 0
    assert all(a == -b for a, b in zip(signs, signs[1:] + signs[:1]))
    assert math.isfinite(check_admissible(prof, BOX).min_x)
