import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from conftest import ASYMMETRIC
from revbend.errors import ClosureFailure, NoCountJump
from revbend.modesolve.continuation import PocketDefaults, continue_mode, ensure_pockets, solve_installed
from revbend.modesolve.segments import (SegmentShooter, integrate_segment, ode_residual, pocket_k_min,
                                        shoot_pocket)
from revbend.perturb import cap_critical_points


def _direct(seg, k, init, z0, z1, t=None):
    q = lambda z: (k * k - 1) * float(seg.R(z, 2, t=t)) / float(seg.R(z, t=t))
    return solve_ivp(lambda z, y: [y[1], -q(z) * y[0]], (z0, z1), list(init), rtol=1e-12, atol=1e-14,
                     dense_output=True)


@pytest.mark.parametrize("k", [2, 5, 12])
def test_segment_integration_matches_direct_solve(torus_pocketed, k):
    seg = torus_pocketed.segments[1]
    za, zb = seg.za + 0.05, seg.zb - 0.05
    init = (0.3, -0.7)
    sol = integrate_segment(torus_pocketed, 1, k, init, za, zb, t=0.5)
    ref = _direct(seg, k, init, za, zb, t=0.5)
    zz = np.linspace(za, zb, 31)
    psi, dpsi, _ = sol.evaluate(zz)
    y = ref.sol(zz)
    scale = np.max(np.abs(y[0]))
    np.testing.assert_allclose(psi, y[0], atol=1e-7 * scale)
    fine = ref.sol(np.linspace(za, zb, 40001))[0]
    assert sol.zero_count == int(np.sum(fine[1:] * fine[:-1] < 0))
    assert ode_residual(sol, torus_pocketed) < 1e-6


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 30), st.floats(-1, 1), st.floats(-1, 1))
def test_concave_segment_has_at_most_one_zero(torus_capped, k, p0, d0):
    if abs(p0) + abs(d0) < 1e-6:
        return
    for i, seg in enumerate(torus_capped.segments):
        z = np.linspace(seg.za, seg.zb, 201)
        if np.all(seg.R(z, 2) <= 0):
            sol = integrate_segment(torus_capped, i, k, (p0, d0), seg.za, seg.zb)
            assert sol.zero_count <= 1


def test_shoot_pocket(torus_pocketed):
    k = max(pocket_k_min(s) for s in torus_pocketed.segments)
    r = shoot_pocket(torus_pocketed, 0, k)
    assert r.residual <= 1e-8
    assert r.match.delta == pytest.approx(r.target * math.pi, abs=1e-8)
    assert r.target == r.count_before + 1
    assert r.profile.segments[0].pocket.t == r.t_hat
    assert 0.0 < r.t_hat < 1.0


def test_small_k_has_no_count_jump(torus_pocketed):
    seg = torus_pocketed.segments[0]
    assert pocket_k_min(seg) > 2
    with pytest.raises(NoCountJump):
        shoot_pocket(torus_pocketed, 0, 2)


def test_rebind_matches_fresh_shooter(torus_pocketed):
    k = 16
    sh = SegmentShooter(torus_pocketed, 1, k)
    other = torus_pocketed.set_pocket_t(1, 0.25)
    a = sh.rebind(other).match(0.6)
    b = SegmentShooter(other, 1, k).match(0.6)
    assert a.delta == pytest.approx(b.delta, abs=1e-9)
    assert a.scale == pytest.approx(b.scale, rel=1e-8)


def test_mode_closes(torus_mode):
    assert abs(torus_mode.sigma - 1) <= 1e-6
    assert torus_mode.closure_defect["d2psi_rel"] <= 1e-6
    assert all(r.residual <= 1e-8 for r in torus_mode.shots)


def test_mode_is_continuous_across_junctions(torus_mode):
    chart = torus_mode.chart
    for pc in chart.pieces:
        s = pc.s1
        left = torus_mode.evaluate(np.array([s - 1e-9]))
        right = torus_mode.evaluate(np.array([(s + 1e-9) % (2 * np.pi)]))
        scale = np.max(np.abs(torus_mode.evaluate(np.linspace(0, 2 * np.pi, 200))), axis=1)
        np.testing.assert_allclose(left[:, 0], right[:, 0], atol=1e-6 * float(np.max(scale)))


def test_solve_installed_reproduces_mode(torus_mode):
    again = solve_installed(torus_mode.profile, torus_mode.k)
    s = np.linspace(0, 2 * np.pi, 64, endpoint=False)
    np.testing.assert_allclose(again.evaluate(s), torus_mode.evaluate(s), rtol=1e-9, atol=1e-12)


def test_ensure_pockets_is_idempotent(torus_pocketed):
    again = ensure_pockets(torus_pocketed, PocketDefaults(0.02, 0.5))
    assert [s.pocket for s in again.segments] == [s.pocket for s in torus_pocketed.segments]


def test_asymmetric_profile_needs_tuning():
    prof = ensure_pockets(cap_critical_points(ASYMMETRIC))
    k = max(pocket_k_min(s) for s in prof.segments)
    with pytest.raises(ClosureFailure):
        continue_mode(prof, k, tune=False)
