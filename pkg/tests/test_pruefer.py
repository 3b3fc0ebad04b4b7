import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from revbend.modesolve.pruefer import continue_with_scale, integrate_pruefer, phase_of, zeros_between


@settings(max_examples=40, deadline=None)
@given(st.floats(0.5, 60.0))
def test_sine_oracle(om):
    sol = integrate_pruefer(lambda y: om * om, 0.0, 1.0, 0.0, om, S=om)
    psi, dpsi, _ = sol.end_state()
    assert psi == pytest.approx(math.sin(om), abs=1e-8)
    assert dpsi == pytest.approx(om * math.cos(om), abs=1e-8 * om)
    assert sol.zero_count() == sum(1 for j in range(1, 100) if j * math.pi / om < 1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 6.0), st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_sign_changing_coefficient_against_direct_solve(a, p0, d0):
    if abs(p0) < 1e-3 or abs(d0) < 1e-3:
        return  # a zero at the start point is not interior
    beta = lambda y: a * a * math.cos(3 * y) - 2.0
    sol = integrate_pruefer(beta, 0.0, 4.0, p0, d0, S=max(1.0, a))
    ref = solve_ivp(lambda y, v: [v[1], -beta(y) * v[0]], (0.0, 4.0), [p0, d0], rtol=1e-12, atol=1e-14,
                    dense_output=True)
    ys = np.linspace(0, 4, 41)
    psi, dpsi, _ = sol.evaluate(ys)
    scale = np.max(np.abs(ref.sol(ys)[0]))
    np.testing.assert_allclose(psi, ref.sol(ys)[0], atol=1e-8 * scale)
    fine = ref.sol(np.linspace(0, 4, 20001))[0]
    sign_changes = int(np.sum(fine[1:] * fine[:-1] < 0))
    assert sol.zero_count() == sign_changes


def test_breakpoints_split_pieces():
    sol = integrate_pruefer(lambda y: 4.0, 0.0, 1.0, 0.0, 2.0, S=2.0, breakpoints=(0.3, 0.6, 2.0))
    assert [(p.y0, p.y1) for p in sol.pieces] == [(0.0, 0.3), (0.3, 0.6), (0.6, 1.0)]


def test_trivial_data_and_bad_range():
    assert integrate_pruefer(lambda y: 1.0, 0.0, 1.0, 0.0, 0.0).trivial
    with pytest.raises(ValueError):
        integrate_pruefer(lambda y: 1.0, 1.0, 0.0, 1.0, 0.0)


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_zeros_between(a, b):
    n = zeros_between(a, b)
    brute = sum(1 for j in range(-30, 31) if min(a, b) < j * math.pi < b and a < b)
    assert n == brute


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 10), st.floats(-20, 20))
def test_phase_branch(p, d, S, near):
    if abs(p) + abs(d) < 1e-6:
        return
    th = phase_of(p, d, S, near)
    assert abs(th - near) <= math.pi + 1e-12
    assert math.sin(th) * p >= -1e-12 and math.cos(th) * d >= -1e-12


def test_rescaling_keeps_branch():
    sol = integrate_pruefer(lambda y: 100.0, 0.0, 1.0, 0.0, 10.0, S=10.0)
    th = continue_with_scale(sol, 3.0)
    assert abs(th - sol.end_phase()) < math.pi
    assert math.floor(th / math.pi) == math.floor(sol.end_phase() / math.pi)
