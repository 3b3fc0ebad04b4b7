import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from revbend.errors import DegenerateDefect, GridMismatch
from revbend.fieldcheck import (deformation_residuals, fd_crosscheck, fd_field, gram_singular_values,
                                isometry_defects, isometry_order, smoothness_report, triviality_fit)
from revbend.modesolve.field import (DeformationField, ModeProfile, assemble_field, rigid_field, scaling_field,
                                     zero_field)
from revbend.profile import ProfileCurve, SurfaceParam, torus_profile

vec = st.lists(st.floats(-2, 2), min_size=3, max_size=3)


@pytest.fixture(scope="module")
def surf():
    return SurfaceParam.from_curve(torus_profile(), 64, 32)


@settings(max_examples=30, deadline=None)
@given(vec, vec)
def test_rigid_fields_are_trivial_deformations(mu, om):
    curve = ProfileCurve((3.0, 1.0, 0.2), (0.0, 0.1, 1.0))
    surface = SurfaceParam.from_curve(curve, 48, 24)
    fld = rigid_field(surface, mu, om)
    np.testing.assert_allclose(fld.Z(), np.cross(mu, surface.F()) + np.asarray(om), atol=1e-12)
    if np.linalg.norm(mu) + np.linalg.norm(om) > 1e-3:
        assert deformation_residuals(fld, surface).max_relative <= 1e-10
        fit = triviality_fit(fld, surface)
        assert fit.relative_residual < 1e-10
        np.testing.assert_allclose(fit.mu, mu, atol=1e-9)
        np.testing.assert_allclose(fit.omega, om, atol=1e-9)


def test_scaling_is_first_order(surf):
    fld = scaling_field(surf)
    assert deformation_residuals(fld, surf).res_ss > 0.5
    assert isometry_order(fld, surf) == pytest.approx(1.0, abs=0.05)


def test_rigid_rotation_is_second_order(surf):
    fld = rigid_field(surf, (0.3, -0.2, 0.5), (0.0, 0.0, 0.0))
    assert isometry_order(fld, surf) == pytest.approx(2.0, abs=0.05)


def test_translation_defect_is_degenerate(surf):
    # translation leaves the metric unchanged to every order
    with pytest.raises(DegenerateDefect):
        isometry_order(rigid_field(surf, omega=(1.0, 0.0, 0.0)), surf)


def test_defects_scale_with_eps(surf):
    D = isometry_defects(scaling_field(surf), surf, (1e-2, 1e-3))
    assert D[0] / D[1] == pytest.approx(10.0, rel=0.05)


def test_grid_mismatch(surf):
    other = SurfaceParam.from_curve(torus_profile(), 32, 32)
    with pytest.raises(GridMismatch):
        deformation_residuals(zero_field(other), surf)


def _pure_mode(surface, k, seed):
    rng = np.random.default_rng(seed)
    n = len(surface.s)
    vals = [rng.normal(size=n) + 1j * rng.normal(size=n) for _ in range(6)]
    return DeformationField(surface.s, surface.t, {k: ModeProfile(*vals)})


def test_gram_of_different_wave_numbers_is_diagonal(surf):
    sv, G = gram_singular_values([_pure_mode(surf, 2, 0), _pure_mode(surf, 3, 1)])
    assert abs(G[0, 1]) < 1e-12
    assert np.min(sv) == pytest.approx(1.0, abs=1e-12)


def test_gram_of_repeated_field_is_singular(surf):
    f = _pure_mode(surf, 2, 0)
    sv, _ = gram_singular_values([f, f.scaled(-3.0)])
    assert np.min(sv) < 1e-12
    with pytest.raises(DegenerateDefect):
        gram_singular_values([f, zero_field(surf)])


def test_mode_field(torus_mode):
    fld = assemble_field(torus_mode, 128, 64)
    surface = torus_mode.chart.surface(128, 64)
    assert deformation_residuals(fld, surface).max_relative <= 1e-8
    assert triviality_fit(fld, surface).relative_residual >= 0.1
    assert max(fd_crosscheck(torus_mode, 128).values()) < 1e-6
    # independent derivatives, looser because of the differencing error
    assert deformation_residuals(fd_field(torus_mode, 128, 64), surface).max_relative < 1e-6
    assert smoothness_report(torus_mode).passed()
