import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from revbend import fileio
from revbend.errors import MeshGridError, ParseError
from revbend.modesolve.field import assemble_field
from revbend.profile import ProfileCurve, SurfaceParam, torus_profile

coefs = st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=7)


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(coefs, coefs)
def test_profile_round_trip(tmp_path, r, h):
    curve = ProfileCurve(tuple(r), tuple(h))
    p = tmp_path / "c.txt"
    fileio.save_profile(curve, p)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        back = fileio.load_profile(p)
    assert back.r_coeffs == curve.r_coeffs and back.h_coeffs == curve.h_coeffs


def test_checksum_mismatch_warns(tmp_path):
    p = tmp_path / "c.txt"
    fileio.save_profile(torus_profile(), p)
    p.write_text(p.read_text().replace("r: 3", "r: 4"))
    with pytest.warns(fileio.ChecksumWarning):
        fileio.load_profile(p)


@pytest.mark.parametrize("text,line", [
    ("revbend-profile v1\nr: 3 1 0\nh: 0 zero 1\n", 3),
    ("revbend-profile v1\nr: 3 1 0\nr: 3\nh: 0 0 1\n", 3),
    ("revbend-profile v1\nr: 3 1 0\nq: 1\n", 3),
    ("not a profile\n", 1),
])
def test_parse_errors_carry_line_numbers(tmp_path, text, line):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(ParseError) as e:
        fileio.load_profile(p)
    assert e.value.line == line


def test_capseg_round_trip(tmp_path, torus_mode):
    prof = torus_mode.profile
    p = tmp_path / "p.capseg"
    fileio.save_capseg(prof, p)
    back = fileio.load_profile(p)
    assert back.caps == prof.caps
    for a, b in zip(back.segments, prof.segments):
        assert (a.za, a.zb, a.direction) == (b.za, b.zb, b.direction)
        assert a.pocket.t == b.pocket.t and a.pocket.f1 == b.pocket.f1
        z = np.linspace(a.za, a.zb, 17)
        np.testing.assert_array_equal(a.R(z), b.R(z))


def test_field_csv_round_trip(tmp_path, torus_mode):
    fld = assemble_field(torus_mode, 32, 16)
    p = tmp_path / "f.csv"
    fileio.save_field_csv(fld, p)
    back = fileio.read_field(p)
    np.testing.assert_array_equal(back.s, fld.s)
    np.testing.assert_array_equal(back.Z(), fld.Z())
    for x, y in zip(back.abc(), fld.abc()):
        np.testing.assert_array_equal(x, y)


def test_field_csv_bad_header(tmp_path):
    p = tmp_path / "f.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ParseError):
        fileio.read_field(p)


def test_report_round_trip():
    rep = {"status": "success", "exit_code": 0, "mode": {"k": 16, "t_hat": [0.25, 0.5]},
           "verification": {"passed": True, "inner": {"x": 1.5}}}
    back = fileio.parse_report(fileio.format_report(rep))
    assert back["status"] == "success"
    assert back["mode"]["k"] == "16"
    assert back["verification"]["inner"]["x"] == fileio.format_report({"x": 1.5}).split("= ")[1].strip()


def test_obj_mesh_is_closed_torus(tmp_path):
    p = tmp_path / "t.obj"
    surface = fileio.export_surface(torus_profile(), p, 24, 12)
    v, f = fileio.read_obj(p)
    assert v.shape == (24 * 12, 3) and f.shape == (24 * 12, 4)
    edges = {tuple(sorted((q[i], q[(i + 1) % 4]))) for q in f for i in range(4)}
    assert len(v) - len(edges) + len(f) == 0  # Euler characteristic of a torus
    np.testing.assert_allclose(v.reshape(24, 12, 3), surface.F(), atol=1e-15)


def test_mesh_grid_checks(tmp_path):
    with pytest.raises(MeshGridError):
        fileio.export_surface(torus_profile(), tmp_path / "x.obj", 2, 8)


def test_frames(tmp_path, torus_mode):
    surface = torus_mode.chart.surface(16, 8)
    fld = assemble_field(torus_mode, 16, 8)
    paths = fileio.export_frames(surface, fld, 0.1, 3, tmp_path / "frames")
    assert len(paths) == 4
    v0, _ = fileio.read_obj(paths[0])
    np.testing.assert_allclose(v0, surface.F().reshape(-1, 3), atol=1e-15)
    v3, _ = fileio.read_obj(paths[3])
    np.testing.assert_allclose(v3, (surface.F() + 0.1 * fld.Z()).reshape(-1, 3), rtol=1e-15, atol=1e-14)
    assert (tmp_path / "frames" / "README.txt").read_text() == fileio.FRAMES_DISCLAIMER
    with pytest.raises(MeshGridError):
        fileio.export_frames(SurfaceParam.from_curve(torus_profile(), 8, 8), fld, 0.1, 3, tmp_path / "g")
