import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fbimcf.geometry import euclidean_halfspace, flat_support, schwarzschild_halfspace
from fbimcf.levelset import (
    CSV_COLUMNS,
    LevelSetError,
    SurfaceDiagnostics,
    curve_distance,
    euclidean_area,
    extract_level,
    flow_table,
    hawking_mass,
    read_flow_csv,
    surface_quantities,
    write_contours,
    write_flow_csv,
)
from fbimcf.mesh import build_domain, hemisphere, transfinite_grid
from fbimcf.solver import ScalarField

EUCLID = euclidean_halfspace()
SCHW = schwarzschild_halfspace(1.0)


def _grid(n, r_out=16.0):
    return transfinite_grid(build_domain(hemisphere(1.0), flat_support(), r_out), n, n, r_out)


def _hemisphere_field(n):
    g = _grid(n)
    return ScalarField(g, 2.0 * np.log(np.hypot(g.rho, g.z)), EUCLID)


def _schwarzschild_field(n):
    # centred hemispheres are the leaves; u = log(|S_r| / |S_1|)
    g = _grid(n)
    r = np.hypot(g.rho, g.z)
    area = 2 * math.pi * r**2 * (1 + 1 / r) ** 4
    return ScalarField(g, np.log(area / (32 * math.pi)), SCHW)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_exact_hemisphere_leaves(t):
    u = _hemisphere_field(128)
    curve = extract_level(u, t)
    assert curve.on_support and curve.on_axis
    assert curve.components() == ["disc"]
    assert np.allclose(np.hypot(curve.rho, curve.z), math.exp(t / 2), rtol=1e-3)
    d = surface_quantities(curve, EUCLID)
    assert d.area == pytest.approx(2 * math.pi * math.exp(t), rel=5e-4)
    assert d.boundary_length == pytest.approx(2 * math.pi * math.exp(t / 2), rel=5e-4)
    assert d.willmore == pytest.approx(8 * math.pi, rel=5e-4)
    assert d.euler_char == 1
    assert d.eccentricity == pytest.approx(1.0, abs=1e-12)
    assert abs(d.hawking_mass) < 1e-4


def test_hawking_mass_error_decreases_with_refinement():
    errs = [abs(flow_table(_hemisphere_field(n), [1.0])[0].hawking_mass) for n in (32, 64, 128)]
    assert errs[2] < errs[1] < errs[0]


def test_exact_hemisphere_geroch_integrand_vanishes():
    for d in flow_table(_hemisphere_field(128), [0.5, 1.0, 2.0], support=flat_support()):
        assert abs(d.geroch_integrand) < 1e-7


def test_schwarzschild_hemispheres_carry_the_mass():
    errs = []
    for n in (32, 64, 128):
        d = flow_table(_schwarzschild_field(n), [1.0], support=flat_support())[0]
        assert d.area == pytest.approx(32 * math.pi * math.e, rel=1e-3)
        errs.append(abs(d.hawking_mass - 1.0))
    assert errs[-1] < 5e-4
    assert errs[2] < errs[1] < errs[0]


def test_euclidean_area_ignores_metric():
    curve = extract_level(_schwarzschild_field(64), 1.0)
    r = float(np.mean(np.hypot(curve.rho, curve.z)))
    assert euclidean_area(curve) == pytest.approx(2 * math.pi * r**2, rel=1e-3)


@given(st.floats(1e-3, 1e4), st.floats(0.0, 100.0), st.floats(0.01, 100.0))
def test_hawking_mass_scaling(area, willmore, lam):
    assert hawking_mass(lam**2 * area, willmore) == pytest.approx(lam * hawking_mass(area, willmore), rel=1e-12)


@given(st.floats(1e-3, 1e4))
def test_hawking_mass_without_curvature_is_area_radius(area):
    assert hawking_mass(area, 0.0) == pytest.approx(math.sqrt(area / (32 * math.pi)), rel=1e-12)
    assert hawking_mass(area, 8 * math.pi) == 0.0


@given(st.floats(0.1, 1e3), st.floats(0.0, 200.0))
def test_recomputed_hawking_mass_matches(area, willmore):
    d = SurfaceDiagnostics(0.0, area, 1.0, willmore, hawking_mass(area, willmore), 1, 1.0)
    assert d.recompute_hawking_mass() == d.hawking_mass


def test_flow_table_respects_trusted_window():
    u = _hemisphere_field(32)
    tau = float(np.max(u.values))
    table = flow_table(u, [0.0, 1.0, tau - 0.5, tau], lower_margin=0.1, upper_margin=1.0)
    assert [d.t for d in table] == [1.0]


def test_levels_outside_range_raise():
    u = _hemisphere_field(16)
    with pytest.raises(LevelSetError):
        extract_level(u, -1.0)
    with pytest.raises(LevelSetError):
        extract_level(u, 100.0)
    with pytest.raises(LevelSetError):
        extract_level(u, 1.0, side="middle")


def test_failed_levels_recorded_not_raised():
    u = _hemisphere_field(16)
    table = flow_table(u, [1.0, 100.0], upper_margin=-200.0)
    assert table[0].error is None
    assert table[1].error is not None and math.isnan(table[1].area)


def test_plateau_flags_jump():
    g = _grid(64)
    r = np.hypot(g.rho, g.z)
    a, b, t = 2.0, 4.0, 2 * math.log(2.0)
    vals = np.where(r < a, 2 * np.log(r), np.where(r <= b, t, t + 2 * np.log(r / b)))
    u = ScalarField(g, vals, EUCLID)
    lower = extract_level(u, t)
    upper = extract_level(u, t, side="upper")
    assert lower.jump_candidate and upper.jump_candidate
    assert lower.jump_gap == pytest.approx(b - a, abs=0.2)
    assert np.mean(np.hypot(lower.rho, lower.z)) < np.mean(np.hypot(upper.rho, upper.z))
    assert not extract_level(u, 1.0).jump_candidate


def test_curve_distance():
    s = np.linspace(0, math.pi / 2, 50)
    a = (np.cos(s), np.sin(s))
    b = (1.5 * np.cos(s), 1.5 * np.sin(s))
    assert curve_distance(a, a) < 1e-15
    assert curve_distance(a, b) == pytest.approx(0.5, abs=1e-3)
    assert curve_distance(a, b) == curve_distance(b, a)


def test_flow_csv_round_trip(tmp_path):
    table = flow_table(_hemisphere_field(32), [0.5, 1.0], support=flat_support())
    path = tmp_path / "flow.csv"
    write_flow_csv(table, path)
    assert path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    back = read_flow_csv(path)
    for a, b in zip(table, back):
        for col in CSV_COLUMNS:
            assert getattr(a, col) == getattr(b, col)


def test_contours_file(tmp_path):
    u = _hemisphere_field(16)
    curves = [extract_level(u, t) for t in (0.5, 1.0)]
    path = tmp_path / "contours.txt"
    write_contours(curves, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# t rho z H"
    blocks = "\n".join(lines[1:]).strip().split("\n\n")
    assert len(blocks) == 2
    first = np.array([[float(v) for v in ln.split()] for ln in blocks[0].splitlines()])
    assert np.all(first[:, 0] == 0.5)
    assert first.shape == (curves[0].n_vertices, 4)
