import math

import numpy as np
import pytest

from fbimcf.geometry import catenoid_support, flat_support
from fbimcf.mesh import MeshError, Tag, build_domain, dump_grid, hemisphere, neck_disc, transfinite_grid


@pytest.fixture(scope="module")
def annulus():
    return build_domain(hemisphere(1.0), flat_support(), 16.0)


def test_quarter_annulus_domain(annulus):
    c = annulus.corners()
    pts = np.array(list(c.values()))
    radii = np.sort(np.unique(np.round(np.hypot(pts[:, 0], pts[:, 1]), 12)))
    assert list(radii) == [1.0, 16.0]
    assert annulus.contact_cosine <= 1e-9


def test_jacobians_positive(annulus):
    g = transfinite_grid(annulus, 64, 64)
    assert np.min(g.cell_areas()) > 0


def test_corners_match_domain(annulus):
    g = transfinite_grid(annulus, 32, 48, stretch=16.0)
    got = {(round(g.rho[i, j], 12), round(g.z[i, j], 12)) for i in (0, -1) for j in (0, -1)}
    want = {(round(r, 12), round(z, 12)) for r, z in annulus.corners().values()}
    assert got == want


def test_stretch_ratio(annulus):
    g = transfinite_grid(annulus, 64, 64, stretch=16.0)
    sp = g.radial_spacing()
    assert sp.max() / sp.min() == pytest.approx(16.0, rel=0.01)


def test_refinement_halves_cell_diameter(annulus):
    a = transfinite_grid(annulus, 64, 64, stretch=16.0).mesh_size()
    b = transfinite_grid(annulus, 128, 128, stretch=16.0).mesh_size()
    assert b / a == pytest.approx(0.5, abs=0.01)


def test_domain_area_converges_second_order(annulus):
    exact = math.pi * (16.0**2 - 1.0) / 4.0
    errs = [abs(transfinite_grid(annulus, n, n).cell_areas().sum() - exact) for n in (16, 32, 64)]
    rates = [math.log2(errs[k] / errs[k + 1]) for k in range(2)]
    assert min(rates) > 1.9


def test_catenoid_domain_follows_profile():
    sup = catenoid_support(1.0)
    dom = build_domain(neck_disc(sup), sup, 16.0)
    g = transfinite_grid(dom, 48, 48, stretch=16.0)
    rho, z = g.rho[:, 0], g.z[:, 0]
    assert np.max(np.abs(z - np.arccosh(rho))) < 1e-9
    assert rho[0] == pytest.approx(1.0, abs=1e-12)
    assert np.min(g.cell_areas()) > 0


def test_outer_radius_inside_initial_surface_rejected():
    with pytest.raises(MeshError):
        build_domain(hemisphere(1.0), flat_support(), 0.9)


def test_surface_off_support_rejected():
    with pytest.raises(MeshError):
        build_domain(hemisphere(1.0, center_z=0.5), catenoid_support(1.0), 16.0)


def test_tags_cover_four_edges(annulus):
    g = transfinite_grid(annulus, 16, 16)
    assert {Tag(int(t)) for t in np.unique(g.tags)} >= {Tag.INNER_DIRICHLET, Tag.OUTER_DIRICHLET, Tag.SUPPORT_NEUMANN, Tag.AXIS}


def test_grid_dump(tmp_path, annulus):
    g = transfinite_grid(annulus, 8, 8)
    path = tmp_path / "grid.txt"
    dump_grid(g, path)
    rows = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    assert len(rows) == (g.n_i + 1) * (g.n_j + 1)
    assert len(rows[0].split()) == 5
