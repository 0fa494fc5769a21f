import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from fbimcf.geometry import (
    GeometryError,
    area_radius,
    boundary_shape,
    catenoid_support,
    conformal_metric,
    euclidean_halfspace,
    flat_support,
    general_metric,
    schwarzschild_halfspace,
)

SCHW = schwarzschild_halfspace(1.0)


def _bump():
    # phi = 1 + a exp(-|x - c|^2 / 4); Laplacian in closed form
    a, c = 0.4, np.array([0.3, 0.0, 1.5])

    def phi(x):
        return 1.0 + a * np.exp(-np.sum((x - c) ** 2, axis=-1) / 4)

    def lap(x):
        r2 = np.sum((x - c) ** 2, axis=-1)
        return a * np.exp(-r2 / 4) * (r2 / 4 - 1.5)

    return phi, lap


def test_schwarzschild_scalar_curvature_vanishes():
    x = np.array([[2.0, 0.0, 0.0], [0.0, 1.2, 1.6], [0.3, 0.4, 1.0]])
    assert np.max(np.abs(SCHW.scalar_curvature(x))) < 1e-12


def test_schwarzschild_area_radius_is_stationary_at_mass():
    res = minimize_scalar(lambda r: float(area_radius(SCHW, np.array([r]))[0]), bounds=(0.2, 5.0),
                          method="bounded", options={"xatol": 1e-10})
    assert res.x == pytest.approx(1.0, abs=1e-6)


def test_schwarzschild_minimal_disc_area():
    # induced area of {|x| = 1} in g by quadrature over the hemisphere
    th, ph = np.meshgrid(np.linspace(0, np.pi / 2, 401), np.linspace(0, 2 * np.pi, 801), indexing="ij")
    x = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)
    e_th = np.stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)], axis=-1)
    e_ph = np.stack([-np.sin(th) * np.sin(ph), np.sin(th) * np.cos(ph), np.zeros_like(th)], axis=-1)
    g = SCHW.g(x)
    a = np.einsum("...i,...ij,...j->...", e_th, g, e_th)
    b = np.einsum("...i,...ij,...j->...", e_th, g, e_ph)
    c = np.einsum("...i,...ij,...j->...", e_ph, g, e_ph)
    dens = np.sqrt(a * c - b * b)
    area = np.trapezoid(np.trapezoid(dens, ph[0], axis=1), th[:, 0])
    assert area == pytest.approx(32 * math.pi, rel=1e-5)


def test_schwarzschild_rejects_non_positive_mass():
    with pytest.raises(GeometryError):
        schwarzschild_halfspace(0.0)
    with pytest.raises(GeometryError):
        schwarzschild_halfspace(-1.0)


def test_conformal_scalar_curvature_formula():
    phi, lap = _bump()
    met = conformal_metric(phi, phi_lap=lap)
    x = np.array([[0.5, 0.2, 1.0], [1.0, -0.5, 2.0], [0.0, 0.0, 0.5]])
    expected = -8.0 * phi(x) ** -5 * lap(x)
    assert np.allclose(met.scalar_curvature(x), expected, rtol=1e-12, atol=1e-14)


def test_conformal_fast_path_matches_christoffel_pipeline():
    phi, lap = _bump()
    met = conformal_metric(phi, phi_lap=lap)
    generic = general_metric(met.g)
    x = np.array([[0.5, 0.2, 1.0], [1.0, -0.5, 2.0], [2.0, 1.0, 1.0]])
    fast = met.scalar_curvature(x)
    errs = [np.max(np.abs(generic.scalar_curvature_fd(x, h) - fast)) for h in (2e-2, 1e-2)]
    assert errs[1] < 1e-4
    assert errs[1] < 0.35 * errs[0]  # second order


def test_schwarzschild_christoffel_pipeline_gives_zero():
    x = np.array([[2.0, 0.0, 0.5], [0.0, 3.0, 1.0]])
    assert np.max(np.abs(general_metric(SCHW.g).scalar_curvature_fd(x))) < 1e-5


@settings(max_examples=50, deadline=None)
@given(
    st.floats(0.2, 1e3), st.floats(0.0, 2 * math.pi), st.floats(0.0, math.pi / 2),
    st.sampled_from(["euclidean", "schwarzschild", "bump"]),
)
def test_metric_symmetric_positive_definite(r, azim, polar, kind):
    met = {"euclidean": euclidean_halfspace(), "schwarzschild": SCHW, "bump": conformal_metric(_bump()[0])}[kind]
    x = r * np.array([math.sin(polar) * math.cos(azim), math.sin(polar) * math.sin(azim), math.cos(polar)])
    g = met.g(x)
    assert np.allclose(g, g.T)
    assert np.min(np.linalg.eigvalsh(g)) > 0


def test_metric_spd_on_ten_thousand_points():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(10_000, 3))
    x[:, 2] = np.abs(x[:, 2])
    x *= (0.1 + 50 * rng.random(10_000))[:, None]
    for met in (SCHW, conformal_metric(_bump()[0])):
        g = met.g(x)
        assert np.allclose(g, np.swapaxes(g, -1, -2))
        assert np.min(np.linalg.eigvalsh(g)) > 0


def test_schwarzschild_decay_envelope():
    r = np.geomspace(2.0, 1e3, 40)
    x = np.stack([r / math.sqrt(2), np.zeros_like(r), r / math.sqrt(2)], axis=-1)
    dev = np.max(np.abs(SCHW.g(x) - np.eye(3)), axis=(-1, -2))
    ddev = np.max(np.abs(SCHW.dg(x)), axis=(-1, -2, -3))
    c = (dev + r * ddev) * r
    assert np.max(c) < 20.0
    assert c[-1] < c[0]


def test_catenoid_is_minimal():
    cat = catenoid_support(1.0)
    for rho in (1.5, 2.0, 10.0):
        shape = boundary_shape(euclidean_halfspace(), cat, np.array([rho, math.acosh(rho)]))
        assert abs(shape.mean_curvature) < 1e-12


def test_catenoid_meridian_curvature_at_neck():
    shape = boundary_shape(euclidean_halfspace(), catenoid_support(1.0), np.array([1.0, 0.0]))
    assert abs(shape.mean_curvature) < 1e-12
    # meridian circle of radius m at the neck; the sign convention is fixed by the outward normal
    assert abs(shape.along_meridian()) == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("rho", [10.0, 100.0])
def test_catenoid_slope_decay(rho):
    cat = catenoid_support(1.0)
    assert float(cat.dpsi(np.array(rho))) == pytest.approx(1.0 / math.sqrt(rho**2 - 1.0), rel=1e-10)


def test_neck_disc_meets_catenoid_orthogonally():
    t_rho, t_z = catenoid_support(1.0).tangent(np.array(0.0))
    # the disc is horizontal: its tangent is (1, 0)
    assert abs(float(t_rho)) < 1e-14 and abs(abs(float(t_z)) - 1.0) < 1e-14


def test_flat_plane_shape_is_zero():
    shape = boundary_shape(euclidean_halfspace(), flat_support(), np.array([2.0, 0.0]))
    assert shape.kappa_meridian == 0.0 and shape.kappa_rotational == 0.0


def test_schwarzschild_plane_is_totally_geodesic():
    shape = boundary_shape(SCHW, flat_support(), np.array([2.0, 0.0]))
    assert abs(shape.mean_curvature) < 1e-12
    assert abs(shape.kappa_meridian) < 1e-12


def test_schwarzschild_conformal_factor_has_no_normal_derivative_on_plane():
    # the plane is totally geodesic iff d phi / d x3 = 0 there; centered differences
    h = 1e-4
    phi = lambda x: 1.0 + 1.0 / np.linalg.norm(x)
    x0 = np.array([2.0, 0.0, 0.0])
    dphi_dz = (phi(x0 + [0, 0, h]) - phi(x0 - [0, 0, h])) / (2 * h)
    assert abs(dphi_dz) < 1e-10


def test_boundary_shape_rejects_off_support_point():
    with pytest.raises(GeometryError):
        boundary_shape(euclidean_halfspace(), flat_support(), np.array([1.0, 0.5]))
