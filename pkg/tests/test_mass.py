import math

import numpy as np
import pytest

from fbimcf.geometry import catenoid_support, conformal_metric, euclidean_halfspace, flat_support, schwarzschild_halfspace
from fbimcf.mass import MassError, adm_mass, exterior_mass, extrapolate, support_chart

RADII = (50.0, 100.0, 200.0, 400.0)


@pytest.fixture(scope="module")
def catenoid_chart():
    return support_chart(catenoid_support(1.0), RADII)


def test_euclidean_adm_mass_is_zero():
    assert abs(adm_mass(euclidean_halfspace(), RADII).value) < 1e-10


def test_schwarzschild_adm_mass():
    est = adm_mass(schwarzschild_halfspace(1.0), RADII)
    assert est.value == pytest.approx(1.0, abs=1e-3)
    assert est.converged


def test_partial_masses_converge_like_inverse_radius():
    est = adm_mass(schwarzschild_halfspace(1.0), RADII)
    diffs = np.abs(np.diff(est.partial))
    c = diffs * est.radii[:-1]
    assert np.all(c < 2.0)
    assert np.all(diffs[1:] < diffs[:-1])


def test_adm_mass_invariant_under_horizontal_translation():
    shift = np.array([0.7, -0.4, 0.0])
    met = conformal_metric(lambda x: 1.0 + 1.0 / np.linalg.norm(x - shift, axis=-1))
    assert adm_mass(met, RADII).value == pytest.approx(1.0, abs=5e-3)


def test_catenoid_exterior_mass():
    assert exterior_mass(catenoid_support(1.0), (10.0, 100.0, 1000.0)).value == pytest.approx(1.0, abs=1e-4)


def test_catenoid_exterior_mass_scales():
    assert exterior_mass(catenoid_support(2.0), (10.0, 100.0, 1000.0)).value == pytest.approx(2.0, abs=2e-4)


def test_flat_plane_exterior_mass_is_zero():
    assert exterior_mass(psi=lambda r, a: 0.0 * r, dpsi=lambda r, a: 0.0 * r).value == 0.0


def test_exterior_mass_invariant_under_vertical_shift():
    psi = lambda r, a: np.arccosh(np.maximum(r, 1.0)) + 0.3 * np.cos(a) / r
    dpsi = lambda r, a: 1.0 / np.sqrt(r * r - 1.0) - 0.3 * np.cos(a) / r**2
    a = exterior_mass(psi=psi, dpsi=dpsi, graph_radius=1.0).value
    b = exterior_mass(psi=lambda r, ph: psi(r, ph) + 5.0, dpsi=dpsi, graph_radius=1.0).value
    assert a == b
    # finite-difference derivatives agree to round-off
    c = exterior_mass(psi=lambda r, ph: psi(r, ph) + 5.0, graph_radius=1.0).value
    assert c == pytest.approx(a, rel=1e-9)


def test_exterior_mass_rejects_radii_inside_graph():
    with pytest.raises(MassError):
        exterior_mass(catenoid_support(2.0), (1.0, 10.0))


def test_chart_adm_mass_is_quarter_of_exterior_mass(catenoid_chart):
    assert adm_mass(catenoid_chart, RADII).value == pytest.approx(0.25, abs=5e-3)


@pytest.mark.parametrize("m", [0.5, 2.0])
def test_mass_relation_other_parameters(m):
    sup = catenoid_support(m)
    chart = support_chart(sup, RADII)
    m_ext = exterior_mass(sup, (10.0 * m, 100.0 * m, 1000.0 * m)).value
    assert adm_mass(chart, RADII).value == pytest.approx(m_ext / 4.0, abs=5e-3 * max(m, 1.0))


def test_chart_barycentre_grows_logarithmically(catenoid_chart):
    r = 100.0
    assert abs(r * float(catenoid_chart.rho_prime(np.array(r))) - 1.0) < 0.05


def test_chart_azimuth_rescale_decays(catenoid_chart):
    r = np.array(RADII)[:, None]
    z = catenoid_chart.zeta(r, np.linspace(0.0, 2 * np.pi, 9)[None, :])
    c = np.max(np.abs(z * math.pi / 2 - math.pi / 2), axis=1) * np.array(RADII)
    assert np.all(c < 10.0)


def test_chart_round_trip(catenoid_chart):
    rng = np.random.default_rng(3)
    p = rng.normal(size=(1000, 3))
    p[:, 2] = np.abs(p[:, 2])
    p *= (60.0 + 300.0 * rng.random(1000))[:, None] / np.linalg.norm(p, axis=1)[:, None]
    assert np.max(np.abs(catenoid_chart.inverse(catenoid_chart.forward(p)) - p)) < 1e-8


def test_flat_chart_is_identity():
    chart = support_chart(flat_support(), RADII)
    r = np.array(RADII)
    assert np.all(chart.rho(r) == 0.0)
    assert np.allclose(chart.zeta(r[:, None], np.linspace(0, 6, 5)[None, :]), 1.0)
    p = np.array([[30.0, 40.0, 50.0], [100.0, 0.0, 1.0]])
    assert np.allclose(chart.forward(p), p)


def test_chart_rejects_small_shells():
    with pytest.raises(MassError):
        support_chart(catenoid_support(1.0), (0.5, 100.0))


def test_extrapolation_recovers_polynomial_tail():
    r = np.array(RADII)
    est = extrapolate(r, 2.0 + 3.0 / r - 7.0 / r**2)
    assert est.value == pytest.approx(2.0, abs=1e-10)
