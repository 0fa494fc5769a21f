"""ADM mass of half-spaces, exterior mass of support graphs, and the chart at infinity
identifying the region above a support graph with a half-space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import AmbientMetric, SupportGeometry, _fd_gradient, general_metric

GraphFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class MassError(ValueError):
    """Invalid mass-quadrature input."""


@dataclass(frozen=True)
class MassEstimate:
    """Extrapolated mass with per-radius partial values.

    ``value`` is the least-squares fit of ``m(r) = value + c1/r + ... + ck/r^k``
    with ``k = order``; ``error`` compares against the fit one order lower and
    ``residual`` is the rms misfit (0 when the fit interpolates).
    """

    value: float
    radii: np.ndarray
    partial: np.ndarray
    hemisphere: np.ndarray = field(default_factory=lambda: np.zeros(0))
    circle: np.ndarray = field(default_factory=lambda: np.zeros(0))
    order: int = 0
    residual: float = 0.0
    error: float = 0.0
    threshold: float = 1e-3

    @property
    def converged(self) -> bool:
        return self.error <= self.threshold and self.residual <= self.threshold


def _richardson_fit(radii: np.ndarray, values: np.ndarray, order: int) -> tuple[float, float]:
    cols = [np.ones_like(radii)] + [radii ** (-k) for k in range(1, order + 1)]
    a = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(a, values, rcond=None)
    misfit = values - a @ coef
    return float(coef[0]), float(np.sqrt(np.mean(misfit**2)))


def extrapolate(radii: Sequence[float], values: Sequence[float], max_order: int = 2, threshold: float = 1e-3,
                hemisphere=None, circle=None) -> MassEstimate:
    """Richardson extrapolation in ``1/r`` of per-radius mass values."""
    r = np.asarray(radii, dtype=float)
    v = np.asarray(values, dtype=float)
    order = int(min(max_order, len(r) - 1))
    value, residual = _richardson_fit(r, v, order)
    if order > 0:
        lower, _ = _richardson_fit(r, v, order - 1)
        error = abs(value - lower)
    else:
        error = float("inf") if len(r) == 1 else 0.0
    return MassEstimate(
        value=value,
        radii=r,
        partial=v,
        hemisphere=np.zeros(0) if hemisphere is None else np.asarray(hemisphere),
        circle=np.zeros(0) if circle is None else np.asarray(circle),
        order=order,
        residual=residual,
        error=error,
        threshold=threshold,
    )


def _check_radii(radii: Sequence[float], r_min: float = 0.0) -> np.ndarray:
    r = np.asarray(radii, dtype=float)
    if r.ndim != 1 or r.size == 0:
        raise MassError("radii must be a non-empty 1D sequence")
    if np.any(np.diff(r) <= 0):
        raise MassError("radii must be strictly increasing")
    if r[0] <= r_min:
        raise MassError(f"radius {r[0]} lies inside the excluded region r <= {r_min}")
    return r


def shell_terms(metric, r: float, n_azimuth: int = 512, n_polar: int = 48) -> tuple[float, float]:
    """Hemisphere flux and boundary-circle integrals at coordinate radius ``r``.

    Azimuth uses the periodic trapezoid rule, the polar angle Gauss-Legendre
    nodes on ``[0, pi/2]``.  ``metric`` needs ``g(x)`` and ``dg(x)``.
    """
    phi = 2 * np.pi * np.arange(n_azimuth) / n_azimuth
    w_phi = 2 * np.pi / n_azimuth
    nodes, weights = np.polynomial.legendre.leggauss(n_polar)
    theta = 0.25 * np.pi * (nodes + 1.0)
    w_theta = 0.25 * np.pi * weights
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    unit = np.stack([np.sin(ph) * np.sin(th), np.cos(ph) * np.sin(th), np.cos(th)], axis=-1)
    x = r * unit
    dg = metric.dg(x)
    flux = np.einsum("...jij->...i", dg) - np.einsum("...ijj->...i", dg)
    integrand = np.einsum("...i,...i->...", flux, unit) * r**2 * np.sin(th)
    hemisphere = float(np.sum(w_theta[:, None] * integrand) * w_phi)

    eq = np.stack([np.sin(phi), np.cos(phi), np.zeros_like(phi)], axis=-1)
    g_eq = metric.g(r * eq)
    circle = float(np.sum(np.einsum("...i,...i->...", g_eq[..., :, 2], eq)) * r * w_phi)
    return hemisphere, circle


def adm_mass(
    metric,
    radii: Sequence[float],
    n_azimuth: int = 512,
    n_polar: int = 48,
    max_order: int = 2,
    threshold: float = 1e-3,
) -> MassEstimate:
    """ADM mass of a half-space chart from shell integrals at increasing radii.

    Accepts an :class:`AmbientMetric` or any object exposing ``g`` and ``dg``
    (for instance a :class:`ChartMap`).
    """
    r = _check_radii(radii)
    hemi = np.empty_like(r)
    circ = np.empty_like(r)
    for k, rk in enumerate(r):
        hemi[k], circ[k] = shell_terms(metric, rk, n_azimuth, n_polar)
    partial = (hemi + circ) / (16 * np.pi)
    return extrapolate(r, partial, max_order, threshold, hemi, circ)


# ---------------------------------------------------------------------------
# exterior mass
# ---------------------------------------------------------------------------


def _graph_from_support(support: SupportGeometry) -> tuple[GraphFn, GraphFn, float]:
    def psi(rhat, phi):
        return support.psi(np.asarray(rhat) + 0.0 * np.asarray(phi))

    def dpsi(rhat, phi):
        return support.dpsi(np.asarray(rhat) + 0.0 * np.asarray(phi))

    return psi, dpsi, support.graph_radius


def exterior_mass(
    support: SupportGeometry | None = None,
    radii: Sequence[float] = (10.0, 100.0, 1000.0),
    n_azimuth: int = 512,
    psi: GraphFn | None = None,
    dpsi: GraphFn | None = None,
    graph_radius: float = 0.0,
    max_order: int = 2,
    threshold: float = 1e-3,
) -> MassEstimate:
    """``(1/2pi) \\oint rhat d_rhat psi dphi`` extrapolated over circle radii.

    Either pass a :class:`SupportGeometry` or a graph ``psi(rhat, phi)`` with its
    radial derivative ``dpsi`` (finite differences when omitted).
    """
    if support is not None:
        psi, dpsi, graph_radius = _graph_from_support(support)
    if psi is None:
        raise MassError("exterior_mass needs a support or a graph function")
    if dpsi is None:
        dpsi = _radial_fd(psi)
    r = _check_radii(radii, graph_radius)
    phi = 2 * np.pi * np.arange(n_azimuth) / n_azimuth
    partial = np.array([float(np.mean(rk * dpsi(np.full_like(phi, rk), phi))) for rk in r])
    return extrapolate(r, partial, max_order, threshold)


def _radial_fd(psi: GraphFn) -> GraphFn:
    def dpsi(rhat, phi):
        rhat = np.asarray(rhat, dtype=float)
        h = 1e-4 * np.maximum(1.0, rhat)
        return (
            psi(rhat - 2 * h, phi) - 8 * psi(rhat - h, phi) + 8 * psi(rhat + h, phi) - psi(rhat + 2 * h, phi)
        ) / (12 * h)

    return dpsi


# ---------------------------------------------------------------------------
# chart at infinity
# ---------------------------------------------------------------------------


def _sphere_angles(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Radius, polar angle and azimuth with ``x = r(sin a sin t, cos a sin t, cos t)``."""
    r = np.linalg.norm(x, axis=-1)
    theta = np.arccos(np.clip(x[..., 2] / np.where(r > 0, r, 1.0), -1.0, 1.0))
    azim = np.arctan2(x[..., 0], x[..., 1])
    return r, theta, azim


def _unit_sphere(theta: np.ndarray, azim: np.ndarray) -> np.ndarray:
    st = np.sin(theta)
    return np.stack([np.sin(azim) * st, np.cos(azim) * st, np.cos(theta)], axis=-1)


@dataclass(frozen=True)
class ChartMap:
    """Chart ``Phi`` from the flat half-space annulus onto the region above a support graph.

    Shells ``|x| = r`` are sent to spheres of radius ``r`` centred at
    ``rho(r) e3``; the polar angle is rescaled by ``zeta(r, phi)`` so that the
    equator lands on the graph.
    """

    psi: GraphFn
    radial: bool
    graph_radius: float
    shells: np.ndarray
    n_average: int = 512
    fd_rel_step: float = 1e-3

    # barycentre shift ----------------------------------------------------------
    def rho(self, r: np.ndarray) -> np.ndarray:
        """Circle average of ``psi`` at horizontal radius ``r``."""
        r = np.asarray(r, dtype=float)
        if self.radial:
            return self.psi(r, np.zeros_like(r))
        phi = 2 * np.pi * np.arange(self.n_average) / self.n_average
        vals = self.psi(r[..., None] + 0.0 * phi, phi + 0.0 * r[..., None])
        return np.mean(vals, axis=-1)

    def rho_prime(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        h = 1e-4 * np.maximum(1.0, r)
        return (self.rho(r - 2 * h) - 8 * self.rho(r - h) + 8 * self.rho(r + h) - self.rho(r + 2 * h)) / (12 * h)

    # polar rescale -------------------------------------------------------------
    def _tilt(self, r: np.ndarray, azim: np.ndarray, rho: np.ndarray) -> np.ndarray:
        """Angle ``beta`` below the equator where the shifted sphere meets the graph.

        Bisection on a symmetric bracket that starts at ``beta = 0`` so exact
        roots (e.g. radial graphs) are returned without round-off.
        """

        def f(beta):
            return rho + r * np.sin(beta) - self.psi(r * np.cos(beta), azim)

        f0 = f(np.zeros_like(r))
        beta = np.zeros_like(r)
        active = f0 != 0.0
        if not np.any(active):
            return beta
        half = np.where(active, np.minimum((np.abs(f0) + 1.0) / r, 1.0), 0.0)
        for _ in range(60):
            lo_ok = f(-half) <= 0
            hi_ok = f(half) >= 0
            bad = active & ~(lo_ok & hi_ok)
            if not np.any(bad):
                break
            half = np.where(bad, np.minimum(2 * half, 0.5 * np.pi), half)
        lo_ok = f(-half) <= 0
        hi_ok = f(half) >= 0
        if np.any(active & ~(lo_ok & hi_ok)) or np.any(r * np.cos(half) < self.graph_radius):
            raise MassError("sphere does not meet the support graph; shells too small")
        lo = -half
        hi = half.copy()
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            fm = f(mid)
            pos = fm > 0
            hi = np.where(active & pos, mid, hi)
            lo = np.where(active & ~pos, mid, lo)
            exact = fm == 0
            lo = np.where(exact, mid, lo)
            hi = np.where(exact, mid, hi)
            if np.all(hi - lo <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(mid))):
                break
        return np.where(active, 0.5 * (lo + hi), 0.0)

    def zeta(self, r: np.ndarray, azim: np.ndarray) -> np.ndarray:
        """Ratio of the contact polar angle to ``pi/2``."""
        r = np.asarray(r, dtype=float)
        azim = np.asarray(azim, dtype=float) + 0.0 * r
        beta = self._tilt(r + 0.0 * azim, azim, self.rho(r + 0.0 * azim))
        return 1.0 - 2.0 * beta / np.pi

    # maps ------------------------------------------------------------------------
    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r, theta, azim = _sphere_angles(x)
        rho = self.rho(r)
        beta = self._tilt(r, azim, rho)
        zeta = 1.0 - 2.0 * beta / np.pi
        shift = _unit_sphere(zeta * theta, azim) - _unit_sphere(theta, azim)
        out = x + r[..., None] * shift
        out[..., 2] += rho
        return out

    def inverse(self, y: np.ndarray, iters: int = 200) -> np.ndarray:
        """Invert ``forward`` by solving ``|y - rho(r) e3| = r`` for ``r``."""
        y = np.asarray(y, dtype=float)
        yn = np.linalg.norm(y, axis=-1)

        def f(r):
            d = y.copy()
            d[..., 2] -= self.rho(r)
            return np.linalg.norm(d, axis=-1) - r

        lo = np.maximum(0.5 * yn, self.graph_radius * 1.0000001)
        hi = 2.0 * yn + 1.0
        for _ in range(60):
            grow = f(hi) > 0
            if not np.any(grow):
                break
            hi = np.where(grow, 2 * hi, hi)
        for _ in range(60):
            shrink = f(lo) < 0
            if not np.any(shrink):
                break
            lo = np.where(shrink, 0.5 * (lo + self.graph_radius * 1.0000001), lo)
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            pos = f(mid) > 0
            lo = np.where(pos, mid, lo)
            hi = np.where(pos, hi, mid)
            if np.all(hi - lo <= 4 * np.finfo(float).eps * mid):
                break
        r = 0.5 * (lo + hi)
        d = y.copy()
        d[..., 2] -= self.rho(r)
        _, polar, azim = _sphere_angles(d)
        beta = self._tilt(r, azim, self.rho(r))
        zeta = 1.0 - 2.0 * beta / np.pi
        return r[..., None] * _unit_sphere(polar / zeta, azim)

    # pullback metric ---------------------------------------------------------------
    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """``J[..., k, i] = d_i Phi_k`` by 4th-order central differences."""
        d = _fd_gradient(self.forward, x, self.fd_rel_step)
        return np.swapaxes(d, -1, -2)

    def g(self, x: np.ndarray) -> np.ndarray:
        jac = self.jacobian(x)
        return np.einsum("...ki,...kj->...ij", jac, jac)

    def dg(self, x: np.ndarray) -> np.ndarray:
        return _fd_gradient(self.g, x, self.fd_rel_step)

    def pullback_metric(self) -> AmbientMetric:
        return general_metric(self.g, label="support-chart pullback", fd_rel_step=self.fd_rel_step)


def support_chart(
    support: SupportGeometry | None = None,
    shells: Sequence[float] = (50.0, 100.0, 200.0, 400.0),
    psi: GraphFn | None = None,
    graph_radius: float = 0.0,
    n_check: int = 64,
) -> ChartMap:
    """Chart at infinity for the region above a support graph.

    Validates that every sampled shell meets the graph; raises
    :class:`MassError` when it does not (shells too small).
    """
    if support is not None:
        psi, _, graph_radius = _graph_from_support(support)
        radial = True
    elif psi is None:
        raise MassError("support_chart needs a support or a graph function")
    else:
        radial = False
    s = np.asarray(shells, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise MassError("shells must be a non-empty 1D sequence")
    if np.any(s <= graph_radius):
        raise MassError(f"shell radius {s.min()} inside the graph's inner radius {graph_radius}")
    chart = ChartMap(psi=psi, radial=radial, graph_radius=float(graph_radius), shells=s)
    azim = 2 * np.pi * np.arange(n_check) / n_check
    rr, aa = np.meshgrid(s, azim, indexing="ij")
    chart.zeta(rr, aa)
    return chart
