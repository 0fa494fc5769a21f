"""Ambient half-space metrics and support-surface geometry.

Points of the half-space are arrays whose last axis has length 3
(``x = (x1, x2, x3)`` with ``x3 >= 0``).  Every evaluator is vectorised
over the leading axes.  Axisymmetric quantities use meridian coordinates
``(rho, z)`` with ``rho = sqrt(x1**2 + x2**2)`` and ``z = x3``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

ArrayFn = Callable[[np.ndarray], np.ndarray]

# 4th-order central first-derivative stencil
_D1_OFFSETS = (-2.0, -1.0, 1.0, 2.0)
_D1_WEIGHTS = (1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0)


class GeometryError(ValueError):
    """Invalid geometric input (bad parameters, point off a curve)."""


def _fd_step(x: np.ndarray, rel: float) -> np.ndarray:
    return rel * np.maximum(1.0, np.linalg.norm(x, axis=-1))


def _fd_gradient(fn: ArrayFn, x: np.ndarray, rel: float = 1e-4) -> np.ndarray:
    """4th-order central gradient of ``fn`` (any trailing output shape).

    Output has the derivative index inserted right after the batch axes.
    """
    x = np.asarray(x, dtype=float)
    h = _fd_step(x, rel)
    parts = []
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        acc = 0.0
        for off, wgt in zip(_D1_OFFSETS, _D1_WEIGHTS):
            acc = acc + wgt * fn(x + (off * h)[..., None] * e)
        hk = h.reshape(h.shape + (1,) * (np.ndim(acc) - h.ndim))
        parts.append(acc / hk)
    return np.stack(parts, axis=x.ndim - 1)


@dataclass(frozen=True)
class AmbientMetric:
    """A Riemannian metric on the closed upper half-space.

    ``kind`` is one of ``"euclidean"``, ``"schwarzschild"``, ``"conformal"``
    or ``"general"``.  Conformal kinds store ``phi`` with ``g = phi**4 g_e``;
    the general kind stores a callable returning ``g_ij`` with shape
    ``(..., 3, 3)``.  General metrics used by the axisymmetric solver must be
    invariant under rotations about the x3 axis.
    """

    kind: str
    mass: float = 0.0
    phi: ArrayFn | None = None
    phi_grad: ArrayFn | None = None
    phi_lap: ArrayFn | None = None
    components: ArrayFn | None = None
    fd_rel_step: float = 1e-4
    label: str = field(default="", compare=False)

    @property
    def is_conformal(self) -> bool:
        return self.kind in ("euclidean", "schwarzschild", "conformal")

    # conformal factor ------------------------------------------------------
    def conformal_factor(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "euclidean":
            return np.ones(x.shape[:-1])
        if self.phi is None:
            raise GeometryError(f"metric kind {self.kind!r} has no conformal factor")
        return self.phi(x)

    def conformal_gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "euclidean":
            return np.zeros(x.shape)
        if self.phi_grad is not None:
            return self.phi_grad(x)
        return _fd_gradient(self.conformal_factor, x, self.fd_rel_step)

    def conformal_laplacian(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "euclidean":
            return np.zeros(x.shape[:-1])
        if self.phi_lap is not None:
            return self.phi_lap(x)
        h = _fd_step(x, 1e-3)
        lap = 0.0
        for k in range(3):
            e = np.zeros(3)
            e[k] = 1.0
            # 4th-order second-derivative stencil
            acc = (
                -self.phi(x + (2 * h)[..., None] * e)
                + 16 * self.phi(x + h[..., None] * e)
                - 30 * self.phi(x)
                + 16 * self.phi(x - h[..., None] * e)
                - self.phi(x - (2 * h)[..., None] * e)
            )
            lap = lap + acc / (12 * h * h)
        return lap

    # metric tensor -----------------------------------------------------------
    def g(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "general":
            return np.asarray(self.components(x), dtype=float)
        p4 = self.conformal_factor(x) ** 4
        return p4[..., None, None] * np.eye(3)

    def dg(self, x: np.ndarray) -> np.ndarray:
        """First derivatives, ``dg[..., k, i, j] = d_k g_ij``."""
        x = np.asarray(x, dtype=float)
        if self.is_conformal:
            phi = self.conformal_factor(x)
            grad = self.conformal_gradient(x)
            d = 4.0 * phi[..., None] ** 3 * grad
            return d[..., :, None, None] * np.eye(3)
        return _fd_gradient(self.g, x, self.fd_rel_step)

    def ginv(self, x: np.ndarray) -> np.ndarray:
        return np.linalg.inv(self.g(x))

    def sqrt_det(self, x: np.ndarray) -> np.ndarray:
        return np.sqrt(np.linalg.det(self.g(x)))

    # curvature -----------------------------------------------------------------
    def scalar_curvature(self, x: np.ndarray) -> np.ndarray:
        """Sc; conformal metrics use ``-8 phi^-5 lap(phi)``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "euclidean":
            return np.zeros(x.shape[:-1])
        if self.kind == "schwarzschild":
            return np.zeros(x.shape[:-1])
        if self.kind == "conformal":
            return -8.0 * self.conformal_laplacian(x) / self.conformal_factor(x) ** 5
        return self.scalar_curvature_fd(x)

    def scalar_curvature_fd(self, x: np.ndarray, h: float | None = None) -> np.ndarray:
        """Sc from second-order finite differences of ``g_ij`` and Christoffels.

        This path ignores any conformal structure and serves as an oracle for
        the fast path.  ``h`` is an absolute step (default ``1e-3 max(1,|x|)``).
        """
        x = np.asarray(x, dtype=float)
        step = _fd_step(x, 1e-3) if h is None else np.full(x.shape[:-1], float(h))
        g0 = self.g(x)
        eye = np.eye(3)

        def shifted(a: int, sa: float, b: int | None = None, sb: float = 0.0):
            y = x + (sa * step)[..., None] * eye[a]
            if b is not None:
                y = y + (sb * step)[..., None] * eye[b]
            return self.g(y)

        hh = step[..., None, None]
        d1 = np.empty(x.shape[:-1] + (3, 3, 3))
        d2 = np.empty(x.shape[:-1] + (3, 3, 3, 3))
        plus = [shifted(a, 1.0) for a in range(3)]
        minus = [shifted(a, -1.0) for a in range(3)]
        for a in range(3):
            d1[..., a, :, :] = (plus[a] - minus[a]) / (2 * hh)
            d2[..., a, a, :, :] = (plus[a] - 2 * g0 + minus[a]) / hh**2
            for b in range(a + 1, 3):
                mixed = (
                    shifted(a, 1, b, 1)
                    - shifted(a, 1, b, -1)
                    - shifted(a, -1, b, 1)
                    + shifted(a, -1, b, -1)
                ) / (4 * hh**2)
                d2[..., a, b, :, :] = mixed
                d2[..., b, a, :, :] = mixed
        return scalar_curvature_from_derivatives(g0, d1, d2)

    # axisymmetric reduction -------------------------------------------------------
    def meridian_point(self, rho: np.ndarray, z: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        z = np.asarray(z, dtype=float)
        return np.stack([rho, np.zeros_like(rho + z), z + np.zeros_like(rho)], axis=-1)

    def reduced(self, rho: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, ...]:
        """Meridian metric ``(a, b, c)`` and rotational factor ``d``.

        ``g = a drho^2 + 2b drho dz + c dz^2 + d rho^2 dtheta^2`` on the
        meridian half-plane.
        """
        x = self.meridian_point(rho, z)
        if self.is_conformal:
            p4 = self.conformal_factor(x) ** 4
            return p4, np.zeros_like(p4), p4, p4
        gm = self.g(x)
        return gm[..., 0, 0], gm[..., 0, 2], gm[..., 2, 2], gm[..., 1, 1]


def scalar_curvature_from_derivatives(g: np.ndarray, d1: np.ndarray, d2: np.ndarray) -> np.ndarray:
    """Scalar curvature from ``g_ij``, ``d_k g_ij`` and ``d_k d_l g_ij``."""
    gi = np.linalg.inv(g)
    # Christoffel of the first kind: G[k,i,j] = 1/2 (d_i g_jk + d_j g_ik - d_k g_ij)
    first = 0.5 * (
        np.einsum("...ijk->...kij", d1)
        + np.einsum("...jik->...kij", d1)
        - d1
    )
    gam = np.einsum("...kl,...lij->...kij", gi, first)
    # derivative of Christoffels: d_m Gamma^k_ij
    dgi = -np.einsum("...ka,...mab,...bl->...mkl", gi, d1, gi)
    dfirst = 0.5 * (
        np.einsum("...mijk->...mkij", d2)
        + np.einsum("...mjik->...mkij", d2)
        - d2
    )
    dgam = np.einsum("...mkl,...lij->...mkij", dgi, first) + np.einsum(
        "...kl,...mlij->...mkij", gi, dfirst
    )
    ric = (
        np.einsum("...kkij->...ij", dgam)
        - np.einsum("...jkik->...ij", dgam)
        + np.einsum("...kkl,...lij->...ij", gam, gam)
        - np.einsum("...kjl,...lik->...ij", gam, gam)
    )
    return np.einsum("...ij,...ij->...", gi, ric)


def euclidean_halfspace() -> AmbientMetric:
    return AmbientMetric(kind="euclidean", label="euclidean")


def schwarzschild_halfspace(m: float) -> AmbientMetric:
    """Schwarzschild half-space ``(phi**4) g_e`` with ``phi = 1 + m/|x|``.

    The coordinate hemisphere ``|x| = m`` is the free boundary minimal disc.
    """
    m = float(m)
    if not m > 0:
        raise GeometryError(f"Schwarzschild mass must be positive, got {m}")

    def phi(x: np.ndarray) -> np.ndarray:
        return 1.0 + m / np.linalg.norm(x, axis=-1)

    def phi_grad(x: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(x, axis=-1)
        return -m * x / (r**3)[..., None]

    def phi_lap(x: np.ndarray) -> np.ndarray:
        return np.zeros(np.shape(x)[:-1])

    return AmbientMetric(
        kind="schwarzschild",
        mass=m,
        phi=phi,
        phi_grad=phi_grad,
        phi_lap=phi_lap,
        label=f"schwarzschild(m={m:g})",
    )


def conformal_metric(
    phi: ArrayFn,
    phi_grad: ArrayFn | None = None,
    phi_lap: ArrayFn | None = None,
    label: str = "conformal",
) -> AmbientMetric:
    """``g = phi**4 g_e``; missing derivatives fall back to finite differences."""
    return AmbientMetric(kind="conformal", phi=phi, phi_grad=phi_grad, phi_lap=phi_lap, label=label)


def general_metric(components: ArrayFn, label: str = "general", fd_rel_step: float = 1e-4) -> AmbientMetric:
    return AmbientMetric(kind="general", components=components, label=label, fd_rel_step=fd_rel_step)


def area_radius(metric: AmbientMetric, r: np.ndarray) -> np.ndarray:
    """Area radius ``sqrt(|S_r|/2pi)`` of the coordinate hemisphere of radius ``r``.

    Only defined for radially symmetric conformal factors.
    """
    r = np.asarray(r, dtype=float)
    x = np.stack([r, np.zeros_like(r), np.zeros_like(r)], axis=-1)
    return r * metric.conformal_factor(x) ** 2


# ---------------------------------------------------------------------------
# support surfaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SupportGeometry:
    """Rotationally symmetric support surface given by its meridian curve.

    ``kind`` is ``"plane"`` (``z = offset``) or ``"catenoid"``
    (``z = m arcosh(rho/m) + offset`` for ``rho >= m``).  The enclosed
    half-space M lies above the curve; ``mu`` points out of M.

    The meridian is parametrised by ``sigma >= 0``: the plane by
    ``(sigma, offset)``, the catenoid by ``(m cosh sigma, m sigma + offset)``.
    """

    kind: str = "plane"
    mass: float = 0.0
    offset: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("plane", "catenoid"):
            raise GeometryError(f"unknown support kind {self.kind!r}")
        if self.kind == "catenoid" and not self.mass > 0:
            raise GeometryError(f"catenoid parameter must be positive, got {self.mass}")

    @property
    def graph_radius(self) -> float:
        """Smallest horizontal radius over which the support is a graph."""
        return self.mass if self.kind == "catenoid" else 0.0

    # graph description --------------------------------------------------------
    def psi(self, rhat: np.ndarray) -> np.ndarray:
        rhat = np.asarray(rhat, dtype=float)
        if self.kind == "plane":
            return np.zeros_like(rhat) + self.offset
        m = self.mass
        return m * np.arccosh(np.maximum(rhat / m, 1.0)) + self.offset

    def dpsi(self, rhat: np.ndarray) -> np.ndarray:
        rhat = np.asarray(rhat, dtype=float)
        if self.kind == "plane":
            return np.zeros_like(rhat)
        return self.mass / np.sqrt(rhat**2 - self.mass**2)

    def d2psi(self, rhat: np.ndarray) -> np.ndarray:
        rhat = np.asarray(rhat, dtype=float)
        if self.kind == "plane":
            return np.zeros_like(rhat)
        return -self.mass * rhat / (rhat**2 - self.mass**2) ** 1.5

    def graph_decay_constant(self, radii: np.ndarray) -> float:
        """``max r|psi'| + r^2|psi''|`` over the given radii."""
        r = np.asarray(radii, dtype=float)
        return float(np.max(r * np.abs(self.dpsi(r)) + r**2 * np.abs(self.d2psi(r))))

    # meridian curve ---------------------------------------------------------------
    def point(self, sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = np.asarray(sigma, dtype=float)
        if self.kind == "plane":
            return s.copy(), np.zeros_like(s) + self.offset
        m = self.mass
        return m * np.cosh(s), m * s + self.offset

    def tangent(self, sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Unit meridian tangent pointing away from the neck."""
        s = np.asarray(sigma, dtype=float)
        if self.kind == "plane":
            return np.ones_like(s), np.zeros_like(s)
        c = np.cosh(s)
        return np.tanh(s), 1.0 / c

    def normal(self, sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Unit normal ``mu`` pointing out of M."""
        t_rho, t_z = self.tangent(sigma)
        return t_z, -t_rho

    def speed(self, sigma: np.ndarray) -> np.ndarray:
        """Euclidean arclength per unit ``sigma``."""
        s = np.asarray(sigma, dtype=float)
        if self.kind == "plane":
            return np.ones_like(s)
        return self.mass * np.cosh(s)

    def euclidean_curvatures(self, sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Euclidean principal curvatures ``(meridian, rotational)`` w.r.t. ``mu``.

        Convention: ``A(X, Y) = <D_X mu, Y>``.
        """
        s = np.asarray(sigma, dtype=float)
        if self.kind == "plane":
            return np.zeros_like(s), np.zeros_like(s)
        k = 1.0 / (self.mass * np.cosh(s) ** 2)
        return -k, k

    def sigma_from_rho(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        if self.kind == "plane":
            return rho.copy()
        return np.arccosh(np.maximum(rho / self.mass, 1.0))

    def sigma_from_distance(self, dist: float, center_z: float = 0.0) -> float:
        """Parameter of the point at distance ``dist`` from ``(0, center_z)``."""

        def f(s: float) -> float:
            r, z = self.point(s)
            return float(np.hypot(r, z - center_z) - dist)

        if f(0.0) > 0:
            raise GeometryError(f"distance {dist} is smaller than the support's inner point")
        hi = 1.0
        while f(hi) < 0:
            hi *= 2.0
            if hi > 1e8:
                raise GeometryError("support curve does not reach the requested distance")
        return brentq(f, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)

    def project(self, rho: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Parameter of the closest meridian point (Newton on the distance)."""
        rho = np.asarray(rho, dtype=float)
        z = np.asarray(z, dtype=float)
        if self.kind == "plane":
            return np.maximum(rho, 0.0)
        m = self.mass
        s = np.maximum((z - self.offset) / m, 0.0)
        for _ in range(50):
            pr, pz = m * np.cosh(s), m * s + self.offset
            tr, tz = m * np.sinh(s), m * np.ones_like(s)
            ar, az = m * np.cosh(s), np.zeros_like(s)
            f = (pr - rho) * tr + (pz - z) * tz
            df = tr * tr + tz * tz + (pr - rho) * ar + (pz - z) * az
            step = f / df
            s = np.maximum(s - step, 0.0)
            if np.all(np.abs(step) < 1e-15 * np.maximum(1.0, s)):
                break
        return s

    def distance(self, rho: np.ndarray, z: np.ndarray) -> np.ndarray:
        s = self.project(rho, z)
        pr, pz = self.point(s)
        return np.hypot(np.asarray(rho) - pr, np.asarray(z) - pz)

    def label(self) -> str:
        if self.kind == "plane":
            return "plane"
        return f"catenoid(m={self.mass:g})"


def flat_support(offset: float = 0.0) -> SupportGeometry:
    return SupportGeometry(kind="plane", offset=offset)


def catenoid_support(m: float, offset: float = 0.0) -> SupportGeometry:
    """Upper half of the catenoid ``z = m arcosh(rho/m)``; neck circle at ``rho = m``."""
    if not float(m) > 0:
        raise GeometryError(f"catenoid parameter must be positive, got {m}")
    return SupportGeometry(kind="catenoid", mass=float(m), offset=offset)


# ---------------------------------------------------------------------------
# curvature of meridian curves in a metric
# ---------------------------------------------------------------------------


def meridian_principal_curvatures(
    metric: AmbientMetric,
    rho: np.ndarray,
    z: np.ndarray,
    tangent: tuple[np.ndarray, np.ndarray],
    normal: tuple[np.ndarray, np.ndarray],
    kappa_e: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Principal curvatures in ``g`` of a surface of revolution.

    The surface is generated by a meridian curve with Euclidean unit tangent
    ``tangent``, unit normal ``normal`` and Euclidean curvature ``kappa_e``
    (``dT/ds = -kappa_e N``).  Returns ``(kappa_meridian, kappa_rotational)``
    with respect to the ``g``-unit normal on the same side as ``normal``.
    The rotational value at ``rho = 0`` is not defined and returned as nan.
    """
    rho = np.asarray(rho, dtype=float)
    z = np.asarray(z, dtype=float)
    tr, tz = (np.asarray(c, dtype=float) for c in tangent)
    nr, nz = (np.asarray(c, dtype=float) for c in normal)
    kappa_e = np.asarray(kappa_e, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        rot_e = np.where(rho > 0, nr / rho, np.nan)
    if metric.is_conformal:
        x = metric.meridian_point(rho, z)
        phi = metric.conformal_factor(x)
        grad = metric.conformal_gradient(x)
        dn_phi = grad[..., 0] * nr + grad[..., 2] * nz
        shift = 2.0 * dn_phi / phi
        scale = phi**-2
        return scale * (kappa_e + shift), scale * (rot_e + shift)

    x = metric.meridian_point(rho, z)
    gm = metric.g(x)
    dgm = metric.dg(x)
    idx = (0, 2)
    h = gm[..., [0, 2], :][..., :, [0, 2]]
    dh = np.stack([dgm[..., k, :, :][..., [0, 2], :][..., :, [0, 2]] for k in idx], axis=-3)
    hinv = np.linalg.inv(h)
    ncov = np.stack([nr, nz], axis=-1)
    nvec = np.einsum("...ab,...b->...a", hinv, ncov)
    nvec = nvec / np.sqrt(np.einsum("...a,...a->...", nvec, ncov))[..., None]
    tvec = np.stack([tr, tz], axis=-1)
    tnorm2 = np.einsum("...a,...ab,...b->...", tvec, h, tvec)
    # h(Gamma(T,T), n) = (d_a h_db - 1/2 d_d h_ab) T^a T^b n^d
    term = np.einsum("...adb,...a,...b,...d->...", dh, tvec, tvec, nvec) - 0.5 * np.einsum(
        "...dab,...a,...b,...d->...", dh, tvec, tvec, nvec
    )
    hn = np.einsum("...a,...ab,...b->...", np.stack([nr, nz], -1), h, nvec)
    kappa_mer = (kappa_e * hn - term) / tnorm2
    g22 = gm[..., 1, 1]
    dlog22 = np.stack([dgm[..., 0, 1, 1], dgm[..., 2, 1, 1]], axis=-1) / (2 * g22[..., None])
    with np.errstate(divide="ignore", invalid="ignore"):
        dlogw = dlog22 + np.stack([np.where(rho > 0, 1.0 / rho, np.nan), np.zeros_like(rho)], -1)
    kappa_rot = np.einsum("...a,...a->...", nvec, dlogw)
    return kappa_mer, kappa_rot


@dataclass(frozen=True)
class BoundaryShape:
    """Second fundamental form of the support at a point, in ``g``."""

    kappa_meridian: float
    kappa_rotational: float

    @property
    def mean_curvature(self) -> float:
        return self.kappa_meridian + self.kappa_rotational

    def along_meridian(self) -> float:
        """``A(nu, nu)`` for a unit vector tangent to the meridian."""
        return self.kappa_meridian


def boundary_shape(
    metric: AmbientMetric, support: SupportGeometry, x: np.ndarray, tol: float = 1e-8
) -> BoundaryShape:
    """``A`` and ``H`` of the support in ``g`` at a boundary point.

    ``x`` is a meridian point ``(rho, z)`` or a 3D point.
    """
    x = np.asarray(x, dtype=float)
    if x.shape == (3,):
        rho, z = float(np.hypot(x[0], x[1])), float(x[2])
    elif x.shape == (2,):
        rho, z = float(x[0]), float(x[1])
    else:
        raise GeometryError("boundary point must have 2 or 3 components")
    s = float(support.project(rho, z))
    if support.distance(rho, z) > tol * max(1.0, np.hypot(rho, z)):
        raise GeometryError(f"point ({rho}, {z}) is not on the support {support.label()}")
    pr, pz = support.point(s)
    tangent = support.tangent(s)
    normal = support.normal(s)
    k_mer, _ = support.euclidean_curvatures(s)
    if rho == 0.0:
        raise GeometryError("support point on the symmetry axis")
    km, kr = meridian_principal_curvatures(metric, pr, pz, tangent, normal, k_mer)
    return BoundaryShape(float(km), float(kr))
