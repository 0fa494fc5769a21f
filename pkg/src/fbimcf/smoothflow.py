"""Parametric smooth free-boundary inverse mean curvature flow of meridian curves.

A rotationally symmetric disc is represented by its meridian polyline, with
the first vertex on the support curve and the last one on the axis.  Vertices
move with normal speed ``1/H`` (optionally ``1/sqrt(eps^2 + H^(2/gamma))``)
by explicit Heun steps; the outer step ``dt`` is split into substeps that
respect the parabolic stability limit, and vertices are redistributed
uniformly in arclength after every outer step.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from . import kernels
from ._kernels_py import SUPPORT_CATENOID, SUPPORT_PLANE, support_project
from .geometry import SupportGeometry, catenoid_support, flat_support


class SmoothFlowError(ValueError):
    """Invalid curve, CFL violation or non-mean-convex data."""


def _support_code(support: SupportGeometry) -> tuple[int, float, float]:
    if support.kind == "plane":
        return SUPPORT_PLANE, 1.0, float(support.offset)
    if support.kind == "catenoid":
        return SUPPORT_CATENOID, float(support.mass), float(support.offset)
    raise SmoothFlowError(f"unsupported support kind {support.kind!r}")


@dataclass
class ParamCurve:
    """Meridian polyline ``(rho_k, z_k)`` from the support (k=0) to the axis."""

    rho: np.ndarray
    z: np.ndarray
    support: SupportGeometry
    t: float = 0.0

    def __post_init__(self) -> None:
        self.rho = np.asarray(self.rho, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if self.rho.shape != self.z.shape or self.rho.ndim != 1 or self.rho.size < 5:
            raise SmoothFlowError("curve needs matching 1D arrays with at least 5 vertices")

    @property
    def n_vertices(self) -> int:
        return int(self.rho.size)

    def copy(self) -> "ParamCurve":
        return ParamCurve(self.rho.copy(), self.z.copy(), self.support, self.t)

    def spacing(self) -> np.ndarray:
        return np.hypot(np.diff(self.rho), np.diff(self.z))

    def curvatures(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(kappa_mer, kappa_rot, H)`` with reflected ghost vertices at both ends."""
        kind, m, off = _support_code(self.support)
        rho, z = self.rho, self.z
        _, _, n0r, n0z = support_project(kind, m, off, rho[0], z[0])
        proj = (rho[1] - rho[0]) * n0r + (z[1] - z[0]) * n0z
        er = np.concatenate([[rho[1] - 2 * proj * n0r], rho, [-rho[-2]]])
        ez = np.concatenate([[z[1] - 2 * proj * n0z], z, [z[-2]]])
        _, _, n_rho, _, kappa, _ = kernels.curve_geometry(er, ez)
        n_rho, kappa = n_rho[1:-1], kappa[1:-1]
        k_rot = np.empty_like(kappa)
        k_rot[:-1] = n_rho[:-1] / rho[:-1]
        k_rot[-1] = kappa[-1]
        return kappa, k_rot, kappa + k_rot

    @property
    def H(self) -> np.ndarray:
        return self.curvatures()[2]

    def area(self) -> float:
        ds = self.spacing()
        return 2.0 * math.pi * float(np.sum(0.5 * (self.rho[1:] + self.rho[:-1]) * ds))

    def contact_cosine(self) -> float:
        """``|cos|`` of the angle between the first segment and the support tangent (0 = orthogonal)."""
        kind, m, off = _support_code(self.support)
        _, _, nr, nz = support_project(kind, m, off, self.rho[0], self.z[0])
        tr, tz = -nz, nr
        d = np.array([self.rho[1] - self.rho[0], self.z[1] - self.z[0]])
        return float(abs(d[0] * tr + d[1] * tz) / np.hypot(*d))

    def max_radius(self, center_z: float = 0.0) -> float:
        return float(np.max(np.hypot(self.rho, self.z - center_z)))

    def redistribute(self) -> "ParamCurve":
        """Uniform arclength resampling (cubic spline through the vertices)."""
        s = np.concatenate([[0.0], np.cumsum(self.spacing())])
        su = np.linspace(0.0, s[-1], self.n_vertices)
        rho = CubicSpline(s, self.rho)(su)
        z = CubicSpline(s, self.z)(su)
        rho[0], z[0], rho[-1], z[-1] = self.rho[0], self.z[0], 0.0, self.z[-1]
        return ParamCurve(rho, z, self.support, self.t)

    def write(self, path: str | Path) -> None:
        lines = [f"# t={self.t!r}", "# rho z"]
        lines += [f"{float(r)!r} {float(z)!r}" for r, z in zip(self.rho, self.z)]
        Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# initial curves
# ---------------------------------------------------------------------------


def hemisphere_curve(radius: float = 1.0, n: int = 200, support: SupportGeometry | None = None) -> ParamCurve:
    sup = flat_support() if support is None else support
    th = np.linspace(0.0, 0.5 * np.pi, n)
    rho = radius * np.cos(th)
    rho[-1] = 0.0
    return ParamCurve(rho, sup.offset + radius * np.sin(th), sup)


def half_ellipse_curve(a: float = 1.0, b: float = 0.5, n: int = 200, support: SupportGeometry | None = None) -> ParamCurve:
    """Half-ellipse meeting a plane orthogonally (semi-axes ``a`` radial, ``b`` vertical)."""
    sup = flat_support() if support is None else support
    th = np.linspace(0.0, 0.5 * np.pi, n)
    rho = a * np.cos(th)
    rho[-1] = 0.0
    return ParamCurve(rho, sup.offset + b * np.sin(th), sup).redistribute()


def orthogonal_cap(support: SupportGeometry, height: float, n: int = 200) -> ParamCurve:
    """Spherical cap centred on the axis meeting a catenoid orthogonally at ``z = offset + height``.

    The cap sphere has its centre at ``z_c = c - m coth(c/m)`` and radius
    ``m cosh^2(c/m) / sinh(c/m)`` (in units of ``m``), so it is strictly convex
    with ``H = 2 / radius``.
    """
    if support.kind != "catenoid":
        raise SmoothFlowError("orthogonal_cap needs a catenoid support")
    if not height > 0:
        raise SmoothFlowError("cap height must be positive")
    m = support.mass
    s = height / m
    p_rho, p_z = m * math.cosh(s), support.offset + height
    zc = p_z - m * math.cosh(s) / math.sinh(s)
    radius = math.hypot(p_rho, p_z - zc)
    a0 = math.atan2(p_z - zc, p_rho)
    ang = np.linspace(a0, 0.5 * np.pi, n)
    rho = radius * np.cos(ang)
    z = zc + radius * np.sin(ang)
    rho[0], z[0], rho[-1] = p_rho, p_z, 0.0
    return ParamCurve(rho, z, support)


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------


PARABOLIC_SAFETY = 0.4


def stable_substep(curve: ParamCurve, h: np.ndarray | None = None) -> float:
    """Largest stable explicit substep ``safety * min(H^2) * min(ds)^2``."""
    h = curve.H if h is None else h
    ds = float(np.min(curve.spacing()))
    return PARABOLIC_SAFETY * float(np.min(h)) ** 2 * ds * ds


def step_imcf(curve: ParamCurve, dt: float, cfl: float = 0.5, eps: float = 0.0, gamma: float = 1.0) -> ParamCurve:
    """Advance by ``dt`` (substepped internally); ``dt = 0`` returns a copy.

    Raises :class:`SmoothFlowError` when ``H <= 0`` on the curve or when
    ``dt > cfl * min(H) * min(ds)``.
    """
    if dt < 0:
        raise SmoothFlowError("dt must be non-negative")
    if dt == 0:
        return curve.copy()
    h = curve.H
    if not np.min(h) > 0:
        raise SmoothFlowError(f"curve is not mean convex at t={curve.t} (min H = {np.min(h):.3e})")
    limit = cfl * float(np.min(h)) * float(np.min(curve.spacing()))
    if dt > limit * (1 + 1e-12):
        raise SmoothFlowError(f"CFL violation: dt={dt:.3e} > {limit:.3e}")
    sub = stable_substep(curve, h)
    n_sub = max(1, int(math.ceil(dt / sub)))
    kind, m, off = _support_code(curve.support)
    rho, z, done, status = kernels.imcf_substeps(curve.rho, curve.z, dt / n_sub, n_sub, kind, m, off, eps, gamma)
    if status != 0:
        raise SmoothFlowError(f"H <= 0 reached during substep {done} after t={curve.t}")
    return ParamCurve(rho, z, curve.support, curve.t + dt).redistribute()


@dataclass
class SingularityReport:
    """Outcome and history of a smooth-flow run."""

    stop_time: float
    reason: str
    times: np.ndarray
    sup_h: np.ndarray
    min_h: np.ndarray
    area: np.ndarray
    final: ParamCurve
    h0: float = float("nan")
    comparison_radius: float = float("nan")
    contact_cosine: float = 0.0
    snapshots: list = field(default_factory=list)

    @property
    def singular(self) -> bool:
        return self.reason in ("H_min floor", "curvature blow-up", "timestep underflow", "H <= 0")

    def sup_h_increase(self) -> float:
        """Largest increase of ``sup H`` between consecutive records (<= 0 when strictly decreasing)."""
        return float(np.max(np.diff(self.sup_h))) if self.sup_h.size > 1 else 0.0

    def reached_comparison(self) -> bool:
        return bool(self.final.max_radius() >= self.comparison_radius)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "sup_H", "min_H", "area"])
            for row in zip(self.times, self.sup_h, self.min_h, self.area):
                w.writerow([repr(float(v)) for v in row])


HMIN_FLOOR = 1e-4
DT_UNDERFLOW = 1e-10


def evolve(
    curve: ParamCurve,
    t_end: float,
    dt: float = 1e-3,
    cfl: float = 0.5,
    eps: float = 0.0,
    gamma: float = 1.0,
    target_area: float | None = None,
    curvature_cap: float = 1e4,
    snapshot_times: Sequence[float] = (),
) -> SingularityReport:
    """Flow until ``t_end`` or a stop criterion.

    Stop reasons: ``"H_min floor"`` (``min H < 1e-4 min H(0)``), ``"curvature
    blow-up"`` (``max |kappa| > curvature_cap * max |kappa(0)|``),
    ``"timestep underflow"`` (admissible step below ``1e-10``), ``"H <= 0"``,
    ``"reached target area"`` and ``"reached end time"``.
    """
    cur = curve.copy()
    km, kr, h = cur.curvatures()
    if not np.min(h) > 0:
        raise SmoothFlowError("initial curve is not strictly mean convex")
    h_floor = HMIN_FLOOR * float(np.min(h))
    k_cap = curvature_cap * float(max(np.max(np.abs(km)), np.max(np.abs(kr))))
    times, sups, mins, areas = [cur.t], [float(np.max(h))], [float(np.min(h))], [cur.area()]
    snaps = []
    pending = sorted(snapshot_times)
    reason = "reached end time"
    while cur.t < t_end - 1e-14:
        step = min(dt, t_end - cur.t, cfl * float(np.min(h)) * float(np.min(cur.spacing())))
        if pending and cur.t + step > pending[0]:
            step = max(pending[0] - cur.t, 0.0)
        if step < DT_UNDERFLOW:
            if pending and pending[0] - cur.t < DT_UNDERFLOW:
                snaps.append(cur.copy())
                pending.pop(0)
                continue
            if t_end - cur.t < DT_UNDERFLOW:
                break
            reason = "timestep underflow"
            break
        try:
            cur = step_imcf(cur, step, cfl, eps, gamma)
        except SmoothFlowError:
            reason = "H <= 0"
            break
        km, kr, h = cur.curvatures()
        times.append(cur.t)
        sups.append(float(np.max(h)))
        mins.append(float(np.min(h)))
        areas.append(cur.area())
        if pending and abs(cur.t - pending[0]) < 1e-12:
            snaps.append(cur.copy())
            pending.pop(0)
        if mins[-1] < h_floor:
            reason = "H_min floor"
            break
        if max(np.max(np.abs(km)), np.max(np.abs(kr))) > k_cap:
            reason = "curvature blow-up"
            break
        if target_area is not None and areas[-1] >= target_area:
            reason = "reached target area"
            break
    return SingularityReport(
        stop_time=cur.t,
        reason=reason,
        times=np.array(times),
        sup_h=np.array(sups),
        min_h=np.array(mins),
        area=np.array(areas),
        final=cur,
        contact_cosine=cur.contact_cosine(),
        snapshots=snaps,
    )


def comparison_radius(support: SupportGeometry, h0: float) -> float:
    """Radius ``2/H0`` of the comparison sphere centred at the origin; checks the acute contact."""
    radius = 2.0 / h0
    if support.kind == "catenoid":
        m, off = support.mass, support.offset
        # contact point: m cosh(s)^2 + (m s + off)^2 = radius^2
        s_lo, s_hi = 0.0, 1.0
        f = lambda s: math.hypot(m * math.cosh(s), m * s + off) - radius
        if f(s_lo) >= 0:
            raise SmoothFlowError("comparison sphere does not reach past the neck")
        while f(s_hi) < 0:
            s_hi *= 2.0
        for _ in range(200):
            mid = 0.5 * (s_lo + s_hi)
            s_lo, s_hi = (mid, s_hi) if f(mid) < 0 else (s_lo, mid)
        s = 0.5 * (s_lo + s_hi)
        p = np.array([m * math.cosh(s), m * s + off])
        tangent = np.array([math.tanh(s), 1.0 / math.cosh(s)])
        # acute: the sphere's outward normal has a positive component along the support's upward tangent
        if not float(p @ tangent) > 0:
            raise SmoothFlowError("comparison sphere does not meet the support at an acute angle")
    return radius


def run_catenoid_singularity(
    mass: float = 1.0,
    offset: float = 0.05,
    h0_factor: float = 1.2,
    n_vertices: int = 200,
    dt: float = 1e-3,
    t_max: float = 50.0,
    cfl: float = 0.5,
) -> SingularityReport:
    """Flow of a slightly raised orthogonal cap over the catenoid neck.

    The comparison sphere is centred at the origin with mean curvature
    ``H0 = h0_factor * sup H(0)``.
    """
    if h0_factor <= 1.0:
        raise SmoothFlowError("initial data must satisfy sup H < H0 (h0_factor > 1)")
    support = catenoid_support(mass)
    curve = orthogonal_cap(support, offset * mass, n_vertices)
    h0 = h0_factor * float(np.max(curve.H))
    radius = comparison_radius(support, h0)
    if curve.max_radius() >= radius:
        raise SmoothFlowError("initial cap is not inside the comparison sphere")
    rep = evolve(curve, t_max, dt, cfl, target_area=2.0 * math.pi * radius * radius)
    rep.h0 = h0
    rep.comparison_radius = radius
    return rep


def run_flat_control(
    t_end: float,
    a: float = 1.0,
    b: float = 0.5,
    n_vertices: int = 200,
    dt: float = 1e-3,
    cfl: float = 0.5,
) -> SingularityReport:
    """Half-ellipse on a flat plane flowed to ``t_end`` (no boundary-driven decay)."""
    curve = half_ellipse_curve(a, b, n_vertices)
    return evolve(curve, t_end, dt, cfl)
