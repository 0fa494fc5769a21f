"""Boundary-fitted meridian grids for the regularized flow domain.

Logical coordinates: ``i`` runs from the initial surface (``i = 0``) to the
outer arc, ``j`` from the support curve (``j = 0``) to the symmetry axis.
``n_i`` and ``n_j`` count cells; node arrays have shape ``(n_i + 1, n_j + 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .geometry import SupportGeometry


class MeshError(ValueError):
    """Invalid domain or folded grid."""


class Tag(IntEnum):
    INTERIOR = 0
    INNER_DIRICHLET = 1
    OUTER_DIRICHLET = 2
    SUPPORT_NEUMANN = 3
    AXIS = 4


# ---------------------------------------------------------------------------
# initial surface meridians
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InitialCurve:
    """Meridian of the initial surface, parametrised by ``eta`` in ``[0, 1]``
    from its support endpoint to its axis endpoint.

    ``kind`` is ``"arc"`` (circle centred on the axis at ``center_z``),
    ``"disc"`` (horizontal segment at ``height``) or ``"polyline"``.
    """

    kind: str
    radius: float = 1.0
    center_z: float = 0.0
    height: float = 0.0
    start_angle: float = 0.0
    points: tuple = ()

    def point(self, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        eta = np.asarray(eta, dtype=float)
        if self.kind == "arc":
            a = self.start_angle + eta * (0.5 * np.pi - self.start_angle)
            rho = self.radius * np.cos(a)
            rho = np.where(eta == 1.0, 0.0, rho)
            return rho, self.center_z + self.radius * np.sin(a)
        if self.kind == "disc":
            return self.radius * (1.0 - eta), np.full_like(eta, self.height)
        pts = np.asarray(self.points, dtype=float)
        seg = np.hypot(*np.diff(pts, axis=0).T)
        s = np.concatenate([[0.0], np.cumsum(seg)]) / seg.sum()
        return np.interp(eta, s, pts[:, 0]), np.interp(eta, s, pts[:, 1])

    def sample(self, n: int = 257) -> np.ndarray:
        rho, z = self.point(np.linspace(0.0, 1.0, n))
        return np.stack([rho, z], axis=-1)

    @property
    def extent(self) -> float:
        """Largest distance of the curve from the origin."""
        return float(np.max(np.hypot(*self.sample().T)))


def hemisphere(radius: float = 1.0, center_z: float = 0.0) -> InitialCurve:
    """Meridian of the coordinate hemisphere ``|x - center_z e3| = radius`` above ``z = 0``."""
    if not radius > 0:
        raise MeshError("hemisphere radius must be positive")
    start = float(np.arcsin(np.clip(-center_z / radius, -1.0, 1.0)))
    return InitialCurve(kind="arc", radius=float(radius), center_z=float(center_z), start_angle=start)


def flat_disc(radius: float, height: float = 0.0) -> InitialCurve:
    if not radius > 0:
        raise MeshError("disc radius must be positive")
    return InitialCurve(kind="disc", radius=float(radius), height=float(height))


def neck_disc(support: SupportGeometry, height: float | None = None) -> InitialCurve:
    """Horizontal disc spanning the support at ``height`` (default: the neck)."""
    h = support.offset if height is None else float(height)
    if support.kind == "catenoid":
        if h < support.offset:
            raise MeshError("disc below the catenoid neck")
        rad = support.mass * np.cosh((h - support.offset) / support.mass)
        return flat_disc(rad, h)
    raise MeshError("a spanning disc needs a support with a neck")


def polyline_curve(points) -> InitialCurve:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise MeshError("polyline needs at least two (rho, z) points")
    return InitialCurve(kind="polyline", points=tuple(map(tuple, pts)))


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeridianDomain:
    """Quadrilateral meridian domain bounded by four tagged curves.

    The outer arc is the circle ``|x - x0| = r_out`` with ``x0 = -gamma e3``.
    """

    inner: InitialCurve
    support: SupportGeometry
    r_out: float
    gamma: float
    r0: float
    inner_contact: tuple[float, float]
    outer_contact: tuple[float, float]
    inner_axis_z: float
    outer_angle0: float
    contact_cosine: float

    @property
    def center(self) -> tuple[float, float]:
        return 0.0, -self.gamma

    @property
    def d_in(self) -> float:
        return float(np.hypot(self.inner_contact[0], self.inner_contact[1] + self.gamma))

    # edge parametrisations ----------------------------------------------------
    def inner_edge(self, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.inner.point(eta)

    def outer_edge(self, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        eta = np.asarray(eta, dtype=float)
        a = self.outer_angle0 + eta * (0.5 * np.pi - self.outer_angle0)
        rho = np.where(eta == 1.0, 0.0, self.r_out * np.cos(a))
        rho = np.where(eta == 0.0, self.outer_contact[0], rho)
        z = np.where(eta == 0.0, self.outer_contact[1], -self.gamma + self.r_out * np.sin(a))
        return rho, z

    def support_edge(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Support points at distance ``d_in + s (r_out - d_in)`` from ``x0``."""
        s = np.asarray(s, dtype=float)
        d = self.d_in + s * (self.r_out - self.d_in)
        sup = self.support
        if sup.kind == "plane":
            dz = sup.offset + self.gamma
            rho, z = np.sqrt(np.maximum(d * d - dz * dz, 0.0)), np.full_like(d, sup.offset)
        else:
            sig = np.array([sup.sigma_from_distance(float(dk), -self.gamma) for dk in d.ravel()]).reshape(d.shape)
            rho, z = sup.point(sig)
        rho = np.where(s == 0.0, self.inner_contact[0], rho)
        z = np.where(s == 0.0, self.inner_contact[1], z)
        rho = np.where(s == 1.0, self.outer_contact[0], rho)
        z = np.where(s == 1.0, self.outer_contact[1], z)
        return rho, z

    def axis_edge(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = np.asarray(s, dtype=float)
        top = self.r_out - self.gamma
        return np.zeros_like(s), self.inner_axis_z + s * (top - self.inner_axis_z)

    def corners(self) -> dict[str, tuple[float, float]]:
        return {
            "inner_support": self.inner_contact,
            "outer_support": self.outer_contact,
            "inner_axis": (0.0, self.inner_axis_z),
            "outer_axis": (0.0, self.r_out - self.gamma),
        }


def build_domain(
    initial: InitialCurve,
    support: SupportGeometry,
    r_out: float,
    gamma: float = 0.0,
    tol: float = 1e-9,
    tangency_tol: float = 1e-6,
) -> MeridianDomain:
    """Tagged quadrilateral domain between ``initial`` and the outer arc.

    The contact cosine ``mu . (x - x0)/|x - x0|`` at the outer corner must be
    ``<= tol`` (right or acute angle) and away from ``-1`` (tangency).
    """
    r_out = float(r_out)
    gamma = float(gamma)
    pts = initial.sample()
    r0 = float(np.max(np.hypot(pts[:, 0], pts[:, 1] + gamma)))
    if not r_out > r0:
        raise MeshError(f"outer radius {r_out} does not exceed the initial surface extent {r0:.6g}")
    c_rho, c_z = (float(v) for v in initial.point(np.array(0.0)))
    if support.distance(c_rho, c_z) > tol * max(1.0, np.hypot(c_rho, c_z)):
        raise MeshError("initial surface does not reach the support curve")
    a_rho, a_z = (float(v) for v in initial.point(np.array(1.0)))
    if abs(a_rho) > tol * max(1.0, abs(a_z)):
        raise MeshError("initial surface does not reach the symmetry axis")

    if support.kind == "plane":
        dz = support.offset + gamma
        if r_out <= abs(dz):
            raise MeshError("outer arc misses the support plane")
        sig_out = float(np.sqrt(r_out**2 - dz**2))
    else:
        sig_out = support.sigma_from_distance(r_out, -gamma)
    o_rho, o_z = (float(v) for v in support.point(sig_out))
    mu = support.normal(sig_out)
    radial = np.array([o_rho, o_z + gamma]) / r_out
    cosine = float(mu[0] * radial[0] + mu[1] * radial[1])
    if abs(abs(cosine) - 1.0) < tangency_tol:
        raise MeshError("outer arc is tangent to the support")
    if cosine > tol:
        raise MeshError(f"outer arc meets the support at an obtuse angle (cosine {cosine:.3g})")
    angle0 = float(np.arctan2(o_z + gamma, o_rho))
    return MeridianDomain(
        inner=initial,
        support=support,
        r_out=r_out,
        gamma=gamma,
        r0=r0,
        inner_contact=(c_rho, c_z),
        outer_contact=(o_rho, o_z),
        inner_axis_z=a_z,
        outer_angle0=angle0,
        contact_cosine=cosine,
    )


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


def geometric_spacing(n: int, stretch: float) -> np.ndarray:
    """Node parameters in ``[0, 1]`` whose cell widths form a geometric series
    with last/first width ratio ``stretch``.
    """
    if stretch <= 0:
        raise MeshError("stretch factor must be positive")
    if n < 1:
        raise MeshError("need at least one cell")
    if abs(stretch - 1.0) < 1e-14 or n == 1:
        return np.linspace(0.0, 1.0, n + 1)
    q = stretch ** (1.0 / (n - 1))
    k = np.arange(n + 1)
    s = (q**k - 1.0) / (q**n - 1.0)
    s[-1] = 1.0
    return s


@dataclass(frozen=True)
class CurvilinearGrid:
    """Node coordinates ``rho[i, j]``, ``z[i, j]`` with boundary tags."""

    rho: np.ndarray
    z: np.ndarray
    tags: np.ndarray
    s: np.ndarray
    eta: np.ndarray
    domain: MeridianDomain | None = None
    stretch: float = 1.0
    cell_jacobian: np.ndarray = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.rho.shape

    @property
    def n_i(self) -> int:
        return self.rho.shape[0] - 1

    @property
    def n_j(self) -> int:
        return self.rho.shape[1] - 1

    def cell_areas(self) -> np.ndarray:
        """Meridian area of each cell (determinant of the centre Jacobian)."""
        return self.cell_jacobian

    def cell_diameters(self) -> np.ndarray:
        p = np.stack([self.rho, self.z], axis=-1)
        d1 = np.linalg.norm(p[1:, 1:] - p[:-1, :-1], axis=-1)
        d2 = np.linalg.norm(p[1:, :-1] - p[:-1, 1:], axis=-1)
        return np.maximum(d1, d2)

    def radial_spacing(self, j: int = 0) -> np.ndarray:
        return np.hypot(np.diff(self.rho[:, j]), np.diff(self.z[:, j]))

    def mesh_size(self) -> float:
        return float(self.cell_diameters().max())

    def relative_mesh_size(self) -> float:
        """Largest ``diameter / max(|x - c|, d_in)`` over cells (scale-free resolution).

        ``c`` is the domain centre and ``d_in`` the inner radius, so cells near
        the origin of a flat inner disc are measured against the disc size.
        """
        rc = 0.25 * (self.rho[1:, 1:] + self.rho[:-1, :-1] + self.rho[1:, :-1] + self.rho[:-1, 1:])
        zc = 0.25 * (self.z[1:, 1:] + self.z[:-1, :-1] + self.z[1:, :-1] + self.z[:-1, 1:])
        if self.domain is not None:
            c_rho, c_z = self.domain.center
            floor = self.domain.d_in
        else:
            c_rho, c_z, floor = 0.0, 0.0, 1e-300
        dist = np.maximum(np.hypot(rc - c_rho, zc - c_z), floor)
        return float(np.max(self.cell_diameters() / dist))

    def points(self) -> np.ndarray:
        return np.stack([self.rho, self.z], axis=-1)


def _cell_jacobian(rho: np.ndarray, z: np.ndarray) -> np.ndarray:
    dr_i = 0.5 * (rho[1:, 1:] - rho[:-1, 1:] + rho[1:, :-1] - rho[:-1, :-1])
    dz_i = 0.5 * (z[1:, 1:] - z[:-1, 1:] + z[1:, :-1] - z[:-1, :-1])
    dr_j = 0.5 * (rho[1:, 1:] - rho[1:, :-1] + rho[:-1, 1:] - rho[:-1, :-1])
    dz_j = 0.5 * (z[1:, 1:] - z[1:, :-1] + z[:-1, 1:] - z[:-1, :-1])
    return dr_i * dz_j - dz_i * dr_j


def node_tags(n_i: int, n_j: int) -> np.ndarray:
    tags = np.full((n_i + 1, n_j + 1), int(Tag.INTERIOR), dtype=np.int8)
    tags[:, 0] = Tag.SUPPORT_NEUMANN
    tags[:, -1] = Tag.AXIS
    tags[0, :] = Tag.INNER_DIRICHLET
    tags[-1, :] = Tag.OUTER_DIRICHLET
    return tags


def grid_from_nodes(rho: np.ndarray, z: np.ndarray, s=None, eta=None, domain=None, stretch: float = 1.0) -> CurvilinearGrid:
    rho = np.asarray(rho, dtype=float)
    z = np.asarray(z, dtype=float)
    n_i, n_j = rho.shape[0] - 1, rho.shape[1] - 1
    jac = _cell_jacobian(rho, z)
    bad = np.argwhere(~(jac > 0))
    if bad.size:
        i, j = bad[0]
        raise MeshError(f"folded grid: non-positive Jacobian {jac[i, j]:.3e} in cell ({i}, {j})")
    return CurvilinearGrid(
        rho=rho,
        z=z,
        tags=node_tags(n_i, n_j),
        s=np.linspace(0, 1, n_i + 1) if s is None else s,
        eta=np.linspace(0, 1, n_j + 1) if eta is None else eta,
        domain=domain,
        stretch=stretch,
        cell_jacobian=jac,
    )


def transfinite_grid(domain: MeridianDomain, n_i: int, n_j: int, stretch: float = 1.0) -> CurvilinearGrid:
    """Transfinite interpolation of the four domain edges.

    Radial cell widths grow geometrically toward the outer arc with
    largest/smallest ratio ``stretch``.  ``stretch = r_out / r_inner`` makes
    radial cells uniform in ``log |x|`` on a quarter annulus.
    """
    if n_i < 8 or n_j < 8:
        raise MeshError("grid needs at least 8 cells in each direction")
    s = geometric_spacing(n_i, stretch)
    eta = np.linspace(0.0, 1.0, n_j + 1)
    l_rho, l_z = domain.inner_edge(eta)
    r_rho, r_z = domain.outer_edge(eta)
    b_rho, b_z = domain.support_edge(s)
    t_rho, t_z = domain.axis_edge(s)
    S = s[:, None]
    E = eta[None, :]

    def blend(left, right, bottom, top):
        return (
            (1 - S) * left[None, :]
            + S * right[None, :]
            + (1 - E) * bottom[:, None]
            + E * top[:, None]
            - (1 - S) * (1 - E) * bottom[0]
            - (1 - S) * E * top[0]
            - S * (1 - E) * bottom[-1]
            - S * E * top[-1]
        )

    rho = blend(l_rho, r_rho, b_rho, t_rho)
    z = blend(l_z, r_z, b_z, t_z)
    rho[:, -1] = 0.0
    return grid_from_nodes(rho, z, s, eta, domain, stretch)


def dump_grid(grid: CurvilinearGrid, path: str | Path) -> None:
    """Plain-text node table ``i j rho z tag``."""
    tag_names = {int(t): t.name for t in Tag}
    lines = ["# i j rho z tag"]
    for i in range(grid.n_i + 1):
        for j in range(grid.n_j + 1):
            lines.append(f"{i} {j} {grid.rho[i, j]:.17g} {grid.z[i, j]:.17g} {tag_names[int(grid.tags[i, j])]}")
    Path(path).write_text("\n".join(lines) + "\n")
