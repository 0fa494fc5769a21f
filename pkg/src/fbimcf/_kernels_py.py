"""Pure-Python/numpy implementations of the hot kernels.

These are the reference versions; the compiled module ``_kernels`` mirrors
the same signatures and results.
"""

from __future__ import annotations

import numpy as np

# marching squares --------------------------------------------------------------
# Edges are encoded as (kind, i, j): kind 0 joins nodes (i, j)-(i+1, j),
# kind 1 joins nodes (i, j)-(i, j+1).


def march_segments(values: np.ndarray, level: float) -> np.ndarray:
    """Contour segments of ``values == level`` on a logical grid.

    Returns an int64 array of shape ``(n, 2, 3)``; each row holds the two
    crossed edges of one segment.  Nodes with ``value < level`` are inside.
    Saddle cells are resolved with the cell-centre average.
    """
    f = np.asarray(values, dtype=float) - level
    inside = f < 0
    c0 = inside[:-1, :-1]
    c1 = inside[1:, :-1]
    c2 = inside[1:, 1:]
    c3 = inside[:-1, 1:]
    case = c0 * 1 + c1 * 2 + c2 * 4 + c3 * 8
    ci, cj = np.nonzero((case != 0) & (case != 15))
    out = []
    centre = 0.25 * (f[:-1, :-1] + f[1:, :-1] + f[1:, 1:] + f[:-1, 1:]) < 0
    for i, j in zip(ci.tolist(), cj.tolist()):
        k = int(case[i, j])
        e0 = (0, i, j)
        e1 = (1, i + 1, j)
        e2 = (0, i, j + 1)
        e3 = (1, i, j)
        crossed = []
        b = [(k >> n) & 1 for n in range(4)]
        if b[0] != b[1]:
            crossed.append(e0)
        if b[1] != b[2]:
            crossed.append(e1)
        if b[3] != b[2]:
            crossed.append(e2)
        if b[0] != b[3]:
            crossed.append(e3)
        if len(crossed) == 2:
            out.append((crossed[0], crossed[1]))
        else:
            if bool(centre[i, j]) == bool(b[0]):
                out.append((e0, e1))
                out.append((e2, e3))
            else:
                out.append((e0, e3))
                out.append((e1, e2))
    if not out:
        return np.zeros((0, 2, 3), dtype=np.int64)
    return np.asarray(out, dtype=np.int64)


# meridian curve geometry -----------------------------------------------------------


def curve_geometry(rho: np.ndarray, z: np.ndarray):
    """Unit tangent, outward normal and curvatures of an open meridian polyline.

    The polyline runs from its support endpoint (index 0) to the axis.  The
    normal is ``(T_z, -T_rho)``; the meridian curvature uses the circle through
    three consecutive vertices (sign: positive when curving toward the normal's
    opposite side, so a circle with outward normal has curvature ``+1/r``).
    Endpoint values copy their neighbours.  Returns
    ``(t_rho, t_z, n_rho, n_z, kappa_mer, kappa_rot)``.
    """
    rho = np.asarray(rho, dtype=float)
    z = np.asarray(z, dtype=float)
    n = rho.size
    t_rho = np.empty(n)
    t_z = np.empty(n)
    dr = np.diff(rho)
    dz = np.diff(z)
    t_rho[1:-1] = rho[2:] - rho[:-2]
    t_z[1:-1] = z[2:] - z[:-2]
    t_rho[0], t_z[0] = dr[0], dz[0]
    t_rho[-1], t_z[-1] = dr[-1], dz[-1]
    norm = np.hypot(t_rho, t_z)
    t_rho /= norm
    t_z /= norm
    n_rho = t_z.copy()
    n_z = -t_rho
    # signed circumcircle curvature
    ax, ay = rho[:-2], z[:-2]
    bx, by = rho[1:-1], z[1:-1]
    cx, cy = rho[2:], z[2:]
    cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    la = np.hypot(bx - ax, by - ay)
    lb = np.hypot(cx - bx, cy - by)
    lc = np.hypot(cx - ax, cy - ay)
    kappa = np.empty(n)
    kappa[1:-1] = 2.0 * cross / (la * lb * lc)
    kappa[0] = kappa[1]
    kappa[-1] = kappa[-2]
    kappa_rot = np.empty(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        kappa_rot[:-1] = n_rho[:-1] / rho[:-1]
    kappa_rot[-1] = kappa[-1]
    return t_rho, t_z, n_rho, n_z, kappa, kappa_rot


# smooth flow substeps ----------------------------------------------------------------
# Support codes: 0 = plane z = offset, 1 = catenoid (m cosh s, m s + offset).

SUPPORT_PLANE = 0
SUPPORT_CATENOID = 1


def support_project(kind: int, m: float, offset: float, rho: float, z: float):
    """Closest support point to ``(rho, z)`` and the unit support normal there."""
    if kind == SUPPORT_PLANE:
        return rho, offset, 0.0, 1.0
    s = (z - offset) / m
    for _ in range(20):
        ch, sh = np.cosh(s), np.sinh(s)
        pr, pz = m * ch - rho, m * s + offset - z
        f = pr * m * sh + pz * m
        fp = m * m * (sh * sh + 1.0) + pr * m * ch
        ds = f / fp
        s -= ds
        if abs(ds) < 1e-15:
            break
    ch = np.cosh(s)
    return m * ch, m * s + offset, 1.0 / ch, -np.tanh(s)


def _flow_velocity(rho, z, kind, m, offset, eps, gamma):
    n = rho.size
    _, _, n0r, n0z = support_project(kind, m, offset, rho[0], z[0])
    dr, dz = rho[1] - rho[0], z[1] - z[0]
    proj = dr * n0r + dz * n0z
    er = np.empty(n + 2)
    ez = np.empty(n + 2)
    er[1:-1] = rho
    ez[1:-1] = z
    er[0] = rho[1] - 2.0 * proj * n0r
    ez[0] = z[1] - 2.0 * proj * n0z
    er[-1] = -rho[-2]
    ez[-1] = z[-2]
    t_rho, t_z, n_rho, n_z, kappa, _ = curve_geometry(er, ez)
    n_rho, n_z, kappa = n_rho[1:-1], n_z[1:-1], kappa[1:-1]
    k_rot = np.empty(n)
    k_rot[:-1] = n_rho[:-1] / rho[:-1]
    k_rot[-1] = kappa[-1]
    h = kappa + k_rot
    hmin = float(np.min(h))
    if not hmin > 0.0:
        return None, None, h
    speed = h if eps == 0.0 else np.sqrt(eps * eps + h ** (2.0 / gamma))
    return n_rho / speed, n_z / speed, h


def _constrain(rho, z, kind, m, offset):
    pr, pz, _, _ = support_project(kind, m, offset, rho[0], z[0])
    rho[0], z[0] = pr, pz
    rho[-1] = 0.0


def imcf_substeps(rho, z, dt: float, n_sub: int, kind: int, m: float, offset: float,
                  eps: float = 0.0, gamma: float = 1.0):
    """``n_sub`` Heun steps of normal speed ``1/H`` (or ``1/sqrt(eps^2 + H^(2/gamma))``).

    The first vertex is re-projected onto the support and the last one onto
    the axis after every stage.  Returns ``(rho, z, done, status)`` where
    ``status`` is 0 on success and 1 when ``H <= 0`` was met.
    """
    rho = np.array(rho, dtype=float)
    z = np.array(z, dtype=float)
    for k in range(n_sub):
        v1r, v1z, _ = _flow_velocity(rho, z, kind, m, offset, eps, gamma)
        if v1r is None:
            return rho, z, k, 1
        r1 = rho + dt * v1r
        z1 = z + dt * v1z
        _constrain(r1, z1, kind, m, offset)
        v2r, v2z, _ = _flow_velocity(r1, z1, kind, m, offset, eps, gamma)
        if v2r is None:
            return rho, z, k, 1
        rho = rho + 0.5 * dt * (v1r + v2r)
        z = z + 0.5 * dt * (v1z + v2z)
        _constrain(rho, z, kind, m, offset)
    return rho, z, n_sub, 0
