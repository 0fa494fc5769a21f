"""Level curves of the discrete solution and the surface quantities of their
surfaces of revolution (area, Willmore energy, Hawking mass, Geroch integrand).
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .geometry import AmbientMetric, SupportGeometry, boundary_shape, meridian_principal_curvatures
from .solver import ScalarField

FOUR_PI = 4.0 * math.pi
EIGHT_PI = 8.0 * math.pi


class LevelSetError(ValueError):
    """Empty level, missing support contact or degenerate curve."""


@dataclass
class LevelCurve:
    """Ordered meridian polyline of ``{u = t}`` from the support to the axis.

    ``H`` is ``|grad u|_g`` interpolated to the vertices; ``H_geom`` is the
    divergence of the unit normal (the curvature of the level set itself);
    ``kappa_rot`` is the rotational principal curvature in ``g`` and
    ``kappa_mer = H_geom - kappa_rot``.
    """

    t: float
    rho: np.ndarray
    z: np.ndarray
    H: np.ndarray
    H_geom: np.ndarray
    kappa_mer: np.ndarray
    kappa_rot: np.ndarray
    normal: np.ndarray
    on_support: bool
    on_axis: bool
    h_local: np.ndarray
    side: str = "lower"
    extra_components: list = field(default_factory=list)
    jump_candidate: bool = False
    jump_gap: float = 0.0

    @property
    def n_vertices(self) -> int:
        return int(self.rho.size)

    def components(self) -> list[str]:
        main = "disc" if self.on_support and self.on_axis else ("annulus" if self.on_support else "sphere")
        return [main] + [c["kind"] for c in self.extra_components]


@dataclass
class SurfaceDiagnostics:
    t: float
    area: float
    boundary_length: float
    willmore: float
    hawking_mass: float
    euler_char: int
    eccentricity: float
    geroch_integrand: float = float("nan")
    willmore_euclidean: float = float("nan")
    jump_candidate: bool = False
    error: str | None = None

    def recompute_hawking_mass(self) -> float:
        return hawking_mass(self.area, self.willmore)


CSV_COLUMNS = (
    "t",
    "area",
    "boundary_length",
    "willmore",
    "hawking_mass",
    "euler_char",
    "eccentricity",
    "geroch_integrand",
)


def hawking_mass(area: float, willmore: float) -> float:
    """Free-boundary Hawking mass ``sqrt|S| / (2 (8 pi)^1.5) (8 pi - int H^2)``."""
    return math.sqrt(area) / (2.0 * EIGHT_PI**1.5) * (EIGHT_PI - willmore)


# ---------------------------------------------------------------------------
# extraction
# ---------------------------------------------------------------------------


def _chain(segments: np.ndarray, n_i: int, n_j: int) -> list[list[tuple[int, int, int]]]:
    """Join segments sharing an edge into polylines (open ones first)."""
    adj: dict[tuple, list[tuple]] = {}
    for a, b in segments:
        ka, kb = tuple(int(v) for v in a), tuple(int(v) for v in b)
        adj.setdefault(ka, []).append(kb)
        adj.setdefault(kb, []).append(ka)
    seen: set[tuple] = set()
    lines = []
    ends = sorted(k for k, v in adj.items() if len(v) == 1)
    for start in ends:
        if start in seen:
            continue
        path = [start]
        seen.add(start)
        cur = start
        while True:
            nxt = [k for k in adj[cur] if k not in seen]
            if not nxt:
                break
            cur = nxt[0]
            seen.add(cur)
            path.append(cur)
        lines.append(path)
    for start in sorted(adj):
        if start in seen:
            continue
        path = [start]
        seen.add(start)
        cur = start
        while True:
            nxt = [k for k in adj[cur] if k not in seen]
            if not nxt:
                break
            cur = nxt[0]
            seen.add(cur)
            path.append(cur)
        path.append(start)
        lines.append(path)
    return lines


def _edge_nodes(edge: tuple[int, int, int]) -> tuple[tuple[int, int], tuple[int, int]]:
    kind, i, j = edge
    return ((i, j), (i + 1, j)) if kind == 0 else ((i, j), (i, j + 1))


def _edge_location(edge, n_i: int, n_j: int) -> str:
    kind, i, j = edge
    if kind == 0 and j == 0:
        return "support"
    if kind == 0 and j == n_j:
        return "axis"
    if kind == 1 and i == 0:
        return "inner"
    if kind == 1 and i == n_i:
        return "outer"
    return "interior"


class _FieldSampler:
    """Vertex interpolation of nodal fields along crossed grid edges."""

    def __init__(self, u: ScalarField):
        self.u = u
        op = u.operator()
        self.values = u.values
        self.grid = u.grid
        self.grad = op.grad_norm_nodes(u.values)
        self.h_geom = op.mean_curvature_nodes(u.values)
        self.eu_rho, self.eu_z = op.euclidean_gradient_nodes(u.values)
        cell = self.grid.cell_diameters()
        node_h = np.zeros(self.grid.shape)
        node_h[:-1, :-1] = np.maximum(node_h[:-1, :-1], cell)
        node_h[1:, :-1] = np.maximum(node_h[1:, :-1], cell)
        node_h[1:, 1:] = np.maximum(node_h[1:, 1:], cell)
        node_h[:-1, 1:] = np.maximum(node_h[:-1, 1:], cell)
        self.node_h = node_h

    def sample(self, path, level: float) -> dict[str, np.ndarray]:
        g = self.grid
        a_idx = np.array([_edge_nodes(e)[0] for e in path])
        b_idx = np.array([_edge_nodes(e)[1] for e in path])
        fa = self.values[a_idx[:, 0], a_idx[:, 1]] - level
        fb = self.values[b_idx[:, 0], b_idx[:, 1]] - level
        w = fa / (fa - fb)
        out = {}
        for name, arr in (
            ("rho", g.rho),
            ("z", g.z),
            ("H", self.grad),
            ("H_geom", self.h_geom),
            ("eu_rho", self.eu_rho),
            ("eu_z", self.eu_z),
            ("h", self.node_h),
        ):
            va = arr[a_idx[:, 0], a_idx[:, 1]]
            vb = arr[b_idx[:, 0], b_idx[:, 1]]
            out[name] = va + w * (vb - va)
        return out


def _dedupe(data: dict[str, np.ndarray], tol: float) -> dict[str, np.ndarray]:
    keep = np.ones(data["rho"].size, dtype=bool)
    d = np.hypot(np.diff(data["rho"]), np.diff(data["z"]))
    keep[1:] = d > tol
    if not keep[-1]:
        keep[-1] = True
        idx = np.nonzero(keep[:-1])[0]
        if idx.size:
            keep[idx[-1]] = False if idx[-1] != 0 else True
    return {k: v[keep] for k, v in data.items()}


def _boundary_value_curve(u: ScalarField, row: int, level: float, sampler: _FieldSampler) -> dict[str, np.ndarray]:
    g = u.grid
    return {
        "rho": g.rho[row].copy(),
        "z": g.z[row].copy(),
        "H": sampler.grad[row].copy(),
        "H_geom": sampler.h_geom[row].copy(),
        "eu_rho": sampler.eu_rho[row].copy(),
        "eu_z": sampler.eu_z[row].copy(),
        "h": sampler.node_h[row].copy(),
    }


def _trace(u: ScalarField, t: float, sampler: _FieldSampler):
    g = u.grid
    vals = u.values
    n_i, n_j = g.n_i, g.n_j
    if np.all(vals[0] == t) and np.all(vals[1:] > t):
        return _boundary_value_curve(u, 0, t, sampler), [], True, True
    if np.all(vals[-1] == t) and np.all(vals[:-1] < t):
        return _boundary_value_curve(u, n_i, t, sampler), [], True, True
    if not (vals.min() < t < vals.max()):
        raise LevelSetError(f"level {t} outside the range [{vals.min():.6g}, {vals.max():.6g}] of the field")
    segs = kernels.march_segments(vals, float(t))
    if segs.shape[0] == 0:
        raise LevelSetError(f"empty level set at t={t}")
    lines = _chain(segs, n_i, n_j)
    main = None
    extras = []
    for path in lines:
        locs = (_edge_location(path[0], n_i, n_j), _edge_location(path[-1], n_i, n_j))
        closed = path[0] == path[-1]
        if not closed and "support" in locs and main is None:
            if locs[0] != "support":
                path = path[::-1]
                locs = locs[::-1]
            main = (path, locs)
        else:
            if closed:
                kind = "torus"
            elif locs == ("axis", "axis"):
                kind = "sphere"
            elif locs == ("support", "support"):
                kind = "annulus"
            else:
                kind = "disc" if set(locs) == {"support", "axis"} else "open"
            extras.append({"kind": kind, "n": len(path)})
    if main is None:
        raise LevelSetError(f"level t={t} does not reach the support (free boundary lost)")
    path, locs = main
    data = sampler.sample(path, t)
    return data, extras, locs[0] == "support", locs[1] == "axis"


def extract_level(u: ScalarField, t: float, side: str = "lower", jump_shift: float | None = None) -> LevelCurve:
    """Marching-squares level curve of ``u`` at ``t``.

    ``side="upper"`` extracts just above ``t`` (the outer boundary of a
    possible jump region).  Both sides are compared; a meridian gap larger
    than twice the local cell size flags a candidate jump.
    """
    if side not in ("lower", "upper"):
        raise LevelSetError("side must be 'lower' or 'upper'")
    sampler = _FieldSampler(u)
    span = float(np.max(u.values) - np.min(u.values))
    shift = 1e-9 * max(span, 1.0) if jump_shift is None else jump_shift
    t_eff = t + shift if side == "upper" else t
    data, extras, on_support, on_axis = _trace(u, t_eff, sampler)
    other_t = t + shift if side == "lower" else t
    jump = False
    gap = 0.0
    try:
        other, _, _, _ = _trace(u, other_t, sampler)
        gap = _sup_distance(data["rho"], data["z"], other["rho"], other["z"])
        jump = gap > 2.0 * float(np.max(data["h"]))
    except LevelSetError:
        pass
    data = _dedupe(data, 1e-12 * max(1.0, float(np.max(np.hypot(data["rho"], data["z"])))))
    if data["rho"].size < 3:
        raise LevelSetError(f"level t={t} has fewer than three vertices")
    if on_axis:
        data["rho"][-1] = 0.0
    normal = np.stack([data["eu_rho"], data["eu_z"]], axis=-1)
    normal /= np.linalg.norm(normal, axis=-1, keepdims=True)
    metric = u.metric
    kappa_rot = _rotational_curvature(metric, data["rho"], data["z"], normal)
    kappa_mer = data["H_geom"] - kappa_rot
    return LevelCurve(
        t=float(t),
        rho=data["rho"],
        z=data["z"],
        H=np.maximum(data["H"], 0.0),
        H_geom=data["H_geom"],
        kappa_mer=kappa_mer,
        kappa_rot=kappa_rot,
        normal=normal,
        on_support=on_support,
        on_axis=on_axis,
        h_local=data["h"],
        side=side,
        extra_components=extras,
        jump_candidate=bool(jump),
        jump_gap=float(gap),
    )


def _rotational_curvature(metric: AmbientMetric, rho, z, normal) -> np.ndarray:
    tangent = (-normal[:, 1], normal[:, 0])
    nrm = (normal[:, 0], normal[:, 1])
    _, k_rot = meridian_principal_curvatures(metric, np.maximum(rho, 0.0), z, tangent, nrm, np.zeros_like(rho))
    k_rot = np.asarray(k_rot, dtype=float)
    bad = ~np.isfinite(k_rot)
    if np.any(bad):
        # on the axis the surface is umbilic: both principal curvatures equal H/2
        good = np.nonzero(~bad)[0]
        if good.size:
            k_rot[bad] = np.interp(np.nonzero(bad)[0], good, k_rot[good])
    return k_rot


def _sup_distance(r1, z1, r2, z2) -> float:
    """Symmetric sup distance between two polylines (vertex to polyline)."""

    def one_way(ra, za, rb, zb):
        pa = np.stack([ra, za], axis=-1)
        p0 = np.stack([rb[:-1], zb[:-1]], axis=-1)
        d = np.stack([np.diff(rb), np.diff(zb)], axis=-1)
        dd = np.maximum(np.einsum("ij,ij->i", d, d), 1e-300)
        rel = pa[:, None, :] - p0[None, :, :]
        s = np.clip(np.einsum("kij,ij->ki", rel, d) / dd, 0.0, 1.0)
        close = p0[None] + s[..., None] * d[None]
        return float(np.max(np.min(np.linalg.norm(pa[:, None, :] - close, axis=-1), axis=1)))

    if len(r2) < 2 or len(r1) < 2:
        return float("inf")
    return max(one_way(r1, z1, r2, z2), one_way(r2, z2, r1, z1))


def curve_distance(a: LevelCurve | tuple, b: LevelCurve | tuple) -> float:
    """Sup meridian distance between two curves (``LevelCurve`` or ``(rho, z)``)."""
    ra, za = (a.rho, a.z) if isinstance(a, LevelCurve) else a
    rb, zb = (b.rho, b.z) if isinstance(b, LevelCurve) else b
    return _sup_distance(np.asarray(ra), np.asarray(za), np.asarray(rb), np.asarray(zb))


# ---------------------------------------------------------------------------
# surface quantities
# ---------------------------------------------------------------------------


def _segment_metric(metric: AmbientMetric, rho: np.ndarray, z: np.ndarray):
    """Line element and rotation factor on segment midpoints; rotation factor on vertices."""
    mr = 0.5 * (rho[1:] + rho[:-1])
    mz = 0.5 * (z[1:] + z[:-1])
    dr = np.diff(rho)
    dz = np.diff(z)
    a, b, c, d = metric.reduced(mr, mz)
    ds = np.sqrt(a * dr * dr + 2 * b * dr * dz + c * dz * dz)
    w_mid = mr * np.sqrt(d)
    _, _, _, dv = metric.reduced(rho, z)
    w_v = np.maximum(rho, 0.0) * np.sqrt(dv)
    return ds, w_mid, w_v


def _euler_characteristic(curve: LevelCurve) -> int:
    table = {"disc": 1, "sphere": 2, "annulus": 0, "torus": 0, "open": 1}
    return int(sum(table[k] for k in curve.components()))


def surface_quantities(curve: LevelCurve, metric: AmbientMetric, center_offset: float = 0.0) -> SurfaceDiagnostics:
    """Area, boundary length, Willmore energy, Hawking mass, topology and eccentricity.

    Eccentricity is ``max |x - x_c| / min |x - x_c|`` over the vertices with
    ``x_c = -center_offset e3``.
    """
    if curve.n_vertices < 3:
        raise LevelSetError("curve needs at least three vertices")
    rho, z = curve.rho, curve.z
    ds, w_mid, w_v = _segment_metric(metric, rho, z)
    area = 2.0 * math.pi * float(np.sum(w_mid * ds))
    h2w = curve.H**2 * w_v
    willmore = 2.0 * math.pi * float(np.sum(0.5 * (h2w[1:] + h2w[:-1]) * ds))
    if curve.on_support:
        _, _, _, d0 = metric.reduced(np.array(rho[0]), np.array(z[0]))
        boundary = 2.0 * math.pi * float(rho[0] * np.sqrt(d0))
    else:
        boundary = 0.0
    dist = np.hypot(rho, z + center_offset)
    d_min = float(np.min(dist))
    ecc = float(np.max(dist) / d_min) if d_min > 0 else float("inf")
    w_e = _euclidean_willmore(curve, metric)
    return SurfaceDiagnostics(
        t=curve.t,
        area=area,
        boundary_length=boundary,
        willmore=willmore,
        hawking_mass=hawking_mass(area, willmore),
        euler_char=_euler_characteristic(curve),
        eccentricity=ecc,
        willmore_euclidean=w_e,
        jump_candidate=curve.jump_candidate,
    )


def euclidean_area(curve: LevelCurve) -> float:
    """Coordinate (flat) area ``2 pi int rho ds_e`` of the surface of revolution."""
    rho, z = curve.rho, curve.z
    ds = np.hypot(np.diff(rho), np.diff(z))
    return 2.0 * math.pi * float(np.sum(0.5 * (rho[1:] + rho[:-1]) * ds))


def _euclidean_willmore(curve: LevelCurve, metric: AmbientMetric) -> float:
    """``int H_e^2 dA_e`` from the level-set curvature (conformal metrics only)."""
    if not metric.is_conformal:
        return float("nan")
    rho, z = curve.rho, curve.z
    x = metric.meridian_point(rho, z)
    phi = metric.conformal_factor(x)
    grad = metric.conformal_gradient(x)
    dn = grad[:, 0] * curve.normal[:, 0] + grad[:, 2] * curve.normal[:, 1]
    h_e = phi**2 * curve.H_geom - 4.0 * dn / phi
    ds = np.hypot(np.diff(rho), np.diff(z))
    f = h_e**2 * np.maximum(rho, 0.0)
    return 2.0 * math.pi * float(np.sum(0.5 * (f[1:] + f[:-1]) * ds))


def _resample(s: np.ndarray, values: np.ndarray, n: int):
    su = np.linspace(s[0], s[-1], n)
    return su, np.interp(su, s, values)


def geroch_terms(curve: LevelCurve, metric: AmbientMetric, support: SupportGeometry | None) -> dict[str, float]:
    """Individual terms of the Geroch integrand of one leaf."""
    rho, z = curve.rho, curve.z
    ds, w_mid, w_v = _segment_metric(metric, rho, z)
    s = np.concatenate([[0.0], np.cumsum(ds)])
    area = 2.0 * math.pi * float(np.sum(w_mid * ds))
    chi = _euler_characteristic(curve)
    # |grad H|^2 / H^2 on interior vertices (corner values excluded)
    inner = slice(1, -1)
    s_in = s[inner]
    h_in = curve.H[inner]
    w_in = w_v[inner]
    grad_term = float("nan")
    flagged = False
    if s_in.size >= 3:
        if np.any(h_in <= 0):
            flagged = True
        else:
            n = max(8, s_in.size // 2)
            su, hu = _resample(s_in, np.log(h_in), n)
            _, wu = _resample(s_in, w_in, n)
            dlog = np.gradient(hu, su)
            f = dlog**2 * wu
            grad_term = 2.0 * math.pi * float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(su)))
    traceless = 0.5 * (curve.kappa_mer - curve.kappa_rot) ** 2
    f = traceless * w_v
    a_term = 2.0 * math.pi * float(np.sum(0.5 * (f[1:] + f[:-1]) * ds))
    sc = metric.scalar_curvature(metric.meridian_point(rho, z))
    f = sc * w_v
    sc_term = 2.0 * math.pi * float(np.sum(0.5 * (f[1:] + f[:-1]) * ds))
    bd_term = 0.0
    if support is not None and curve.on_support:
        s0 = float(support.project(rho[0], z[0]))
        pr, pz = support.point(s0)
        shape = boundary_shape(metric, support, np.array([float(pr), float(pz)]), tol=1e-3)
        _, _, _, d0 = metric.reduced(np.array(pr), np.array(pz))
        bd_term = shape.mean_curvature * 2.0 * math.pi * float(pr * np.sqrt(d0))
    return {
        "area": area,
        "topology": FOUR_PI * (1 - chi),
        "grad_h": grad_term,
        "traceless": a_term,
        "scalar": sc_term,
        "boundary": bd_term,
        "grad_h_flagged": flagged,
    }


def geroch_integrand(curve: LevelCurve, metric: AmbientMetric, support: SupportGeometry | None = None) -> float:
    """``(2|S|)^(1/2)/(16 pi)^(3/2) [4 pi (1 - chi) + int(2|grad H|^2/H^2 + |A0|^2/2 + Sc) + int H_dM]``.

    When ``H`` vanishes somewhere on the leaf the gradient term is excluded
    (a warning is logged) and the remaining terms are returned.
    """
    terms = geroch_terms(curve, metric, support)
    grad = terms["grad_h"]
    if not np.isfinite(grad):
        import logging

        logging.getLogger(__name__).warning("t=%g: |grad H|^2/H^2 term excluded (H <= 0 on leaf)", curve.t)
        grad = 0.0
    bracket = terms["topology"] + 2.0 * grad + terms["traceless"] + terms["scalar"] + terms["boundary"]
    return math.sqrt(2.0 * terms["area"]) / (16.0 * math.pi) ** 1.5 * bracket


# ---------------------------------------------------------------------------
# tables and files
# ---------------------------------------------------------------------------


def flow_table(
    u: ScalarField,
    t_schedule: Sequence[float],
    metric: AmbientMetric | None = None,
    support: SupportGeometry | None = None,
    center_offset: float = 0.0,
    tau: float | None = None,
    lower_margin: float = 0.0,
    upper_margin: float = 1.0,
) -> list[SurfaceDiagnostics]:
    """Diagnostics for every trusted ``t`` in ``[t_min + lower_margin, tau - upper_margin]``.

    Extraction failures become records carrying ``error`` rather than aborting.
    """
    metric = u.metric if metric is None else metric
    tau = float(np.max(u.values)) if tau is None else tau
    t_min = float(np.min(u.values))
    out = []
    for t in t_schedule:
        t = float(t)
        if t < t_min + lower_margin - 1e-12 or t > tau - upper_margin + 1e-12:
            continue
        try:
            curve = extract_level(u, t)
            diag = surface_quantities(curve, metric, center_offset)
            diag.geroch_integrand = geroch_integrand(curve, metric, support)
        except LevelSetError as exc:
            nan = float("nan")
            diag = SurfaceDiagnostics(t, nan, nan, nan, nan, 0, nan, error=str(exc))
        out.append(diag)
    return out


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_flow_csv(table: Sequence[SurfaceDiagnostics], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for d in table:
            w.writerow([_fmt(getattr(d, c)) for c in CSV_COLUMNS])


def read_flow_csv(path: str | Path) -> list[SurfaceDiagnostics]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                SurfaceDiagnostics(
                    t=float(row["t"]),
                    area=float(row["area"]),
                    boundary_length=float(row["boundary_length"]),
                    willmore=float(row["willmore"]),
                    hawking_mass=float(row["hawking_mass"]),
                    euler_char=int(row["euler_char"]),
                    eccentricity=float(row["eccentricity"]),
                    geroch_integrand=float(row["geroch_integrand"]),
                )
            )
    return out


def write_contours(curves: Sequence[LevelCurve], path: str | Path) -> None:
    """One block per level: lines ``t rho z H`` separated by blank lines."""
    lines = ["# t rho z H"]
    for c in curves:
        for r, z, h in zip(c.rho, c.z, c.H):
            lines.append(f"{c.t!r} {float(r)!r} {float(z)!r} {float(h)!r}")
        lines.append("")
    Path(path).write_text("\n".join(lines) + "\n")


def diagnostics_dict(d: SurfaceDiagnostics) -> dict:
    return asdict(d)
