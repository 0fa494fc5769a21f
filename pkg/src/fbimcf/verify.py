"""Pass/fail checks of the flow inequalities, the Penrose bound and the
late-time behaviour of a computed flow.

Every check is phrased as ``measured <= bound`` and stores
``slack = bound - measured``; a check passes iff ``slack >= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .levelset import LevelSetError, SurfaceDiagnostics, euclidean_area, extract_level
from .mass import MassEstimate
from .solver import ScalarField

ROUNDOFF = 1e-10


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    bound: float
    note: str = ""
    enforced: bool = True

    @property
    def slack(self) -> float:
        return self.bound - self.measured

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.measured) and self.measured <= self.bound)

    def line(self) -> str:
        flag = ("PASS" if self.passed else "FAIL") if self.enforced else "INFO"
        text = f"{self.name} measured={self.measured:.9e} bound={self.bound:.9e} slack={self.slack:.9e} {flag}"
        return f"{text} # {self.note}" if self.note else text


@dataclass
class VerificationReport:
    checks: list[Check] = field(default_factory=list)

    def add(self, check: Check) -> None:
        self.checks.append(check)

    def extend(self, other: "VerificationReport | Iterable[Check]") -> None:
        self.checks.extend(other.checks if isinstance(other, VerificationReport) else other)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.enforced)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if c.enforced and not c.passed]

    def get(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def lines(self) -> list[str]:
        return [c.line() for c in self.checks]

    def text(self) -> str:
        return "\n".join(self.lines()) + "\n"

    def exit_code(self) -> int:
        return 0 if self.passed else 1


def _valid(table: Sequence[SurfaceDiagnostics]) -> list[SurfaceDiagnostics]:
    return [d for d in table if d.error is None and np.isfinite(d.area)]


def discretization_slack(h: float, eps: float, area: float, scale: float = 1.0) -> float:
    """``scale (h + eps) sqrt(|S| / 32 pi)`` plus a fixed round-off part."""
    return scale * (h + eps) * math.sqrt(max(area, 0.0) / (32.0 * math.pi)) + ROUNDOFF


def check_flow(
    table: Sequence[SurfaceDiagnostics],
    tol_rel: float = 0.02,
    mass_tol: float = 1e-2,
    h: float = 0.0,
    eps: float = 0.0,
    initial_area: float | None = None,
    geroch_scale: float = 1.0,
    prefix: str = "",
) -> VerificationReport:
    """Exponential area growth, Hawking-mass monotonicity and the discrete Geroch inequality.

    ``initial_area`` is the area of the surface at the first tabulated time;
    by default it is read from the table itself.
    """
    rows = _valid(table)
    rep = VerificationReport()
    if len(rows) < 3:
        rep.add(Check(f"{prefix}flow-table", float(3 - len(rows)), 0.0, "fewer than 3 valid records"))
        return rep
    t0 = rows[0].t
    a0 = rows[0].area if initial_area is None else initial_area
    dev = max(abs(d.area * math.exp(-(d.t - t0)) / a0 - 1.0) for d in rows)
    rep.add(Check(f"{prefix}area-growth", dev, tol_rel))
    drop = max(max(a.hawking_mass - b.hawking_mass for a, b in zip(rows, rows[1:])), 0.0)
    rep.add(Check(f"{prefix}hawking-monotone", drop, mass_tol))
    worst = -math.inf
    worst_bound = 0.0
    for a, b in zip(rows, rows[1:]):
        rhs = 0.5 * (a.geroch_integrand + b.geroch_integrand) * (b.t - a.t)
        gap = rhs - (b.hawking_mass - a.hawking_mass)
        bound = discretization_slack(h, eps, b.area, geroch_scale)
        if not np.isfinite(gap):
            worst, worst_bound = math.inf, bound
            break
        if gap - bound > worst - worst_bound:
            worst, worst_bound = gap, bound
    rep.add(Check(f"{prefix}geroch", worst, worst_bound, "worst consecutive pair"))
    return rep


def check_penrose(
    mass: MassEstimate | float | None,
    sigma0: SurfaceDiagnostics,
    table: Sequence[SurfaceDiagnostics] = (),
    tol: float = 1e-2,
    exterior: MassEstimate | float | None = None,
    expect_equality: bool = False,
    prefix: str = "",
) -> VerificationReport:
    """Penrose bound for the minimal leaf ``sigma0`` and the Hawking-mass limit."""
    if mass is None:
        raise ValueError("check_penrose needs an ADM mass estimate")
    m_adm = float(mass.value if isinstance(mass, MassEstimate) else mass)
    rep = VerificationReport()
    rhs = math.sqrt(sigma0.area / (32.0 * math.pi))
    rep.add(Check(f"{prefix}penrose", rhs, m_adm + tol, f"gap={m_adm - rhs:.6e}"))
    if expect_equality:
        rep.add(Check(f"{prefix}penrose-equality", abs(m_adm - rhs), tol))
    if exterior is not None:
        m_ext = float(exterior.value if isinstance(exterior, MassEstimate) else exterior)
        rhs_ext = math.sqrt(sigma0.area / (2.0 * math.pi))
        rep.add(Check(f"{prefix}penrose-exterior", rhs_ext, m_ext + tol, f"gap={m_ext - rhs_ext:.6e}"))
    rows = _valid(table)
    if rows:
        sup = max(d.hawking_mass for d in rows)
        rep.add(Check(f"{prefix}hawking-limit", sup, m_adm + tol, f"sup over t <= {rows[-1].t:g}"))
    return rep


def _rescaled_distance(rho: np.ndarray, z: np.ndarray, area: float, center_offset: float) -> float:
    radius = math.sqrt(area / (2.0 * math.pi))
    return float(np.max(np.abs(np.hypot(rho, z + center_offset) / radius - 1.0)))


def check_blowdown(
    table: Sequence[SurfaceDiagnostics],
    u: ScalarField,
    t_from: float = 3.0,
    dist_tol: float = 0.05,
    ecc_bound: float = 1.05,
    ecc_tol: float = 1e-2,
    ecc_from: float = 1.0,
    decay_bound: float = 3.0,
    center_offset: float = 0.0,
    trusted_tau: float | None = None,
    enforce_shape: bool = True,
    prefix: str = "",
) -> VerificationReport:
    """Late leaves against the unit hemisphere after rescaling to unit area radius.

    The leaf at ``t`` is scaled by ``sqrt(2 pi / |S_t|_e)`` about ``-center_offset e3``,
    with ``|S_t|_e`` its coordinate (flat) area.
    The gradient-decay constant ``max |grad u| |x|`` is taken over nodes with
    ``u <= trusted_tau`` (the outer Dirichlet layer is excluded).
    With ``enforce_shape=False`` the distance and eccentricity entries are
    informational (supports whose height keeps growing have no fixed centre).
    """
    rows = _valid(table)
    rep = VerificationReport()
    late = [d for d in rows if d.t >= t_from - 1e-12]
    dist = 0.0
    ecc = 0.0
    for d in late:
        try:
            curve = extract_level(u, d.t)
        except LevelSetError:
            dist = math.inf
            break
        dist = max(dist, _rescaled_distance(curve.rho, curve.z, euclidean_area(curve), center_offset))
        ecc = max(ecc, d.eccentricity)
    if not late:
        dist = math.inf
    rep.add(Check(f"{prefix}blowdown-distance", dist, dist_tol, f"t >= {t_from:g}", enforce_shape))
    rep.add(Check(f"{prefix}eccentricity", ecc if late else math.inf, ecc_bound, f"t >= {t_from:g}", enforce_shape))
    seq = [d.eccentricity for d in rows if d.t >= ecc_from - 1e-12 and np.isfinite(d.eccentricity)]
    rise = max([b - a for a, b in zip(seq, seq[1:])] + [0.0])
    rep.add(Check(f"{prefix}eccentricity-trend", rise, ecc_tol, f"t >= {ecc_from:g}", enforce_shape))
    vals = u.values
    grid = u.grid
    cap = float(np.max(vals)) - 1.0 if trusted_tau is None else trusted_tau
    mask = vals <= cap
    decay = float(np.max((u.grad_norm() * np.hypot(grid.rho, grid.z + center_offset))[mask])) if np.any(mask) else math.inf
    rep.add(Check(f"{prefix}gradient-decay", decay, decay_bound, "max |grad u| |x| on trusted nodes"))
    return rep


def check_hemisphere(u: ScalarField, tol: float = 0.05, margin: float = 1.0, prefix: str = "") -> VerificationReport:
    """Sup distance of ``u`` to ``2 log |x|`` where ``2 log |x| <= tau - margin``."""
    grid = u.grid
    exact = 2.0 * np.log(np.hypot(grid.rho, grid.z))
    mask = exact <= float(np.max(u.values)) - margin
    err = float(np.max(np.abs(u.values - exact)[mask]))
    rep = VerificationReport()
    rep.add(Check(f"{prefix}hemisphere-solution", err, tol))
    return rep


def check_barriers(result, h: float, subsolution_constant: float = 1.0, prefix: str = "") -> VerificationReport:
    """``0 <= u <= tau`` exactly and the subsolution violation against ``C h``."""
    b = result.barrier
    rep = VerificationReport()
    rep.add(Check(f"{prefix}upper-barrier", b.upper_excess, 0.0))
    rep.add(Check(f"{prefix}lower-barrier", b.lower_excess, 0.0))
    if b.applicable:
        rep.add(Check(f"{prefix}subsolution", b.subsolution_violation, subsolution_constant * h))
    return rep
