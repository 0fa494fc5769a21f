"""Vertex-centred finite-volume solver for the regularized level-set equation

    div_g( grad u / sqrt(eps^2 + |grad u|_g^2) ) = (|grad u|_g^2 + delta^2)^(gamma/2)

with ``u = 0`` on the initial surface, ``u = tau`` on the outer arc, natural
(zero-flux) conditions on the support and the symmetry axis.

The axisymmetric problem lives on the meridian grid; the rotation factor
``w = rho sqrt(g_22)`` enters the volume density.  Boundary rows use half
control volumes whose face fluxes and volumes are sampled at the quarter point.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import AmbientMetric
from .mesh import CurvilinearGrid, MeridianDomain, Tag, transfinite_grid

log = logging.getLogger(__name__)

_CSTEP = 1e-30


class SolverError(RuntimeError):
    """Non-convergence or invalid coefficients."""

    def __init__(self, message: str, history: Sequence[float] = ()):
        super().__init__(message)
        self.history = list(history)


class ConfigError(ValueError):
    """Inconsistent solver configuration."""


@dataclass(frozen=True)
class SolverConfig:
    """Regularization and iteration parameters.

    ``mode="fixed"`` keeps the outer radius ``r_out`` and requires ``tau``.
    ``mode="paper"`` couples ``r_out = 1/(4 eps)`` and defaults ``tau`` to
    ``Z = log(r_out / r0) / 4``, rejecting larger values.

    ``strategy="newton"`` runs damped Newton from the first iteration with
    lagged Picard steps as fallback; ``"picard"`` starts with relaxed Picard
    steps and switches to Newton once the relative update drops below
    ``newton_switch``.
    """

    epsilon: float = 0.0125
    gamma: float = 1.0
    tau: float | None = None
    r0: float = 1.0
    r_out: float = 16.0
    mode: str = "fixed"
    relaxation: float = 0.7
    newton_switch: float = 1e-3
    residual_tol: float = 1e-9
    update_tol: float = 1e-10
    max_iter: int = 200
    grad_floor: float = 1e-10
    epsilon_schedule: tuple[float, ...] = ()
    strategy: str = "newton"

    def __post_init__(self) -> None:
        if not self.epsilon >= 0:
            raise ConfigError("epsilon must be non-negative")
        if self.gamma < 1:
            raise ConfigError("gamma must be >= 1")
        if not 0 < self.relaxation <= 1:
            raise ConfigError("relaxation must lie in (0, 1]")
        if self.strategy not in ("newton", "picard"):
            raise ConfigError(f"unknown nonlinear strategy {self.strategy!r}")
        if self.mode not in ("fixed", "paper"):
            raise ConfigError(f"unknown schedule mode {self.mode!r}")
        if self.r0 <= 0:
            raise ConfigError("r0 must be positive")
        if self.mode == "paper":
            if not self.epsilon > 0:
                raise ConfigError("paper mode needs epsilon > 0")
            if self.r_eps <= self.r0:
                raise ConfigError("paper mode needs 1/(4 eps) > r0")
            if self.tau is not None and self.tau > self.z_eps * (1 + 1e-12):
                raise ConfigError(f"tau={self.tau} exceeds Z={self.z_eps:.6g} = log(R_eps/r0)/4")
        elif self.tau is None:
            raise ConfigError("fixed-domain mode needs an explicit tau")
        if self.effective_tau < 0:
            raise ConfigError("tau must be non-negative")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be positive")
        sched = tuple(self.epsilon_schedule)
        if any(b >= a for a, b in zip(sched, sched[1:])):
            raise ConfigError("epsilon schedule must be strictly decreasing")

    @property
    def r_eps(self) -> float:
        if self.mode == "paper":
            return 1.0 / (4.0 * self.epsilon)
        return self.r_out

    @property
    def outer_radius(self) -> float:
        return self.r_eps

    @property
    def z_eps(self) -> float:
        return 0.25 * float(np.log(self.r_eps / self.r0))

    @property
    def effective_tau(self) -> float:
        return self.z_eps if self.tau is None else float(self.tau)

    def at_epsilon(self, eps: float) -> "SolverConfig":
        return replace(self, epsilon=float(eps))


# ---------------------------------------------------------------------------
# discrete operator
# ---------------------------------------------------------------------------


def _face_geometry(metric: AmbientMetric, pos: np.ndarray, d_xi: np.ndarray, d_eta: np.ndarray):
    """Inverse logical metric and volume density at points with Jacobian columns."""
    a, b, c, d = metric.reduced(pos[..., 0], pos[..., 1])
    k11 = a * d_xi[..., 0] ** 2 + 2 * b * d_xi[..., 0] * d_xi[..., 1] + c * d_xi[..., 1] ** 2
    k22 = a * d_eta[..., 0] ** 2 + 2 * b * d_eta[..., 0] * d_eta[..., 1] + c * d_eta[..., 1] ** 2
    k12 = (
        a * d_xi[..., 0] * d_eta[..., 0]
        + b * (d_xi[..., 0] * d_eta[..., 1] + d_xi[..., 1] * d_eta[..., 0])
        + c * d_xi[..., 1] * d_eta[..., 1]
    )
    det_k = k11 * k22 - k12 * k12
    det_j = d_xi[..., 0] * d_eta[..., 1] - d_xi[..., 1] * d_eta[..., 0]
    w = np.maximum(pos[..., 0], 0.0) * np.sqrt(d)
    sqrt_g = np.abs(det_j) * np.sqrt(a * c - b * b) * w
    inv = (k22 / det_k, -k12 / det_k, k11 / det_k)
    return inv, sqrt_g


class FVOperator:
    """Discrete operator on a fixed grid and metric; geometry is precomputed."""

    def __init__(self, metric: AmbientMetric, grid: CurvilinearGrid):
        self.metric = metric
        self.grid = grid
        p = grid.points()
        self.shape = p.shape[:2]
        n_i, n_j = self.shape
        if n_i < 3 or n_j < 3:
            raise ConfigError("grid too small")
        p_xi = np.gradient(p, axis=0, edge_order=2)
        p_eta = np.gradient(p, axis=1, edge_order=2)

        # nodes
        self.k_node, self.sg_node = _face_geometry(metric, p, p_xi, p_eta)
        # xi faces (i+1/2, j)
        pos = 0.5 * (p[1:] + p[:-1])
        self.k_xf, self.sg_xf = _face_geometry(metric, pos, p[1:] - p[:-1], 0.5 * (p_eta[1:] + p_eta[:-1]))
        # eta faces (i, j+1/2)
        pos = 0.5 * (p[:, 1:] + p[:, :-1])
        self.k_ef, self.sg_ef = _face_geometry(metric, pos, 0.5 * (p_xi[:, 1:] + p_xi[:, :-1]), p[:, 1:] - p[:, :-1])

        for name, arr in (("node", self.sg_node), ("xi-face", self.sg_xf), ("eta-face", self.sg_ef)):
            bad = np.argwhere(~np.isfinite(arr))
            if bad.size:
                raise SolverError(f"non-finite coefficient at {name} index {tuple(bad[0])}")
        for arrs, name in ((self.k_node, "node"), (self.k_xf, "xi-face"), (self.k_ef, "eta-face")):
            for arr in arrs:
                bad = np.argwhere(~np.isfinite(arr))
                if bad.size:
                    raise SolverError(f"non-finite metric coefficient at {name} index {tuple(bad[0])}")

        sg = self.sg_node[1:-1]
        self.volume = sg.copy()
        self.volume[:, 0] = 0.5 * (0.75 * sg[:, 0] + 0.25 * sg[:, 1])
        self.volume[:, -1] = 0.5 * (0.75 * sg[:, -1] + 0.25 * sg[:, -2])
        self.n_unknown = (n_i - 2) * n_j
        self._build_pattern()

    # gradients -----------------------------------------------------------------
    @staticmethod
    def _node_derivatives(u):
        return np.gradient(u, axis=0, edge_order=2), np.gradient(u, axis=1, edge_order=2)

    def grad_sq_nodes(self, u):
        u_xi, u_eta = self._node_derivatives(u)
        k11, k12, k22 = self.k_node
        return k11 * u_xi * u_xi + 2 * k12 * u_xi * u_eta + k22 * u_eta * u_eta

    def grad_norm_nodes(self, u: np.ndarray) -> np.ndarray:
        return np.sqrt(np.maximum(self.grad_sq_nodes(np.asarray(u, dtype=float)), 0.0))

    def euclidean_gradient_nodes(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``(d_rho u, d_z u)`` at nodes by the chain rule."""
        u_xi, u_eta = self._node_derivatives(np.asarray(u, dtype=float))
        p = self.grid.points()
        p_xi = np.gradient(p, axis=0, edge_order=2)
        p_eta = np.gradient(p, axis=1, edge_order=2)
        det = p_xi[..., 0] * p_eta[..., 1] - p_xi[..., 1] * p_eta[..., 0]
        u_rho = (p_eta[..., 1] * u_xi - p_xi[..., 1] * u_eta) / det
        u_z = (-p_eta[..., 0] * u_xi + p_xi[..., 0] * u_eta) / det
        return u_rho, u_z

    def mean_curvature_nodes(self, u: np.ndarray, floor: float = 1e-150) -> np.ndarray:
        """``div_g(grad u / |grad u|_g)`` at every node.

        Dirichlet rows are filled by linear extrapolation in ``i``.
        """
        u = np.asarray(u, dtype=float)
        _, g2x, _, g2e = self.face_terms(u)
        wx = 1.0 / np.sqrt(floor * floor + g2x)
        we = 1.0 / np.sqrt(floor * floor + g2e)
        inner = self.residual(u, 0.0, frozen=(wx, we, (0.0, 0.0, 0.0, 0.0)))
        out = np.empty(u.shape)
        out[1:-1] = inner
        out[0] = 2 * inner[0] - inner[1]
        out[-1] = 2 * inner[-1] - inner[-2]
        return out

    def face_terms(self, u):
        u_xi_n, u_eta_n = self._node_derivatives(u)
        uxf = u[1:] - u[:-1]
        uef_eta = 0.5 * (u_eta_n[1:] + u_eta_n[:-1])
        k11, k12, k22 = self.k_xf
        g2x = k11 * uxf * uxf + 2 * k12 * uxf * uef_eta + k22 * uef_eta * uef_eta
        nx = k11 * uxf + k12 * uef_eta
        uef = u[:, 1:] - u[:, :-1]
        uef_xi = 0.5 * (u_xi_n[:, 1:] + u_xi_n[:, :-1])
        k11, k12, k22 = self.k_ef
        g2e = k11 * uef_xi * uef_xi + 2 * k12 * uef_xi * uef + k22 * uef * uef
        ne = k12 * uef_xi + k22 * uef
        return nx, g2x, ne, g2e

    def coefficients(self, u: np.ndarray, eps: float, gamma: float, delta: float):
        """Face weights ``1/W`` and the lagged right-hand side at ``u`` (Picard freeze)."""
        _, g2x, _, g2e = self.face_terms(u)
        wx = 1.0 / np.sqrt(eps * eps + g2x)
        we = 1.0 / np.sqrt(eps * eps + g2e)
        u_xi, u_eta = self._node_derivatives(u)
        k11, k12, k22 = self.k_node
        # lagged right-hand side c (grad u_k . grad u + delta^2), exact at u = u_k
        c = (self.grad_sq_nodes(u) + delta * delta) ** (0.5 * gamma - 1.0)
        return wx, we, (c, k11 * u_xi + k12 * u_eta, k12 * u_xi + k22 * u_eta, delta * delta)

    # residual ----------------------------------------------------------------------
    def residual(self, u, eps: float, gamma: float = 1.0, delta: float = 1e-10, frozen=None):
        """Pointwise residual on unknown rows ``1 <= i <= n_i - 1``; shape ``(n_i-1, n_j+1)``."""
        nx, g2x, ne, g2e = self.face_terms(u)
        if frozen is None:
            fx = self.sg_xf * nx / np.sqrt(eps * eps + g2x)
            fe = self.sg_ef * ne / np.sqrt(eps * eps + g2e)
            rhs = (self.grad_sq_nodes(u) + delta * delta) ** (0.5 * gamma)
        else:
            wx, we, (c, p_xi, p_eta, d2) = frozen
            fx = self.sg_xf * nx * wx
            fe = self.sg_ef * ne * we
            u_xi, u_eta = self._node_derivatives(u)
            rhs = c * (p_xi * u_xi + p_eta * u_eta + d2)
        dfx = fx[1:] - fx[:-1]
        fe_in = fe[1:-1]
        src = (rhs * self.sg_node)[1:-1]
        div = np.empty_like(dfx)
        div[:, 1:-1] = dfx[:, 1:-1] + fe_in[:, 1:] - fe_in[:, :-1]
        div[:, 0] = 0.5 * (0.75 * dfx[:, 0] + 0.25 * dfx[:, 1]) + fe_in[:, 0]
        div[:, -1] = 0.5 * (0.75 * dfx[:, -1] + 0.25 * dfx[:, -2]) - fe_in[:, -1]
        s = src.copy()
        s[:, 0] = 0.5 * (0.75 * src[:, 0] + 0.25 * src[:, 1])
        s[:, -1] = 0.5 * (0.75 * src[:, -1] + 0.25 * src[:, -2])
        return (div - s) / self.volume

    # Jacobian ------------------------------------------------------------------------
    def _build_pattern(self) -> None:
        n_i, n_j = self.shape
        ii, jj = np.meshgrid(np.arange(1, n_i - 1), np.arange(n_j), indexing="ij")
        rows, cols, colors = [], [], []
        for di in (-1, 0, 1):
            for dj in (-2, -1, 0, 1, 2):
                lo = np.where(jj == 0, 0, np.where(jj == n_j - 1, -2, -1))
                ok = (dj >= lo) & (dj <= lo + 2)
                ci, cj = ii + di, jj + dj
                ok &= (ci >= 1) & (ci <= n_i - 2) & (cj >= 0) & (cj <= n_j - 1)
                rows.append(((ii - 1) * n_j + jj)[ok])
                cols.append(((ci - 1) * n_j + cj)[ok])
                colors.append((ci % 3 * 3 + cj % 3)[ok])
        self._rows = np.concatenate(rows)
        self._cols = np.concatenate(cols)
        self._colors = np.concatenate(colors)
        self._color_masks = []
        ci, cj = np.meshgrid(np.arange(n_i), np.arange(n_j), indexing="ij")
        for c in range(9):
            m = (ci % 3 * 3 + cj % 3) == c
            m[0] = False
            m[-1] = False
            self._color_masks.append(m)

    def jacobian(self, u: np.ndarray, eps: float, gamma: float, delta: float, frozen=None) -> sp.csc_matrix:
        """Sparse Jacobian of the residual by coloured complex-step differentiation."""
        vals = np.empty(self._rows.size)
        base = np.asarray(u, dtype=complex)
        for c, mask in enumerate(self._color_masks):
            sel = self._colors == c
            if not np.any(sel):
                continue
            up = base + 1j * _CSTEP * mask
            r = self.residual(up, eps, gamma, delta, frozen).imag.ravel() / _CSTEP
            vals[sel] = r[self._rows[sel]]
        return sp.csc_matrix((vals, (self._rows, self._cols)), shape=(self.n_unknown, self.n_unknown))

    # unknown packing -----------------------------------------------------------------
    def unpack(self, u_full: np.ndarray) -> np.ndarray:
        return u_full[1:-1].ravel()

    def pack(self, vec: np.ndarray, u_full: np.ndarray) -> np.ndarray:
        out = u_full.copy()
        out[1:-1] = vec.reshape(self.shape[0] - 2, self.shape[1])
        return out


# ---------------------------------------------------------------------------
# fields and results
# ---------------------------------------------------------------------------


@dataclass
class ScalarField:
    """Nodal values on a grid together with the metric used to measure gradients."""

    grid: CurvilinearGrid
    values: np.ndarray
    metric: AmbientMetric | None = None
    _op: FVOperator | None = field(default=None, repr=False)

    def operator(self) -> FVOperator:
        if self._op is None:
            if self.metric is None:
                raise ConfigError("field has no metric attached")
            self._op = FVOperator(self.metric, self.grid)
        return self._op

    def grad_norm(self) -> np.ndarray:
        return self.operator().grad_norm_nodes(self.values)

    def dump(self, path: str | Path) -> None:
        """Node table ``i j rho z u grad_u``."""
        grad = self.grad_norm()
        g = self.grid
        lines = ["# i j rho z u grad_u"]
        for i in range(g.n_i + 1):
            for j in range(g.n_j + 1):
                lines.append(
                    f"{i} {j} {g.rho[i, j]:.17g} {g.z[i, j]:.17g} {self.values[i, j]:.17g} {grad[i, j]:.17g}"
                )
        Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class BarrierReport:
    """Subsolution violation, decay constant and maximum-principle slacks."""

    subsolution_violation: float
    decay_constant: float
    upper_excess: float
    lower_excess: float
    outer_gradient: float
    r_eps: float
    applicable: bool

    @property
    def outer_constant(self) -> float:
        """``4 R_eps max |grad u|`` over the outer arc."""
        return 4.0 * self.r_eps * self.outer_gradient

    def lines(self) -> list[str]:
        return [
            f"subsolution_violation {self.subsolution_violation:.6e} applicable={self.applicable}",
            f"decay_constant {self.decay_constant:.6e}",
            f"max_u_minus_tau {self.upper_excess:.6e}",
            f"max_minus_u {self.lower_excess:.6e}",
            f"outer_gradient_constant {self.outer_constant:.6e}",
        ]


@dataclass
class SolveResult:
    u: ScalarField
    config: SolverConfig
    converged: bool
    residual_history: list[float]
    iterations: int
    newton_iterations: int
    barrier: BarrierReport | None = None
    stage_iterations: list[int] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def tau(self) -> float:
        return self.config.effective_tau

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("inf")


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------


def dirichlet_data(grid: CurvilinearGrid, tau: float, guess: np.ndarray | None = None) -> np.ndarray:
    """Initial field: ``guess`` (or ``tau * s``) with boundary values imposed."""
    if guess is None:
        u = np.repeat((tau * np.asarray(grid.s, dtype=float))[:, None], grid.n_j + 1, axis=1)
    else:
        u = np.array(guess, dtype=float, copy=True)
    u[0] = 0.0
    u[-1] = tau
    return u


def assemble_residual(u: ScalarField | np.ndarray, cfg: SolverConfig, metric: AmbientMetric,
                      grid: CurvilinearGrid) -> np.ndarray:
    """Nodal residual ``F(u)``; Dirichlet rows are reported as 0."""
    values = u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)
    op = FVOperator(metric, grid)
    out = np.zeros(values.shape)
    out[1:-1] = op.residual(values, cfg.epsilon, cfg.gamma, cfg.grad_floor)
    bad = np.argwhere(~np.isfinite(out))
    if bad.size:
        raise SolverError(f"non-finite residual at node {tuple(bad[0])}")
    return out


def _solve_linear(mat: sp.spmatrix, rhs: np.ndarray) -> np.ndarray | None:
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            sol = spla.spsolve(mat.tocsc(), rhs)
        except (spla.MatrixRankWarning, RuntimeError):
            return None
    if not np.all(np.isfinite(sol)):
        return None
    return sol


def _newton_loop(op: FVOperator, u: np.ndarray, cfg: SolverConfig, history: list[float], notes: list[str]):
    eps, gam, dlt = cfg.epsilon, cfg.gamma, cfg.grad_floor
    tau = cfg.effective_tau
    res = op.residual(u, eps, gam, dlt)
    rnorm = float(np.max(np.abs(res)))
    history.append(rnorm)
    newton = cfg.strategy == "newton"
    n_newton = 0
    it = 0
    scale = max(1.0, abs(tau))
    while it < cfg.max_iter:
        if rnorm < cfg.residual_tol:
            return u, True, it, n_newton
        it += 1
        step_done = False
        if newton:
            jac = op.jacobian(u, eps, gam, dlt)
            delta = _solve_linear(jac, -res.ravel())
            if delta is None:
                notes.append(f"iteration {it}: singular Newton Jacobian, falling back to Picard")
                newton = False
            else:
                alpha = 1.0
                for _ in range(30):
                    trial = op.pack(op.unpack(u) + alpha * delta, u)
                    tres = op.residual(trial, eps, gam, dlt)
                    tnorm = float(np.max(np.abs(tres)))
                    if np.isfinite(tnorm) and tnorm < (1 - 1e-4 * alpha) * rnorm:
                        break
                    alpha *= 0.5
                else:
                    trial = None
                if trial is None:
                    notes.append(f"iteration {it}: Newton line search failed, falling back to Picard")
                    newton = False
                else:
                    n_newton += 1
                    upd = alpha * float(np.max(np.abs(delta))) / scale
                    u, res, rnorm = trial, tres, tnorm
                    step_done = True
                    if upd < cfg.update_tol and rnorm >= cfg.residual_tol:
                        history.append(rnorm)
                        notes.append(f"iteration {it}: update below tolerance, residual stagnated")
                        return u, False, it, n_newton
        if not step_done:
            frozen = op.coefficients(u, eps, gam, dlt)
            mat = op.jacobian(u, eps, gam, dlt, frozen)
            delta = _solve_linear(mat, -res.ravel())
            if delta is None:
                history.append(rnorm)
                notes.append(f"iteration {it}: singular Picard matrix")
                return u, False, it, n_newton
            u = op.pack(op.unpack(u) + cfg.relaxation * delta, u)
            res = op.residual(u, eps, gam, dlt)
            rnorm = float(np.max(np.abs(res)))
            if float(np.max(np.abs(delta))) / scale < cfg.newton_switch:
                newton = True
        history.append(rnorm)
        if not np.isfinite(rnorm):
            notes.append(f"iteration {it}: non-finite residual")
            return u, False, it, n_newton
    return u, rnorm < cfg.residual_tol, it, n_newton


_STAGE_ITER = 40


def solve_mbvp(
    cfg: SolverConfig,
    metric: AmbientMetric,
    grid: CurvilinearGrid,
    initial: np.ndarray | None = None,
    raise_on_failure: bool = False,
    epsilon_ramp: Sequence[float] = (),
    max_refinements: int = 8,
) -> SolveResult:
    """Solve the regularized boundary-value problem on ``grid``.

    ``epsilon_ramp`` lists larger regularization values solved first as warm
    starts (homotopy in ``eps``); only the final stage must meet the tolerance.
    A stage that fails after a converged one is retried through the geometric
    mean of the two values, at most ``max_refinements`` times in total.
    """
    _check_grid(grid)
    tau = cfg.effective_tau
    if cfg.mode == "paper" and grid.domain is not None:
        if abs(grid.domain.r_out - cfg.r_eps) > 1e-9 * cfg.r_eps:
            raise ConfigError(f"paper mode needs a grid with outer radius {cfg.r_eps}")
    op = FVOperator(metric, grid)
    u = dirichlet_data(grid, tau, initial)
    history: list[float] = []
    notes: list[str] = []
    stage_its: list[int] = []
    n_newton_total = 0
    pending = [e for e in epsilon_ramp if e > cfg.epsilon] + [cfg.epsilon]
    last_good: float | None = None
    refinements = 0
    ok = False
    while pending:
        eps = pending[0]
        sub = cfg if eps == cfg.epsilon else replace(
            cfg, epsilon=eps, mode="fixed", tau=tau, r_out=grid.domain.r_out if grid.domain else cfg.r_out)
        if len(pending) > 1 or (last_good is not None and refinements < max_refinements):
            # a failure here can still be repaired, so do not spend the full budget
            sub = replace(sub, max_iter=min(sub.max_iter, _STAGE_ITER))
        u_try, ok, its, nn = _newton_loop(op, u, sub, history, notes)
        stage_its.append(its)
        n_newton_total += nn
        if ok:
            u, last_good = u_try, eps
            pending.pop(0)
            continue
        if last_good is not None and refinements < max_refinements:
            # failed stage: retry from the last converged state through an intermediate eps
            mid = math.sqrt(last_good * eps)
            notes.append(f"stage eps={eps:.6g} failed; inserting eps={mid:.6g}")
            pending.insert(0, mid)
            refinements += 1
            continue
        if eps != cfg.epsilon:
            pending.pop(0)
            continue
        u = u_try
        break
    field_ = ScalarField(grid, u, metric, op)
    result = SolveResult(
        u=field_,
        config=cfg,
        converged=ok,
        residual_history=history,
        iterations=sum(stage_its),
        newton_iterations=n_newton_total,
        stage_iterations=stage_its,
        notes=notes,
    )
    result.barrier = barrier_check(result, cfg)
    if not ok and raise_on_failure:
        raise SolverError(f"no convergence after {result.iterations} iterations "
                          f"(residual {result.final_residual:.3e})", history)
    return result


def _check_grid(grid: CurvilinearGrid) -> None:
    present = set(np.unique(grid.tags).tolist())
    needed = {int(Tag.INNER_DIRICHLET), int(Tag.OUTER_DIRICHLET), int(Tag.SUPPORT_NEUMANN), int(Tag.AXIS)}
    if not needed <= present:
        raise ConfigError("grid lacks one of the four boundary tags")


def barrier_check(result: SolveResult, cfg: SolverConfig | None = None) -> BarrierReport:
    """Diagnostics against the logarithmic subsolution and the gradient bounds."""
    cfg = result.config if cfg is None else cfg
    grid = result.u.grid
    u = result.u.values
    tau = cfg.effective_tau
    gamma_off = grid.domain.gamma if grid.domain is not None else 0.0
    r_eps = grid.domain.r_out if grid.domain is not None else cfg.r_eps
    dist = np.hypot(grid.rho, grid.z + gamma_off)
    with np.errstate(divide="ignore"):
        barrier = 0.25 * (np.log(dist) - np.log(r_eps) + 4.0 * tau)
    grad = result.u.grad_norm()
    r_inner = float(np.max(dist[0]))
    applicable = tau <= 0.25 * np.log(r_eps / r_inner) * (1 + 1e-12)
    return BarrierReport(
        subsolution_violation=float(max(0.0, np.max(barrier - u))),
        decay_constant=float(np.max(grad * np.hypot(grid.rho, grid.z))),
        upper_excess=float(np.max(u - tau)),
        lower_excess=float(np.max(-u)),
        outer_gradient=float(np.max(grad[-1])),
        r_eps=float(r_eps),
        applicable=bool(applicable),
    )


def _transfer(prev: SolveResult, grid: CurvilinearGrid, tau: float) -> np.ndarray:
    """Warm start on ``grid`` from a previous solution via logical coordinates."""
    old = prev.u
    if old.grid.shape == grid.shape:
        vals = old.values.copy()
    else:
        from scipy.interpolate import RegularGridInterpolator

        interp = RegularGridInterpolator((old.grid.s, old.grid.eta), old.values)
        ss, ee = np.meshgrid(grid.s, grid.eta, indexing="ij")
        vals = interp(np.stack([ss, ee], axis=-1))
    old_tau = prev.tau
    if old_tau > 0:
        vals = vals * (tau / old_tau)
    return vals


def continuation_solve(
    cfg: SolverConfig,
    metric: AmbientMetric,
    grid: CurvilinearGrid | Callable[[SolverConfig], CurvilinearGrid],
    initial: np.ndarray | None = None,
) -> list[SolveResult]:
    """Solve along ``cfg.epsilon_schedule`` with warm starts.

    ``grid`` may be a callable building a grid per stage (needed in paper
    mode where the outer radius follows ``eps``).  A failed stage ends the
    schedule; the partial sequence is returned.
    """
    schedule = list(cfg.epsilon_schedule) or [cfg.epsilon]
    results: list[SolveResult] = []
    guess = initial
    for eps in schedule:
        stage_cfg = cfg.at_epsilon(eps)
        g = grid(stage_cfg) if callable(grid) else grid
        if results:
            guess = _transfer(results[-1], g, stage_cfg.effective_tau)
        res = solve_mbvp(stage_cfg, metric, g, guess)
        results.append(res)
        if not res.converged:
            log.warning("continuation stopped at eps=%g (residual %.3e)", eps, res.final_residual)
            break
    return results


def max_gradient(results: Sequence[SolveResult]) -> float:
    """Largest nodal ``|grad u|_g`` over a sequence of solves."""
    return float(max(np.max(r.u.grad_norm()) for r in results))


def paper_grid_factory(domain_builder: Callable[[float], MeridianDomain], n_i: int, n_j: int,
                       stretch: float | None = None) -> Callable[[SolverConfig], CurvilinearGrid]:
    """Per-stage grid builder for paper mode: the outer arc sits at ``1/(4 eps)``."""

    def make(cfg: SolverConfig) -> CurvilinearGrid:
        dom = domain_builder(cfg.r_eps)
        st = dom.r_out / dom.d_in if stretch is None else stretch
        return transfinite_grid(dom, n_i, n_j, st)

    return make
