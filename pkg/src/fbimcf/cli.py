"""Command-line experiment runner.

Usage::

    fbimcf SUBCOMMAND (CONFIG | --preset NAME) [--out DIR]

Subcommands: ``solve``, ``flow``, ``masses``, ``smooth``, ``verify`` and
``convergence``.  Exit codes: 0 success, 1 verification failure, 2 config
error, 3 solver non-convergence.  The config format and keys are documented
in ``README.md``; every output path is relative to the output directory.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import GeometryError, catenoid_support, euclidean_halfspace, flat_support, schwarzschild_halfspace
from .levelset import LevelSetError, extract_level, flow_table, write_contours, write_flow_csv
from .mass import MassError, adm_mass, exterior_mass, support_chart
from .mesh import MeshError, build_domain, flat_disc, hemisphere, neck_disc, transfinite_grid
from .smoothflow import (
    SmoothFlowError,
    evolve,
    half_ellipse_curve,
    hemisphere_curve,
    run_catenoid_singularity,
)
from .solver import ConfigError, SolverConfig, solve_mbvp
from .verify import Check, VerificationReport, check_barriers, check_blowdown, check_flow, check_hemisphere, check_penrose

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3

SCHEMA_VERSION = 1
PRESETS = ("hemisphere", "schwarzschild", "catenoid")


class NonConvergence(RuntimeError):
    """The solver did not reach its tolerance."""


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------


def _floats(text: str) -> tuple[float, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(v) for v in text.split(","))


def _ints(text: str) -> tuple[int, ...]:
    text = text.strip()
    return tuple(int(v) for v in text.split(",")) if text else ()


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


def _schedule(text: str) -> tuple[float, ...]:
    """``a:b:step`` (inclusive of ``b``) or a comma list."""
    if ":" in text:
        a, b, step = (float(v) for v in text.split(":"))
        if not step > 0:
            raise ValueError("schedule step must be positive")
        n = int(math.floor((b - a) / step + 1e-9))
        return tuple(round(a + k * step, 12) for k in range(n + 1))
    return _floats(text)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    output_dir: str = "out"
    # geometry
    metric: str = "euclidean"
    metric_mass: float = 1.0
    support: str = "plane"
    support_mass: float = 1.0
    support_offset: float = 0.0
    initial: str = "hemisphere"
    initial_radius: float = 1.0
    initial_height: float | None = None
    # grid
    grid_size: int = 128
    grid_ni: int | None = None
    grid_nj: int | None = None
    grid_stretch: float | None = None
    # solver
    mode: str = "fixed"
    epsilon: float = 0.0125
    epsilon_ramp: tuple[float, ...] = ()
    tau: float | None = None
    r_out: float = 16.0
    gamma: float = 1.0
    residual_tol: float = 1e-9
    update_tol: float = 1e-10
    max_iter: int = 200
    relaxation: float = 0.7
    strategy: str = "newton"
    grad_floor: float = 1e-10
    # leaves
    t_schedule: tuple[float, ...] = (0.0, 0.5, 1.0, 2.0)
    lower_margin: float = 0.0
    upper_margin: float = 1.0
    center_offset: float = 0.0
    # masses
    mass_radii: tuple[float, ...] = (50.0, 100.0, 200.0, 400.0)
    exterior_radii: tuple[float, ...] = (10.0, 100.0, 1000.0)
    # verification
    verify_tolerance_scale: float = 1.0
    verify_area_tol: float = 0.02
    verify_mass_tol: float = 1e-2
    verify_penrose_tol: float = 1e-2
    verify_geroch_scale: float = 1.0
    verify_hemisphere_tol: float = 0.05
    verify_hawking_zero_tol: float = 0.02
    verify_willmore_tol: float = 0.1
    verify_penrose: bool | None = None
    verify_expect_equality: bool = False
    verify_initial_area: float | None = None
    verify_blowdown: bool = True
    verify_blowdown_t_from: float = 3.0
    verify_blowdown_tol: float = 0.05
    verify_eccentricity_bound: float = 1.05
    verify_eccentricity_tol: float = 1e-2
    verify_enforce_shape: bool = True
    verify_decay_bound: float = 3.0
    verify_subsolution_constant: float = 1.0
    # smooth flow
    smooth_initial: str = "hemisphere"
    smooth_vertices: int = 200
    smooth_dt: float = 1e-3
    smooth_cfl: float = 0.5
    smooth_t_end: float = 1.0
    smooth_epsilon: float = 0.0
    smooth_gamma: float = 1.0
    smooth_radius: float = 1.0
    smooth_ellipse_a: float = 1.0
    smooth_ellipse_b: float = 0.5
    smooth_cap_height: float = 0.05
    smooth_h0_factor: float = 1.2
    smooth_snapshots: tuple[float, ...] = ()
    # refinement study
    convergence_levels: tuple[int, ...] = (32, 64, 128)

    def __post_init__(self) -> None:
        if self.metric not in ("euclidean", "schwarzschild"):
            raise ConfigError(f"unknown metric {self.metric!r}")
        if self.support not in ("plane", "catenoid"):
            raise ConfigError(f"unknown support {self.support!r}")
        if self.initial not in ("hemisphere", "neck_disc", "flat_disc"):
            raise ConfigError(f"unknown initial surface {self.initial!r}")
        if self.initial == "neck_disc" and self.support != "catenoid":
            raise ConfigError("a neck disc start needs the catenoid support")
        if self.support == "catenoid" and self.metric != "euclidean":
            raise ConfigError("the catenoid support is only defined in the Euclidean half-space")
        if self.smooth_initial not in ("hemisphere", "half_ellipse", "orthogonal_cap"):
            raise ConfigError(f"unknown smooth initial curve {self.smooth_initial!r}")
        if self.smooth_initial == "orthogonal_cap" and self.support != "catenoid":
            raise ConfigError("an orthogonal cap needs the catenoid support")
        if self.initial == "hemisphere" and (self.support != "plane" or self.support_offset != 0.0):
            raise ConfigError("a hemisphere start needs the plane support z = 0")
        if self.smooth_initial != "orthogonal_cap" and self.support != "plane":
            raise ConfigError("hemisphere and half-ellipse curves need the plane support")
        if min(self.ni, self.nj) < 4:
            raise ConfigError("grid needs at least 4 nodes per direction")
        if not self.t_schedule:
            raise ConfigError("t_schedule is empty")
        if self.verify_tolerance_scale < 0:
            raise ConfigError("verify_tolerance_scale must be non-negative")
        self.solver_config()  # validates the solver part

    @property
    def ni(self) -> int:
        return self.grid_ni if self.grid_ni is not None else self.grid_size

    @property
    def nj(self) -> int:
        return self.grid_nj if self.grid_nj is not None else self.grid_size

    @property
    def exact_hemisphere(self) -> bool:
        """Euclidean unit hemisphere on the plane ``z = 0``: ``u = 2 log |x|`` is exact."""
        return (self.metric == "euclidean" and self.support == "plane" and self.support_offset == 0.0
                and self.initial == "hemisphere" and self.initial_radius == 1.0)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            epsilon=self.epsilon, gamma=self.gamma, tau=self.tau, r0=self.initial_radius if self.initial == "hemisphere" else 1.0,
            r_out=self.r_out, mode=self.mode, relaxation=self.relaxation, residual_tol=self.residual_tol,
            update_tol=self.update_tol, max_iter=self.max_iter, grad_floor=self.grad_floor, strategy=self.strategy,
        )


_PARSERS = {
    "str": str,
    "int": int,
    "float": float,
    "bool": _bool,
    "float | None": _opt_float,
    "int | None": lambda s: None if s.strip().lower() in ("", "none", "auto") else int(s),
    "bool | None": lambda s: None if s.strip().lower() in ("", "none", "auto") else _bool(s),
    "tuple[float, ...]": _floats,
    "tuple[int, ...]": _ints,
}
_SCHEDULE_KEYS = {"t_schedule"}


def parse_config(text: str) -> ExperimentConfig:
    """Parse flat ``key = value`` lines; ``#`` starts a comment; ``schema=1`` is required."""
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    values: dict[str, object] = {}
    schema = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, val = (p.strip() for p in line.split("=", 1))
        if key == "schema":
            schema = val
            continue
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _schedule(val) if key in _SCHEDULE_KEYS else _PARSERS[types[key]](val)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    if schema is None:
        raise ConfigError("missing schema header (schema=1)")
    if schema != str(SCHEMA_VERSION):
        raise ConfigError(f"unsupported schema {schema!r} (expected {SCHEMA_VERSION})")
    try:
        return ExperimentConfig(**values)
    except (GeometryError, MeshError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r} (choose from {', '.join(PRESETS)})")
    return resources.files("fbimcf").joinpath("presets").joinpath(f"{name}.cfg").read_text()


# ---------------------------------------------------------------------------
# pipelines
# ---------------------------------------------------------------------------


def build_metric(cfg: ExperimentConfig):
    if cfg.metric == "schwarzschild":
        return schwarzschild_halfspace(cfg.metric_mass)
    return euclidean_halfspace()


def build_support(cfg: ExperimentConfig):
    if cfg.support == "catenoid":
        return catenoid_support(cfg.support_mass, cfg.support_offset)
    return flat_support(cfg.support_offset)


def build_initial(cfg: ExperimentConfig, support):
    if cfg.initial == "neck_disc":
        return neck_disc(support, cfg.initial_height)
    if cfg.initial == "flat_disc":
        return flat_disc(cfg.initial_radius, cfg.support_offset if cfg.initial_height is None else cfg.initial_height)
    return hemisphere(cfg.initial_radius)


def build_grid(cfg: ExperimentConfig, ni: int | None = None, nj: int | None = None):
    support = build_support(cfg)
    r_out = cfg.solver_config().r_eps
    try:
        domain = build_domain(build_initial(cfg, support), support, r_out)
        stretch = r_out / domain.d_in if cfg.grid_stretch is None else cfg.grid_stretch
        return transfinite_grid(domain, ni or cfg.ni, nj or cfg.nj, stretch)
    except (MeshError, GeometryError) as exc:
        raise ConfigError(str(exc)) from None


def run_solve(cfg: ExperimentConfig, ni: int | None = None, nj: int | None = None, require: bool = True):
    grid = build_grid(cfg, ni, nj)
    result = solve_mbvp(cfg.solver_config(), build_metric(cfg), grid, epsilon_ramp=cfg.epsilon_ramp)
    if require and not result.converged:
        raise NonConvergence(f"solver stopped at residual {result.final_residual:.3e} "
                             f"after {result.iterations} iterations")
    return result, grid


def run_flow(cfg: ExperimentConfig, result):
    return flow_table(result.u, cfg.t_schedule, build_metric(cfg), build_support(cfg), cfg.center_offset,
                      result.tau, cfg.lower_margin, cfg.upper_margin)


def run_masses(cfg: ExperimentConfig) -> dict:
    """ADM mass of the metric (or of the support chart) and the exterior mass."""
    out = {}
    if cfg.support == "catenoid":
        support = build_support(cfg)
        out["adm"] = adm_mass(support_chart(support, cfg.mass_radii), cfg.mass_radii)
        out["exterior"] = exterior_mass(support, cfg.exterior_radii)
    else:
        out["adm"] = adm_mass(build_metric(cfg), cfg.mass_radii)
    return out


def run_smooth(cfg: ExperimentConfig):
    if cfg.smooth_initial == "orthogonal_cap":
        return run_catenoid_singularity(cfg.support_mass, cfg.smooth_cap_height, cfg.smooth_h0_factor,
                                        cfg.smooth_vertices, cfg.smooth_dt, cfg.smooth_t_end, cfg.smooth_cfl)
    if cfg.smooth_initial == "half_ellipse":
        curve = half_ellipse_curve(cfg.smooth_ellipse_a, cfg.smooth_ellipse_b, cfg.smooth_vertices)
    else:
        curve = hemisphere_curve(cfg.smooth_radius, cfg.smooth_vertices, build_support(cfg))
    return evolve(curve, cfg.smooth_t_end, cfg.smooth_dt, cfg.smooth_cfl, cfg.smooth_epsilon, cfg.smooth_gamma,
                  snapshot_times=cfg.smooth_snapshots)


def verification_report(cfg: ExperimentConfig, result, grid, table, masses: dict | None) -> VerificationReport:
    """All checks that apply to the configured geometry, tolerances scaled by ``verify_tolerance_scale``."""
    s = cfg.verify_tolerance_scale
    h = grid.relative_mesh_size()
    rep = VerificationReport()
    rep.extend(check_flow(table, cfg.verify_area_tol * s, cfg.verify_mass_tol * s, h, cfg.epsilon,
                          cfg.verify_initial_area, cfg.verify_geroch_scale * s))
    rep.extend(check_barriers(result, h, cfg.verify_subsolution_constant * s))
    rows = [d for d in table if d.error is None and np.isfinite(d.area)]
    if cfg.exact_hemisphere:
        rep.extend(check_hemisphere(result.u, cfg.verify_hemisphere_tol * s))
        dev = max((abs(d.hawking_mass) for d in rows), default=math.inf)
        rep.add(Check("hawking-zero", dev, cfg.verify_hawking_zero_tol * s))
    if cfg.metric == "euclidean" and cfg.support == "plane":
        low = min((d.willmore_euclidean for d in rows), default=math.inf)
        rep.add(Check("willmore-floor", 8.0 * math.pi - low, cfg.verify_willmore_tol * s, "8 pi - min W_e"))
    penrose = cfg.verify_penrose if cfg.verify_penrose is not None else not cfg.exact_hemisphere
    if penrose and masses is not None and rows:
        sigma0 = min(rows, key=lambda d: d.t)
        rep.extend(check_penrose(masses["adm"], sigma0, rows, cfg.verify_penrose_tol * s, masses.get("exterior"),
                                 cfg.verify_expect_equality))
    if cfg.verify_blowdown:
        rep.extend(check_blowdown(table, result.u, cfg.verify_blowdown_t_from, cfg.verify_blowdown_tol * s,
                                  cfg.verify_eccentricity_bound, cfg.verify_eccentricity_tol * s,
                                  decay_bound=cfg.verify_decay_bound, center_offset=cfg.center_offset,
                                  enforce_shape=cfg.verify_enforce_shape))
    return rep


def convergence_rows(cfg: ExperimentConfig) -> list[dict]:
    """One solve per level; errors against ``2 log |x|`` where that is exact."""
    rows = []
    for n in cfg.convergence_levels:
        result, grid = run_solve(cfg, n, n, require=False)
        b = result.barrier
        h = grid.relative_mesh_size()
        err = math.nan
        if cfg.exact_hemisphere and result.converged:
            err = check_hemisphere(result.u).checks[0].measured
        rows.append({
            "n": n,
            "h": h,
            "converged": int(result.converged),
            "iterations": result.iterations,
            "residual": result.final_residual,
            "hemisphere_error": err,
            "subsolution_applicable": int(b.applicable),
            "subsolution_violation": b.subsolution_violation if b.applicable else math.nan,
            "subsolution_constant": b.subsolution_violation / h if b.applicable else math.nan,
            "decay_constant": b.decay_constant,
            "outer_constant": b.outer_constant,
            "max_u_minus_tau": b.upper_excess,
            "max_minus_u": b.lower_excess,
        })
    return rows


# ---------------------------------------------------------------------------
# writers
# ---------------------------------------------------------------------------


def _r(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_masses_csv(masses: dict, path: Path) -> None:
    est = masses["adm"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["radius", "hemisphere_term", "circle_term", "partial_mass"])
        for row in zip(est.radii, est.hemisphere, est.circle, est.partial):
            w.writerow([_r(v) for v in row])
        fh.write(f"# adm_mass={_r(est.value)} order={est.order} error={_r(est.error)} residual={_r(est.residual)}\n")
        if "exterior" in masses:
            ext = masses["exterior"]
            fh.write(f"# exterior_mass={_r(ext.value)} order={ext.order} error={_r(ext.error)}\n")


def write_rows(rows: Sequence[dict], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(rows[0]))
        for row in rows:
            w.writerow([_r(v) for v in row.values()])


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _cmd_solve(cfg, out: Path) -> int:
    result, grid = run_solve(cfg, require=False)
    result.u.dump(out / "field.txt")
    lines = [f"converged {int(result.converged)}", f"iterations {result.iterations}",
             f"final_residual {result.final_residual:.6e}", f"relative_mesh_size {grid.relative_mesh_size():.6e}"]
    lines += result.barrier.lines() + [f"note {n}" for n in result.notes]
    (out / "barrier.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    if not result.converged:
        raise NonConvergence(f"residual {result.final_residual:.3e}")
    return EXIT_OK


def _cmd_flow(cfg, out: Path) -> int:
    result, _ = run_solve(cfg)
    table = run_flow(cfg, result)
    write_flow_csv(table, out / "flow.csv")
    curves = []
    for d in table:
        if d.error is None:
            try:
                curves.append(extract_level(result.u, d.t))
            except LevelSetError:
                pass
    write_contours(curves, out / "contours.txt")
    for d in table:
        print(f"t={d.t:g} area={d.area:.6g} m_H={d.hawking_mass:.6g}" + (f" error={d.error}" if d.error else ""))
    return EXIT_OK


def _cmd_masses(cfg, out: Path) -> int:
    masses = run_masses(cfg)
    write_masses_csv(masses, out / "masses.csv")
    for key, est in masses.items():
        print(f"{key}_mass {est.value:.9g} (order {est.order}, error {est.error:.3e})")
    return EXIT_OK


def _cmd_smooth(cfg, out: Path) -> int:
    rep = run_smooth(cfg)
    rep.write_csv(out / "smooth.csv")
    rep.final.write(out / "smooth_final.txt")
    for k, snap in enumerate(rep.snapshots):
        snap.write(out / f"smooth_snapshot_{k:03d}.txt")
    lines = [f"stop_reason {rep.reason}", f"stop_time {rep.stop_time!r}", f"sup_H_initial {float(rep.sup_h[0])!r}",
             f"sup_H_max {float(np.max(rep.sup_h))!r}", f"sup_H_increase {float(rep.sup_h_increase())!r}",
             f"contact_cosine {float(rep.contact_cosine)!r}"]
    if rep.h0 is not None and math.isfinite(rep.h0):
        lines += [f"comparison_H0 {rep.h0!r}", f"comparison_radius {rep.comparison_radius!r}",
                  f"final_max_radius {rep.final.max_radius()!r}", f"reached_comparison {int(rep.reached_comparison())}"]
    (out / "smooth_summary.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


def _cmd_verify(cfg, out: Path) -> int:
    result, grid = run_solve(cfg)
    table = run_flow(cfg, result)
    write_flow_csv(table, out / "flow.csv")
    penrose = cfg.verify_penrose if cfg.verify_penrose is not None else not cfg.exact_hemisphere
    masses = run_masses(cfg) if penrose else None
    rep = verification_report(cfg, result, grid, table, masses)
    (out / "report.txt").write_text(rep.text())
    sys.stdout.write(rep.text())
    return rep.exit_code()


def _cmd_convergence(cfg, out: Path) -> int:
    rows = convergence_rows(cfg)
    write_rows(rows, out / "convergence.csv")
    for row in rows:
        print(" ".join(f"{k}={_r(v)}" for k, v in row.items()))
    return EXIT_OK if all(r["converged"] for r in rows) else EXIT_NONCONVERGED


COMMANDS = {
    "solve": _cmd_solve,
    "flow": _cmd_flow,
    "masses": _cmd_masses,
    "smooth": _cmd_smooth,
    "verify": _cmd_verify,
    "convergence": _cmd_convergence,
}


def run(subcommand: str, cfg: ExperimentConfig, out: str | Path | None = None) -> int:
    """Run one subcommand and return its exit code."""
    out_dir = Path(cfg.output_dir if out is None else out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[subcommand](cfg, out_dir)
    except NonConvergence as exc:
        log.error("non-convergence: %s", exc)
        return EXIT_NONCONVERGED
    except (ConfigError, MassError, SmoothFlowError) as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="fbimcf", description="Free-boundary IMCF experiments.")
    parser.add_argument("subcommand", choices=sorted(COMMANDS))
    parser.add_argument("config", nargs="?", help="config file (flat key=value, schema=1)")
    parser.add_argument("--preset", choices=PRESETS, help="use a bundled config")
    parser.add_argument("--out", help="output directory (overrides output_dir)")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    parser.add_argument("--tolerance-scale", type=float, help="scale every verification tolerance")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if (args.config is None) == (args.preset is None):
        log.error("give exactly one of CONFIG or --preset")
        return EXIT_CONFIG
    try:
        if args.preset:
            text = preset_text(args.preset)
        else:
            try:
                text = Path(args.config).read_text()
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
        extra = list(args.set)
        if args.tolerance_scale is not None:
            extra.append(f"verify_tolerance_scale={args.tolerance_scale!r}")
        cfg = parse_config(_override(text, extra))
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    return run(args.subcommand, cfg, args.out)


def _override(text: str, pairs: Sequence[str]) -> str:
    """Replace or append ``key=value`` lines."""
    if not pairs:
        return text
    keys = {}
    for p in pairs:
        if "=" not in p:
            raise ConfigError(f"override {p!r} is not key=value")
        k, v = (s.strip() for s in p.split("=", 1))
        keys[k] = v
    lines = []
    for raw in text.splitlines():
        k = raw.split("#", 1)[0].split("=", 1)[0].strip()
        if k in keys:
            continue
        lines.append(raw)
    lines += [f"{k}={v}" for k, v in keys.items()]
    return "\n".join(lines) + "\n"


if __name__ == "__main__":
    sys.exit(main())
