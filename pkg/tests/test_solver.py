import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fbimcf.geometry import euclidean_halfspace, flat_support
from fbimcf.mesh import build_domain, hemisphere, transfinite_grid
from fbimcf.solver import (
    ConfigError,
    FVOperator,
    SolverConfig,
    SolverError,
    assemble_residual,
    continuation_solve,
    max_gradient,
    paper_grid_factory,
    solve_mbvp,
)

EUCLID = euclidean_halfspace()

# radial ODE oracle (tests/oracles/radial_ode.py): eps, r_out, tau -> {r: u(r)}
RADIAL = {
    (0.1, 4.0, 0.3): {1.5: 0.2374788667308499, 2.0: 0.2622213712798472, 3.0: 0.28672759581496843},
    (0.05, 16.0, 4.5): {1.5: 0.8101474710454215, 2.0: 1.3844138225234617, 3.0: 2.1921947472555576},
}


def _grid(n, r_out=4.0, radius=1.0, stretch=None):
    dom = build_domain(hemisphere(radius), flat_support(), r_out)
    return transfinite_grid(dom, n, n, r_out / radius if stretch is None else stretch)


def _rate(errs):
    return math.log2(errs[-2] / errs[-1])


def test_manufactured_residual_second_order():
    eps = 0.5
    errs = []
    for n in (32, 64, 128):
        g = _grid(n, stretch=1.0)
        r2 = g.rho**2 + g.z**2
        s = np.sqrt(eps**2 + 4 * r2)
        exact = 6 / s - 8 * r2 / s**3 - np.sqrt(4 * r2 + 1e-20)
        res = assemble_residual(r2, SolverConfig(epsilon=eps, tau=1.0, r_out=4.0), EUCLID, g)
        errs.append(np.max(np.abs(res - exact)[1:-1]))
    assert errs[-1] < 1e-6
    assert _rate(errs) > 1.7


def test_constant_field_residual_is_floor():
    g = _grid(16)
    cfg = SolverConfig(epsilon=0.1, tau=1.0, r_out=4.0)
    res = assemble_residual(np.ones(g.rho.shape), cfg, EUCLID, g)
    assert np.max(np.abs(res)) <= cfg.grad_floor ** cfg.gamma * (1 + 1e-9)


def test_exact_hemisphere_solution_residual_vanishes():
    errs = []
    for n in (32, 64, 128):
        g = _grid(n)
        u = 2 * np.log(np.hypot(g.rho, g.z))
        errs.append(np.max(np.abs(assemble_residual(u, SolverConfig(epsilon=0.0, tau=1.0, r_out=4.0), EUCLID, g))))
    assert errs[-1] < 5e-4
    assert _rate(errs) > 1.8


def test_jacobian_matches_finite_differences():
    g = _grid(8)
    op = FVOperator(EUCLID, g)
    rng = np.random.default_rng(1)
    u = np.log(np.hypot(g.rho, g.z)) + 0.05 * rng.random(g.rho.shape)
    jac = op.jacobian(u, 0.1, 1.0, 1e-10).toarray()
    base = op.residual(u, 0.1).ravel()
    fd = np.empty_like(jac)
    h = 1e-7
    for k in range(op.n_unknown):
        v = op.unpack(u).copy()
        v[k] += h
        fd[:, k] = (op.residual(op.pack(v, u), 0.1).ravel() - base) / h
    assert np.max(np.abs(jac - fd)) < 1e-5 * max(1.0, np.max(np.abs(jac)))


@pytest.mark.parametrize("key", sorted(RADIAL))
def test_matches_radial_oracle(key):
    eps, r_out, tau = key
    errs = []
    for n in (32, 64):
        g = _grid(n, r_out)
        res = solve_mbvp(SolverConfig(epsilon=eps, tau=tau, r_out=r_out), EUCLID, g, epsilon_ramp=(0.2, 0.1))
        assert res.converged
        r = np.hypot(g.rho[:, 0], g.z[:, 0])
        errs.append(max(abs(np.interp(x, r, res.u.values[:, 0]) - v) for x, v in RADIAL[key].items()))
    assert errs[-1] < 5e-3
    assert errs[-1] < errs[0]


def test_solution_respects_barriers():
    g = _grid(32, 16.0)
    res = solve_mbvp(SolverConfig(epsilon=0.05, tau=4.5, r_out=16.0), EUCLID, g, epsilon_ramp=(0.1,))
    assert res.converged
    assert np.min(res.u.values) >= 0.0
    assert np.max(res.u.values) <= 4.5
    assert res.final_residual < 1e-9


def test_paper_mode_rejects_large_tau():
    with pytest.raises(ConfigError):
        SolverConfig(epsilon=1 / 16, mode="paper", tau=1.0)


def test_paper_mode_couples_outer_radius():
    cfg = SolverConfig(epsilon=1 / 16, mode="paper")
    assert cfg.r_eps == 4.0
    assert cfg.effective_tau == pytest.approx(0.25 * math.log(4.0))


def test_paper_mode_needs_matching_grid():
    with pytest.raises(ConfigError):
        solve_mbvp(SolverConfig(epsilon=1 / 16, mode="paper"), EUCLID, _grid(8, 16.0))


@pytest.mark.parametrize("kwargs", [dict(epsilon=-1.0, tau=1.0), dict(gamma=0.5, tau=1.0), dict(tau=None),
                                    dict(tau=1.0, relaxation=0.0), dict(tau=1.0, strategy="bfgs"),
                                    dict(tau=1.0, epsilon_schedule=(0.1, 0.2))])
def test_invalid_configs_rejected(kwargs):
    with pytest.raises(ConfigError):
        SolverConfig(**kwargs)


def test_non_convergence_reported():
    g = _grid(16, 16.0)
    cfg = SolverConfig(epsilon=0.0125, tau=4.5, r_out=16.0, max_iter=2)
    res = solve_mbvp(cfg, EUCLID, g)
    assert not res.converged
    with pytest.raises(SolverError):
        solve_mbvp(cfg, EUCLID, g, raise_on_failure=True)


def test_paper_mode_subsolution_and_outer_gradient():
    cfg = SolverConfig(epsilon=1 / 16, mode="paper")
    res = solve_mbvp(cfg, EUCLID, _grid(64), epsilon_ramp=(0.1,))
    b = res.barrier
    assert res.converged and b.applicable
    assert b.subsolution_violation <= 1e-12
    assert b.outer_constant <= 2.0


def test_continuation_is_cauchy_with_bounded_gradient():
    cfg = SolverConfig(epsilon=0.025, tau=0.3, r_out=4.0, epsilon_schedule=(0.2, 0.1, 0.05, 0.025))
    g = _grid(32)
    stages = continuation_solve(cfg, EUCLID, g)
    assert len(stages) == 4 and all(s.converged for s in stages)
    diffs = [np.max(np.abs(a.u.values - b.u.values)) for a, b in zip(stages, stages[1:])]
    assert all(b < a for a, b in zip(diffs, diffs[1:]))
    assert max_gradient(stages) < 4.0


def test_paper_continuation_rebuilds_grid():
    make = paper_grid_factory(lambda r: build_domain(hemisphere(1.0), flat_support(), r), 24, 24)
    cfg = SolverConfig(epsilon=1 / 16, mode="paper", epsilon_schedule=(1 / 8, 1 / 16))
    stages = continuation_solve(cfg, EUCLID, make)
    assert [s.u.grid.domain.r_out for s in stages] == [2.0, 4.0]


def test_monotone_in_dirichlet_data():
    g = _grid(24)
    lo = solve_mbvp(SolverConfig(epsilon=0.1, tau=0.25, r_out=4.0), EUCLID, g)
    hi = solve_mbvp(SolverConfig(epsilon=0.1, tau=0.35, r_out=4.0), EUCLID, g)
    assert lo.converged and hi.converged
    # the exact solutions nearly coincide inside the boundary layer at |x| = 1
    outside = np.hypot(g.rho, g.z) >= 1.5
    assert np.all((hi.u.values - lo.u.values)[outside] > 0.0)


def test_decay_constant_tends_to_two():
    consts = []
    for n in (32, 64):
        g = _grid(n, 16.0)
        res = solve_mbvp(SolverConfig(epsilon=0.0125, tau=4.5, r_out=16.0), EUCLID, g, epsilon_ramp=(0.1, 0.05, 0.025))
        consts.append(res.barrier.decay_constant)
    assert abs(consts[-1] - 2.0) < abs(consts[0] - 2.0)
    assert consts[-1] == pytest.approx(2.0, abs=0.15)


@settings(max_examples=5, deadline=None)
@given(st.floats(0.5, 4.0))
def test_scale_covariance(lam):
    n, r_out, eps, tau = 16, 4.0, 0.1, 0.3
    base = solve_mbvp(SolverConfig(epsilon=eps, tau=tau, r_out=r_out), EUCLID, _grid(n, r_out, 1.0, 4.0))
    dil = solve_mbvp(SolverConfig(epsilon=eps / lam, tau=tau, r_out=lam * r_out, r0=lam), EUCLID,
                     _grid(n, lam * r_out, lam, 4.0))
    assert base.converged and dil.converged
    assert np.allclose(dil.u.grid.rho, lam * base.u.grid.rho, atol=1e-12 * lam * r_out)
    assert np.max(np.abs(dil.u.values - base.u.values)) < 1e-7


def test_field_dump(tmp_path):
    g = _grid(8)
    res = solve_mbvp(SolverConfig(epsilon=0.2, tau=0.3, r_out=4.0), EUCLID, g)
    path = tmp_path / "field.txt"
    res.u.dump(path)
    rows = [ln.split() for ln in path.read_text().splitlines() if not ln.startswith("#")]
    assert len(rows) == 81 and len(rows[0]) == 6
