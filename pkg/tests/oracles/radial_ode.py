"""Independent oracle for the regularized problem with a radial solution.

For the Euclidean half-space (plane support) with a hemispherical inner
boundary the solution depends on r = |x| only.  The equation becomes the ODE

    d/dr [ r^2 s / sqrt(eps^2 + s^2) ] = r^2 |s|,   s = u'(r),

integrated inward from r = R by shooting on s(R) so that u(R) - u(r0) = tau.
Values printed here are frozen in test_solver.py.

    python tests/oracles/radial_ode.py
"""

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq


def _rhs(r, y, eps):
    v, s = y  # v = u(R) - u(r)
    w = s / np.sqrt(eps**2 + s**2)
    ds = (eps**2 + s**2) ** 1.5 / eps**2 * (s - 2.0 / r * w)
    return [-s, ds]


def _shoot(s_outer, eps, r_out, r0):
    return solve_ivp(_rhs, (r_out, r0), [0.0, s_outer], args=(eps,), method="Radau",
                     rtol=1e-10, atol=1e-13, dense_output=True)


def radial_solution(eps, r_out, tau, r0=1.0):
    f = lambda ls: _shoot(np.exp(ls), eps, r_out, r0).y[0, -1] - tau
    ls = brentq(f, -40.0, np.log(10.0), xtol=1e-13)
    sol = _shoot(np.exp(ls), eps, r_out, r0)
    return lambda r: tau - sol.sol(r)[0]


if __name__ == "__main__":
    for eps, r_out, tau in ((0.1, 4.0, 0.3), (0.05, 16.0, 4.5)):
        u = radial_solution(eps, r_out, tau)
        print(eps, r_out, tau, {r: repr(float(u(r))) for r in (1.5, 2.0, 3.0)})
