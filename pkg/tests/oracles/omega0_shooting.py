"""Grid-free oracle for the scalar ground state.

Bisection on the central amplitude of  u'' + (N-1)/r u' = u - mu u^p  to the
last representable float, with the mass  s_{N-1} int u^2 r^{N-1} dr
accumulated as an extra ODE component up to the point where the trajectory
leaves the decaying branch.  Run once; its output is frozen in
tests/test_ground.py.

    python tests/oracles/omega0_shooting.py
"""

from math import gamma, pi

import numpy as np
from scipy.integrate import solve_ivp


def run(N, p, mu=1.0, r_max=30.0):
    s = 2 * pi ** (N / 2) / gamma(N / 2)

    def rhs(r, y):
        u, v, m = y
        return [v, -(N - 1) / r * v + u - mu * max(u, 0.0) ** p, s * u * u * r ** (N - 1)]

    def traj(a):
        r0 = 1e-8
        c = a - mu * a**p
        ev1 = lambda r, y: y[0]
        ev1.terminal, ev1.direction = True, -1
        ev2 = lambda r, y: y[1]
        ev2.terminal, ev2.direction = True, 1
        sol = solve_ivp(rhs, (r0, r_max), [a + c * r0**2 / (2 * N), c * r0 / N, 0.0],
                        method="DOP853", rtol=1e-13, atol=1e-16, events=[ev1, ev2])
        return (1 if sol.t_events[0].size else -1), sol

    lo, hi = mu ** (-1 / (p - 1)) * (1 + 1e-9), 10 * mu ** (-1 / (p - 1))
    while traj(hi)[0] < 0:
        lo, hi = hi, 2 * hi
    while True:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if traj(mid)[0] > 0:
            hi = mid
        else:
            lo = mid
    _, sol = traj(lo)
    # stop accumulating where u is smallest (just before it turns back up)
    k = int(np.argmin(sol.y[0]))
    return lo, sol.y[2, k], sol.t[k]


if __name__ == "__main__":
    for N, p in [(3, 3.0), (2, 5.0), (4, 2.5)]:
        a, m, rv = run(N, p)
        print(f"N={N} p={p}: u(0)={a!r} mass={m!r} (valid to r={rv:.2f})")
