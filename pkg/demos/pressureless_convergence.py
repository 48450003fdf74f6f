"""First-order convergence of the grid solver against the exact pressureless solution.

With f(rho, u) = u the velocity is carried unchanged by each particle, so the
density follows from the Lagrangian map x = a + t u0(a). The table shows the
L1 density error halving with the mesh width before the collision at t = 2.
"""

import numpy as np

from threshold_lab import ClosureSpec, ProfileSpec, RunConfig, run
from threshold_lab.characteristics import pressureless_blowup_time, pressureless_profile

RHO0 = ProfileSpec("Constant", (1.0,))
U0 = ProfileSpec("Tanh", (-0.5, 0.0, 1.0))


def main():
    print(f"collision time: {pressureless_blowup_time(U0):.6f}")
    for t in (0.5, 1.0, 1.5):
        prev = None
        for n in (100, 200, 400, 800):
            res = run(RunConfig(ClosureSpec.pressureless(), RHO0, U0, -5.0, 5.0, n, t, "OutflowExtrapolate"))
            s = res.snapshots[-1]
            exact, _, _ = pressureless_profile(RHO0, U0, s.x, t)
            err = float(np.sum(np.abs(s.rho - exact)) * s.dx)
            ratio = f"{prev / err:6.2f}" if prev else "      "
            print(f"t={t:3.1f} N={n:4d} L1={err:.4e} ratio {ratio}")
            prev = err


if __name__ == "__main__":
    main()
