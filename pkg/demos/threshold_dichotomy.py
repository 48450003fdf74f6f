"""Sweep the steepness of a tanh velocity profile across the critical threshold.

For f(u) = 1 - u and rho0 = 0.2 + 0.1 sin x, data with u0 = s tanh x lead to
a global solution when e0 = u0' + rho0 stays nonnegative and to a gradient
catastrophe otherwise. The script classifies each case, runs the solver and
prints the predicted and observed outcome side by side.
"""

import math

from threshold_lab import ClosureSpec, ProfileSpec, RunConfig, classify, run

SPEC = ClosureSpec.affine(1, 1)
RHO0 = ProfileSpec("Sine", (0.1, 1.0, 0.2))


def main():
    print(f"{'s':>6} {'min e0':>9} {'verdict':>22} {'tc_upper':>9} {'grid':>12} {'t':>8}")
    for s in (-0.8, -0.5, -0.35, -0.2, 0.0, 0.3):
        u0 = ProfileSpec("Tanh", (s, 0.0, 1.0)) if s else ProfileSpec("Constant", (0.0,))
        v = classify(SPEC, RHO0, u0)
        t_end = min(20.0, 1.2 * v.tc_upper) if v.tc_upper else 20.0
        res = run(RunConfig(SPEC, RHO0, u0, -2 * math.pi, 2 * math.pi, 400, t_end, "OutflowExtrapolate"))
        tc = f"{v.tc_upper:9.3f}" if v.tc_upper else f"{'-':>9}"
        print(f"{s:6.2f} {v.min_e0:9.4f} {v.branch + '/' + v.outcome:>22} {tc} "
              f"{res.termination.kind:>12} {res.termination.t:8.3f}")


if __name__ == "__main__":
    main()
