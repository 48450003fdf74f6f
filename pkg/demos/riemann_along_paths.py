"""Track the Riemann invariant R = rho phi(u) (f(u) - u) along Y-paths.

On a Y-path (speed lambda1 = rho f_rho + f) the invariant obeys
dR/dt = rho f_u R, so with f_u <= 0 its modulus never grows. On X-paths
(speed u) no such law holds. When f(u0) - u0 > 0 the invariant decays toward
zero from above, so its running minimum drops below the initial minimum even
though |R| obeys the bound. The script prints both path families.
"""

import math

import numpy as np

from threshold_lab import ClosureSpec, GridFieldProvider, ProfileSpec, trace_path
from threshold_lab.characteristics import XPATH, YPATH
from threshold_lab.scenario import ScenarioConfig, execute, seed_points


def main():
    cfg = ScenarioConfig(
        name="riemann_demo", closure=ClosureSpec.affine(1, 1),
        rho0=ProfileSpec("Sine", (0.1, 1.0, 0.2)), u0=ProfileSpec("Constant", (0.0,)),
        x_lo=-math.pi, x_hi=math.pi, n_cells=400, t_end=10.0,
    )
    out = execute(cfg)
    fields = GridFieldProvider(out.run.trace_snapshots)
    for kind in (YPATH, XPATH):
        print(kind)
        for x0 in seed_points(cfg)[::4]:
            p = trace_path(fields, cfg.closure, x0, kind, fields.t_max, 0.05, u_ref=out.run.u_ref)
            growth = np.max(np.abs(p.R)) / abs(p.R[0])
            print(f"  x0={x0:+.3f}: R(0)={p.R[0]:.4f}  R(end)={p.R[-1]:.4e}  max|R|/|R(0)|={growth:.4f}")
    print("audit")
    for c in out.audit:
        print(f"  {c.name:22s} {'pass' if c.passed else 'FAIL' if c.passed is False else 'n/a'}  margin {c.margin:.3g}")


if __name__ == "__main__":
    main()
