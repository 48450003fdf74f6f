"""Critical-threshold laboratory for the 1D relaxation system

    rho_t + (rho f(rho, u))_x = 0,    u_t + u u_x = rho (f(rho, u) - u).

Classify initial data as globally regular or blowing up, compute the a-priori
bounds that go with the verdict, and audit them against grid solutions and
characteristic traces.
"""

from .characteristics import (
    ExactPressurelessProvider,
    GridFieldProvider,
    estimate_blowup_rate,
    integrate_e_ode,
    pressureless_exact,
    pressureless_profile,
    quadrature_phi_factor,
    riemann_R,
    trace_path,
)
from .closures import ClosureSpec, check_structure, equilibrium_phi, eval_closure, find_sigma
from .grid_solver import GridState, AugGridState, RunConfig, cfl_dt, q_consistency, run, step_augmented, step_primitive
from .profiles import ProfileSpec
from .scenario import ScenarioConfig, load_config, run_scenario, sweep
from .thresholds import (
    audit,
    classify,
    compute_bounds,
    compute_M,
    rho_pointwise_bound,
    rhox_envelope,
    u_bounds,
)

__version__ = "0.1.0"

__all__ = [
    "AugGridState", "ClosureSpec", "ExactPressurelessProvider", "GridFieldProvider", "GridState",
    "ProfileSpec", "RunConfig", "ScenarioConfig", "audit", "cfl_dt", "check_structure", "classify",
    "compute_M", "compute_bounds", "equilibrium_phi", "estimate_blowup_rate", "eval_closure",
    "find_sigma", "integrate_e_ode", "load_config", "pressureless_exact", "pressureless_profile",
    "q_consistency", "quadrature_phi_factor", "rho_pointwise_bound", "rhox_envelope", "riemann_R",
    "run", "run_scenario", "step_augmented", "step_primitive", "sweep", "trace_path", "u_bounds",
]
