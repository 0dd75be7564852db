"""Grid-based reference solutions for the transport problems."""
from __future__ import annotations

from ..problems import ProblemSpec
from ..losses import relative_l2_error
from .grid import DEFAULT_C, DEFAULT_NV, DEFAULT_NX, Grid1D, GridSolution
from .solvers import (
    MIN_DIRECT_EPSILON,
    direct_stable_dt,
    marshak_values,
    micro_macro_stable_dt,
    output_times,
    solve_diffusion_fd,
    solve_micro_macro_fd,
    solve_transport_direct,
)

# finer grid for the boundary layer of problem IV
DEFAULT_GRIDS = {"IV": {"nx": 400}}


def default_grid(problem: ProblemSpec, **overrides):
    opts = {"nx": DEFAULT_NX, "n_v": DEFAULT_NV, "c": DEFAULT_C, **DEFAULT_GRIDS.get(problem.label, {}), **overrides}
    return Grid1D.for_problem(problem, **opts)


def choose_solver(epsilon):
    return "discrete-ordinates" if epsilon >= MIN_DIRECT_EPSILON else "micro-macro"


def reference_for(problem: ProblemSpec, grid: Grid1D | None = None, times=None, cross_check=True):
    """Reference density at the output times, tagged with the producing solver.

    For eps >= 0.1 the discrete-ordinates solution is returned and, with
    ``cross_check``, compared against the micro-macro solver (the relative
    l2 gap per time is stored in ``meta["cross_check"]``).
    """
    grid = grid or default_grid(problem)
    if choose_solver(problem.epsilon) == "micro-macro":
        sol = solve_micro_macro_fd(problem, grid, times)
        sol.meta["provenance"] = "micro-macro"
        return sol
    sol = solve_transport_direct(problem, grid, times)
    sol.meta["provenance"] = "discrete-ordinates"
    if cross_check:
        other = solve_micro_macro_fd(problem, grid, times)
        gaps = {}
        for k, t in enumerate(sol.times):
            if abs(sol.rho[k]).sum() > 0:
                gaps[repr(float(t))] = relative_l2_error(other.rho[k], sol.rho[k])
        sol.meta["cross_check"] = {"solver": "micro-macro", "rel_l2": gaps}
    return sol


__all__ = [
    "Grid1D", "GridSolution", "default_grid", "choose_solver", "reference_for", "solve_micro_macro_fd",
    "solve_transport_direct", "solve_diffusion_fd", "marshak_values", "micro_macro_stable_dt", "direct_stable_dt",
    "output_times",
]
