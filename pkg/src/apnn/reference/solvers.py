"""Finite-difference reference solutions: micro-macro, discrete ordinates, diffusion."""
from __future__ import annotations

import numpy as np
from scipy.sparse import diags, csc_matrix
from scipy.sparse.linalg import splu

from .. import kernels
from .._accel import backend_name
from ..errors import ConfigurationError, NumericError
from ..problems import ProblemSpec
from ..quadrature import velocity_average
from .grid import Grid1D, GridSolution

BLOWUP = 1e6
MIN_DIRECT_EPSILON = 0.1
DIRECT_CFL = 0.9


def output_times(problem: ProblemSpec, times=None):
    """Sorted distinct output times; defaults to the plot times plus T."""
    ts = set(float(t) for t in (problem.plot_times if times is None else times))
    if times is None:
        ts.add(float(problem.T))
    out = np.array(sorted(ts))
    if out.size == 0 or out[0] < 0:
        raise ConfigurationError("output times must be non-negative")
    return out


def _segments(times, dt_max):
    """(n_steps, dt) per gap between consecutive output times, starting at 0."""
    prev = 0.0
    for t in times:
        gap = t - prev
        n = int(np.ceil(gap / dt_max - 1e-9)) if gap > 0 else 0
        yield n, (gap / n if n else 0.0)
        prev = t


def _boundary_values(problem, grid):
    v = grid.rule.nodes
    if problem.bc == "periodic":
        z = np.zeros_like(v)
        return z, z
    return (np.asarray(problem.F_L(v), float) * np.ones_like(v),
            np.asarray(problem.F_R(v), float) * np.ones_like(v))


def _coef(fn, x):
    return np.asarray(fn(x), dtype=float) * np.ones_like(x)


def _check(grid, problem):
    if grid.periodic != (problem.bc == "periodic"):
        raise ConfigurationError("grid periodicity does not match the problem")


def _meta(problem, grid, scheme, **extra):
    return {"scheme": scheme, "problem": problem.describe(), "problem_hash": problem.problem_hash(),
            "backend": backend_name(), **grid.describe(), **extra}


def micro_macro_stable_dt(problem: ProblemSpec, grid: Grid1D):
    """Parabolic bound dt <= (3/2) sigma_min dx^2 of the explicit rho update."""
    sig = _coef(problem.sigma_S, grid.half_nodes)
    return 1.5 * float(np.min(sig)) * grid.dx ** 2


def solve_micro_macro_fd(problem: ProblemSpec, grid: Grid1D, times=None, keep_g=False):
    """Staggered micro-macro scheme with implicit collisions; valid for all eps."""
    _check(grid, problem)
    bound = micro_macro_stable_dt(problem, grid)
    if grid.dt > bound:
        raise NumericError(f"dt={grid.dt:.3e} exceeds the stability bound {bound:.3e}", op_name="micro-macro")
    eps = problem.epsilon
    rule = grid.rule
    v, wa = rule.nodes, rule.avg_weights
    xn, xh = grid.nodes, grid.half_nodes
    f0n = np.asarray(problem.f0(xn[:, None], v[None, :]), float)
    f0h = np.asarray(problem.f0(xh[:, None], v[None, :]), float)
    rho = velocity_average(f0n, rule).copy()
    rho_h = velocity_average(f0h, rule)
    g = (f0h - rho_h[:, None]) / eps
    FL, FR = _boundary_values(problem, grid)
    args = (eps, v, wa, _coef(problem.sigma_S, xh), _coef(problem.sigma_A, xh), _coef(problem.sigma_A, xn),
            _coef(problem.Q, xn), FL, FR, grid.periodic, BLOWUP)

    times = output_times(problem, times)
    rows, gs, done = [], [], 0
    for n, dt in _segments(times, grid.dt):
        if n:
            status = kernels.micro_macro_advance(rho, g, n, dt, grid.dx, *args)
            if status >= 0:
                raise NumericError(f"micro-macro solution blew up at step {done + status}", op_index=done + status,
                                   op_name="micro-macro")
            done += n
        rows.append(rho.copy())
        if keep_g:
            gs.append(g.copy())
    meta = _meta(problem, grid, "micro-macro", steps=done)
    return GridSolution(times, xn, np.array(rows), np.array(gs) if keep_g else None, meta)


def direct_stable_dt(problem: ProblemSpec, grid: Grid1D, cfl=DIRECT_CFL):
    """Positivity bound dt (1/(eps dx) + sigma/eps^2 + sigma_A) <= cfl."""
    eps = problem.epsilon
    x = grid.nodes
    sig = float(np.max(_coef(problem.sigma_S, x)))
    sa = float(np.max(_coef(problem.sigma_A, x)))
    return cfl / (1.0 / (eps * grid.dx) + sig / eps ** 2 + sa)


def solve_transport_direct(problem: ProblemSpec, grid: Grid1D, times=None, cfl=DIRECT_CFL):
    """Explicit upwind discrete ordinates on the full (x, v) grid; eps >= 0.1 only."""
    _check(grid, problem)
    eps = problem.epsilon
    if eps < MIN_DIRECT_EPSILON:
        raise ConfigurationError(
            f"the explicit kinetic solver needs eps >= {MIN_DIRECT_EPSILON}; use solve_micro_macro_fd"
        )
    rule = grid.rule
    v, wa = rule.nodes, rule.avg_weights
    x = grid.nodes
    f = np.array(problem.f0(x[:, None], v[None, :]), dtype=float) * np.ones((len(x), len(v)))
    FL, FR = _boundary_values(problem, grid)
    if not grid.periodic:
        f[0, v > 0] = FL[v > 0]
        f[-1, v < 0] = FR[v < 0]
    dt_max = direct_stable_dt(problem, grid, cfl)
    args = (eps, v, wa, _coef(problem.sigma_S, x), _coef(problem.sigma_A, x), _coef(problem.Q, x), FL, FR,
            grid.periodic, BLOWUP)
    times = output_times(problem, times)
    rows, done = [], 0
    for n, dt in _segments(times, dt_max):
        if n:
            status = kernels.transport_advance(f, n, dt, grid.dx, *args)
            if status >= 0:
                raise NumericError(f"discrete-ordinates solution blew up at step {done + status}",
                                   op_index=done + status, op_name="discrete-ordinates")
            done += n
        rows.append(f @ wa)
    meta = _meta(problem, grid, "discrete-ordinates", steps=done, dt_used=dt_max, cfl=cfl)
    return GridSolution(times, x, np.array(rows), None, meta)


def marshak_values(problem: ProblemSpec, rule):
    """Boundary densities <|v| F>_in / <|v|>_in seen by the diffusion limit.

    This is 2 int_0^1 v F dv up to quadrature error, exactly 1 for F = 1, and
    the eps -> 0 limit of the kinetic boundary cells of the micro-macro solver.
    """
    v, w = rule.nodes, rule.weights
    pos, neg = v > 0, v < 0
    left = np.sum((w * v * _coef(problem.F_L, v))[pos]) / np.sum((w * v)[pos])
    right = np.sum((w * v * _coef(problem.F_R, v))[neg]) / np.sum((w * v)[neg])
    return float(left), float(right)


def _diffusion_matrix(problem, grid, dt):
    x = grid.nodes
    d = 1.0 / (3.0 * _coef(problem.sigma_S, grid.half_nodes)) / grid.dx ** 2
    sa = _coef(problem.sigma_A, x)
    n = len(x)
    if grid.periodic:
        dm = np.roll(d, 1)  # D_{j-1/2}
        main = 1.0 + dt * (d + dm + sa)
        A = diags([main, -dt * d[:-1], -dt * dm[1:]], [0, 1, -1], shape=(n, n), format="lil")
        A[n - 1, 0] = -dt * d[n - 1]
        A[0, n - 1] = -dt * dm[0]
        return csc_matrix(A)
    main = np.ones(n)
    upper = np.zeros(n - 1)
    lower = np.zeros(n - 1)
    main[1:-1] = 1.0 + dt * (d[1:] + d[:-1] + sa[1:-1])
    upper[1:] = -dt * d[1:]
    lower[:-1] = -dt * d[:-1]
    return csc_matrix(diags([main, upper, lower], [0, 1, -1]))


def solve_diffusion_fd(problem: ProblemSpec, grid: Grid1D, times=None, dt=None):
    """Backward-Euler centered scheme for rho_t = (1/3)(rho_x / sigma_S)_x - sigma_A rho + Q.

    Inflow problems use Dirichlet data from :func:`marshak_values`. The initial
    density is <f0>.
    """
    _check(grid, problem)
    dt_max = grid.dt if dt is None else float(dt)
    rule = grid.rule
    v = rule.nodes
    x = grid.nodes
    rho = velocity_average(np.asarray(problem.f0(x[:, None], v[None, :]), float) * np.ones((len(x), len(v))), rule)
    q = _coef(problem.Q, x)
    bl, br = (0.0, 0.0) if grid.periodic else marshak_values(problem, rule)
    times = output_times(problem, times)
    rows, done, factors = [], 0, {}
    for n, h in _segments(times, dt_max):
        if n:
            key = round(h, 15)
            if key not in factors:
                try:
                    factors[key] = splu(_diffusion_matrix(problem, grid, h))
                except RuntimeError as exc:
                    raise NumericError(f"diffusion solve failed: {exc}", op_name="splu") from exc
            lu = factors[key]
            for _ in range(n):
                rhs = rho + h * q
                if not grid.periodic:
                    rhs[0], rhs[-1] = bl, br
                rho = lu.solve(rhs)
            if not np.all(np.isfinite(rho)):
                raise NumericError("diffusion solution is not finite", op_name="splu")
            done += n
        rows.append(rho.copy())
    meta = _meta(problem, grid, "diffusion", steps=done, dirichlet=[bl, br])
    return GridSolution(times, x, np.array(rows), None, meta)
