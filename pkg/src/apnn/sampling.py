"""Random collocation batches over time, space and velocity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .problems import ProblemSpec
from .quadrature import QuadratureRule, gauss_legendre, monte_carlo_rule


def make_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) generator for one experiment seed."""
    return np.random.Generator(np.random.Philox(seed))


def split_rng(seed, n):
    """``n`` independent sub-streams derived from a single seed."""
    return [make_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


@dataclass
class CollocationBatch:
    """Points for one optimization step.

    Interior (t, x) samples are paired with every velocity of ``rule`` by the
    losses; ``micro_*`` is the separate interior set of the micro residual
    (empty means: reuse the macro points). Boundary times are drawn per side
    (``boundary_t[0]`` at x_L, ``boundary_t[1]`` at x_R); periodic problems
    share one set of times between the sides.
    """

    interior_t: np.ndarray
    interior_x: np.ndarray
    micro_t: np.ndarray
    micro_x: np.ndarray
    boundary_t: tuple
    initial_x: np.ndarray
    rule: QuadratureRule

    @property
    def has_separate_micro(self):
        return self.micro_t.size > 0

    def inflow_mask(self, side):
        """Velocities entering the domain at side 0 (x_L, v > 0) or 1 (x_R, v < 0)."""
        return self.rule.nodes > 0 if side == 0 else self.rule.nodes < 0

    def boundary_points(self, problem: ProblemSpec, inflow_only=True):
        """Explicit (t, x_boundary, v) triplets, for inspection and testing."""
        rows = []
        for side, x_b in ((0, problem.x_L), (1, problem.x_R)):
            mask = self.inflow_mask(side) if inflow_only else np.ones(self.rule.n, bool)
            for t in self.boundary_t[side]:
                for v in self.rule.nodes[mask]:
                    rows.append((t, x_b, v))
        return np.array(rows).reshape(-1, 3)


def sample_batch(
    problem: ProblemSpec,
    sizes,
    rng: np.random.Generator,
    rule: QuadratureRule | None = None,
    velocity_mode: str = "quadrature",
    n_velocity_samples: int = 100,
) -> CollocationBatch:
    """Draw one batch.

    ``sizes`` is ``(n_interior, n_boundary, n_initial)`` or
    ``(n_macro, n_micro, n_boundary, n_initial)``; ``n_boundary`` is per side.
    With ``velocity_mode="monte-carlo"`` the velocities are a fresh uniform
    sample of ``n_velocity_samples`` points with equal weights.
    """
    sizes = tuple(int(s) for s in sizes)
    if len(sizes) == 3:
        n_int, n_bc, n_ic = sizes
        n_micro = 0
    elif len(sizes) == 4:
        n_int, n_micro, n_bc, n_ic = sizes
    else:
        raise ConfigurationError("sizes must have 3 or 4 entries")
    if n_int <= 0 or n_bc <= 0 or n_ic <= 0 or n_micro < 0:
        raise ConfigurationError(f"batch sizes must be positive, got {sizes}")

    T, xl, xr = problem.T, problem.x_L, problem.x_R
    it = rng.uniform(0.0, T, n_int)
    ix = rng.uniform(xl, xr, n_int)
    mt = rng.uniform(0.0, T, n_micro)
    mx = rng.uniform(xl, xr, n_micro)
    bt = (rng.uniform(0.0, T, n_bc), rng.uniform(0.0, T, n_bc))
    if problem.bc == "periodic":
        # both sides are compared at the same instants
        bt = (bt[0], bt[0].copy())
    x0 = rng.uniform(xl, xr, n_ic)
    if velocity_mode == "quadrature":
        rule = rule if rule is not None else gauss_legendre(30)
    elif velocity_mode == "monte-carlo":
        rule = monte_carlo_rule(n_velocity_samples, rng)
    else:
        raise ConfigurationError(f"unknown velocity mode {velocity_mode!r}")
    return CollocationBatch(it, ix, mt, mx, bt, x0, rule)
