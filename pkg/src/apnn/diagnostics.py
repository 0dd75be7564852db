"""Asymptotic behaviour of the interior losses on frozen random networks.

For each eps the interior risk is compared with its formal eps -> 0 limit:
APNN with eps = 0 in both residuals, PINN with the equilibrium loss
<|L f|^2>, and the eps^2-rescaled parity loss with its leading-order system.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses as L
from .errors import ConfigurationError
from .network import NetworkSpec, init_parameters
from .problems import ProblemSpec
from .quadrature import gauss_legendre
from .sampling import split_rng

DEFAULT_EPSILONS = (1e-1, 5e-2, 2e-2, 1e-2, 5e-3, 2e-3, 1e-3)


@dataclass
class APRow:
    epsilon: float
    apnn_gap: float
    pinn_gap: float
    parity_gap: float


@dataclass
class APReport:
    rows: list
    apnn_limit: float
    pinn_limit: float
    parity_limit: float

    def orders(self, column):
        """Empirical order log(gap_i / gap_{i+1}) / log(eps_i / eps_{i+1})."""
        out = []
        for a, b in zip(self.rows, self.rows[1:]):
            ga, gb = getattr(a, column), getattr(b, column)
            if ga > 0 and gb > 0:
                out.append(float(np.log(ga / gb) / np.log(a.epsilon / b.epsilon)))
            else:
                out.append(float("nan"))
        return out


def frozen_networks(seed, widths=(64, 64, 64)):
    """Random APNN, PINN and parity networks from one seed."""
    hidden = tuple(int(w) for w in widths)
    specs = {
        "rho": NetworkSpec((2,) + hidden + (1,)),
        "g": NetworkSpec((3,) + hidden + (1,)),
        "f": NetworkSpec((3,) + hidden + (1,)),
        "r": NetworkSpec((3,) + hidden + (1,)),
        "j": NetworkSpec((3,) + hidden + (1,)),
    }
    seeds = np.random.SeedSequence(seed).spawn(len(specs))
    params = {name: init_parameters(spec, s) for (name, spec), s in zip(specs.items(), seeds)}
    return params, specs


def interior_points(problem: ProblemSpec, seed, n_points=64):
    rng = split_rng(seed, 2)[1]
    t = rng.uniform(0.0, problem.T, n_points)
    x = rng.uniform(problem.x_L, problem.x_R, n_points)
    return t, x


def _f(v):
    return float(np.asarray(v))


def ap_check(problem: ProblemSpec, seed=0, epsilons=DEFAULT_EPSILONS, n_points=64, n_quadrature=30,
             widths=(64, 64, 64)):
    """Tabulate |R^eps - R^0| for the three losses over a descending eps list."""
    eps = [float(e) for e in epsilons]
    if any(e <= 0 for e in eps) or any(a <= b for a, b in zip(eps, eps[1:])):
        raise ConfigurationError("epsilons must be positive and strictly descending")
    params, specs = frozen_networks(seed, widths)
    t, x = interior_points(problem, seed, n_points)
    rule = gauss_legendre(n_quadrature)
    ap = {"rho": params["rho"], "g": params["g"]}
    par = {"r": params["r"], "j": params["j"]}
    apnn0 = _f(L.apnn_interior_risk(ap, specs, t, x, problem, rule, epsilon=0.0))
    pinn0 = _f(L.pinn_equilibrium_risk(params["f"], specs["f"], t, x, problem, rule))
    even0, odd0 = L.parity_limit_risk(par, specs, t, x, problem, rule)
    parity0 = _f(even0) + _f(odd0)
    rows = []
    for e in eps:
        a = _f(L.apnn_interior_risk(ap, specs, t, x, problem, rule, epsilon=e))
        p = _f(L.pinn_interior_risk(params["f"], specs["f"], t, x, problem, rule, epsilon=e))
        ev, od = L.parity_interior_risk(par, specs, t, x, problem, rule, epsilon=e)
        rows.append(APRow(e, abs(a - apnn0), abs(p - pinn0), abs(_f(ev) + _f(od) - parity0)))
    return APReport(rows, apnn0, pinn0, parity0)
