"""Velocity-space quadrature, the averaging operator and its complement."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericError

MAX_NODES = 256


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes/weights on the velocity domain; ``measure`` is the domain size S.

    Gauss-Legendre rules are symmetric with strictly increasing nodes. Rules
    built by :func:`monte_carlo_rule` share the interface but not the symmetry.
    """

    nodes: np.ndarray
    weights: np.ndarray
    measure: float = 2.0
    kind: str = "gauss-legendre"

    @property
    def n(self):
        return len(self.nodes)

    @property
    def avg_weights(self):
        """Weights of the normalized average <h> = (1/S) sum_i w_i h_i."""
        return self.weights / self.measure


def _legendre_and_derivative(n, x):
    p_prev = np.ones_like(x)
    p = x.copy()
    for k in range(2, n + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


def gauss_legendre(n: int, tol: float = 1e-15, max_iter: int = 100) -> QuadratureRule:
    """n-point Gauss-Legendre rule on [-1, 1] by Newton iteration on P_n.

    Starts from the Chebyshev-like guesses cos(pi (k - 1/4) / (n + 1/2)).
    """
    n = int(n)
    if not 1 <= n <= MAX_NODES:
        raise ConfigurationError(f"number of nodes must be in [1, {MAX_NODES}], got {n}")
    k = np.arange(1, n + 1)
    x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(max_iter):
        p, dp = _legendre_and_derivative(n, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) <= tol:
            break
    else:
        raise NumericError(f"Gauss-Legendre Newton iteration did not converge for n={n}")
    _, dp = _legendre_and_derivative(n, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    x, w = x[order], w[order]
    # exact mirror symmetry
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return QuadratureRule(x, w, 2.0)


def monte_carlo_rule(n: int, rng: np.random.Generator) -> QuadratureRule:
    """n velocities uniform on [-1, 1] (sorted), equal weights S/n."""
    v = np.sort(rng.uniform(-1.0, 1.0, size=n))
    return QuadratureRule(v, np.full(n, 2.0 / n), 2.0, kind="monte-carlo")


def velocity_average(samples, rule: QuadratureRule):
    """<h> over the last axis: (1/S) sum_i w_i h_i.

    Works on numpy arrays and tape variables alike.
    """
    if np.shape(getattr(samples, "value", samples))[-1] != rule.n:
        raise ConfigurationError(
            f"samples have {np.shape(getattr(samples, 'value', samples))[-1]} velocities, rule has {rule.n}"
        )
    return samples @ rule.avg_weights


def project_complement(samples, rule: QuadratureRule):
    """(I - Pi) h = h - <h>, node by node."""
    avg = velocity_average(samples, rule)
    if np.ndim(getattr(avg, "value", avg)) == 0:
        return samples - avg
    return samples - _col(avg)


def _col(a):
    """(N,) -> (N, 1) for numpy arrays and tape variables."""
    if hasattr(a, "reshape"):
        return a.reshape((-1, 1))
    return np.reshape(a, (-1, 1))
