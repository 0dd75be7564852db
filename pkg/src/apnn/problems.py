"""Problem descriptions and the registry of the one-dimensional test cases I-IV."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError

PROBLEM_IDS = ("I", "II", "III", "IV")


def _const(c):
    def fn(x):
        return np.full(np.shape(x), float(c))

    return fn


@dataclass(frozen=True)
class ProblemSpec:
    """One slab-geometry transport problem on [x_L, x_R] x [-1, 1], t in [0, T].

    ``bc`` is ``"inflow"`` (``F_L`` prescribed for v > 0 at x_L, ``F_R`` for
    v < 0 at x_R) or ``"periodic"``. Coefficient callables take x arrays,
    boundary callables take v arrays, ``f0`` takes (x, v).
    """

    label: str
    epsilon: float
    T: float
    x_L: float = 0.0
    x_R: float = 1.0
    sigma_S: Callable = field(default=_const(1.0), compare=False)
    sigma_A: Callable = field(default=_const(0.0), compare=False)
    Q: Callable = field(default=_const(0.0), compare=False)
    bc: str = "inflow"
    F_L: Callable = field(default=_const(0.0), compare=False)
    F_R: Callable = field(default=_const(0.0), compare=False)
    f0: Callable = field(default=lambda x, v: np.zeros(np.broadcast(x, v).shape), compare=False)
    # human/machine readable constants, used for hashing and manifests
    constants: dict = field(default_factory=dict, compare=False)
    plot_times: tuple = ()

    def __post_init__(self):
        if not self.x_L < self.x_R:
            raise ConfigurationError("x_L must be smaller than x_R")
        if not 0.0 < self.epsilon <= 1.0:
            raise ConfigurationError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        if self.T <= 0:
            raise ConfigurationError("final time must be positive")
        if self.bc not in ("inflow", "periodic"):
            raise ConfigurationError(f"unknown boundary kind {self.bc!r}")

    @property
    def velocity_measure(self):
        return 2.0

    @property
    def diffusion_coefficient(self):
        # <v^2> on [-1, 1]
        return 1.0 / 3.0

    def describe(self):
        return {
            "label": self.label,
            "epsilon": float(self.epsilon),
            "T": float(self.T),
            "x_L": float(self.x_L),
            "x_R": float(self.x_R),
            "bc": self.bc,
            **self.constants,
        }

    def problem_hash(self):
        blob = json.dumps(self.describe(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# final times (T) by problem / epsilon, taken from the plot times
_II_FINAL_TIMES = {1.0: 1.0, 1e-1: 0.5, 1e-3: 0.1, 1e-8: 0.1}
_II_PLOT_TIMES = {1.0: (1.0,), 1e-1: (0.5,), 1e-3: (0.1,), 1e-8: (0.05, 0.1)}
DEFAULT_EPSILON = {"I": 1.0, "II": 1e-8, "III": 1e-2, "IV": 5e-2}


def _lookup(table, eps, default):
    for key, val in table.items():
        if np.isclose(eps, key, rtol=1e-9, atol=0.0):
            return val
    return default


def _problem_I(eps):
    def f0(x, v):
        rho = 1.0 + np.cos(4.0 * np.pi * x)
        return rho / np.sqrt(2.0 * np.pi) * np.exp(-0.5 * np.asarray(v) ** 2)

    return ProblemSpec(
        label="I",
        epsilon=eps,
        T=1.0,
        bc="periodic",
        f0=f0,
        constants={"sigma_S": "1", "sigma_A": "0", "Q": "0",
                   "f0": "(1+cos(4 pi x)) exp(-v^2/2)/sqrt(2 pi)"},
        plot_times=(0.0, 1.0),
    )


def _problem_II(eps):
    return ProblemSpec(
        label="II",
        epsilon=eps,
        T=_lookup(_II_FINAL_TIMES, eps, 0.1),
        bc="inflow",
        F_L=_const(1.0),
        F_R=_const(0.0),
        constants={"sigma_S": "1", "sigma_A": "0", "Q": "0", "F_L": "1", "F_R": "0", "f0": "0"},
        plot_times=_lookup(_II_PLOT_TIMES, eps, (0.1,)),
    )


def _problem_III(eps):
    return ProblemSpec(
        label="III",
        epsilon=eps,
        T=0.2,
        sigma_S=lambda x: 1.0 + (10.0 * np.asarray(x)) ** 2,
        Q=_const(1.0),
        bc="inflow",
        F_L=_const(1.0),
        F_R=_const(0.0),
        constants={"sigma_S": "1+(10x)^2", "sigma_A": "0", "Q": "1", "F_L": "1", "F_R": "0", "f0": "0"},
        plot_times=(0.0, 0.1, 0.2),
    )


def _problem_IV(eps):
    return ProblemSpec(
        label="IV",
        epsilon=eps,
        T=0.1,
        bc="inflow",
        F_L=lambda v: 5.0 * np.sin(np.asarray(v, dtype=float)),
        F_R=_const(0.0),
        constants={"sigma_S": "1", "sigma_A": "0", "Q": "0", "F_L": "5 sin(v)", "F_R": "0", "f0": "0"},
        plot_times=(0.05, 0.1),
    )


_BUILDERS = {"I": _problem_I, "II": _problem_II, "III": _problem_III, "IV": _problem_IV}


def make_problem(problem_id: str, epsilon: float | None = None) -> ProblemSpec:
    """Build a registered problem; ``epsilon`` defaults to the problem's own value."""
    if problem_id not in _BUILDERS:
        raise ConfigurationError(
            f"unknown problem {problem_id!r}; choose one of {{{', '.join(PROBLEM_IDS)}}}"
        )
    eps = DEFAULT_EPSILON[problem_id] if epsilon is None else float(epsilon)
    return _BUILDERS[problem_id](eps)
