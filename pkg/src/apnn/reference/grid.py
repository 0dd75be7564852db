"""Grids and stored grid solutions (CSV plus JSON metadata)."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError
from ..problems import ProblemSpec
from ..quadrature import QuadratureRule, gauss_legendre

DEFAULT_NX = 200
DEFAULT_NV = 30
DEFAULT_C = 0.2


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid: rho on nodes, g on half nodes, dt = c * dx^2.

    Inflow grids carry nx + 1 nodes (both boundaries included); periodic
    grids identify x_R with x_L and carry nx nodes.
    """

    nx: int
    x_L: float
    x_R: float
    rule: QuadratureRule
    c: float = DEFAULT_C
    periodic: bool = False

    def __post_init__(self):
        if self.nx < 2:
            raise ConfigurationError("need at least two cells")
        if self.c <= 0:
            raise ConfigurationError("time-step constant must be positive")

    @classmethod
    def for_problem(cls, problem: ProblemSpec, nx=DEFAULT_NX, n_v=DEFAULT_NV, c=DEFAULT_C):
        return cls(int(nx), problem.x_L, problem.x_R, gauss_legendre(n_v), float(c), problem.bc == "periodic")

    @property
    def dx(self):
        return (self.x_R - self.x_L) / self.nx

    @property
    def dt(self):
        return self.c * self.dx ** 2

    @property
    def nodes(self):
        n = self.nx if self.periodic else self.nx + 1
        return self.x_L + self.dx * np.arange(n)

    @property
    def half_nodes(self):
        return self.x_L + self.dx * (np.arange(self.nx) + 0.5)

    def describe(self):
        return {"nx": self.nx, "dx": self.dx, "dt": self.dt, "c": self.c, "n_v": self.rule.n,
                "periodic": self.periodic, "x_L": self.x_L, "x_R": self.x_R}


@dataclass
class GridSolution:
    """Densities on the grid nodes at the stored times (rows of ``rho``)."""

    times: np.ndarray
    x: np.ndarray
    rho: np.ndarray
    g: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.rho = np.asarray(self.rho, dtype=float)
        if self.rho.shape != (len(self.times), len(self.x)):
            raise ConfigurationError(f"rho has shape {self.rho.shape}, expected {(len(self.times), len(self.x))}")

    def index_of(self, t, tol=1e-12):
        hits = np.flatnonzero(np.abs(self.times - t) <= tol * max(1.0, abs(t)))
        if hits.size == 0:
            raise ConfigurationError(f"time {t} not stored; have {list(self.times)}")
        return int(hits[0])

    def at(self, t, x=None):
        """Density at a stored time, linearly interpolated onto ``x`` if given."""
        row = self.rho[self.index_of(t)]
        if x is None:
            return row.copy()
        xs, vals = self.x, row
        if self.meta.get("periodic"):
            period = self.meta["x_R"] - self.meta["x_L"]
            xs = np.append(xs, xs[0] + period)
            vals = np.append(vals, vals[0])
        return np.interp(np.asarray(x, dtype=float), xs, vals)

    def mass(self, k=-1):
        """Riemann sum of rho at stored time k (periodic grids)."""
        dx = self.x[1] - self.x[0]
        return float(np.sum(self.rho[k]) * dx)

    def save(self, path):
        """Write ``t,x,rho`` rows and a ``.json`` sidecar; returns both paths."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "x", "rho"])
            for t, row in zip(self.times, self.rho):
                for x, r in zip(self.x, row):
                    w.writerow([repr(float(t)), repr(float(x)), repr(float(r))])
        sidecar = path.with_suffix(".json")
        sidecar.write_text(json.dumps(self.meta, indent=2, sort_keys=True) + "\n")
        return path, sidecar

    @classmethod
    def load(cls, path):
        path = Path(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        times = np.unique(data[:, 0])
        x = data[data[:, 0] == times[0], 1]
        rho = data[:, 2].reshape(len(times), len(x))
        sidecar = path.with_suffix(".json")
        meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
        return cls(times, x, rho, None, meta)
