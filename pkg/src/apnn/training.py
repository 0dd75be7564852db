"""Adam training loop, configuration and density extraction."""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import autodiff as ad
from . import losses as L
from ._accel import tune_allocator
from .errors import ConfigurationError, NumericError
from .network import NetworkSpec, init_parameters
from .problems import ProblemSpec
from .quadrature import QuadratureRule, gauss_legendre, velocity_average
from .sampling import make_rng, sample_batch

DESK_WIDTHS = {"f": (3, 64, 64, 64, 1), "rho": (2, 64, 64, 64, 1), "g": (3, 64, 64, 64, 1)}


@dataclass
class TrainingConfig:
    """Everything that determines a run besides the problem and the method.

    ``n_micro`` = 0 reuses the macro interior points for the micro residual.
    ``n_boundary`` is per side. ``time_budget`` (seconds) stops the loop
    early and flags the result as partial.
    """

    iterations: int = 20000
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    n_interior: int = 64
    n_micro: int = 0
    n_boundary: int = 32
    n_initial: int = 64
    lam_bc: float = 10.0
    lam_ic: float = 10.0
    lam_constraint: float = 1.0
    n_quadrature: int = 30
    velocity_mode: str = "quadrature"
    n_velocity_samples: int = 100
    widths: dict = field(default_factory=lambda: {k: list(v) for k, v in DESK_WIDTHS.items()})
    seed: int = 0
    eval_every: int = 1000
    eval_times: list = field(default_factory=list)
    eval_nx: int = 100
    log_every: int = 0
    time_budget: float | None = None

    def __post_init__(self):
        if int(self.iterations) < 0:
            raise ConfigurationError("iterations must be non-negative")
        if not self.learning_rate > 0:
            raise ConfigurationError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps_adam > 0):
            raise ConfigurationError("invalid Adam hyperparameters")
        if min(self.lam_bc, self.lam_ic, self.lam_constraint) < 0:
            raise ConfigurationError("penalty weights must be non-negative")
        if min(self.n_interior, self.n_boundary, self.n_initial) <= 0 or self.n_micro < 0:
            raise ConfigurationError("batch sizes must be positive")
        if self.eval_every <= 0 or self.eval_nx < 1:
            raise ConfigurationError("eval_every and eval_nx must be positive")
        if self.velocity_mode not in ("quadrature", "monte-carlo"):
            raise ConfigurationError(f"unknown velocity mode {self.velocity_mode!r}")
        unknown = set(self.widths) - set(DESK_WIDTHS)
        if unknown:
            raise ConfigurationError(f"unknown network names {sorted(unknown)}")

    @classmethod
    def from_dict(cls, data):
        """Build from a mapping; unknown keys are rejected."""
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigurationError(f"unknown configuration keys: {sorted(extra)}")
        data = dict(data)
        if "widths" in data:
            widths = {k: list(v) for k, v in DESK_WIDTHS.items()}
            widths.update({k: list(v) for k, v in data["widths"].items()})
            data["widths"] = widths
        return cls(**data)

    def to_dict(self):
        d = asdict(self)
        d["widths"] = {k: list(v) for k, v in self.widths.items()}
        d["eval_times"] = [float(t) for t in self.eval_times]
        return d

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def batch_sizes(self):
        if self.n_micro:
            return (self.n_interior, self.n_micro, self.n_boundary, self.n_initial)
        return (self.n_interior, self.n_boundary, self.n_initial)

    def network_specs(self, method):
        return {name: NetworkSpec(tuple(self.widths[name])) for name in L.network_names(method)}


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params, gradient, state: AdamState, config: TrainingConfig, lr=None):
    """One bias-corrected Adam update; returns new (params, state)."""
    gradient = np.asarray(gradient, dtype=float)
    if gradient.shape != np.shape(params):
        raise ConfigurationError(f"gradient shape {gradient.shape} does not match parameters {np.shape(params)}")
    if not np.all(np.isfinite(gradient)):
        bad = int(np.flatnonzero(~np.isfinite(gradient))[0])
        raise NumericError(f"non-finite gradient entry {bad} at Adam step {state.step + 1}", op_index=state.step + 1,
                           op_name="adam")
    lr = config.learning_rate if lr is None else lr
    b1, b2 = config.beta1, config.beta2
    k = state.step + 1
    m = b1 * state.m + (1.0 - b1) * gradient
    v = b2 * state.v + (1.0 - b2) * gradient * gradient
    m_hat = m / (1.0 - b1 ** k)
    v_hat = v / (1.0 - b2 ** k)
    new = params - lr * m_hat / (np.sqrt(v_hat) + config.eps_adam)
    return new, AdamState(m, v, k)


@dataclass
class TrainingResult:
    method: str
    params: dict
    specs: dict
    loss_history: list = field(default_factory=list)  # (iteration, LossBreakdown)
    error_history: list = field(default_factory=list)  # (iteration, {t: rel l2})
    seconds_per_1000: float = float("nan")
    iterations_done: int = 0
    partial: bool = False

    def final_errors(self):
        return dict(self.error_history[-1][1]) if self.error_history else {}


def evaluation_grid(problem: ProblemSpec, nx=100):
    """nx uniform cells in x, both ends included."""
    return np.linspace(problem.x_L, problem.x_R, int(nx) + 1)


def evaluate_density(method, params, specs, times, x, rule: QuadratureRule):
    """Density on the (times, x) grid: rho_net for APNN, <f_net> for PINN."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    x = np.asarray(x, dtype=float)
    tt = np.repeat(times, len(x))
    xx = np.tile(x, len(times))
    if method == "pinn":
        f = L.f_fields(params["f"], specs["f"], tt, xx, rule)
        rho = velocity_average(f, rule)
    elif method in ("apnn-hard", "apnn-soft"):
        rho = L.rho_fields(params["rho"], specs["rho"], tt, xx)
    else:
        raise ConfigurationError(f"unknown method {method!r}; choose one of {L.METHODS}")
    return np.asarray(ad.value_of(rho), dtype=float).reshape(len(times), len(x))


def density_errors(method, params, specs, reference, times, x, rule):
    """Relative l2 error per time against a reference with ``at(t, x)``."""
    pred = evaluate_density(method, params, specs, times, x, rule)
    return {float(t): L.relative_l2_error(pred[k], reference.at(t, x)) for k, t in enumerate(times)}


def initial_parameters(method, config: TrainingConfig):
    """Seeded initial networks; each network draws from its own sub-stream."""
    specs = config.network_specs(method)
    seeds = np.random.SeedSequence(config.seed).spawn(len(DESK_WIDTHS) + 1)
    order = {name: k for k, name in enumerate(DESK_WIDTHS)}
    params = {name: init_parameters(spec, seeds[order[name]]) for name, spec in specs.items()}
    return params, specs, seeds[-1]


def train(problem: ProblemSpec, method, config: TrainingConfig, reference=None, lr_schedule=None, progress=None):
    """Adam on freshly sampled batches; logs every iteration.

    ``reference`` (anything with ``at(t, x)``) enables the error history at
    ``config.eval_times`` every ``eval_every`` iterations and at the end.
    ``lr_schedule(iteration)`` overrides the learning rate. ``progress`` is
    called with (iteration, LossBreakdown) every ``log_every`` iterations.
    """
    if method not in L.METHODS:
        raise ConfigurationError(f"unknown method {method!r}; choose one of {L.METHODS}")
    tune_allocator()
    params, specs, batch_seed = initial_parameters(method, config)
    names = L.network_names(method)
    theta = L.flatten(params, names)
    state = AdamState.zeros(theta.size)
    rng = make_rng(batch_seed)
    rule = gauss_legendre(config.n_quadrature)
    eval_rule = rule
    x_eval = evaluation_grid(problem, config.eval_nx)
    eval_times = list(config.eval_times) or [problem.T]
    result = TrainingResult(method, params, specs)

    def log_errors(it, th):
        if reference is None:
            return
        p = L.unflatten(th, specs, names)
        result.error_history.append((it, density_errors(method, p, specs, reference, eval_times, x_eval, eval_rule)))

    start = time.perf_counter()
    it = 0
    for it in range(config.iterations):
        if config.time_budget is not None and time.perf_counter() - start > config.time_budget:
            result.partial = True
            break
        batch = sample_batch(problem, config.batch_sizes, rng, rule, config.velocity_mode, config.n_velocity_samples)
        holder = {}

        def objective(th):
            p = L.unflatten(th, specs, names)
            parts = L.empirical_risk(method, p, specs, batch, problem, config.lam_bc, config.lam_ic,
                                     config.lam_constraint)
            holder["parts"] = parts
            return parts.total

        try:
            _, grad = ad.value_and_grad(objective, theta)
        except NumericError as exc:
            raise NumericError(f"iteration {it}: {exc}", op_index=it, op_name=exc.op_name) from exc
        parts = holder["parts"].detach()
        result.loss_history.append((it, parts))
        if config.log_every and progress is not None and it % config.log_every == 0:
            progress(it, parts)
        if it % config.eval_every == 0 and it > 0:
            log_errors(it, theta)
        lr = lr_schedule(it) if lr_schedule is not None else None
        try:
            theta, state = adam_step(theta, grad, state, config, lr)
        except NumericError as exc:
            raise NumericError(f"iteration {it}: {exc}", op_index=it, op_name="adam") from exc
    else:
        it = config.iterations
    done = it if result.partial else config.iterations
    elapsed = time.perf_counter() - start
    result.iterations_done = done
    result.seconds_per_1000 = 1000.0 * elapsed / done if done else float("nan")
    result.params = L.unflatten(theta, specs, names)
    if done:
        log_errors(done, theta)
    return result
