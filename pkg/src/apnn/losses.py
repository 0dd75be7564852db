"""Pointwise residuals and empirical risks for PINN, APNN and the parity loss.

Interior (t, x) samples are tensorized with the velocity nodes of the batch
rule, so every velocity average is computed with the same weights that
define ``<.>`` in the networks. Arrays indexed by velocity have shape
(N, n): N space-time points, n velocity nodes.

The residual helpers only use ``+ - * @`` and ``reshape``; they accept plain
numpy arrays as well as tape variables.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError
from .network import ParameterSet, NetworkSpec, mlp_eval, nodes_grid
from .problems import ProblemSpec
from .quadrature import QuadratureRule, velocity_average
from .sampling import CollocationBatch

METHODS = ("pinn", "apnn-hard", "apnn-soft")
T_DIR, X_DIR = 0, 1


@dataclass
class LossBreakdown:
    """Unweighted terms plus the weighted total.

    For PINN the kinetic residual is stored in ``micro`` and ``macro`` is 0.
    Fields hold floats, or tape variables while a gradient is being taken.
    """

    macro: object = 0.0
    micro: object = 0.0
    bc: object = 0.0
    ic: object = 0.0
    constraint: object = 0.0
    total: object = 0.0
    lam_bc: float = 0.0
    lam_ic: float = 0.0
    lam_constraint: float = 0.0

    def detach(self):
        return LossBreakdown(**{f.name: _float(getattr(self, f.name)) for f in fields(self)})

    @property
    def interior(self):
        return _float(self.macro) + _float(self.micro)

    def row(self):
        d = self.detach()
        return [d.total, d.macro, d.micro, d.bc, d.ic, d.constraint]


def _float(x):
    return float(ad.value_of(x))


def _col(a):
    if isinstance(a, ad.Var):
        return a.reshape((-1, 1))
    return np.reshape(a, (-1, 1))


def _coef(fn, x):
    return _col(np.asarray(fn(np.asarray(x, dtype=float)), dtype=float))


# ---------------------------------------------------------------------------
# residuals
# ---------------------------------------------------------------------------
def collision(f, x, problem: ProblemSpec, rule: QuadratureRule, epsilon=None):
    """L f = sigma_S (<f> - f) - eps^2 sigma_A f, node by node; f is (N, n)."""
    eps = problem.epsilon if epsilon is None else epsilon
    out = _coef(problem.sigma_S, x) * (_col(velocity_average(f, rule)) - f)
    sig_a = _coef(problem.sigma_A, x)
    if np.any(sig_a != 0.0):
        out = out - (eps * eps) * sig_a * f
    return out


def pinn_residual(f, f_t, f_x, x, problem, rule, epsilon=None):
    """v-averaged squared residual of eps^2 f_t + eps v f_x - L f - eps^2 Q, per point."""
    eps = problem.epsilon if epsilon is None else epsilon
    v = rule.nodes
    r = (eps * eps) * f_t + eps * (v * f_x) - collision(f, x, problem, rule, eps) - (eps * eps) * _coef(problem.Q, x)
    return velocity_average(r * r, rule)


def pinn_equilibrium_residual(f, x, problem, rule):
    """The eps -> 0 limit of :func:`pinn_residual`: <|L f|^2>."""
    lf = collision(f, x, problem, rule, 0.0)
    return velocity_average(lf * lf, rule)


def apnn_macro_residual(rho_t, g_x, x, problem, rule):
    """|rho_t + <v g_x> - Q|^2 per point."""
    r = rho_t + velocity_average(rule.nodes * g_x, rule) - np.asarray(problem.Q(np.asarray(x, float)), float)
    return r * r


def apnn_micro_residual(g, g_t, g_x, rho_x, x, problem, rule, epsilon=None):
    """v-averaged |eps^2 g_t + eps (I-Pi)(v g_x) + v rho_x - L g - (I-Pi) eps Q|^2.

    Q depends on x only, so its projection term vanishes identically.
    """
    eps = problem.epsilon if epsilon is None else epsilon
    v = rule.nodes
    vgx = v * g_x
    transport = vgx - _col(velocity_average(vgx, rule))
    r = (eps * eps) * g_t + eps * transport + v * _col(rho_x) - collision(g, x, problem, rule, eps)
    return velocity_average(r * r, rule)


def parity_residuals(r, r_t, r_x, j, j_t, j_x, x, problem, rule, epsilon=None, rescaled=True):
    """v-averaged squared residuals of the even/odd parity system.

    Even: r_t + v j_x - (sigma_S/eps^2)(rho - r) + sigma_A r - Q, rho = <r>.
    Odd:  j_t + (v/eps^2) r_x + (sigma_S/eps^2) j + sigma_A j.
    With ``rescaled`` both equations are multiplied by eps^2 first, which keeps
    them finite at eps = 0.
    """
    eps = problem.epsilon if epsilon is None else epsilon
    v = rule.nodes
    sig = _coef(problem.sigma_S, x)
    sig_a = _coef(problem.sigma_A, x)
    q = _coef(problem.Q, x)
    rho = _col(velocity_average(r, rule))
    e2 = eps * eps
    if rescaled:
        even = e2 * (r_t + v * j_x + sig_a * r - q) - sig * (rho - r)
        odd = e2 * (j_t + sig_a * j) + v * r_x + sig * j
    else:
        if eps == 0:
            raise ConfigurationError("unscaled parity residuals need eps > 0")
        even = r_t + v * j_x - (sig / e2) * (rho - r) + sig_a * r - q
        odd = j_t + (v / e2) * r_x + (sig / e2) * j + sig_a * j
    return velocity_average(even * even, rule), velocity_average(odd * odd, rule)


def parity_limit_residuals(r, r_x, j, x, problem, rule):
    """Least squares of the leading-order parity system r = <r>, j = -(v / sigma_S) r_x.

    Each equation is multiplied by sigma_S, matching the eps^2-rescaled
    residuals at eps = 0.
    """
    sig = _coef(problem.sigma_S, x)
    even = sig * (r - _col(velocity_average(r, rule)))
    odd = sig * j + rule.nodes * r_x
    return velocity_average(even * even, rule), velocity_average(odd * odd, rule)


def relative_l2_error(candidate, reference):
    """sqrt(sum |c - r|^2 / sum |r|^2)."""
    c = np.asarray(candidate, dtype=float).ravel()
    r = np.asarray(reference, dtype=float).ravel()
    if c.shape != r.shape:
        raise ConfigurationError(f"length mismatch {c.shape} vs {r.shape}")
    denom = np.sum(r * r)
    if denom == 0.0:
        raise ConfigurationError("reference has zero norm")
    return float(np.sqrt(np.sum((c - r) ** 2) / denom))


# ---------------------------------------------------------------------------
# network fields on collocation points
# ---------------------------------------------------------------------------
def _txv(t, x, rule):
    tn, xn, vn = nodes_grid(np.asarray(t, float), np.asarray(x, float), rule)
    return np.stack([tn, xn, vn], axis=-1)


def _tx(t, x):
    t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
    return np.stack([t, x], axis=-1)


def raw_nodes(params, spec, t, x, rule, directions=()):
    """Raw network on (t, x) x nodes, shape (N, n); a Dual if directions are given."""
    out = mlp_eval(params, spec, _txv(t, x, rule), directions)
    return ad.reshape(out, (len(np.atleast_1d(t)), rule.n))


def center(h, rule):
    """h - <h> for arrays, tape variables and Duals of shape (N, n)."""
    if isinstance(h, ad.Dual):
        return ad.Dual(center(h.value, rule), (center(t, rule) for t in h.tangents))
    return h - _col(velocity_average(h, rule))


def f_fields(params, spec, t, x, rule, directions=()):
    """f = exp(-f~) on (t, x) x nodes."""
    return ad.exp(-raw_nodes(params, spec, t, x, rule, directions))


def g_fields(params, spec, t, x, rule, directions=(), hard=True):
    """g on (t, x) x nodes; mean-subtracted with ``rule`` when ``hard``."""
    raw = raw_nodes(params, spec, t, x, rule, directions)
    return center(raw, rule) if hard else raw


def rho_fields(params, spec, t, x, directions=()):
    return ad.exp(-mlp_eval(params, spec, _tx(t, x), directions))


def _parts(d):
    """(value, d/dt, d/dx) of a Dual seeded along (t, x)."""
    return d.value, d.tangents[0], d.tangents[1]


# ---------------------------------------------------------------------------
# boundary / initial terms
# ---------------------------------------------------------------------------
def _inflow_weights(rule, side):
    mask = rule.nodes > 0 if side == 0 else rule.nodes < 0
    w = np.where(mask, rule.weights, 0.0)
    total = w.sum()
    if total == 0.0:
        raise ConfigurationError("rule has no inflow velocities")
    return w / total


def _boundary_sets(batch, problem):
    """(t, x) arrays for the boundary evaluations, left block first."""
    tl, tr = batch.boundary_t
    t = np.concatenate([tl, tr])
    x = np.concatenate([np.full(len(tl), problem.x_L), np.full(len(tr), problem.x_R)])
    return t, x, len(tl)


def _bc_term(fb, batch, problem, n_left):
    """Mean boundary mismatch; ``fb`` is the kinetic density at the boundary points (2 N_b, n)."""
    rule = batch.rule
    v = rule.nodes
    if problem.bc == "periodic":
        diff = fb[:n_left] - fb[n_left:]
        return velocity_average(diff * diff, rule).mean()
    left = fb[:n_left] - np.asarray(problem.F_L(v), float)
    right = fb[n_left:] - np.asarray(problem.F_R(v), float)
    lsq = (left * left) @ _inflow_weights(rule, 0)
    rsq = (right * right) @ _inflow_weights(rule, 1)
    n_total = n_left + (len(batch.boundary_t[1]))
    return (lsq.sum() + rsq.sum()) * (1.0 / n_total)


def _ic_term(f_init, batch, problem):
    rule = batch.rule
    x0 = batch.initial_x
    target = np.asarray(problem.f0(x0[:, None], rule.nodes[None, :]), float)
    diff = f_init - target
    return velocity_average(diff * diff, rule).mean()


def _require_points(batch):
    if batch.interior_t.size == 0 or batch.initial_x.size == 0 or min(len(b) for b in batch.boundary_t) == 0:
        raise ConfigurationError("empty batch section")


# ---------------------------------------------------------------------------
# empirical risks
# ---------------------------------------------------------------------------
def pinn_empirical_risk(params, spec, batch: CollocationBatch, problem: ProblemSpec, lam_bc, lam_ic, epsilon=None):
    """Kinetic residual over interior points + lam_bc * BC + lam_ic * IC."""
    _require_points(batch)
    rule = batch.rule
    f = f_fields(params, spec, batch.interior_t, batch.interior_x, rule, (T_DIR, X_DIR))
    fv, ft, fx = _parts(f)
    pde = pinn_residual(fv, ft, fx, batch.interior_x, problem, rule, epsilon).mean()

    bt, bx, n_left = _boundary_sets(batch, problem)
    x0 = batch.initial_x
    n_b = len(bt)
    both = f_fields(params, spec, np.concatenate([bt, np.zeros(len(x0))]), np.concatenate([bx, x0]), rule)
    bc = _bc_term(both[:n_b], batch, problem, n_left)
    ic = _ic_term(both[n_b:], batch, problem)
    total = pde + lam_bc * bc + lam_ic * ic
    return LossBreakdown(0.0, pde, bc, ic, 0.0, total, lam_bc, lam_ic, 0.0)


def _apnn_interior(rho_params, rho_spec, g_params, g_spec, t, x, problem, rule, hard, epsilon):
    rho = rho_fields(rho_params, rho_spec, t, x, (T_DIR, X_DIR))
    g = g_fields(g_params, g_spec, t, x, rule, (T_DIR, X_DIR), hard)
    return rho, g


def apnn_empirical_risk(
    params,
    specs,
    batch: CollocationBatch,
    problem: ProblemSpec,
    lam_bc,
    lam_ic,
    mode="hard",
    lam_constraint=0.0,
    epsilon=None,
):
    """Micro-macro residuals + penalties.

    ``params``/``specs`` are mappings with keys ``"rho"`` and ``"g"``. In
    ``"hard"`` mode g is the mean-subtracted network; in ``"soft"`` mode the
    raw network is used and lam_constraint * mean <g~>^2 is added.
    """
    if mode not in ("hard", "soft"):
        raise ConfigurationError(f"unknown conservation mode {mode!r}")
    _require_points(batch)
    hard = mode == "hard"
    eps = problem.epsilon if epsilon is None else epsilon
    rule = batch.rule
    rp, rs, gp, gs = params["rho"], specs["rho"], params["g"], specs["g"]

    n_mac = batch.interior_t.size
    t_int, x_int = batch.interior_t, batch.interior_x
    if batch.has_separate_micro:
        t_int = np.concatenate([t_int, batch.micro_t])
        x_int = np.concatenate([x_int, batch.micro_x])
    rho, g = _apnn_interior(rp, rs, gp, gs, t_int, x_int, problem, rule, hard, eps)
    rv, rt, rx = _parts(rho)
    gv, gt, gx = _parts(g)
    if batch.has_separate_micro:
        mac = slice(0, n_mac)
        mic = slice(n_mac, None)
        x_mac, x_mic = batch.interior_x, batch.micro_x
    else:
        mac = mic = slice(None)
        x_mac = x_mic = batch.interior_x
    macro = apnn_macro_residual(rt[mac], gx[mac], x_mac, problem, rule).mean()
    micro = apnn_micro_residual(gv[mic], gt[mic], gx[mic], rx[mic], x_mic, problem, rule, eps).mean()

    bt, bx, n_left = _boundary_sets(batch, problem)
    x0 = batch.initial_x
    n_b = len(bt)
    t_all = np.concatenate([bt, np.zeros(len(x0))])
    x_all = np.concatenate([bx, x0])
    rho_b = rho_fields(rp, rs, t_all, x_all)
    g_b = g_fields(gp, gs, t_all, x_all, rule, (), hard)
    f_b = _col(rho_b) + eps * g_b
    bc = _bc_term(f_b[:n_b], batch, problem, n_left)
    ic = _ic_term(f_b[n_b:], batch, problem)

    total = macro + micro + lam_bc * bc + lam_ic * ic
    constraint = 0.0
    if not hard:
        avg = velocity_average(gv[mac], rule)
        constraint = (avg * avg).mean()
        total = total + lam_constraint * constraint
    return LossBreakdown(macro, micro, bc, ic, constraint, total, lam_bc, lam_ic, lam_constraint if not hard else 0.0)


def apnn_interior_risk(params, specs, t, x, problem, rule, epsilon=None, hard=True):
    """Mean macro + micro residual on given interior points (no penalties)."""
    eps = problem.epsilon if epsilon is None else epsilon
    rho, g = _apnn_interior(params["rho"], specs["rho"], params["g"], specs["g"], t, x, problem, rule, hard, eps)
    _, rt, rx = _parts(rho)
    gv, gt, gx = _parts(g)
    macro = apnn_macro_residual(rt, gx, x, problem, rule).mean()
    micro = apnn_micro_residual(gv, gt, gx, rx, x, problem, rule, eps).mean()
    return macro + micro


def apnn_limit_risk(params, specs, batch_or_points, problem, rule=None):
    """Interior APNN risk with eps set to 0 in both residuals."""
    if isinstance(batch_or_points, CollocationBatch):
        t, x, rule = batch_or_points.interior_t, batch_or_points.interior_x, batch_or_points.rule
    else:
        t, x = batch_or_points
    return apnn_interior_risk(params, specs, t, x, problem, rule, epsilon=0.0)


def pinn_interior_risk(params, spec, t, x, problem, rule, epsilon=None):
    f = f_fields(params, spec, t, x, rule, (T_DIR, X_DIR))
    fv, ft, fx = _parts(f)
    return pinn_residual(fv, ft, fx, x, problem, rule, epsilon).mean()


def pinn_equilibrium_risk(params, spec, t, x, problem, rule):
    """The eps -> 0 limit of the PINN interior risk (least squares of L f = 0)."""
    fv = f_fields(params, spec, t, x, rule)
    return pinn_equilibrium_residual(fv, x, problem, rule).mean()


def parity_interior_risk(params, specs, t, x, problem, rule, epsilon=None, rescaled=True):
    """(even, odd) mean residuals of the parity system for raw networks r and j."""
    r = raw_nodes(params["r"], specs["r"], t, x, rule, (T_DIR, X_DIR))
    j = raw_nodes(params["j"], specs["j"], t, x, rule, (T_DIR, X_DIR))
    rv, rt, rx = _parts(r)
    jv, jt, jx = _parts(j)
    even, odd = parity_residuals(rv, rt, rx, jv, jt, jx, x, problem, rule, epsilon, rescaled)
    return even.mean(), odd.mean()


def parity_limit_risk(params, specs, t, x, problem, rule):
    r = raw_nodes(params["r"], specs["r"], t, x, rule, (T_DIR, X_DIR))
    j = raw_nodes(params["j"], specs["j"], t, x, rule)
    rv, _, rx = _parts(r)
    even, odd = parity_limit_residuals(rv, rx, j, x, problem, rule)
    return even.mean(), odd.mean()


def empirical_risk(method, params, specs, batch, problem, lam_bc, lam_ic, lam_constraint=0.0):
    """Dispatch on ``method`` in {"pinn", "apnn-hard", "apnn-soft"}."""
    if method == "pinn":
        return pinn_empirical_risk(params["f"], specs["f"], batch, problem, lam_bc, lam_ic)
    if method == "apnn-hard":
        return apnn_empirical_risk(params, specs, batch, problem, lam_bc, lam_ic, "hard")
    if method == "apnn-soft":
        return apnn_empirical_risk(params, specs, batch, problem, lam_bc, lam_ic, "soft", lam_constraint)
    raise ConfigurationError(f"unknown method {method!r}; choose one of {METHODS}")


def network_names(method):
    return ("f",) if method == "pinn" else ("rho", "g")


def unflatten(theta, specs, names):
    """Split one flat vector into per-network ParameterSets (order of ``names``)."""
    out, pos = {}, 0
    for name in names:
        n = specs[name].n_params
        out[name] = ParameterSet.from_flat(specs[name], theta[pos : pos + n])
        pos += n
    if pos != np.shape(ad.value_of(theta))[0]:
        raise ConfigurationError("flat parameter vector has the wrong length")
    return out


def flatten(params, names):
    return np.concatenate([params[name].flat() for name in names])
