"""Feed-forward networks and the three solution parametrizations.

Weights are stored per layer as ``W[l]`` of shape (m_{l+1}, m_l) and biases
``b[l]`` of shape (m_{l+1},). The flat layout concatenates, layer by layer,
``W[l]`` in row-major order followed by ``b[l]``.

All evaluation functions accept either plain arrays or tape variables for
the parameters, and either plain arrays or :class:`~apnn.autodiff.Dual`
numbers for the inputs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import kernels
from .errors import ConfigurationError
from .quadrature import QuadratureRule, velocity_average

CHECKPOINT_LAYOUT_VERSION = 1

ACTIVATIONS = {"tanh": ad.tanh}


@dataclass(frozen=True)
class NetworkSpec:
    layer_widths: tuple
    activation: str = "tanh"

    def __post_init__(self):
        widths = tuple(int(m) for m in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2 or any(m <= 0 for m in widths):
            raise ConfigurationError(f"invalid layer widths {widths}")
        if widths[-1] != 1:
            raise ConfigurationError("networks have a scalar output (last width must be 1)")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")

    @property
    def input_dim(self):
        return self.layer_widths[0]

    @property
    def n_layers(self):
        return len(self.layer_widths) - 1

    @property
    def n_params(self):
        w = self.layer_widths
        return sum(w[l + 1] * (w[l] + 1) for l in range(len(w) - 1))

    def to_dict(self):
        return {"layer_widths": list(self.layer_widths), "activation": self.activation}


@dataclass
class ParameterSet:
    """Per-layer weights and biases (arrays, or slices of a tape leaf)."""

    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    @classmethod
    def from_flat(cls, spec: NetworkSpec, flat):
        if np.shape(ad.value_of(flat)) != (spec.n_params,):
            raise ConfigurationError(
                f"flat vector of length {np.shape(ad.value_of(flat))} does not match {spec.n_params} parameters"
            )
        weights, biases = [], []
        pos = 0
        w = spec.layer_widths
        for l in range(spec.n_layers):
            n_out, n_in = w[l + 1], w[l]
            weights.append(ad.reshape(flat[pos : pos + n_out * n_in], (n_out, n_in)))
            pos += n_out * n_in
            biases.append(flat[pos : pos + n_out])
            pos += n_out
        return cls(weights, biases)

    def flat(self):
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(np.ravel(ad.value_of(W)))
            parts.append(np.ravel(ad.value_of(b)))
        return np.concatenate(parts)

    @property
    def n_params(self):
        return sum(np.size(ad.value_of(W)) + np.size(ad.value_of(b)) for W, b in zip(self.weights, self.biases))


def init_parameters(spec: NetworkSpec, seed) -> ParameterSet:
    """Glorot-uniform weights, zero biases; deterministic in ``seed``.

    ``seed`` may be an int or a :class:`numpy.random.SeedSequence`.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    weights, biases = [], []
    w = spec.layer_widths
    for l in range(spec.n_layers):
        bound = np.sqrt(6.0 / (w[l] + w[l + 1]))
        weights.append(rng.uniform(-bound, bound, size=(w[l + 1], w[l])))
        biases.append(np.zeros(w[l + 1]))
    return ParameterSet(weights, biases)


def _check_input(spec, x):
    d = np.shape(ad.value_of(x.value if isinstance(x, ad.Dual) else x))[-1]
    if d != spec.input_dim:
        raise ConfigurationError(f"input dimension {d} does not match network input {spec.input_dim}")


def mlp_apply(params: ParameterSet, spec: NetworkSpec, x):
    """Raw network output for a batch ``x`` of shape (N, m0) (or a single point).

    ``x`` may be a Dual carrying input tangents. Returns shape (N,) (or a
    scalar-shaped entry for a single point).
    """
    _check_input(spec, x)
    act = ACTIVATIONS[spec.activation]
    h = x
    last = spec.n_layers - 1
    for l, (W, b) in enumerate(zip(params.weights, params.biases)):
        h = ad.linear(h, W, b)
        if l < last:
            h = act(h)
    return h[..., 0]


def _fused_forward(Ws, bs, X, dirs):
    k = len(dirs)
    n = X.shape[0]
    last = len(Ws) - 1
    caches = []
    A = X
    for l, (W, b) in enumerate(zip(Ws, bs)):
        m_out = W.shape[0]
        if l == 0:
            Z = np.empty((1 + k, n, m_out))
            Z[0] = X @ W.T + b
            for i, d in enumerate(dirs):
                Z[1 + i] = W[:, d]
        else:
            Z = (A.reshape(-1, A.shape[-1]) @ W.T).reshape(1 + k, n, m_out)
            Z[0] += b
        if l == last:
            # the input of the output layer rides along for the adjoint
            return Z[..., 0], (caches, A)
        Y, s = kernels.tanh_dual_forward(Z)
        caches.append((A, Z, Y[0], s))
        A = Y


def _fused_backward(Ws, X, dirs, cache, G):
    caches, A = cache
    n_layers = len(Ws)
    gWs, gbs = [None] * n_layers, [None] * n_layers
    W = Ws[-1]
    gb = np.array([G[0].sum()])
    if n_layers == 1:
        gW = (G[0] @ X)[None, :]
        for i, d in enumerate(dirs):
            gW[0, d] += G[1 + i].sum()
        return [gW], [gb]
    gWs[-1] = (G.reshape(-1) @ A.reshape(-1, A.shape[-1]))[None, :]
    gbs[-1] = gb
    gA = G[..., None] * W[0]
    for l in range(n_layers - 2, -1, -1):
        A_in, Z, y0, s = caches[l]
        gZ = kernels.tanh_dual_backward(gA, y0, s, Z)
        m_out = gZ.shape[-1]
        if l == 0:
            gW = gZ[0].T @ X
            for i, d in enumerate(dirs):
                gW[:, d] += gZ[1 + i].sum(axis=0)
        else:
            gZf = gZ.reshape(-1, m_out)
            gW = gZf.T @ A_in.reshape(-1, A_in.shape[-1])
            gA = (gZf @ Ws[l]).reshape(A_in.shape)
        gWs[l] = gW
        gbs[l] = gZ[0].sum(axis=0)
    return gWs, gbs


def mlp_eval(params: ParameterSet, spec: NetworkSpec, X, directions=()):
    """Network output on a batch ``X`` (N, m0) with exact input derivatives.

    One fused tape node covers the whole network (value and tangents);
    its adjoint is written out by hand. Returns an (N,) array or Var when
    ``directions`` is empty, otherwise a Dual whose tangents are the
    partials along the given input coordinates.
    """
    X = np.asarray(X, dtype=float)
    _check_input(spec, X)
    if spec.activation != "tanh":
        raise ConfigurationError("fused evaluation is implemented for tanh only")
    dirs = tuple(int(d) for d in directions)
    Ws, bs = list(params.weights), list(params.biases)
    Wv = [np.asarray(ad.value_of(W)) for W in Ws]
    bv = [np.asarray(ad.value_of(b)) for b in bs]
    out, caches = _fused_forward(Wv, bv, X, dirs)
    leaves = Ws + bs
    tape = next((p.tape for p in leaves if isinstance(p, ad.Var)), None)
    if tape is not None:
        is_var = [isinstance(p, ad.Var) for p in leaves]
        parents = tuple(p for p in leaves if isinstance(p, ad.Var))

        def back(G):
            gWs, gbs = _fused_backward(Wv, X, dirs, caches, G)
            return tuple(g for g, v in zip(gWs + gbs, is_var) if v)

        out = tape._record(out, parents, back, "mlp")
    if not dirs:
        return out[0]
    return ad.Dual(out[0], tuple(out[1 + i] for i in range(len(dirs))))


def mlp_forward(params: ParameterSet, spec: NetworkSpec, x):
    """Plain forward pass; returns a float for a single point, else an (N,) array."""
    x = np.asarray(x, dtype=float)
    out = mlp_apply(params, spec, x)
    return float(out) if x.ndim == 1 else out


def with_directions(x, directions):
    """Wrap a batch of inputs as a Dual seeded along the given coordinates."""
    x = np.asarray(x, dtype=float)
    eye = np.eye(x.shape[-1])
    return ad.Dual(x, tuple(eye[i] for i in directions))


def eval_with_input_derivatives(params: ParameterSet, spec: NetworkSpec, point, directions):
    """Network value at one point and its exact partials along ``directions``."""
    if len(point) != spec.input_dim:
        raise ConfigurationError(f"point of length {len(point)} for a network with input {spec.input_dim}")
    return ad.eval_with_input_derivatives(lambda xd: mlp_apply(params, spec, xd), point, directions)


def _stack(*cols):
    return np.stack([np.asarray(c, dtype=float) for c in np.broadcast_arrays(*cols)], axis=-1)


def f_net(params, spec, t, x, v):
    """Positive kinetic density exp(-f~(t, x, v))."""
    return ad.exp(-mlp_apply(params, spec, _stack(t, x, v)))


def rho_net(params, spec, t, x):
    """Positive macroscopic density exp(-rho~(t, x))."""
    return ad.exp(-mlp_apply(params, spec, _stack(t, x)))


def g_net(params, spec, t, x, v, rule: QuadratureRule):
    """Mean-free fluctuation g~(t,x,v) - <g~>(t,x), the average taken with ``rule``.

    ``t`` and ``x`` are matching scalars or 1-D arrays; ``v`` is broadcast
    against them, or is an (N, m) array of velocities per sample row.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    v = np.asarray(v, dtype=float)
    if v.ndim == 2:
        raw = mlp_apply(params, spec, _stack(t[:, None], x[:, None], v))
    else:
        raw = mlp_apply(params, spec, _stack(t, x, v))
    tn, xn, vn = nodes_grid(t, x, rule)
    at_nodes = ad.reshape(mlp_apply(params, spec, _stack(tn, xn, vn)), (len(t), rule.n))
    mean = velocity_average(at_nodes, rule)
    if v.ndim == 2:
        mean = ad.reshape(mean, (len(t), 1))
    return raw - mean


def nodes_grid(t, x, rule: QuadratureRule):
    """Tensorize (t, x) samples with the velocity nodes; flat arrays of length N * n."""
    n = rule.n
    return np.repeat(t, n), np.repeat(x, n), np.tile(rule.nodes, len(t))


def save_checkpoint(path, params: ParameterSet, spec: NetworkSpec, seed=None, extra=None):
    """Write the flat parameters as little-endian float64 plus a JSON sidecar."""
    path = Path(path)
    flat = params.flat().astype("<f8")
    path.write_bytes(flat.tobytes())
    meta = {
        "layout_version": CHECKPOINT_LAYOUT_VERSION,
        "spec": spec.to_dict(),
        "seed": seed,
        "n_params": int(flat.size),
        "dtype": "<f8",
        "layout": "per layer: W (out x in, row-major) then b",
    }
    if extra:
        meta.update(extra)
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return sidecar


def load_checkpoint(path):
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    if meta.get("layout_version") != CHECKPOINT_LAYOUT_VERSION:
        raise ConfigurationError(f"unsupported checkpoint layout {meta.get('layout_version')}")
    spec = NetworkSpec(tuple(meta["spec"]["layer_widths"]), meta["spec"]["activation"])
    flat = np.frombuffer(path.read_bytes(), dtype="<f8").astype(float)
    return ParameterSet.from_flat(spec, flat), spec, meta
