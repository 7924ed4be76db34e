"""Dense feed-forward networks with hand-written reverse mode and Adam.

Weights are stored ``(out, in)`` so a layer computes ``W @ x + b``. Inputs may
be a single vector ``(in,)`` or a batch ``(B, in)``; gradients from a batch
are summed over its rows.
"""

from dataclasses import dataclass, field
import hashlib
import itertools

import numpy as np

from advtrain.errors import ConfigError, NumericError, UsageError

ACTIVATIONS = ("identity", "tanh", "relu")

_net_ids = itertools.count()


def _act(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(name, z, a, upstream):
    if name == "tanh":
        return upstream * (1.0 - a * a)
    if name == "relu":
        return upstream * (z > 0.0)
    return upstream


@dataclass(eq=False)
class MlpNet:
    layer_dims: tuple
    activations: tuple
    weights: list
    biases: list
    m_w: list = field(default_factory=list)
    v_w: list = field(default_factory=list)
    m_b: list = field(default_factory=list)
    v_b: list = field(default_factory=list)
    adam_t: int = 0
    version: int = 0
    uid: int = field(default_factory=lambda: next(_net_ids))

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        self.activations = tuple(self.activations)
        if len(self.activations) != len(self.layer_dims) - 1:
            raise ConfigError("need one activation per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_dims[i + 1], self.layer_dims[i]) or b.shape != (self.layer_dims[i + 1],):
                raise ConfigError(f"layer {i} parameter shapes do not match layer_dims")
        if not self.m_w:
            self.reset_optimizer()

    @property
    def n_layers(self):
        return len(self.weights)

    def reset_optimizer(self):
        self.m_w = [np.zeros_like(w) for w in self.weights]
        self.v_w = [np.zeros_like(w) for w in self.weights]
        self.m_b = [np.zeros_like(b) for b in self.biases]
        self.v_b = [np.zeros_like(b) for b in self.biases]
        self.adam_t = 0

    def parameters(self):
        """Flat iterator over weight then bias arrays, layer by layer."""
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def flat_params(self):
        return np.concatenate([p.ravel() for p in self.parameters()])

    def copy(self):
        return MlpNet(
            self.layer_dims,
            self.activations,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            [m.copy() for m in self.m_w],
            [v.copy() for v in self.v_w],
            [m.copy() for m in self.m_b],
            [v.copy() for v in self.v_b],
            self.adam_t,
        )

    def __call__(self, x):
        return predict(self, x)


@dataclass
class GradientTape:
    net_uid: int
    net_version: int
    inputs: list
    pre: list
    post: list
    batched: bool
    consumed: bool = False


@dataclass
class Gradients:
    weights: list
    biases: list
    input: np.ndarray

    def scale(self, k):
        return Gradients([w * k for w in self.weights], [b * k for b in self.biases], self.input * k)

    def __add__(self, other):
        return Gradients(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
            self.input + other.input,
        )

    def all_finite(self):
        return all(np.isfinite(g).all() for g in itertools.chain(self.weights, self.biases))


def init(layer_dims, activations, rng):
    """Fan-in scaled uniform weights ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``, zero biases."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2:
        raise ConfigError("an MLP needs at least input and output widths")
    if min(dims) < 1:
        raise ConfigError("layer widths must be >= 1")
    if isinstance(activations, str):
        activations = [activations] * (len(dims) - 1)
    activations = list(activations)
    if len(activations) != len(dims) - 1:
        raise ConfigError(f"expected {len(dims) - 1} activations, got {len(activations)}")
    for a in activations:
        if a not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {a!r}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpNet(tuple(dims), tuple(activations), weights, biases)


def forward(net, x):
    """Return ``(output, tape)``; the tape feeds exactly one :func:`backward`."""
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 2
    if x.shape[-1] != net.layer_dims[0] or x.ndim not in (1, 2):
        raise UsageError(f"input shape {x.shape} does not match input width {net.layer_dims[0]}")
    inputs, pre, post = [], [], []
    h = x
    for w, b, act in zip(net.weights, net.biases, net.activations):
        inputs.append(h)
        z = h @ w.T + b
        h = _act(act, z)
        pre.append(z)
        post.append(h)
    return h, GradientTape(net.uid, net.version, inputs, pre, post, batched)


def predict(net, x):
    """Forward pass without a tape."""
    h = np.asarray(x, dtype=np.float64)
    if h.shape[-1] != net.layer_dims[0]:
        raise UsageError(f"input shape {h.shape} does not match input width {net.layer_dims[0]}")
    for w, b, act in zip(net.weights, net.biases, net.activations):
        h = _act(act, h @ w.T + b)
    return h


def hidden(net, x, layer=-2):
    """Post-activation output of hidden layer ``layer`` (default: last hidden)."""
    h = np.asarray(x, dtype=np.float64)
    stop = layer % net.n_layers
    for i, (w, b, act) in enumerate(zip(net.weights, net.biases, net.activations)):
        h = _act(act, h @ w.T + b)
        if i == stop:
            return h
    return h


def backward(net, tape, output_grad):
    """Gradients of ``sum(output * output_grad)`` w.r.t. every parameter and the input."""
    if tape.consumed:
        raise UsageError("gradient tape already consumed")
    if tape.net_uid != net.uid or tape.net_version != net.version:
        raise UsageError("stale gradient tape: network changed since the forward pass")
    tape.consumed = True
    g = np.asarray(output_grad, dtype=np.float64)
    if g.shape != tape.post[-1].shape:
        raise UsageError(f"output_grad shape {g.shape} != output shape {tape.post[-1].shape}")
    gw = [None] * net.n_layers
    gb = [None] * net.n_layers
    for i in range(net.n_layers - 1, -1, -1):
        dz = _act_grad(net.activations[i], tape.pre[i], tape.post[i], g)
        if tape.batched:
            gw[i] = dz.T @ tape.inputs[i]
            gb[i] = dz.sum(axis=0)
        else:
            gw[i] = np.outer(dz, tape.inputs[i])
            gb[i] = dz
        g = dz @ net.weights[i]
    return Gradients(gw, gb, g)


def adam_step(net, grads, lr, betas=(0.9, 0.999), eps=1e-8):
    """In-place bias-corrected Adam update. Non-finite gradients raise
    :class:`NumericError` and leave the network untouched."""
    if len(grads.weights) != net.n_layers:
        raise UsageError("gradient layer count does not match network")
    for w, gw, b, gb in zip(net.weights, grads.weights, net.biases, grads.biases):
        if gw.shape != w.shape or gb.shape != b.shape:
            raise UsageError("gradient shapes do not match parameters")
    if not grads.all_finite():
        raise NumericError("non-finite gradient; Adam step skipped")
    b1, b2 = betas
    t = net.adam_t + 1
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    state = {}
    for name, params, ms, vs, gs in (
        ("w", net.weights, net.m_w, net.v_w, grads.weights),
        ("b", net.biases, net.m_b, net.v_b, grads.biases),
    ):
        m = [b1 * mi + (1.0 - b1) * g for mi, g in zip(ms, gs)]
        v = [b2 * vi + (1.0 - b2) * g * g for vi, g in zip(vs, gs)]
        p = [pi - lr * (mi / c1) / (np.sqrt(vi / c2) + eps) for pi, mi, vi in zip(params, m, v)]
        if not all(np.isfinite(x).all() for x in p):
            raise NumericError("Adam produced non-finite parameters")
        state[name] = (p, m, v)
    net.weights, net.m_w, net.v_w = state["w"]
    net.biases, net.m_b, net.v_b = state["b"]
    net.adam_t = t
    net.version += 1
    return net


def zero_grads(net):
    return Gradients([np.zeros_like(w) for w in net.weights], [np.zeros_like(b) for b in net.biases], np.zeros(net.layer_dims[0]))


def checksum(net):
    """Stable digest of the parameters (freeze/thaw checks)."""
    h = hashlib.sha256()
    for p in net.parameters():
        h.update(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return h.hexdigest()
