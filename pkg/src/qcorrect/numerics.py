"""Small fully-connected value networks with hand-written backprop and Adam.

All parameters of a network live in one flat float64 vector; per-layer weight
matrices and bias vectors are views into it.  That keeps the optimizer, the
target-network copy and the checkpoint format trivial.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NumericError, ShapeError

WEIGHTS_FORMAT = "qcorrect-paramnet"
WEIGHTS_VERSION = 1


class ParamNet:
    """ReLU multilayer perceptron with an identity (or dueling) output layer.

    ``layer_sizes`` is ``[input_dim, *hidden, n_outputs]``.  With ``dueling``
    the last layer produces ``1 + n_outputs`` raw values, a state value and one
    advantage per action, combined as ``V + A - mean(A)``.

    ``weights[l]`` has shape ``(sizes[l + 1], sizes[l])`` so that the layer
    computes ``W @ x + b``.
    """

    def __init__(self, layer_sizes, dueling=False, params=None, rng=None):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ShapeError(f"layer_sizes must hold >= 2 positive ints, got {layer_sizes}")
        self.layer_sizes = sizes
        self.dueling = bool(dueling)

        shapes = []
        for l in range(len(sizes) - 1):
            fan_out = sizes[l + 1]
            if l == len(sizes) - 2 and self.dueling:
                fan_out += 1
            shapes.append((fan_out, sizes[l]))
        self._shapes = shapes
        n_params = sum(o * i + o for o, i in shapes)

        if params is None:
            rng = np.random.default_rng() if rng is None else rng
            params = np.empty(n_params)
            self.params = params
            self._bind()
            for W, b in zip(self.weights, self.biases):
                bound = 1.0 / np.sqrt(W.shape[1])
                W[...] = rng.uniform(-bound, bound, size=W.shape)
                b[...] = rng.uniform(-bound, bound, size=b.shape)
        else:
            params = np.array(params, dtype=np.float64)
            if params.shape != (n_params,):
                raise ShapeError(f"expected {n_params} parameters, got shape {params.shape}")
            self.params = params
            self._bind()

    def _bind(self):
        self.weights, self.biases = [], []
        pos = 0
        for o, i in self._shapes:
            self.weights.append(self.params[pos:pos + o * i].reshape(o, i))
            pos += o * i
            self.biases.append(self.params[pos:pos + o])
            pos += o

    @property
    def input_dim(self):
        return self.layer_sizes[0]

    @property
    def output_dim(self):
        return self.layer_sizes[-1]

    @property
    def n_params(self):
        return self.params.size

    def copy(self):
        return ParamNet(self.layer_sizes, self.dueling, params=self.params.copy())

    def __call__(self, x):
        return forward(self, x)

    def __repr__(self):
        return f"ParamNet(layer_sizes={self.layer_sizes}, dueling={self.dueling})"


def _check_input(net, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != net.input_dim:
        raise ShapeError(f"input of shape {x.shape} does not match input dim {net.input_dim}")
    return x


def _forward_cache(net, x):
    hs = [x]
    zs = []
    h = x
    last = len(net.weights) - 1
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ W.T + b
        zs.append(z)
        h = z if l == last else np.maximum(z, 0.0)
        hs.append(h)
    raw = hs[-1]
    if net.dueling:
        adv = raw[..., 1:]
        out = raw[..., :1] + adv - adv.mean(axis=-1, keepdims=True)
    else:
        out = raw
    return out, hs, zs


def forward(net, x):
    """Action values for one input vector (shape ``(d,)``) or a batch ``(B, d)``."""
    x = _check_input(net, x)
    if not np.all(np.isfinite(net.params)):
        raise NumericError("network has non-finite parameters")
    return _forward_cache(net, x)[0]


def grad(net, x, cotangent):
    """Gradient of ``sum(cotangent * forward(net, x))`` w.r.t. the flat parameters.

    Batched inputs are summed over the batch.
    """
    x = _check_input(net, x)
    g = np.asarray(cotangent, dtype=np.float64)
    if g.shape != x.shape[:-1] + (net.output_dim,):
        raise ShapeError(f"cotangent of shape {g.shape} does not match output dim {net.output_dim}")
    if x.ndim == 1:
        x, g = x[None, :], g[None, :]

    _, hs, zs = _forward_cache(net, x)
    if net.dueling:
        g_raw = np.empty((g.shape[0], net.output_dim + 1))
        g_raw[:, 0] = g.sum(axis=1)
        g_raw[:, 1:] = g - g.mean(axis=1, keepdims=True)
    else:
        g_raw = g

    out = np.empty_like(net.params)
    pos_end = out.size
    delta = g_raw
    for l in range(len(net.weights) - 1, -1, -1):
        W = net.weights[l]
        o, i = W.shape
        out[pos_end - o:pos_end] = delta.sum(axis=0)
        out[pos_end - o - o * i:pos_end - o] = (delta.T @ hs[l]).ravel()
        pos_end -= o + o * i
        if l > 0:
            delta = (delta @ W) * (zs[l - 1] > 0.0)
    return out


def _layout(net):
    """``(weight_start, out, in, bias_start)`` per layer of the flat vector."""
    pos, out = 0, []
    for o, i in net._shapes:
        out.append((pos, o, i, pos + o * i))
        pos += o * i + o
    return out


def forward_stack(template, P, x):
    """Outputs of ``H`` same-shaped networks whose parameters are the rows of
    ``P`` (shape ``(H, n_params)``) on a shared batch ``x``: ``(H, B, n_out)``."""
    return _stack_cache(template, P, _check_input(template, x))[0]


def _stack_cache(template, P, x):
    H = P.shape[0]
    if x.ndim == 1:
        x = x[None, :]
    hs, zs = [x], []
    h = x
    lay = _layout(template)
    for l, (pw, o, i, pb) in enumerate(lay):
        W = P[:, pw:pw + o * i].reshape(H, o, i)
        z = h @ W.transpose(0, 2, 1) + P[:, None, pb:pb + o]
        zs.append(z)
        h = z if l == len(lay) - 1 else np.maximum(z, 0.0)
        hs.append(h)
    raw = hs[-1]
    if template.dueling:
        adv = raw[..., 1:]
        out = raw[..., :1] + adv - adv.mean(axis=-1, keepdims=True)
    else:
        out = raw
    return out, hs, zs


def grad_stack(template, P, x, cotangent):
    """Row ``h`` is ``grad`` of network ``h`` for cotangent ``cotangent[h]``."""
    x = _check_input(template, x)
    if x.ndim == 1:
        x = x[None, :]
    g = np.asarray(cotangent, dtype=np.float64)
    H = P.shape[0]
    if g.shape != (H, x.shape[0], template.output_dim):
        raise ShapeError(f"cotangent of shape {g.shape} does not match ({H}, {x.shape[0]}, {template.output_dim})")
    _, hs, zs = _stack_cache(template, P, x)
    if template.dueling:
        delta = np.empty(g.shape[:2] + (template.output_dim + 1,))
        delta[..., 0] = g.sum(axis=-1)
        delta[..., 1:] = g - g.mean(axis=-1, keepdims=True)
    else:
        delta = g
    out = np.empty_like(P)
    lay = _layout(template)
    for l in range(len(lay) - 1, -1, -1):
        pw, o, i, pb = lay[l]
        out[:, pb:pb + o] = delta.sum(axis=1)
        hl = hs[l] if hs[l].ndim == 3 else np.broadcast_to(hs[l], (H,) + hs[l].shape)
        out[:, pw:pw + o * i] = (delta.transpose(0, 2, 1) @ hl).reshape(H, o * i)
        if l > 0:
            W = P[:, pw:pw + o * i].reshape(H, o, i)
            delta = (delta @ W) * (zs[l - 1] > 0.0)
    return out


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, n_params, learning_rate=1e-4, **kw):
        return cls(np.zeros(n_params), np.zeros(n_params), 0, learning_rate, **kw)


def adam_step(params, grads, state):
    """Bias-corrected Adam descent step, in place.  Returns ``(params, state)``."""
    grads = np.asarray(grads, dtype=np.float64)
    if not (params.shape == grads.shape == state.m.shape == state.v.shape):
        raise ShapeError("params, grads and Adam moments must have the same length")
    if not np.all(np.isfinite(grads)):
        raise NumericError(f"non-finite gradient at Adam step {state.step + 1}")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grads
    state.v *= b2
    state.v += (1.0 - b2) * grads * grads
    m_hat = state.m / (1.0 - b1 ** state.step)
    v_hat = state.v / (1.0 - b2 ** state.step)
    params -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return params, state


def net_to_dict(net):
    return {
        "format": WEIGHTS_FORMAT,
        "version": WEIGHTS_VERSION,
        "layer_sizes": list(net.layer_sizes),
        "dueling": net.dueling,
        "layers": [
            {"weight": W.tolist(), "bias": b.tolist()}
            for W, b in zip(net.weights, net.biases)
        ],
    }


def net_from_dict(d):
    if d.get("format") != WEIGHTS_FORMAT or d.get("version") != WEIGHTS_VERSION:
        raise ValueError(f"unsupported weights file: format={d.get('format')!r} version={d.get('version')!r}")
    net = ParamNet(d["layer_sizes"], d["dueling"], rng=np.random.default_rng(0))
    if len(d["layers"]) != len(net.weights):
        raise ShapeError("layer count does not match layer_sizes")
    for W, b, layer in zip(net.weights, net.biases, d["layers"]):
        w_new = np.asarray(layer["weight"], dtype=np.float64)
        b_new = np.asarray(layer["bias"], dtype=np.float64)
        if w_new.shape != W.shape or b_new.shape != b.shape:
            raise ShapeError(f"layer shapes {w_new.shape}/{b_new.shape} do not match {W.shape}/{b.shape}")
        W[...] = w_new
        b[...] = b_new
    return net


def dumps_net(net):
    # json writes floats with repr(), which round-trips float64 exactly.
    return json.dumps(net_to_dict(net), indent=1)


def save_net(net, path):
    Path(path).write_text(dumps_net(net) + "\n")


def load_net(path):
    return net_from_dict(json.loads(Path(path).read_text()))
