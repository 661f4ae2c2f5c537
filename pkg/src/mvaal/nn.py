"""Layers, initialization, optimizers and checkpoints on top of the tensor engine."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor


class ParamSetError(KeyError):
    pass


class ParamSet:
    """Named map of parameters (all grad-tracked) plus norm-layer buffers.

    Iteration over paths is lexicographic so that every consumer sees the
    same deterministic order.
    """

    def __init__(self, params=None, buffers=None, mode="training"):
        self.params: dict[str, Tensor] = dict(params or {})
        self.buffers: dict[str, Tensor] = dict(buffers or {})
        self.mode = mode

    def paths(self):
        return sorted(self.params)

    def __getitem__(self, path) -> Tensor:
        try:
            return self.params[path]
        except KeyError:
            raise ParamSetError(f"missing parameter path: {path}")

    def add(self, path, data):
        if path in self.params:
            raise ParamSetError(f"duplicate parameter path: {path}")
        t = Tensor(data)
        t.requires_grad = True
        self.params[path] = t

    def add_buffer(self, path, data):
        self.buffers[path] = Tensor(data)

    def merged(self, *others) -> "ParamSet":
        """Shared-tensor view combining several sets (for joint optimization)."""
        out = ParamSet(mode=self.mode)
        for ps in (self,) + others:
            for k, v in ps.params.items():
                if k in out.params:
                    raise ParamSetError(f"duplicate parameter path in merge: {k}")
                out.params[k] = v
            out.buffers.update(ps.buffers)
        return out

    def tensors(self):
        return [self.params[k] for k in self.paths()]

    def copy(self) -> "ParamSet":
        out = ParamSet(mode=self.mode)
        for k, v in self.params.items():
            out.add(k, v.data.copy())
        for k, v in self.buffers.items():
            out.add_buffer(k, v.data.copy())
        return out

    def load_values(self, other: "ParamSet"):
        for k in self.params:
            self.params[k].data[...] = other.params[k].data
        for k in self.buffers:
            self.buffers[k].data[...] = other.buffers[k].data


# -- initialization -----------------------------------------------------------

_GAINS = {
    "relu": np.sqrt(2.0),
    "linear": 1.0,
    "sigmoid": 1.0,
    "tanh": 5.0 / 3.0,
}


def _gain(activation, slope=0.2):
    if activation == "leaky_relu":
        return np.sqrt(2.0 / (1.0 + slope * slope))
    return _GAINS.get(activation, np.sqrt(2.0))


def _kaiming_uniform(rng, shape, fan_in, gain):
    bound = gain / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


# -- layer catalog --------------------------------------------------------------


@dataclass
class Layer:
    kind: str
    name: str = ""
    attrs: dict = field(default_factory=dict)


def linear(name, in_f, out_f, activation="leaky_relu"):
    return Layer("linear", name, {"in": in_f, "out": out_f, "activation": activation})


def conv2d(name, in_c, out_c, k, stride=1, padding=0, activation="leaky_relu"):
    return Layer("conv2d", name, {"in": in_c, "out": out_c, "k": k, "stride": stride,
                                  "padding": padding, "activation": activation})


def tconv2d(name, in_c, out_c, k, stride=1, padding=0, activation="leaky_relu"):
    return Layer("transposed-conv2d", name, {"in": in_c, "out": out_c, "k": k,
                                             "stride": stride, "padding": padding,
                                             "activation": activation})


def batch_norm(name, features, eps=1e-5, momentum=0.1):
    return Layer("batch-norm", name, {"features": features, "eps": eps, "momentum": momentum})


def leaky_relu(slope=0.2):
    return Layer("leaky-relu", attrs={"slope": slope})


def relu():
    return Layer("relu")


def sigmoid():
    return Layer("sigmoid")


def tanh():
    return Layer("tanh")


def max_pool(k=2):
    return Layer("max-pool", attrs={"k": k})


def flatten():
    return Layer("flatten")


def reshape_to(shape):
    return Layer("reshape", attrs={"shape": tuple(shape)})


def init_params(arch, seed, prefix="") -> ParamSet:
    """Kaiming-uniform weights (fan-in, activation gain), zero biases, unit norm scales."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    ps = ParamSet()
    for layer in arch:
        a = layer.attrs
        path = f"{prefix}{layer.name}" if layer.name else None
        if layer.kind == "linear":
            gain = _gain(a["activation"])
            ps.add(f"{path}/W", _kaiming_uniform(rng, (a["in"], a["out"]), a["in"], gain))
            ps.add(f"{path}/b", np.zeros(a["out"]))
        elif layer.kind == "conv2d":
            fan_in = a["in"] * a["k"] * a["k"]
            gain = _gain(a["activation"])
            ps.add(f"{path}/W", _kaiming_uniform(rng, (a["out"], a["in"], a["k"], a["k"]), fan_in, gain))
            ps.add(f"{path}/b", np.zeros(a["out"]))
        elif layer.kind == "transposed-conv2d":
            fan_in = a["in"] * a["k"] * a["k"]
            gain = _gain(a["activation"])
            ps.add(f"{path}/W", _kaiming_uniform(rng, (a["in"], a["out"], a["k"], a["k"]), fan_in, gain))
            ps.add(f"{path}/b", np.zeros(a["out"]))
        elif layer.kind == "batch-norm":
            ps.add(f"{path}/gamma", np.ones(a["features"]))
            ps.add(f"{path}/beta", np.zeros(a["features"]))
            ps.add_buffer(f"{path}/running_mean", np.zeros(a["features"]))
            ps.add_buffer(f"{path}/running_var", np.ones(a["features"]))
    return ps


def layer_forward(layer: Layer, params: ParamSet, x: Tensor, prefix="") -> Tensor:
    a = layer.attrs
    path = f"{prefix}{layer.name}" if layer.name else None
    if layer.kind == "linear":
        w, b = params[f"{path}/W"], params[f"{path}/b"]
        return T.matmul(x, w) + b
    if layer.kind == "conv2d":
        w, b = params[f"{path}/W"], params[f"{path}/b"]
        out = T.conv2d(x, w, stride=a["stride"], padding=a["padding"])
        return out + T.reshape(b, (1, -1, 1, 1))
    if layer.kind == "transposed-conv2d":
        w, b = params[f"{path}/W"], params[f"{path}/b"]
        out = T.conv_transpose2d(x, w, stride=a["stride"], padding=a["padding"])
        return out + T.reshape(b, (1, -1, 1, 1))
    if layer.kind == "batch-norm":
        return _batch_norm_forward(a, params, x, path)
    if layer.kind == "leaky-relu":
        return T.leaky_relu(x, a["slope"])
    if layer.kind == "relu":
        return T.relu(x)
    if layer.kind == "sigmoid":
        return T.sigmoid(x)
    if layer.kind == "tanh":
        return T.tanh(x)
    if layer.kind == "max-pool":
        return T.max_pool2d(x, a["k"])
    if layer.kind == "flatten":
        return T.reshape(x, (x.shape[0], -1))
    if layer.kind == "reshape":
        return T.reshape(x, (x.shape[0],) + tuple(a["shape"]))
    raise T.UnknownPrimitiveError(layer.kind)


def _batch_norm_forward(a, params, x, path):
    gamma, beta = params[f"{path}/gamma"], params[f"{path}/beta"]
    rmean = params.buffers[f"{path}/running_mean"]
    rvar = params.buffers[f"{path}/running_var"]
    eps = a["eps"]
    if params.mode == "training":
        mu = T.mean(x, axis=0)
        var = T.mean(T.square(x - mu), axis=0)
        m = a["momentum"]
        rmean.data[...] = (1 - m) * rmean.data + m * mu.data
        rvar.data[...] = (1 - m) * rvar.data + m * var.data
        xn = (x - mu) / T.sqrt(var + eps)
    else:
        xn = (x - rmean) / T.sqrt(rvar + eps)
    return xn * gamma + beta


class Network:
    """A named stack of layers with its own parameter namespace."""

    def __init__(self, name, arch):
        self.name = name
        self.arch = list(arch)
        self.prefix = f"{name}/"

    def init(self, seed) -> ParamSet:
        return init_params(self.arch, seed, prefix=self.prefix)

    def forward(self, params: ParamSet, x: Tensor) -> Tensor:
        for layer in self.arch:
            x = layer_forward(layer, params, x, prefix=self.prefix)
        return x


# -- optimizers ----------------------------------------------------------------


@dataclass
class OptimizerState:
    kind: str  # adam | rmsprop
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    alpha: float = 0.99
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def make_optimizer(kind, lr, **kw) -> OptimizerState:
    if kind not in ("adam", "rmsprop"):
        raise ValueError(f"unknown optimizer kind: {kind}")
    return OptimizerState(kind=kind, lr=lr, **kw)


def optimizer_step(state: OptimizerState, params: ParamSet, grads: dict):
    """One Adam/RMSprop update in place; grads keyed identically to params."""
    keys = params.paths()
    if set(grads) != set(keys):
        raise ParamSetError("gradient keys do not match parameter paths")
    state.step += 1
    t = state.step
    for k in keys:
        g = grads[k].data if isinstance(grads[k], Tensor) else np.asarray(grads[k])
        p = params.params[k].data
        if state.kind == "adam":
            m = state.m.setdefault(k, np.zeros_like(p))
            v = state.v.setdefault(k, np.zeros_like(p))
            m[...] = state.beta1 * m + (1 - state.beta1) * g
            v[...] = state.beta2 * v + (1 - state.beta2) * g * g
            mhat = m / (1 - state.beta1 ** t)
            vhat = v / (1 - state.beta2 ** t)
            p -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
        else:  # rmsprop
            v = state.v.setdefault(k, np.zeros_like(p))
            v[...] = state.alpha * v + (1 - state.alpha) * g * g
            p -= state.lr * g / (np.sqrt(v) + state.eps)


def compute_grads(loss: Tensor, params: ParamSet) -> dict:
    keys = params.paths()
    gs = T.backward(loss, [params.params[k] for k in keys])
    return dict(zip(keys, gs))


# -- checkpoints ------------------------------------------------------------------


def save_checkpoint(path, params: ParamSet, optimizer: OptimizerState | None = None):
    """Manifest JSON (length-prefixed) followed by tensor blobs in manifest order."""
    manifest = {
        "params": [{"path": k, "shape": list(params.params[k].shape)} for k in params.paths()],
        "buffers": [{"path": k, "shape": list(params.buffers[k].shape)} for k in sorted(params.buffers)],
        "mode": params.mode,
    }
    if optimizer is not None:
        manifest["optimizer"] = {"kind": optimizer.kind, "step": optimizer.step, "lr": optimizer.lr}
    blob = json.dumps(manifest, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for k in params.paths():
            fh.write(T.tensor_to_bytes(params.params[k]))
        for k in sorted(params.buffers):
            fh.write(T.tensor_to_bytes(params.buffers[k]))


def load_checkpoint(path):
    """Returns (ParamSet, manifest dict)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    n = struct.unpack_from("<I", raw, 0)[0]
    manifest = json.loads(raw[4:4 + n].decode())
    off = 4 + n
    ps = ParamSet(mode=manifest.get("mode", "training"))
    for entry in manifest["params"]:
        t, off = T.tensor_from_bytes(raw, off)
        ps.add(entry["path"], t.data)
    for entry in manifest["buffers"]:
        t, off = T.tensor_from_bytes(raw, off)
        ps.add_buffer(entry["path"], t.data)
    return ps, manifest
