"""Minimal deterministic neural-network core.

Tensors are plain float64 numpy arrays: images are channels-last
(B, H, W, C), feature vectors (B, F). Layers are described by
:class:`LayerSpec`; parameters live in a :class:`ParamSet` keyed
``"<layer index>.weight"`` / ``".bias"``. Weights keep the (out, in) and
(out, in, k, k) shapes; ``flatten`` emits features in (H, W, C) order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from . import kernels
from .errors import ConfigurationError, InputError, InternalError, NumericError

DTYPE = np.float64
LAYER_KINDS = ("conv2d", "dense", "relu", "flatten")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int = 0
    out_channels: int = 0
    kernel_size: int = 0
    stride: int = 1
    padding: int = 0
    in_features: int = 0
    out_features: int = 0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}; expected one of {LAYER_KINDS}")

    @property
    def parametric(self) -> bool:
        return self.kind in ("conv2d", "dense")

    def describe(self) -> str:
        if self.kind == "conv2d":
            return (f"conv2d({self.in_channels}->{self.out_channels}, k{self.kernel_size}, "
                    f"s{self.stride}, p{self.padding})")
        if self.kind == "dense":
            return f"dense({self.in_features}->{self.out_features})"
        return self.kind


def conv2d(in_channels, out_channels, kernel_size, stride=1, padding=0) -> LayerSpec:
    return LayerSpec("conv2d", in_channels=in_channels, out_channels=out_channels,
                     kernel_size=kernel_size, stride=stride, padding=padding)


def dense(in_features, out_features) -> LayerSpec:
    return LayerSpec("dense", in_features=in_features, out_features=out_features)


def relu() -> LayerSpec:
    return LayerSpec("relu")


def flatten() -> LayerSpec:
    return LayerSpec("flatten")


def conv_out_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def infer_shapes(layers: Sequence[LayerSpec], input_shape: Sequence[int]) -> list[tuple[int, ...]]:
    """Per-sample output shape after every layer; raises on an inconsistent chain."""
    shape = tuple(int(s) for s in input_shape)
    shapes = []
    for idx, layer in enumerate(layers):
        where = f"layer {idx} ({layer.describe()})"
        if layer.kind == "conv2d":
            if len(shape) != 3 or shape[2] != layer.in_channels:
                raise ConfigurationError(f"{where} expects input (H, W, C={layer.in_channels}), got {shape}")
            if layer.kernel_size < 1 or layer.stride < 1 or layer.padding < 0:
                raise ConfigurationError(f"{where} has invalid kernel/stride/padding")
            h = conv_out_size(shape[0], layer.kernel_size, layer.stride, layer.padding)
            w = conv_out_size(shape[1], layer.kernel_size, layer.stride, layer.padding)
            if h < 1 or w < 1:
                raise ConfigurationError(f"{where} produces empty output from input {shape}")
            shape = (h, w, layer.out_channels)
        elif layer.kind == "dense":
            if len(shape) != 1 or shape[0] != layer.in_features:
                raise ConfigurationError(f"{where} expects {layer.in_features} input features, got shape {shape}")
            shape = (layer.out_features,)
        elif layer.kind == "flatten":
            shape = (int(np.prod(shape)),)
        shapes.append(shape)
    return shapes


class ParamSet:
    """Ordered named parameter tensors of one model.

    Supports elementwise arithmetic with other aligned ParamSets and scalars,
    plus flatten/unflatten to a single vector.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries=()):
        items = entries.items() if isinstance(entries, dict) else entries
        self._entries = {name: np.asarray(arr, dtype=DTYPE) for name, arr in items}

    # container protocol
    def __getitem__(self, name: str) -> np.ndarray:
        return self._entries[name]

    def __setitem__(self, name: str, value) -> None:
        if name not in self._entries:
            raise KeyError(name)
        self._entries[name] = np.asarray(value, dtype=DTYPE)

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def values(self):
        return self._entries.values()

    def shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        return [(k, v.shape) for k, v in self._entries.items()]

    @property
    def size(self) -> int:
        return sum(v.size for v in self._entries.values())

    def aligned_with(self, other: "ParamSet") -> bool:
        return self.shapes() == other.shapes()

    def _check(self, other: "ParamSet") -> None:
        if not self.aligned_with(other):
            raise InternalError(f"parameter sets are not aligned: {self.shapes()} vs {other.shapes()}")

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "ParamSet":
        return ParamSet((k, fn(v)) for k, v in self._entries.items())

    def zip_map(self, other: "ParamSet", fn) -> "ParamSet":
        self._check(other)
        return ParamSet((k, fn(v, other[k])) for k, v in self._entries.items())

    def copy(self) -> "ParamSet":
        return self.map(np.copy)

    def zeros_like(self) -> "ParamSet":
        return self.map(np.zeros_like)

    def flatten(self) -> np.ndarray:
        if not self._entries:
            return np.zeros(0, dtype=DTYPE)
        return np.concatenate([v.ravel() for v in self._entries.values()])

    def unflatten(self, vector) -> "ParamSet":
        """New ParamSet with this one's layout, filled from ``vector``."""
        vector = np.asarray(vector, dtype=DTYPE)
        if vector.shape != (self.size,):
            raise InternalError(f"cannot unflatten vector of shape {vector.shape} into {self.size} parameters")
        out, pos = [], 0
        for name, arr in self._entries.items():
            out.append((name, vector[pos : pos + arr.size].reshape(arr.shape).copy()))
            pos += arr.size
        return ParamSet(out)

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self._entries.values())

    def max_abs_diff(self, other: "ParamSet") -> float:
        self._check(other)
        return max((float(np.max(np.abs(v - other[k]))) for k, v in self._entries.items() if v.size), default=0.0)

    def equals(self, other: "ParamSet") -> bool:
        """Bitwise equality of names, shapes and values."""
        return self.aligned_with(other) and all(np.array_equal(v, other[k]) for k, v in self._entries.items())

    # arithmetic
    def _binary(self, other, op) -> "ParamSet":
        if isinstance(other, ParamSet):
            return self.zip_map(other, op)
        return self.map(lambda v: op(v, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, np.divide)

    def __neg__(self):
        return self.map(np.negative)

    def __repr__(self) -> str:
        body = ", ".join(f"{k}{v.shape}" for k, v in self._entries.items())
        return f"ParamSet({body})"


@dataclass
class Net:
    layers: list[LayerSpec]
    params: ParamSet
    input_shape: tuple[int, ...]
    shapes: list[tuple[int, ...]] = field(default_factory=list)

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.shapes[-1] if self.shapes else self.input_shape

    def with_params(self, params: ParamSet) -> "Net":
        if not self.params.aligned_with(params):
            raise InternalError("replacement parameters do not match the architecture")
        return Net(self.layers, params, self.input_shape, self.shapes)


@dataclass
class ForwardCache:
    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, ...]
    output_shape: tuple[int, ...]
    entries: list


def _default_input_shape(layers):
    if layers and layers[0].kind == "dense":
        return (layers[0].in_features,)
    raise ConfigurationError("input_shape is required unless the first layer is dense")


def net_init(layers: Sequence[LayerSpec], seed: int, input_shape=None) -> Net:
    """Build a net with Xavier-uniform weights and zero biases."""
    layers = list(layers)
    if input_shape is None:
        input_shape = _default_input_shape(layers)
    input_shape = tuple(int(s) for s in input_shape)
    shapes = infer_shapes(layers, input_shape)
    rng = np.random.default_rng(seed)
    entries = []
    for idx, layer in enumerate(layers):
        if layer.kind == "conv2d":
            k2 = layer.kernel_size ** 2
            fan_in, fan_out = layer.in_channels * k2, layer.out_channels * k2
            wshape = (layer.out_channels, layer.in_channels, layer.kernel_size, layer.kernel_size)
            bshape = (layer.out_channels,)
        elif layer.kind == "dense":
            fan_in, fan_out = layer.in_features, layer.out_features
            wshape = (layer.out_features, layer.in_features)
            bshape = (layer.out_features,)
        else:
            continue
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        entries.append((f"{idx}.weight", rng.uniform(-limit, limit, size=wshape)))
        entries.append((f"{idx}.bias", np.zeros(bshape, dtype=DTYPE)))
    return Net(layers, ParamSet(entries), input_shape, shapes)


# patch matrices are built a few samples at a time so they stay cache-resident
PATCH_CHUNK_BYTES = 1 << 18


def _chunks(n, row_bytes):
    step = max(1, PATCH_CHUNK_BYTES // max(row_bytes, 1))
    return [(s, min(s + step, n)) for s in range(0, n, step)]


def _conv_forward(x, w, b, layer):
    n, h, wd, _ = x.shape
    k, s, p = layer.kernel_size, layer.stride, layer.padding
    ho, wo = conv_out_size(h, k, s, p), conv_out_size(wd, k, s, p)
    o = w.shape[0]
    wmat_t = w.transpose(0, 2, 3, 1).reshape(o, -1).T
    x = np.ascontiguousarray(x)
    out = np.empty((n, ho, wo, o))
    for lo, hi in _chunks(n, ho * wo * wmat_t.shape[0] * 8):
        cols = kernels.im2col(x[lo:hi], k, s, p, ho, wo)
        np.matmul(cols, wmat_t, out=out[lo:hi].reshape(-1, o))
    out += b
    return out, (x, ho, wo)


def _conv_backward(dy, w, layer, cache, input_grad=True):
    """Parameter and input gradients of a conv layer; patches are recomputed."""
    x, ho, wo = cache
    k, s, p = layer.kernel_size, layer.stride, layer.padding
    n, o = x.shape[0], w.shape[0]
    wmat = w.transpose(0, 2, 3, 1).reshape(o, -1)
    dw = np.zeros_like(wmat)
    dx = np.empty(x.shape) if input_grad else None
    for lo, hi in _chunks(n, ho * wo * wmat.shape[1] * 8):
        cols = kernels.im2col(x[lo:hi], k, s, p, ho, wo)
        d = dy[lo:hi].reshape(-1, o)
        dw += d.T @ cols
        if input_grad:
            kernels.col2im(d @ wmat, x[lo:hi].shape, k, s, p, ho, wo, out=dx[lo:hi])
    db = dy.reshape(-1, o).sum(axis=0)
    dw = np.ascontiguousarray(dw.reshape(o, k, k, -1).transpose(0, 3, 1, 2))
    return dw, db, dx


def net_forward(net: Net, x, out=None) -> tuple[np.ndarray, ForwardCache]:
    """Run the batch ``x`` of shape (B, *input_shape) through ``net``.

    Returns the output and a cache holding whatever the backward pass needs.
    If given, ``out`` (which may be a view into a larger buffer) receives the
    output and is returned in its place. Does not modify ``net``.
    """
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim != len(net.input_shape) + 1 or x.shape[1:] != net.input_shape:
        raise InputError(f"input shape mismatch: expected (B, {', '.join(map(str, net.input_shape))}), got {x.shape}")
    entries = []
    for idx, layer in enumerate(net.layers):
        if layer.kind == "conv2d":
            x, c = _conv_forward(x, net.params[f"{idx}.weight"], net.params[f"{idx}.bias"], layer)
            entries.append(c)
        elif layer.kind == "dense":
            entries.append(x)
            x = x @ net.params[f"{idx}.weight"].T + net.params[f"{idx}.bias"]
        elif layer.kind == "relu":
            # conv/dense outputs are fresh arrays owned here, so clamp them in place
            fresh = idx > 0 and net.layers[idx - 1].kind in ("conv2d", "dense")
            last = out is not None and idx == len(net.layers) - 1
            x = np.maximum(x, 0.0, out=out if last else (x if fresh else None))
            entries.append(x)
        else:
            entries.append(x.shape)
            x = x.reshape(x.shape[0], -1)
    if out is not None and x is not out:
        if out.shape != x.shape:
            raise InputError(f"output buffer has shape {out.shape}, expected {x.shape}")
        out[...] = x
        x = out
    return x, ForwardCache(tuple(net.layers), net.input_shape, net.output_shape, entries)


def net_backward(net: Net, cache: ForwardCache, grad_out, input_grad: bool = True) -> tuple[ParamSet, np.ndarray]:
    """Backpropagate ``grad_out`` through ``net``; returns (param grads, input grad).

    With ``input_grad=False`` the gradient w.r.t. the input is skipped and
    returned as None (a data owner has nobody to send it to).
    """
    if cache.layers != tuple(net.layers) or len(cache.entries) != len(net.layers):
        raise InternalError("forward cache does not belong to this network")
    dy = np.asarray(grad_out, dtype=DTYPE)
    if dy.shape[1:] != cache.output_shape:
        raise InternalError(f"grad_out shape {dy.shape} does not match forward output (B, {cache.output_shape})")
    grads = {}
    for idx in range(len(net.layers) - 1, -1, -1):
        layer, entry = net.layers[idx], cache.entries[idx]
        if layer.kind == "conv2d":
            dw, db, dy = _conv_backward(dy, net.params[f"{idx}.weight"], layer, entry, input_grad or idx > 0)
            grads[f"{idx}.weight"], grads[f"{idx}.bias"] = dw, db
        elif layer.kind == "dense":
            w = net.params[f"{idx}.weight"]
            grads[f"{idx}.weight"] = dy.T @ entry
            grads[f"{idx}.bias"] = dy.sum(axis=0)
            dy = dy @ w if input_grad or idx > 0 else None
        elif layer.kind == "relu":
            dy = kernels.relu_grad(dy, entry)
        else:
            dy = dy.reshape(entry)
    return ParamSet((name, grads[name]) for name in net.params), dy


def softmax_cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of softmax(logits) against integer labels, and its gradient."""
    logits = np.asarray(logits, dtype=DTYPE)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise InputError(f"expected logits (B, C) and B labels, got {logits.shape} and {labels.shape}")
    n, c = logits.shape
    if n == 0:
        raise InputError("empty batch")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise InputError(f"labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(logsum - z[rows, labels]))
    grad = np.exp(z - logsum[:, None])
    grad[rows, labels] -= 1.0
    grad /= n
    return loss, grad


def sgd_step(params: ParamSet, grads: ParamSet, lr: float) -> ParamSet:
    return params.zip_map(grads, lambda p, g: p - lr * g)


def loss_and_grads(net: Net, x, labels) -> tuple[float, ParamSet, np.ndarray]:
    out, cache = net_forward(net, x)
    loss, dlogits = softmax_cross_entropy(out, labels)
    pgrads, dx = net_backward(net, cache, dlogits)
    return loss, pgrads, dx


def grad_check(net: Net, x, labels, eps: float = 1e-5, floor: float = 1e-7) -> float:
    """Worst relative error between analytic and central-difference gradients.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps
    entries whose true gradient is ~0 from dividing roundoff by roundoff.
    """
    if not eps > 0:
        raise InputError(f"finite-difference step must be positive, got {eps}")
    _, analytic, _ = loss_and_grads(net, x, labels)
    a = analytic.flatten()
    probe = net.with_params(net.params.copy())

    def loss():
        return softmax_cross_entropy(net_forward(probe, x)[0], labels)[0]

    numeric = []
    for name in probe.params:
        flat = probe.params[name].reshape(-1)  # view into the working copy
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            plus = loss()
            flat[i] = orig - eps
            minus = loss()
            flat[i] = orig
            numeric.append((plus - minus) / (2 * eps))
    numeric = np.asarray(numeric)
    if not (np.isfinite(a).all() and np.isfinite(numeric).all()):
        raise NumericError("non-finite gradient encountered during gradient check")
    denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), floor)
    return float(np.max(np.abs(a - numeric) / denom)) if a.size else 0.0
