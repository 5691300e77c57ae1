"""Dense ReLU networks in numpy with exact backpropagation and Adam.

Parameters are float64 ``(W, b)`` pairs with ``W`` of shape ``(fan_in, fan_out)``;
inputs are batches of row vectors. Hidden layers use ReLU, the output layer is
linear.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = b"ZMCK"
CHECKPOINT_VERSION = 1


@dataclass
class MlpParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need matching, non-empty weight and bias lists")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: bad shapes {w.shape}, {b.shape}")
            if i and w.shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError(f"layer {i}: input width {w.shape[0]} does not chain")

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def arrays(self) -> list[np.ndarray]:
        """Flat list ``[W0, b0, W1, b1, ...]`` (views, not copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def assign(self, other: "MlpParams") -> None:
        for dst, src in zip(self.arrays(), other.arrays()):
            dst[...] = src

    def equals(self, other: "MlpParams") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


def init_mlp(sizes: list[int], rng: np.random.Generator, out_scale: float = 3e-3) -> MlpParams:
    """He-uniform hidden layers, small uniform output layer, zero biases."""
    weights, biases = [], []
    n_layers = len(sizes) - 1
    for i in range(n_layers):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        limit = out_scale if i == n_layers - 1 else np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to each layer
    pre: list[np.ndarray]  # pre-activations of hidden layers


def mlp_forward(p: MlpParams, x: np.ndarray, cache: bool = False):
    """Forward pass for a vector or a batch of row vectors.

    Returns the output, or ``(output, ForwardCache)`` when ``cache`` is set.
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.shape[1] != p.weights[0].shape[0]:
        raise ValueError(f"input width {h.shape[1]} != {p.weights[0].shape[0]}")
    inputs, pre = [], []
    last = len(p.weights) - 1
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        inputs.append(h)
        z = h @ w + b
        if i < last:
            pre.append(z)
            h = np.maximum(z, 0.0)
        else:
            h = z
    out = h[0] if squeeze else h
    if cache:
        return out, ForwardCache(inputs, pre)
    return out


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    inputs: np.ndarray | None = None

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def mlp_backward(p: MlpParams, cache: ForwardCache, upstream: np.ndarray,
                 param_grads: bool = True) -> Gradients:
    """Gradients of ``sum(output * upstream)`` w.r.t. every parameter and the input."""
    g = np.asarray(upstream, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != (cache.inputs[0].shape[0], p.weights[-1].shape[1]):
        raise ValueError(f"upstream gradient shape {g.shape} does not match the output")
    n = len(p.weights)
    gw: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    for i in range(n - 1, -1, -1):
        if param_grads:
            gw[i] = cache.inputs[i].T @ g
            gb[i] = g.sum(axis=0)
        g = g @ p.weights[i].T
        if i > 0:
            g = g * (cache.pre[i - 1] > 0.0)
    return Gradients(gw, gb, g)


def clip_global_norm(grads: Gradients, max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    total = float(np.sqrt(sum(float(np.sum(a * a)) for a in grads.arrays())))
    if not np.isfinite(total):
        raise FloatingPointError("non-finite gradient")
    if total > max_norm:
        scale = max_norm / total
        for a in grads.arrays():
            a *= scale
    return total


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def for_params(cls, p: MlpParams, lr: float = 1e-4, **kw) -> "AdamState":
        return cls([np.zeros_like(a) for a in p.arrays()], [np.zeros_like(a) for a in p.arrays()], lr, **kw)


def adam_step(opt: AdamState, p: MlpParams, grads: Gradients) -> None:
    """One bias-corrected Adam update of ``p`` in place."""
    arrays = p.arrays()
    garrays = grads.arrays()
    if len(garrays) != len(arrays):
        raise ValueError("gradient list does not match parameters")
    for g in garrays:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
    opt.step += 1
    b1, b2 = opt.beta1, opt.beta2
    c1 = 1.0 - b1 ** opt.step
    c2 = 1.0 - b2 ** opt.step
    for a, g, m, v in zip(arrays, garrays, opt.m, opt.v):
        if g.shape != a.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {a.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        a -= opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)


# ---------------------------------------------------------------------------
# checkpoint files
#
# layout: magic "ZMCK" | u32 version | u64 header length | JSON header | raw data
# The header lists every array (name, shape, byte offset); data is float64
# little-endian, row-major. The same inputs always produce the same bytes.


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries, blobs, offset = [], [], 0
    for name in sorted(arrays):
        a = np.asarray(arrays[name], dtype="<f8")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        blob = a.tobytes()
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"version": CHECKPOINT_VERSION, "arrays": entries, "meta": meta or {}},
                        sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack_from("<IQ", data, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    start = 4 + struct.calcsize("<IQ")
    header = json.loads(data[start:start + hlen])
    body = start + hlen
    arrays = {}
    for e in header["arrays"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        a = np.frombuffer(data, dtype="<f8", count=count, offset=body + e["offset"])
        arrays[e["name"]] = a.reshape(tuple(e["shape"])).astype(np.float64)
    return arrays, header["meta"]


def params_to_arrays(prefix: str, p: MlpParams) -> dict[str, np.ndarray]:
    out = {}
    for i, (w, b) in enumerate(zip(p.weights, p.biases)):
        out[f"{prefix}.W{i}"] = w
        out[f"{prefix}.b{i}"] = b
    return out


def params_from_arrays(prefix: str, arrays: dict[str, np.ndarray]) -> MlpParams:
    ws, bs = [], []
    i = 0
    while f"{prefix}.W{i}" in arrays:
        ws.append(arrays[f"{prefix}.W{i}"].copy())
        bs.append(arrays[f"{prefix}.b{i}"].copy())
        i += 1
    if not ws:
        raise KeyError(f"no parameters under {prefix!r}")
    return MlpParams(ws, bs)


def adam_to_arrays(prefix: str, opt: AdamState) -> dict[str, np.ndarray]:
    out = {f"{prefix}.step": np.array(float(opt.step))}
    for i, (m, v) in enumerate(zip(opt.m, opt.v)):
        out[f"{prefix}.m{i}"] = m
        out[f"{prefix}.v{i}"] = v
    return out


def adam_from_arrays(prefix: str, arrays: dict[str, np.ndarray], lr: float) -> AdamState:
    ms, vs = [], []
    i = 0
    while f"{prefix}.m{i}" in arrays:
        ms.append(arrays[f"{prefix}.m{i}"].copy())
        vs.append(arrays[f"{prefix}.v{i}"].copy())
        i += 1
    return AdamState(ms, vs, lr, step=int(arrays[f"{prefix}.step"]))
