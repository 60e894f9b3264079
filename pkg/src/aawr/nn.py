"""Small multilayer perceptrons with hand-written reverse mode and Adam.

Inputs are either dense ``(B, n_in)`` arrays or :class:`SparseBatch` rows
(fixed number of nonzeros per row), which is how one-hot agent-state windows
are fed without materializing them.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from aawr import kernels

ACTIVATIONS = ("tanh", "relu")
CHECKPOINT_MAGIC = b"AAWRCKPT"
CHECKPOINT_VERSION = 1


class StaleCacheError(RuntimeError):
    """A forward cache was used after the parameters changed."""


class NonFiniteError(FloatingPointError):
    """Gradients or parameters stopped being finite."""


@dataclass
class SparseBatch:
    idx: np.ndarray  # (B, m) int64 column indices
    val: np.ndarray  # (B, m) float64 values; zero entries are ignored
    n_in: int

    def __post_init__(self):
        self.idx = np.ascontiguousarray(self.idx, dtype=np.int64)
        self.val = np.ascontiguousarray(self.val, dtype=np.float64)
        if self.idx.shape != self.val.shape or self.idx.ndim != 2:
            raise ValueError("sparse batch idx and val must be matching 2-D arrays")

    def __len__(self) -> int:
        return self.idx.shape[0]

    def dense(self) -> np.ndarray:
        out = np.zeros((len(self), self.n_in))
        rows = np.repeat(np.arange(len(self)), self.idx.shape[1])
        np.add.at(out, (rows, self.idx.ravel()), self.val.ravel())
        return out

    def take(self, rows) -> "SparseBatch":
        return SparseBatch(self.idx[rows], self.val[rows], self.n_in)


@dataclass
class MlpParams:
    weights: list
    biases: list
    activation: str = "relu"
    version: int = field(default=0, compare=False)

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.activation)

    def touch(self) -> None:
        self.version += 1


@dataclass
class Cache:
    inputs: object
    pre: list
    post: list
    version: int


def mlp_init(layer_sizes, seed: int, activation: str = "relu", zero: bool = False) -> MlpParams:
    """Fan-in scaled uniform initialization; the last layer is scaled down by 10x."""
    if len(layer_sizes) < 2:
        raise ValueError("need at least input and output sizes")
    if activation not in ACTIVATIONS:
        raise ValueError(f"activation must be one of {ACTIVATIONS}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    n_layers = len(layer_sizes) - 1
    for i, (n_in, n_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
        if zero:
            w = np.zeros((n_in, n_out))
        else:
            bound = np.sqrt(6.0 / n_in) if activation == "relu" else np.sqrt(3.0 / n_in)
            if i == n_layers - 1:
                bound *= 0.1
            w = rng.uniform(-bound, bound, size=(n_in, n_out))
        weights.append(w)
        biases.append(np.zeros(n_out))
    return MlpParams(weights, biases, activation)


def _act(x, name):
    return np.tanh(x) if name == "tanh" else np.maximum(x, 0.0)


def _act_grad(pre, post, name):
    return 1.0 - post * post if name == "tanh" else (pre > 0).astype(np.float64)


def _first_layer(params: MlpParams, x):
    W, b = params.weights[0], params.biases[0]
    if isinstance(x, SparseBatch):
        if x.n_in != W.shape[0]:
            raise ValueError(f"input width {x.n_in} does not match first layer {W.shape[0]}")
        return kernels.sparse_affine_forward(x.idx, x.val, W, b)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != W.shape[0]:
        raise ValueError(f"input shape {x.shape} does not match first layer {W.shape[0]}")
    return x @ W + b


def forward(params: MlpParams, x) -> tuple[np.ndarray, Cache]:
    pre, post = [], []
    h = _first_layer(params, x)
    n = len(params.weights)
    for i in range(n):
        if i > 0:
            h = post[-1] @ params.weights[i] + params.biases[i]
        pre.append(h)
        post.append(_act(h, params.activation) if i < n - 1 else h)
    return post[-1], Cache(x, pre, post, params.version)


def predict(params: MlpParams, x) -> np.ndarray:
    return forward(params, x)[0]


def backward(params: MlpParams, cache: Cache, grad_out: np.ndarray) -> list[np.ndarray]:
    """Gradients in the order of :meth:`MlpParams.arrays` (``dW0, db0, dW1, db1, ...``)."""
    if cache.version != params.version:
        raise StaleCacheError("parameters changed since this forward pass")
    n = len(params.weights)
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != cache.post[-1].shape:
        raise ValueError(f"output gradient shape {g.shape} does not match {cache.post[-1].shape}")
    grads: list = [None] * (2 * n)
    for i in range(n - 1, -1, -1):
        if i < n - 1:
            g = g * _act_grad(cache.pre[i], cache.post[i], params.activation)
        grads[2 * i + 1] = g.sum(axis=0)
        if i > 0:
            grads[2 * i] = cache.post[i - 1].T @ g
            g = g @ params.weights[i].T
        elif isinstance(cache.inputs, SparseBatch):
            x = cache.inputs
            grads[0] = kernels.sparse_affine_backward(x.idx, x.val, np.ascontiguousarray(g), x.n_in)
        else:
            grads[0] = np.asarray(cache.inputs).T @ g
    return grads


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: MlpParams, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    arrays = params.arrays()
    return AdamState([np.zeros_like(p) for p in arrays], [np.zeros_like(p) for p in arrays], 0, beta1, beta2, eps)


def adam_step(params: MlpParams, grads, state: AdamState, lr: float) -> tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update, applied in place; returns the same objects."""
    arrays = params.arrays()
    if len(grads) != len(arrays):
        raise ValueError("gradient list does not match parameters")
    for g, p in zip(grads, arrays):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite gradient")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(arrays, grads, state.m, state.v):
        kernels.adam_update(p, np.ascontiguousarray(g, dtype=np.float64), m, v, lr, b1, b2, c1, c2, state.eps)
    params.touch()
    return params, state


def polyak_update(target: MlpParams, source: MlpParams, rate: float) -> None:
    for t, s in zip(target.arrays(), source.arrays()):
        kernels.polyak(t, s, rate)
    target.touch()


def flatten_grads(grads) -> np.ndarray:
    return np.concatenate([g.ravel() for g in grads])


# --------------------------------------------------------------------------
# Checkpoints
#
# layout: magic (8 bytes) | format version (uint32 LE) | header length (uint32 LE)
#         | header JSON (utf-8) | float64 LE arrays in header order


def save_checkpoint(path, nets: dict[str, MlpParams], optimizers: dict[str, AdamState] | None = None,
                    extra: dict | None = None) -> None:
    optimizers = optimizers or {}
    header = {"nets": [], "optimizers": [], "extra": extra or {}}
    blobs = []
    for name, p in nets.items():
        header["nets"].append({"name": name, "layer_sizes": p.layer_sizes, "activation": p.activation})
        blobs += p.arrays()
    for name, st in optimizers.items():
        header["optimizers"].append({"name": name, "step": st.step, "beta1": st.beta1, "beta2": st.beta2,
                                     "eps": st.eps, "shapes": [list(m.shape) for m in st.m]})
        blobs += st.m + st.v
    hbytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(hbytes)))
        fh.write(hbytes)
        for b in blobs:
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[dict[str, MlpParams], dict[str, AdamState], dict]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<II", data[8:16])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[16:16 + hlen])
    flat = np.frombuffer(data[16 + hlen:], dtype="<f8")
    pos = 0

    def take(shape):
        nonlocal pos
        n = int(np.prod(shape))
        out = flat[pos:pos + n].reshape(shape).astype(np.float64)
        pos += n
        return out

    nets = {}
    for entry in header["nets"]:
        sizes = entry["layer_sizes"]
        ws, bs = [], []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            ws.append(take((n_in, n_out)))
            bs.append(take((n_out,)))
        nets[entry["name"]] = MlpParams(ws, bs, entry["activation"])
    opts = {}
    for entry in header["optimizers"]:
        shapes = [tuple(s) for s in entry["shapes"]]
        m = [take(s) for s in shapes]
        v = [take(s) for s in shapes]
        opts[entry["name"]] = AdamState(m, v, entry["step"], entry["beta1"], entry["beta2"], entry["eps"])
    if pos != len(flat):
        raise ValueError(f"{path}: trailing data in checkpoint")
    return nets, opts, header["extra"]
