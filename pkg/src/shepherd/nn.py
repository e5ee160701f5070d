"""Dense ReLU networks with hand-written reverse mode, Adam, policy heads and
a bit-exact checkpoint format."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

OUTPUTS = ("tanh", "linear", "softmax")
CHECKPOINT_MAGIC = b"SHEPNET\n"
CHECKPOINT_VERSION = 1
LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class MlpParams:
    sizes: tuple[int, ...]
    weights: list[np.ndarray]  # (fan_in, fan_out)
    biases: list[np.ndarray]
    output: str = "linear"
    log_std: np.ndarray | None = None

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if self.output not in OUTPUTS:
            raise ValueError(f"unknown output activation {self.output!r}")
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("layer count does not match sizes")
        for w, b, (fi, fo) in zip(self.weights, self.biases, zip(self.sizes, self.sizes[1:])):
            if w.shape != (fi, fo) or b.shape != (fo,):
                raise ValueError(f"layer shape {w.shape}/{b.shape} does not chain with sizes {self.sizes}")
        if self.log_std is not None and self.log_std.shape != (self.sizes[-1],):
            raise ValueError("log_std length must equal the output dimension")

    def arrays(self) -> list[np.ndarray]:
        out = [*self.weights, *self.biases]
        if self.log_std is not None:
            out.append(self.log_std)
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def set_flat(self, vec: np.ndarray) -> None:
        i = 0
        for a in self.arrays():
            a[...] = vec[i:i + a.size].reshape(a.shape)
            i += a.size
        if i != len(vec):
            raise ValueError("flat vector length does not match parameter count")

    def copy(self) -> "MlpParams":
        return MlpParams(self.sizes, [w.copy() for w in self.weights], [b.copy() for b in self.biases],
                         self.output, None if self.log_std is None else self.log_std.copy())

    def zeros_like(self) -> "Gradients":
        return Gradients([np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases],
                         None if self.log_std is None else np.zeros_like(self.log_std))


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    log_std: np.ndarray | None = None

    def arrays(self) -> list[np.ndarray]:
        out = [*self.weights, *self.biases]
        if self.log_std is not None:
            out.append(self.log_std)
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])


def _orthogonal(rng: np.random.Generator, fan_in: int, fan_out: int, scale: float) -> np.ndarray:
    a = rng.standard_normal((max(fan_in, fan_out), min(fan_in, fan_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if fan_in < fan_out:
        q = q.T
    return scale * q[:fan_in, :fan_out]


def init_mlp(sizes, output: str, rng: np.random.Generator, final_scale: float = 1.0,
             gaussian: bool = False) -> MlpParams:
    """Orthogonal init (gain sqrt(2) on hidden layers), zero biases, log_std = 0."""
    weights, biases = [], []
    pairs = list(zip(sizes, sizes[1:]))
    for k, (fi, fo) in enumerate(pairs):
        scale = final_scale if k == len(pairs) - 1 else math.sqrt(2.0)
        weights.append(_orthogonal(rng, fi, fo, scale))
        biases.append(np.zeros(fo))
    log_std = np.zeros(sizes[-1]) if gaussian else None
    return MlpParams(tuple(sizes), weights, biases, output, log_std)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


categorical_probs = softmax


@dataclass
class Cache:
    inputs: list[np.ndarray] = field(default_factory=list)  # input to each layer
    pre: list[np.ndarray] = field(default_factory=list)
    output: np.ndarray | None = None


def _apply_output(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "softmax":
        return softmax(z)
    return z


def forward(params: MlpParams, x, cache: Cache | None = None) -> np.ndarray:
    """Network output for one input vector or a (batch, in) matrix."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.shape[1] != params.sizes[0]:
        raise ValueError(f"input has {a.shape[1]} features, network expects {params.sizes[0]}")
    last = len(params.weights) - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        if cache is not None:
            cache.inputs.append(a)
            cache.pre.append(z)
        a = np.maximum(z, 0.0) if k < last else _apply_output(params.output, z)
    if cache is not None:
        cache.output = a
    return a[0] if single else a


def backward(params: MlpParams, cache: Cache, grad_out, through_output: bool = True) -> Gradients:
    """Parameter gradients of sum(grad_out * output) over the cached batch.

    With ``through_output=False`` the upstream gradient is taken with respect to
    the final pre-activation (the logits) instead of the activated output.
    """
    g = np.asarray(grad_out, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != cache.pre[-1].shape:
        raise ValueError(f"upstream gradient shape {g.shape} != output shape {cache.pre[-1].shape}")
    if through_output:
        if params.output == "tanh":
            g = g * (1.0 - cache.output * cache.output)
        elif params.output == "softmax":
            p = cache.output
            g = p * (g - np.sum(g * p, axis=1, keepdims=True))
    grads = params.zeros_like()
    for k in range(len(params.weights) - 1, -1, -1):
        grads.weights[k] = cache.inputs[k].T @ g
        grads.biases[k] = g.sum(axis=0)
        if k > 0:
            g = (g @ params.weights[k].T) * (cache.pre[k - 1] > 0.0)
    return grads


def gaussian_log_prob(mean, log_std, action) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    action = np.asarray(action, dtype=float)
    log_std = np.asarray(log_std, dtype=float)
    z = (action - mean) * np.exp(-log_std)
    return np.sum(-log_std - 0.5 * LOG_2PI - 0.5 * z * z, axis=-1)


def gaussian_entropy(log_std) -> float:
    return float(np.sum(np.asarray(log_std) + 0.5 * (LOG_2PI + 1.0)))


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0

    @classmethod
    def for_params(cls, params: MlpParams, lr: float = 5e-4, **kw) -> "AdamState":
        arrays = params.arrays()
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], lr, **kw)


def adam_step(params: MlpParams, grads: Gradients, state: AdamState) -> tuple[MlpParams, AdamState]:
    """Bias-corrected Adam descent step, applied in place."""
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def save_params(path, params: MlpParams) -> None:
    header = {
        "format_version": CHECKPOINT_VERSION,
        "layer_sizes": list(params.sizes),
        "hidden_activation": "relu",
        "output_activation": params.output,
        "has_log_std": params.log_std is not None,
    }
    body = params.flat().astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(body)


def load_params(path) -> MlpParams:
    data = Path(path).read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise ValueError(f"{path}: not a network checkpoint")
    rest = data[len(CHECKPOINT_MAGIC):]
    line, _, body = rest.partition(b"\n")
    header = json.loads(line)
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {header.get('format_version')}")
    sizes = header["layer_sizes"]
    pairs = list(zip(sizes, sizes[1:]))
    params = MlpParams(tuple(sizes), [np.zeros((fi, fo)) for fi, fo in pairs], [np.zeros(fo) for _, fo in pairs],
                       header["output_activation"], np.zeros(sizes[-1]) if header["has_log_std"] else None)
    flat = np.frombuffer(body, dtype="<f8")
    params.set_flat(flat.astype(float))
    return params
