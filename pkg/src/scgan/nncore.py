"""Small dense-network toolkit: parameter stores, MLP forward/backward, Adam,
and a binary checkpoint format.

Everything runs in float64 numpy. Layers compute ``h @ W + b`` so a weight
matrix has shape ``(fan_in, fan_out)``; biases are stored as ``(1, fan_out)``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .errors import CheckpointError, ConfigError, TrainingError, UsageError

ACTIVATIONS = ("relu", "tanh", "leaky_relu", "linear")

CHECKPOINT_MAGIC = b"SCG1"
CHECKPOINT_VERSION = 1


class ParamStore:
    """Ordered collection of named 2D parameter arrays with gradient slots."""

    def __init__(self) -> None:
        self._values: dict[str, np.ndarray] = {}
        self._grads: dict[str, np.ndarray] = {}

    def add(self, name: str, values: np.ndarray) -> np.ndarray:
        if name in self._values:
            raise UsageError(f"duplicate parameter name {name!r}")
        arr = np.array(values, dtype=np.float64)
        if arr.ndim != 2:
            raise UsageError(f"parameter {name!r} must be 2D, got shape {arr.shape}")
        self._values[name] = arr
        self._grads[name] = np.zeros_like(arr)
        return arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self._values[name]

    def __contains__(self, name: str) -> bool:
        return name in self._values

    def __len__(self) -> int:
        return len(self._values)

    def __iter__(self) -> Iterator[str]:
        return iter(self._values)

    def names(self) -> list[str]:
        return list(self._values)

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def items(self):
        return self._values.items()

    def zero_grad(self) -> None:
        for g in self._grads.values():
            g.fill(0.0)

    def num_params(self) -> int:
        return sum(v.size for v in self._values.values())

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for name, v in self._values.items():
            out.add(name, v.copy())
        return out

    def equals(self, other: "ParamStore") -> bool:
        if self.names() != other.names():
            return False
        return all(
            self[n].shape == other[n].shape and np.array_equal(self[n], other[n])
            for n in self
        )


@dataclass(frozen=True)
class MlpSpec:
    layer_widths: tuple[int, ...]
    activation: str = "relu"
    output_activation: str = "linear"
    slope: float = 0.2

    def __post_init__(self) -> None:
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if len(self.layer_widths) < 2:
            raise ConfigError("MlpSpec needs at least input and output widths")
        if any(w <= 0 for w in self.layer_widths):
            raise ConfigError(f"layer widths must be positive, got {self.layer_widths}")
        for act in (self.activation, self.output_activation):
            if act not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {act!r}")
        if not 0.0 < self.slope < 1.0:
            raise ConfigError(f"leaky_relu slope must lie in (0, 1), got {self.slope}")

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    @property
    def in_width(self) -> int:
        return self.layer_widths[0]

    @property
    def out_width(self) -> int:
        return self.layer_widths[-1]

    def layer_activation(self, layer: int) -> str:
        return self.output_activation if layer == self.n_layers - 1 else self.activation


def activate(act: str, x: np.ndarray, slope: float = 0.2) -> np.ndarray:
    if act == "relu":
        return np.maximum(x, 0.0)
    if act == "leaky_relu":
        return np.maximum(x, slope * x)  # valid because 0 < slope < 1
    if act == "tanh":
        return np.tanh(x)
    return x


def activate_grad(act: str, pre: np.ndarray, post: np.ndarray, slope: float = 0.2) -> np.ndarray:
    """Derivative of the activation, evaluated elementwise."""
    if act == "relu":
        return (pre > 0).astype(np.float64)
    if act == "leaky_relu":
        return (pre > 0) * (1.0 - slope) + slope
    if act == "tanh":
        return 1.0 - post**2
    return np.ones_like(pre)


def _init_scale(act: str, fan_in: int, fan_out: int, slope: float) -> float:
    if act in ("relu", "leaky_relu"):
        gain = 2.0 / (1.0 + (slope**2 if act == "leaky_relu" else 0.0))
        return float(np.sqrt(3.0 * gain / fan_in))
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_mlp(
    spec: MlpSpec,
    rng: np.random.Generator,
    prefix: str = "",
    params: ParamStore | None = None,
) -> ParamStore:
    """Create (or append to ``params``) weights for ``spec``.

    Weights are uniform with He scaling for (leaky) relu layers and Xavier
    scaling otherwise; biases start at zero.
    """
    params = ParamStore() if params is None else params
    for layer in range(spec.n_layers):
        fan_in, fan_out = spec.layer_widths[layer], spec.layer_widths[layer + 1]
        limit = _init_scale(spec.layer_activation(layer), fan_in, fan_out, spec.slope)
        params.add(f"{prefix}W{layer}", rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        params.add(f"{prefix}b{layer}", np.zeros((1, fan_out)))
    return params


@dataclass
class Trace:
    """Per-layer values cached by a forward pass, consumed by :func:`backward`."""

    spec: MlpSpec
    params: ParamStore
    prefix: str
    inputs: list[np.ndarray] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)

    @property
    def output(self) -> np.ndarray:
        return self.post[-1]


class Loss(NamedTuple):
    """A scalar loss value together with its gradient w.r.t. the network output."""

    value: float
    grad: np.ndarray


def _check_layout(spec: MlpSpec, params: ParamStore, prefix: str) -> None:
    for layer in range(spec.n_layers):
        expected = (spec.layer_widths[layer], spec.layer_widths[layer + 1])
        w, b = f"{prefix}W{layer}", f"{prefix}b{layer}"
        if w not in params or b not in params:
            raise ConfigError(f"layer {layer}: missing parameters {w!r}/{b!r}")
        if params[w].shape != expected or params[b].shape != (1, expected[1]):
            raise ConfigError(
                f"layer {layer}: expected weight {expected}, got {params[w].shape}"
            )


def forward_mlp(
    spec: MlpSpec, params: ParamStore, x: np.ndarray, prefix: str = ""
) -> tuple[np.ndarray, Trace]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.in_width:
        raise ConfigError(
            f"layer 0: input width {x.shape[-1] if x.ndim else None} != {spec.in_width}"
        )
    _check_layout(spec, params, prefix)
    trace = Trace(spec, params, prefix)
    h = x
    for layer in range(spec.n_layers):
        trace.inputs.append(h)
        a = h @ params[f"{prefix}W{layer}"] + params[f"{prefix}b{layer}"]
        h = activate(spec.layer_activation(layer), a, spec.slope)
        trace.pre.append(a)
        trace.post.append(h)
    return h, trace


def predict(spec: MlpSpec, params: ParamStore, x: np.ndarray, prefix: str = "") -> np.ndarray:
    """Forward pass without keeping the trace."""
    return forward_mlp(spec, params, x, prefix)[0]


def backward(trace: Trace, loss: Loss | np.ndarray) -> np.ndarray:
    """Accumulate parameter gradients; return the gradient w.r.t. the input.

    ``loss`` is either a :class:`Loss` (scalar value plus output gradient) or
    a raw output gradient. Gradients are added into the store, never reset.
    """
    if isinstance(loss, Loss):
        if np.ndim(loss.value) != 0:
            raise UsageError("backward needs a scalar loss")
        grad = loss.grad
    else:
        grad = loss
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != trace.output.shape:
        raise UsageError(
            f"output gradient shape {grad.shape} != network output {trace.output.shape}"
        )
    spec, params, prefix = trace.spec, trace.params, trace.prefix
    for layer in reversed(range(spec.n_layers)):
        act = spec.layer_activation(layer)
        delta = grad * activate_grad(act, trace.pre[layer], trace.post[layer], spec.slope)
        params.grad(f"{prefix}W{layer}")[...] += trace.inputs[layer].T @ delta
        params.grad(f"{prefix}b{layer}")[...] += delta.sum(axis=0, keepdims=True)
        grad = delta @ params[f"{prefix}W{layer}"].T
    return grad


class AdamState:
    """Bias-corrected Adam moments for one :class:`ParamStore`."""

    def __init__(
        self,
        params: ParamStore,
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        if lr <= 0 or eps <= 0 or not (0 < beta1 < 1) or not (0 < beta2 < 1):
            raise ConfigError("invalid Adam hyperparameters")
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {n: np.zeros_like(v) for n, v in params.items()}
        self.v = {n: np.zeros_like(v) for n, v in params.items()}


def adam_step(state: AdamState, params: ParamStore) -> None:
    """Apply one Adam update in place. Gradients are left for the caller to zero."""
    for name in params:
        if not np.all(np.isfinite(params.grad(name))):
            raise TrainingError(f"non-finite gradient in parameter {name!r}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**state.t
    corr2 = 1.0 - b2**state.t
    for name, value in params.items():
        g = params.grad(name)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        value -= state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)


def save_params(params: ParamStore, path: str | Path) -> None:
    chunks = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(params))]
    for name, value in params.items():
        raw = name.encode("utf-8")
        rows, cols = value.shape
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<II", rows, cols))
        chunks.append(np.ascontiguousarray(value, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_params(path: str | Path) -> ParamStore:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes {data[:4]!r}")
    pos = 4

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError(f"{path}: truncated checkpoint")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    version, count = struct.unpack("<II", take(8))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    params = ParamStore()
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        try:
            name = take(name_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"{path}: undecodable parameter name") from exc
        rows, cols = struct.unpack("<II", take(8))
        values = np.frombuffer(take(8 * rows * cols), dtype="<f8").reshape(rows, cols)
        params.add(name, values.astype(np.float64))
    if pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - pos} trailing bytes")
    return params


def load_params_into(params: ParamStore, path: str | Path) -> None:
    """Overwrite ``params`` from a checkpoint, checking names and shapes."""
    loaded = load_params(path)
    if loaded.names() != params.names():
        raise CheckpointError(f"{path}: parameter names do not match")
    for name in params:
        if loaded[name].shape != params[name].shape:
            raise CheckpointError(
                f"{path}: shape mismatch for {name!r}: {loaded[name].shape} vs {params[name].shape}"
            )
        params[name][...] = loaded[name]


# Loss helpers shared by the training stages. Each returns value and d(value)/d(input).

def mse_loss(pred: np.ndarray, target: np.ndarray) -> Loss:
    """Mean over rows of the squared Euclidean error."""
    diff = pred - target
    n = pred.shape[0]
    return Loss(float(np.sum(diff * diff) / n), 2.0 * diff / n)


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(_log_sigmoid(x))


def bce_with_logits(logits: np.ndarray, target: float) -> Loss:
    """Mean binary cross-entropy of ``logits`` against a constant label."""
    n = logits.shape[0]
    value = -np.mean(target * _log_sigmoid(logits) + (1 - target) * _log_sigmoid(-logits))
    return Loss(float(value), (sigmoid(logits) - target) / n)
