"""Minimal differentiable network core for binary window classification.

Supports exactly the layer set the classifier needs: 1D convolution,
ReLU, max pooling, global average pooling, dense layers and a sigmoid
head, trained with binary cross-entropy and Adam. Gradients are exact
analytic backpropagation in float64; there is no autodiff and no
framework dependency. Convolutions are lowered to GEMM via an im2col
view so training stays fast on CPU.

States are immutable: adam_step returns a new NetworkState, so any
intermediate state can be kept as a snapshot without copying.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence, Union

import numpy as np

MODEL_MAGIC = b"HARM"
MODEL_FORMAT_VERSION = 1

# forward outputs stay strictly inside (0, 1); loss uses a wider clamp
SIGMOID_FLOOR = 1e-12
BCE_CLAMP = 1e-7


@dataclass(frozen=True)
class Conv1D:
    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class MaxPool1D:
    width: int


@dataclass(frozen=True)
class GlobalAveragePool:
    pass


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int


@dataclass(frozen=True)
class Sigmoid:
    pass


Layer = Union[Conv1D, ReLU, MaxPool1D, GlobalAveragePool, Dense, Sigmoid]


@dataclass(frozen=True)
class NetworkSpec:
    """An ordered layer stack, validated against its input shape."""

    layers: tuple[Layer, ...]
    input_shape: tuple[int, int] = (3, 600)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        validate_spec(self)


@dataclass(frozen=True)
class AdamHyper:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        for name in ("beta1", "beta2"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {v}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")


@dataclass(frozen=True)
class NetworkState:
    """Parameters plus Adam moments for one classifier."""

    spec: NetworkSpec
    params: tuple[np.ndarray, ...]
    m: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]
    step: int = 0


def _layer_name(layer: Layer) -> str:
    return type(layer).__name__


def validate_spec(spec: NetworkSpec) -> None:
    """Check the shape algebra of the whole stack; raise on the first
    incompatible layer pair."""
    c, length = spec.input_shape
    if c < 1 or length < 1:
        raise ValueError(f"bad input shape {spec.input_shape}")
    if not spec.layers:
        raise ValueError("empty layer list")

    shape: tuple = ("seq", c, length)  # ("seq", channels, length) or ("vec", dim)
    prev = f"input {c}x{length}"
    for i, layer in enumerate(spec.layers):
        label = f"layer {i} ({_layer_name(layer)})"

        def fail(reason: str):
            raise ValueError(f"{prev} -> {label}: {reason}")

        if isinstance(layer, Conv1D):
            if shape[0] != "seq":
                fail("convolution needs a (channels, length) input")
            if layer.kernel_size < 1 or layer.stride < 1 or layer.out_channels < 1:
                fail("kernel_size, stride and out_channels must be positive")
            if layer.in_channels != shape[1]:
                fail(f"expects {layer.in_channels} channels, gets {shape[1]}")
            if layer.kernel_size > shape[2]:
                fail(f"kernel {layer.kernel_size} longer than input {shape[2]}")
            lout = (shape[2] - layer.kernel_size) // layer.stride + 1
            shape = ("seq", layer.out_channels, lout)
        elif isinstance(layer, MaxPool1D):
            if shape[0] != "seq":
                fail("pooling needs a (channels, length) input")
            if layer.width < 1 or shape[2] // layer.width < 1:
                fail(f"pool width {layer.width} too large for length {shape[2]}")
            shape = ("seq", shape[1], shape[2] // layer.width)
        elif isinstance(layer, GlobalAveragePool):
            if shape[0] != "seq":
                fail("global pooling needs a (channels, length) input")
            shape = ("vec", shape[1])
        elif isinstance(layer, Dense):
            if shape[0] != "vec":
                fail("dense needs a flat feature vector (add GlobalAveragePool)")
            if layer.in_dim != shape[1]:
                fail(f"expects {layer.in_dim} features, gets {shape[1]}")
            if layer.out_dim < 1:
                fail("out_dim must be positive")
            shape = ("vec", layer.out_dim)
        elif isinstance(layer, (ReLU, Sigmoid)):
            pass
        else:
            fail("unknown layer kind")
        prev = label

    if not isinstance(spec.layers[-1], Sigmoid):
        raise ValueError("final layer must be Sigmoid")
    if shape != ("vec", 1):
        raise ValueError(f"network must end in a single scalar, ends in {shape}")


def parse_layer_string(text: str, input_shape: tuple[int, int] = (3, 600)) -> NetworkSpec:
    """Build a NetworkSpec from a compact comma-separated description.

    Example: ``conv:32:7:2, relu, maxpool:2, conv:64:5:2, relu, gap,
    dense:1, sigmoid``. Input channels / feature dims are inferred by
    shape propagation from input_shape.
    """
    c, length = input_shape
    shape: tuple = ("seq", c, length)
    layers: list[Layer] = []
    for item in text.split(","):
        item = item.strip().lower()
        if not item:
            continue
        parts = item.split(":")
        kind, args = parts[0], parts[1:]
        try:
            if kind == "conv":
                out_ch, k = int(args[0]), int(args[1])
                stride = int(args[2]) if len(args) > 2 else 1
                if shape[0] != "seq":
                    raise ValueError(f"conv after flat features in {text!r}")
                layers.append(Conv1D(shape[1], out_ch, k, stride))
                shape = ("seq", out_ch, (shape[2] - k) // stride + 1)
            elif kind == "relu":
                layers.append(ReLU())
            elif kind == "maxpool":
                w = int(args[0])
                layers.append(MaxPool1D(w))
                shape = ("seq", shape[1], shape[2] // w)
            elif kind == "gap":
                layers.append(GlobalAveragePool())
                shape = ("vec", shape[1])
            elif kind == "dense":
                out_dim = int(args[0])
                if shape[0] != "vec":
                    raise ValueError(f"dense before gap in {text!r}")
                layers.append(Dense(shape[1], out_dim))
                shape = ("vec", out_dim)
            elif kind == "sigmoid":
                layers.append(Sigmoid())
            else:
                raise ValueError(f"unknown layer {item!r} in {text!r}")
        except (IndexError, ValueError) as exc:
            raise ValueError(f"cannot parse layer {item!r}: {exc}") from None
    return NetworkSpec(tuple(layers), input_shape)


DEFAULT_LAYERS = "conv:32:7:2, relu, maxpool:2, conv:64:5:2, relu, gap, dense:1, sigmoid"


def default_spec(input_shape: tuple[int, int] = (3, 600)) -> NetworkSpec:
    return parse_layer_string(DEFAULT_LAYERS, input_shape)


def _param_shapes(spec: NetworkSpec) -> list[tuple[int, ...]]:
    shapes: list[tuple[int, ...]] = []
    for layer in spec.layers:
        if isinstance(layer, Conv1D):
            shapes.append((layer.out_channels, layer.in_channels, layer.kernel_size))
            shapes.append((layer.out_channels,))
        elif isinstance(layer, Dense):
            shapes.append((layer.out_dim, layer.in_dim))
            shapes.append((layer.out_dim,))
    return shapes


def init_network(spec: NetworkSpec, seed: int) -> NetworkState:
    """Fan-in-scaled uniform weight init, zero biases, zero Adam state.

    Weights are drawn from U(-b, b) with b = sqrt(1 / fan_in); fully
    deterministic in the seed.
    """
    rng = np.random.default_rng(seed)
    params: list[np.ndarray] = []
    for layer in spec.layers:
        if isinstance(layer, Conv1D):
            fan_in = layer.in_channels * layer.kernel_size
            bound = np.sqrt(1.0 / fan_in)
            params.append(
                rng.uniform(
                    -bound,
                    bound,
                    (layer.out_channels, layer.in_channels, layer.kernel_size),
                )
            )
            params.append(np.zeros(layer.out_channels))
        elif isinstance(layer, Dense):
            bound = np.sqrt(1.0 / layer.in_dim)
            params.append(rng.uniform(-bound, bound, (layer.out_dim, layer.in_dim)))
            params.append(np.zeros(layer.out_dim))
    zeros = tuple(np.zeros_like(p) for p in params)
    return NetworkState(
        spec=spec,
        params=tuple(params),
        m=zeros,
        v=tuple(np.zeros_like(p) for p in params),
        step=0,
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return np.clip(out, SIGMOID_FLOOR, 1.0 - SIGMOID_FLOOR)


def _conv_cols(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    # im2col over channels-last input: (B, L, C) -> (B*Lout, K*C) copy
    b, length, c = x.shape
    lout = (length - k) // stride + 1
    s0, s1, s2 = x.strides
    view = np.lib.stride_tricks.as_strided(
        x,
        shape=(b, lout, k, c),
        strides=(s0, s1 * stride, s1, s2),
        writeable=False,
    )
    return view.reshape(b * lout, k * c)


def _check_batch(spec: NetworkSpec, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    expected = spec.input_shape
    if batch.ndim != 3 or batch.shape[1:] != expected:
        raise ValueError(
            f"batch shape {batch.shape} does not match (B, {expected[0]}, {expected[1]})"
        )
    return batch


def _forward_layers(state: NetworkState, batch: np.ndarray, keep_caches: bool):
    # sequences run channels-last internally, (B, L, C): convolutions
    # lower to one big GEMM and pooling reshapes stay views
    x = np.ascontiguousarray(batch.transpose(0, 2, 1))
    caches: list = []
    p = 0  # index into the flat parameter store
    for layer in state.spec.layers:
        if isinstance(layer, Conv1D):
            w, bias = state.params[p], state.params[p + 1]
            cols = _conv_cols(x, layer.kernel_size, layer.stride)
            bsz = x.shape[0]
            lout = cols.shape[0] // bsz
            wmat = np.ascontiguousarray(w.transpose(2, 1, 0)).reshape(
                -1, layer.out_channels
            )  # (K*C, O), matching the im2col column order
            y = cols @ wmat + bias
            if keep_caches:
                caches.append((cols, x.shape))
            x = y.reshape(bsz, lout, layer.out_channels)
            p += 2
        elif isinstance(layer, ReLU):
            if keep_caches:
                caches.append(x > 0)
            x = np.maximum(x, 0.0)
        elif isinstance(layer, MaxPool1D):
            bsz, length, ch = x.shape
            lout = length // layer.width
            blocks = x[:, : lout * layer.width].reshape(bsz, lout, layer.width, ch)
            # running max with first-winner ties; faster than argmax on a
            # middle axis and gives the backward routing for free
            best = blocks[:, :, 0, :]
            idx = np.zeros((bsz, lout, ch), dtype=np.int64)
            for j in range(1, layer.width):
                cand = blocks[:, :, j, :]
                better = cand > best
                best = np.where(better, cand, best)
                idx = np.where(better, j, idx)
            if keep_caches:
                caches.append((idx, x.shape))
            x = best
        elif isinstance(layer, GlobalAveragePool):
            if keep_caches:
                caches.append(x.shape)
            x = x.mean(axis=1)
        elif isinstance(layer, Dense):
            w, bias = state.params[p], state.params[p + 1]
            if keep_caches:
                caches.append(x)
            x = x @ w.T + bias
            p += 2
        elif isinstance(layer, Sigmoid):
            x = _sigmoid(x)
            if keep_caches:
                caches.append(x)
    return x, caches


def forward(state: NetworkState, batch: np.ndarray) -> np.ndarray:
    """Compute per-window probabilities for a (B, C, L) batch.

    Pure and deterministic; output shape (B,), strictly inside (0, 1).
    """
    batch = _check_batch(state.spec, batch)
    out, _ = _forward_layers(state, batch, keep_caches=False)
    return out.reshape(-1)


def loss_and_grads(
    state: NetworkState, batch: np.ndarray, labels: np.ndarray
) -> tuple[float, tuple[np.ndarray, ...]]:
    """Mean binary cross-entropy and exact parameter gradients.

    The sigmoid head and the loss are fused in the backward pass, so the
    gradient at the pre-sigmoid logit is exactly (p - y) / B per sample.
    """
    batch = _check_batch(state.spec, batch)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if y.shape[0] != batch.shape[0]:
        raise ValueError(f"{y.shape[0]} labels for batch of {batch.shape[0]}")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("labels must be binary")

    probs, caches = _forward_layers(state, batch, keep_caches=True)
    p = probs.reshape(-1)
    pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = float(-np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)))

    grads: list[np.ndarray | None] = [None] * len(state.params)
    # fused BCE + sigmoid: gradient w.r.t. the logit
    grad = ((p - y) / y.shape[0]).reshape(probs.shape)

    pi = len(state.params)
    for li in range(len(state.spec.layers) - 1, -1, -1):
        layer = state.spec.layers[li]
        cache = caches[li]
        if isinstance(layer, Sigmoid):
            if li == len(state.spec.layers) - 1:
                continue  # head is fused with the loss
            grad = grad * cache * (1.0 - cache)
            continue
        if isinstance(layer, Conv1D):
            pi -= 2
            w = state.params[pi]
            cols, x_shape = cache
            bsz, lout, out_ch = grad.shape
            g2 = grad.reshape(bsz * lout, out_ch)
            # dW back to (O, C, K) from the (K*C, O) GEMM layout
            dw = (cols.T @ g2).reshape(layer.kernel_size, layer.in_channels, out_ch)
            grads[pi] = np.ascontiguousarray(dw.transpose(2, 1, 0))
            grads[pi + 1] = g2.sum(axis=0)
            wmat = np.ascontiguousarray(w.transpose(2, 1, 0)).reshape(-1, out_ch)
            dcols = (g2 @ wmat.T).reshape(
                bsz, lout, layer.kernel_size, layer.in_channels
            )
            dx = np.zeros(x_shape)
            stop = layer.stride * (lout - 1) + 1
            for k in range(layer.kernel_size):
                dx[:, k : k + stop : layer.stride, :] += dcols[:, :, k, :]
            grad = dx
        elif isinstance(layer, ReLU):
            grad = grad * cache
        elif isinstance(layer, MaxPool1D):
            idx, x_shape = cache
            bsz, lout, ch = grad.shape
            blocks = np.zeros((bsz, lout, layer.width, ch))
            np.put_along_axis(blocks, idx[:, :, None, :], grad[:, :, None, :], axis=2)
            dx = np.zeros(x_shape)
            dx[:, : lout * layer.width, :] = blocks.reshape(
                bsz, lout * layer.width, ch
            )
            grad = dx
        elif isinstance(layer, GlobalAveragePool):
            x_shape = cache
            grad = np.broadcast_to(
                grad[:, None, :] / x_shape[1], x_shape
            ).copy()
        elif isinstance(layer, Dense):
            pi -= 2
            w = state.params[pi]
            x_in = cache
            grads[pi] = grad.T @ x_in
            grads[pi + 1] = grad.sum(axis=0)
            grad = grad @ w

    assert pi == 0 and all(g is not None for g in grads)
    return loss, tuple(grads)  # type: ignore[arg-type]


def adam_step(
    state: NetworkState, grads: Sequence[np.ndarray], hyper: AdamHyper
) -> NetworkState:
    """One Adam update with bias correction; returns the new state."""
    if len(grads) != len(state.params):
        raise ValueError(
            f"{len(grads)} gradient arrays for {len(state.params)} parameters"
        )
    t = state.step + 1
    b1c = 1.0 - hyper.beta1**t
    b2c = 1.0 - hyper.beta2**t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(state.params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m2 = hyper.beta1 * m + (1.0 - hyper.beta1) * g
        v2 = hyper.beta2 * v + (1.0 - hyper.beta2) * (g * g)
        update = hyper.learning_rate * (m2 / b1c) / (np.sqrt(v2 / b2c) + hyper.epsilon)
        new_params.append(p - update)
        new_m.append(m2)
        new_v.append(v2)
    return replace(
        state, params=tuple(new_params), m=tuple(new_m), v=tuple(new_v), step=t
    )


def _spec_to_dict(spec: NetworkSpec) -> dict:
    layers = []
    for layer in spec.layers:
        entry: dict = {"kind": _layer_name(layer)}
        if isinstance(layer, Conv1D):
            entry.update(
                in_channels=layer.in_channels,
                out_channels=layer.out_channels,
                kernel_size=layer.kernel_size,
                stride=layer.stride,
            )
        elif isinstance(layer, MaxPool1D):
            entry.update(width=layer.width)
        elif isinstance(layer, Dense):
            entry.update(in_dim=layer.in_dim, out_dim=layer.out_dim)
        layers.append(entry)
    return {"input_shape": list(spec.input_shape), "layers": layers}


def _spec_from_dict(obj: dict) -> NetworkSpec:
    kinds = {
        "Conv1D": lambda e: Conv1D(
            e["in_channels"], e["out_channels"], e["kernel_size"], e["stride"]
        ),
        "ReLU": lambda e: ReLU(),
        "MaxPool1D": lambda e: MaxPool1D(e["width"]),
        "GlobalAveragePool": lambda e: GlobalAveragePool(),
        "Dense": lambda e: Dense(e["in_dim"], e["out_dim"]),
        "Sigmoid": lambda e: Sigmoid(),
    }
    layers = tuple(kinds[e["kind"]](e) for e in obj["layers"])
    return NetworkSpec(layers, tuple(obj["input_shape"]))


def save_model(state: NetworkState, path: Path) -> None:
    """Write the versioned binary model container.

    Layout: magic ``HARM``, u16 LE format version, u32 LE JSON length,
    the spec as JSON, then every parameter array as contiguous little-
    endian float64 in declaration order. Round-trips bit-exactly.
    """
    spec_json = json.dumps(_spec_to_dict(state.spec), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<H", MODEL_FORMAT_VERSION))
        fh.write(struct.pack("<I", len(spec_json)))
        fh.write(spec_json)
        for p in state.params:
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_model(path: Path) -> NetworkState:
    """Read a model container back; optimizer state starts fresh."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MODEL_MAGIC:
        raise ValueError(f"{path}: not a model file (bad magic)")
    (version,) = struct.unpack("<H", blob[4:6])
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model format version {version}")
    (json_len,) = struct.unpack("<I", blob[6:10])
    spec = _spec_from_dict(json.loads(blob[10 : 10 + json_len].decode("utf-8")))
    offset = 10 + json_len
    params = []
    for shape in _param_shapes(spec):
        count = int(np.prod(shape))
        arr = np.frombuffer(
            blob, dtype="<f8", count=count, offset=offset
        ).reshape(shape)
        params.append(arr.astype(np.float64))
        offset += count * 8
    if offset != len(blob):
        raise ValueError(f"{path}: trailing bytes after parameter arrays")
    zeros = tuple(np.zeros_like(p) for p in params)
    return NetworkState(
        spec=spec,
        params=tuple(params),
        m=zeros,
        v=tuple(np.zeros_like(p) for p in params),
        step=0,
    )
