"""Fully connected ReLU networks over a flat weight vector.

Layout: for each layer in order, the (out, in) weight matrix row-major,
followed by the ``out`` biases. Every weight and bias feeding a neuron
carries that neuron's input count as its fan-in.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError, DimensionError, NumericError


@dataclass(frozen=True)
class ArchSpec:
    layer_sizes: tuple[int, ...]
    includes_bias: bool = True

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ConfigError("an architecture needs at least input and output layers")
        if any(s < 1 for s in sizes):
            raise ConfigError(f"layer sizes must be positive, got {sizes}")
        if not self.includes_bias:
            raise ConfigError("biases are always generated through Q")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def __str__(self):
        return "-".join(map(str, self.layer_sizes))

    @cached_property
    def layout(self) -> "WeightLayout":
        return WeightLayout(self)


SMALL = ArchSpec((784, 20, 20, 10))
MNISTFC = ArchSpec((784, 300, 100, 10))
ARCHITECTURES = {"small": SMALL, "mnistfc": MNISTFC}


def get_arch(name_or_sizes) -> ArchSpec:
    if isinstance(name_or_sizes, ArchSpec):
        return name_or_sizes
    if isinstance(name_or_sizes, str):
        if name_or_sizes in ARCHITECTURES:
            return ARCHITECTURES[name_or_sizes]
        try:
            return ArchSpec(tuple(int(s) for s in name_or_sizes.split("-")))
        except ValueError:
            raise ConfigError(f"unknown architecture {name_or_sizes!r}") from None
    return ArchSpec(tuple(name_or_sizes))


def param_count(arch: ArchSpec) -> int:
    s = arch.layer_sizes
    return sum((s[l - 1] + 1) * s[l] for l in range(1, len(s)))


class WeightLayout:
    """Bijection between flat index i and (layer, neuron, source).

    ``source`` is the input index, or ``None`` for the bias.
    """

    def __init__(self, arch: ArchSpec):
        self.arch = arch
        self.blocks = []  # (w_start, b_start, b_end, fan_in, fan_out)
        pos = 0
        for l in range(1, len(arch.layer_sizes)):
            n_in, n_out = arch.layer_sizes[l - 1], arch.layer_sizes[l]
            b_start = pos + n_in * n_out
            self.blocks.append((pos, b_start, b_start + n_out, n_in, n_out))
            pos = b_start + n_out
        self.size = pos
        fan = np.empty(pos, dtype=np.int64)
        for w0, _, b1, n_in, _ in self.blocks:
            fan[w0:b1] = n_in
        fan.setflags(write=False)
        self.fan_in = fan

    def __len__(self):
        return self.size

    def index(self, layer: int, neuron: int, source: int | None) -> int:
        w0, b0, _, n_in, n_out = self.blocks[layer]
        if not 0 <= neuron < n_out:
            raise IndexError(f"neuron {neuron} out of range for layer {layer}")
        if source is None:
            return b0 + neuron
        if not 0 <= source < n_in:
            raise IndexError(f"source {source} out of range for layer {layer}")
        return w0 + neuron * n_in + source

    def locate(self, i: int) -> tuple[int, int, int | None]:
        if not 0 <= i < self.size:
            raise IndexError(i)
        for layer, (w0, b0, b1, n_in, _) in enumerate(self.blocks):
            if i < b0:
                return layer, (i - w0) // n_in, (i - w0) % n_in
            if i < b1:
                return layer, i - b0, None
        raise AssertionError("unreachable")

    def unpack(self, w: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views (W, b) per layer; W has shape (out, in)."""
        return [
            (w[w0:b0].reshape(n_out, n_in), w[b0:b1])
            for w0, b0, b1, n_in, n_out in self.blocks
        ]


def _check_weights(arch: ArchSpec, w) -> np.ndarray:
    w = np.ascontiguousarray(w, dtype=np.float64)
    if w.shape != (arch.layout.size,):
        raise DimensionError(f"weight vector must have length {arch.layout.size}, got {w.shape}")
    if not np.all(np.isfinite(w)):
        raise NumericError("non-finite network weights")
    return w


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def logits(arch: ArchSpec, w, inputs) -> np.ndarray:
    w = _check_weights(arch, w)
    h = np.asarray(inputs, dtype=np.float64)
    params = arch.layout.unpack(w)
    for l, (W, b) in enumerate(params):
        h = h @ W.T + b
        if l < len(params) - 1:
            np.maximum(h, 0.0, out=h)
    return h


def forward(arch: ArchSpec, layout, w, batch) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and the logits."""
    out = logits(arch, w, batch.inputs)
    logp = _log_softmax(out)
    loss = -float(np.mean(logp[np.arange(len(batch.labels)), batch.labels]))
    if not np.isfinite(loss):
        raise NumericError("non-finite loss")
    return loss, out


def loss_and_grad(arch: ArchSpec, w, inputs, labels) -> tuple[float, np.ndarray]:
    w = _check_weights(arch, w)
    params = arch.layout.unpack(w)
    x = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels)
    batch = x.shape[0]

    acts = [x]
    h = x
    for l, (W, b) in enumerate(params):
        h = h @ W.T + b
        if l < len(params) - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)

    logp = _log_softmax(acts[-1])
    rows = np.arange(batch)
    loss = -float(np.mean(logp[rows, labels]))
    if not np.isfinite(loss):
        raise NumericError("non-finite loss")

    delta = np.exp(logp)
    delta[rows, labels] -= 1.0
    delta /= batch

    grad = np.empty_like(w)
    gparams = arch.layout.unpack(grad)
    for l in range(len(params) - 1, -1, -1):
        W, _ = params[l]
        gW, gb = gparams[l]
        np.matmul(delta.T, acts[l], out=gW)
        gb[:] = delta.sum(axis=0)
        if l:
            delta = (delta @ W) * (acts[l] > 0)
    return loss, grad


def grad(arch: ArchSpec, layout, w, batch) -> np.ndarray:
    return loss_and_grad(arch, w, batch.inputs, batch.labels)[1]


def accuracy(arch: ArchSpec, w, inputs, labels, chunk: int = 10000) -> float:
    labels = np.asarray(labels)
    hits = 0
    for lo in range(0, len(labels), chunk):
        out = logits(arch, w, inputs[lo:lo + chunk])
        hits += int(np.count_nonzero(out.argmax(axis=1) == labels[lo:lo + chunk]))
    return hits / len(labels)
