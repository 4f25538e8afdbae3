"""Piecewise-linear feedforward networks: layers, exact evaluation, file I/O.

Networks are immutable after construction and safe to share across threads.
Supported layers are dense (fully connected), convolution, ReLU and max
pooling; convolutions and pools carry their input shape so they unroll to
flat affine maps / index windows.
"""

from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


class ModelError(ValueError):
    """Malformed model file or violated shape/finiteness invariant."""


class DatasetError(ValueError):
    """Malformed dataset file or out-of-range value."""


def _float_array(value, ndim, what):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ModelError(f"{what}: not a numeric array ({exc})") from None
    if arr.ndim != ndim:
        raise ModelError(f"{what}: expected {ndim}-d array, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class Dense:
    """Fully connected layer y = W x + b with W of shape (out, in)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = _float_array(self.weights, 2, "dense weights")
        b = _float_array(self.bias, 1, "dense bias")
        if b.shape[0] != w.shape[0]:
            raise ModelError(
                f"dense bias length {b.shape[0]} != weight rows {w.shape[0]}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class Conv:
    """2-D convolution over a (channels, height, width) input.

    kernel has shape (out_channels, in_channels, kh, kw). The layer unrolls
    to its equivalent flat affine map on demand, which unifies it with Dense
    for both evaluation and constraint encoding.
    """

    kernel: np.ndarray
    bias: np.ndarray
    stride: int
    padding: int
    input_shape: tuple[int, int, int]

    def __post_init__(self):
        k = _float_array(self.kernel, 4, "conv kernel")
        b = _float_array(self.bias, 1, "conv bias")
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        if len(self.input_shape) != 3:
            raise ModelError("conv input_shape must be (channels, height, width)")
        if b.shape[0] != k.shape[0]:
            raise ModelError(f"conv bias length {b.shape[0]} != out channels {k.shape[0]}")
        if self.input_shape[0] != k.shape[1]:
            raise ModelError(
                f"conv input channels {self.input_shape[0]} != kernel channels {k.shape[1]}")
        if self.stride < 1 or self.padding < 0:
            raise ModelError("conv stride must be >= 1 and padding >= 0")
        oc, oh, ow = self.output_shape
        if oh < 1 or ow < 1:
            raise ModelError(f"conv output shape {(oc, oh, ow)} is empty")

    @cached_property
    def output_shape(self):
        _, h, w = self.input_shape
        oc, _, kh, kw = self.kernel.shape
        oh = (h + 2 * self.padding - kh) // self.stride + 1
        ow = (w + 2 * self.padding - kw) // self.stride + 1
        return (oc, oh, ow)

    @property
    def in_dim(self):
        c, h, w = self.input_shape
        return c * h * w

    @property
    def out_dim(self):
        oc, oh, ow = self.output_shape
        return oc * oh * ow

    @cached_property
    def as_dense(self) -> Dense:
        """Unrolled flat affine map equivalent to this convolution."""
        c, h, w = self.input_shape
        oc, ic, kh, kw = self.kernel.shape
        _, oh, ow = self.output_shape
        weights = np.zeros((self.out_dim, self.in_dim))
        bias = np.zeros(self.out_dim)
        for o in range(oc):
            for oy in range(oh):
                for ox in range(ow):
                    row = (o * oh + oy) * ow + ox
                    bias[row] = self.bias[o]
                    for i in range(ic):
                        for ky in range(kh):
                            iy = oy * self.stride - self.padding + ky
                            if iy < 0 or iy >= h:
                                continue
                            for kx in range(kw):
                                ix = ox * self.stride - self.padding + kx
                                if ix < 0 or ix >= w:
                                    continue
                                col = (i * h + iy) * w + ix
                                weights[row, col] = self.kernel[o, i, ky, kx]
        return Dense(weights, bias)


@dataclass(frozen=True, eq=False)
class Relu:
    """Elementwise max(x, 0)."""


@dataclass(frozen=True, eq=False)
class MaxPool:
    """Max pooling with a (wh, ww) window over a (channels, height, width) input.

    Only full windows are emitted (floor semantics, no padding).
    """

    window: tuple[int, int]
    stride: int
    input_shape: tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "window", tuple(int(d) for d in self.window))
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        if len(self.window) != 2 or min(self.window) < 1:
            raise ModelError("pool window must be (wh, ww) with positive entries")
        if self.stride < 1:
            raise ModelError("pool stride must be >= 1")
        c, h, w = self.input_shape
        if h < self.window[0] or w < self.window[1]:
            raise ModelError(f"pool window {self.window} larger than input {(h, w)}")

    @cached_property
    def output_shape(self):
        c, h, w = self.input_shape
        oh = (h - self.window[0]) // self.stride + 1
        ow = (w - self.window[1]) // self.stride + 1
        return (c, oh, ow)

    @property
    def in_dim(self):
        c, h, w = self.input_shape
        return c * h * w

    @property
    def out_dim(self):
        c, oh, ow = self.output_shape
        return c * oh * ow

    @cached_property
    def windows(self) -> np.ndarray:
        """Flat input indices per output unit, shape (out_dim, wh * ww)."""
        c, h, w = self.input_shape
        _, oh, ow = self.output_shape
        wh, ww = self.window
        out = np.empty((self.out_dim, wh * ww), dtype=int)
        for ch in range(c):
            for oy in range(oh):
                for ox in range(ow):
                    row = (ch * oh + oy) * ow + ox
                    idx = [
                        (ch * h + oy * self.stride + dy) * w + ox * self.stride + dx
                        for dy in range(wh)
                        for dx in range(ww)
                    ]
                    out[row] = idx
        return out


Layer = Dense | Conv | Relu | MaxPool


def _out_dim(layer: Layer, in_dim: int) -> int:
    if isinstance(layer, Relu):
        return in_dim
    if layer.in_dim != in_dim:
        raise ModelError(
            f"expects input dim {layer.in_dim}, previous layer produces {in_dim}")
    return layer.out_dim


def _check_finite(layer: Layer):
    if isinstance(layer, (Dense, Conv)):
        arrays = (layer.weights, layer.bias) if isinstance(layer, Dense) else (layer.kernel, layer.bias)
        for arr in arrays:
            if not np.all(np.isfinite(arr)):
                raise ModelError("contains non-finite weight")


@dataclass(frozen=True, eq=False)
class Network:
    """An ordered stack of layers classifying input_dim-vectors into num_labels classes."""

    layers: tuple[Layer, ...]
    input_dim: int
    num_labels: int
    input_domain: tuple[float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ModelError("network needs at least one layer")
        if self.input_dim < 1 or self.num_labels < 1:
            raise ModelError("input_dim and num_labels must be positive")
        dim = self.input_dim
        for i, layer in enumerate(self.layers):
            try:
                _check_finite(layer)
                dim = _out_dim(layer, dim)
            except ModelError as exc:
                raise ModelError(f"layer {i}: {exc}") from None
        if dim != self.num_labels:
            raise ModelError(
                f"final layer produces {dim} outputs, expected num_labels={self.num_labels}")
        if self.input_domain is not None:
            lo, hi = self.input_domain
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise ModelError(f"bad input_domain {self.input_domain}")
            object.__setattr__(self, "input_domain", (float(lo), float(hi)))

    def layer_dims(self) -> list[int]:
        dims = [self.input_dim]
        for layer in self.layers:
            dims.append(_out_dim(layer, dims[-1]))
        return dims


def networks_equal(a: Network, b: Network) -> bool:
    """Structural equality with bit-exact weights."""
    if (a.input_dim, a.num_labels, a.input_domain) != (b.input_dim, b.num_labels, b.input_domain):
        return False
    if len(a.layers) != len(b.layers):
        return False
    for la, lb in zip(a.layers, b.layers):
        if type(la) is not type(lb):
            return False
        if isinstance(la, Dense):
            if not (np.array_equal(la.weights, lb.weights) and np.array_equal(la.bias, lb.bias)):
                return False
        elif isinstance(la, Conv):
            if not (np.array_equal(la.kernel, lb.kernel) and np.array_equal(la.bias, lb.bias)
                    and la.stride == lb.stride and la.padding == lb.padding
                    and la.input_shape == lb.input_shape):
                return False
        elif isinstance(la, MaxPool):
            if not (la.window == lb.window and la.stride == lb.stride
                    and la.input_shape == lb.input_shape):
                return False
    return True


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    """Exact logits for a single input vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (net.input_dim,):
        raise ValueError(f"input shape {x.shape}, expected ({net.input_dim},)")
    for layer in net.layers:
        if isinstance(layer, Dense):
            x = layer.weights @ x + layer.bias
        elif isinstance(layer, Conv):
            d = layer.as_dense
            x = d.weights @ x + d.bias
        elif isinstance(layer, Relu):
            x = np.maximum(x, 0.0)
        else:
            x = x[layer.windows].max(axis=1)
    return x


def forward_batch(net: Network, X: np.ndarray) -> np.ndarray:
    """Logits for a batch of inputs, shape (k, input_dim) -> (k, num_labels)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ValueError(f"batch shape {X.shape}, expected (k, {net.input_dim})")
    for layer in net.layers:
        if isinstance(layer, Dense):
            X = X @ layer.weights.T + layer.bias
        elif isinstance(layer, Conv):
            d = layer.as_dense
            X = X @ d.weights.T + d.bias
        elif isinstance(layer, Relu):
            X = np.maximum(X, 0.0)
        else:
            X = X[:, layer.windows].max(axis=2)
    return X


def classify(net: Network, x: np.ndarray) -> int:
    """Predicted label: argmax of the logits, ties broken by lowest index."""
    return int(np.argmax(forward(net, x)))


def second_label(net: Network, x: np.ndarray) -> int:
    """Index of the second-largest logit, ties broken by lowest index."""
    if net.num_labels < 2:
        raise ValueError("second_label needs at least two labels")
    logits = forward(net, x)
    order = sorted(range(net.num_labels), key=lambda j: (-logits[j], j))
    return order[1]


# ---------------------------------------------------------------------------
# Model file format: a JSON document with an explicit layer list.
# {"input_dim": n, "num_labels": L, "input_domain": [lo, hi] | null,
#  "layers": [{"type": "dense", "weights": [[...]], "bias": [...]},
#             {"type": "relu"},
#             {"type": "conv", "kernel": ..., "bias": ..., "stride": s,
#              "padding": p, "input_shape": [c, h, w]},
#             {"type": "maxpool", "window": [wh, ww], "stride": s,
#              "input_shape": [c, h, w]}]}

def _layer_to_json(layer: Layer) -> dict:
    if isinstance(layer, Dense):
        return {"type": "dense", "weights": layer.weights.tolist(), "bias": layer.bias.tolist()}
    if isinstance(layer, Conv):
        return {"type": "conv", "kernel": layer.kernel.tolist(), "bias": layer.bias.tolist(),
                "stride": layer.stride, "padding": layer.padding,
                "input_shape": list(layer.input_shape)}
    if isinstance(layer, Relu):
        return {"type": "relu"}
    return {"type": "maxpool", "window": list(layer.window), "stride": layer.stride,
            "input_shape": list(layer.input_shape)}


def _layer_from_json(obj: dict, index: int) -> Layer:
    try:
        kind = obj["type"]
        if kind == "dense":
            return Dense(obj["weights"], obj["bias"])
        if kind == "conv":
            return Conv(obj["kernel"], obj["bias"], int(obj["stride"]),
                        int(obj["padding"]), tuple(obj["input_shape"]))
        if kind == "relu":
            return Relu()
        if kind == "maxpool":
            return MaxPool(tuple(obj["window"]), int(obj["stride"]), tuple(obj["input_shape"]))
        raise ModelError(f"unknown layer type {kind!r}")
    except ModelError as exc:
        raise ModelError(f"layer {index}: {exc}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"layer {index}: {exc}") from None


def save_model(net: Network, path) -> None:
    doc = {
        "input_dim": net.input_dim,
        "num_labels": net.num_labels,
        "input_domain": list(net.input_domain) if net.input_domain else None,
        "layers": [_layer_to_json(layer) for layer in net.layers],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path) -> Network:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON ({exc})") from None
    try:
        layers = [_layer_from_json(obj, i) for i, obj in enumerate(doc["layers"])]
        domain = doc.get("input_domain")
        return Network(layers, int(doc["input_dim"]), int(doc["num_labels"]),
                       tuple(domain) if domain else None)
    except ModelError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# Datasets

@dataclass(frozen=True, eq=False)
class LabeledPoint:
    """An input vector with its ground-truth label."""

    x: np.ndarray
    label: int

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "label", int(self.label))


def _check_point(x, label, lineno, input_dim, num_labels, input_domain):
    if input_dim is not None and len(x) != input_dim:
        raise DatasetError(f"line {lineno}: expected {input_dim} features, got {len(x)}")
    if num_labels is not None and not 0 <= label < num_labels:
        raise DatasetError(f"line {lineno}: label {label} out of range [0, {num_labels})")
    if input_domain is not None:
        lo, hi = input_domain
        if x.min() < lo or x.max() > hi:
            raise DatasetError(f"line {lineno}: feature outside domain [{lo}, {hi}]")


def _load_csv(path, input_dim, num_labels, input_domain):
    points = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            tokens = line.split(",")
            try:
                label_f = float(tokens[0])
                x = np.array([float(t) for t in tokens[1:]])
            except ValueError as exc:
                raise DatasetError(f"line {lineno}: {exc}") from None
            if label_f != int(label_f):
                raise DatasetError(f"line {lineno}: non-integer label {tokens[0]!r}")
            label = int(label_f)
            if input_dim is None:
                input_dim = len(x)
            _check_point(x, label, lineno, input_dim, num_labels, input_domain)
            points.append(LabeledPoint(x, label))
    return points


def _open_maybe_gzip(path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _load_idx(path, labels_path, num_labels, input_domain):
    if labels_path is None:
        raise DatasetError("idx format needs labels_path for the label file")
    with _open_maybe_gzip(path) as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise DatasetError(f"{path}: truncated idx header")
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGE_MAGIC:
            raise DatasetError(f"{path}: bad image magic 0x{magic:08x}")
        raw = fh.read(count * rows * cols)
    if len(raw) != count * rows * cols:
        raise DatasetError(f"{path}: truncated image data")
    images = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols).astype(float)
    with _open_maybe_gzip(labels_path) as fh:
        header = fh.read(8)
        if len(header) < 8:
            raise DatasetError(f"{labels_path}: truncated idx header")
        magic, lcount = struct.unpack(">II", header)
        if magic != IDX_LABEL_MAGIC:
            raise DatasetError(f"{labels_path}: bad label magic 0x{magic:08x}")
        labels = np.frombuffer(fh.read(lcount), dtype=np.uint8)
    if lcount != count or len(labels) != count:
        raise DatasetError(f"image count {count} != label count {lcount}")
    if input_domain is not None:
        lo, hi = input_domain
        images = lo + images * (hi - lo) / 255.0
    points = []
    for i in range(count):
        label = int(labels[i])
        if num_labels is not None and not 0 <= label < num_labels:
            raise DatasetError(f"item {i}: label {label} out of range [0, {num_labels})")
        points.append(LabeledPoint(images[i], label))
    return points


def load_dataset(path, fmt="csv", *, labels_path=None, input_dim=None,
                 num_labels=None, input_domain=None) -> list[LabeledPoint]:
    """Load labeled points from a CSV (label, features...) or an IDX image/label pair.

    IDX pixel data (0-255) is rescaled linearly onto input_domain when one is
    declared; otherwise raw byte values are kept.
    """
    if fmt == "csv":
        return _load_csv(path, input_dim, num_labels, input_domain)
    if fmt == "idx":
        return _load_idx(path, labels_path, num_labels, input_domain)
    raise DatasetError(f"unknown dataset format {fmt!r}")
