"""Declarative construction of the untrained convolutional generators.

A NetworkSpec is an ordered table of layers (convolutions alternating with
x2 upsampling) plus a learnable noise seed. Generators built from a spec
output strictly image-like tensors; nonnegativity of the output is enforced
by construction through exponential (or exponential-plus-tanh) heads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .tensor import Tensor, TensorError

CONV_KINDS = ("conv2d", "conv3d")
UPSAMPLE_KINDS = ("upsample_nearest", "upsample_bilinear")
ACTIVATIONS = ("tanh", "leaky_relu", "exp", "exp_plus_tanh", "linear")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    out_features: int = 0
    filter_size: tuple = ()
    activation: str = "linear"
    inject_coords: bool = False
    hann_window: bool = False
    aux_input: str = ""

    def validate(self):
        if self.kind in CONV_KINDS:
            ndim = 2 if self.kind == "conv2d" else 3
            if self.out_features < 1:
                raise TensorError(f"conv layer needs out_features >= 1, got {self.out_features}")
            if len(self.filter_size) != ndim:
                raise TensorError(f"{self.kind} filter rank must be {ndim}, got {self.filter_size}")
            if self.activation not in ACTIVATIONS:
                raise TensorError(f"unknown activation {self.activation!r}")
        elif self.kind not in UPSAMPLE_KINDS:
            raise TensorError(f"unknown layer kind {self.kind!r}")


@dataclass
class NetworkSpec:
    layers: tuple
    seed_shape: tuple
    seed_channels: int
    input_dropout_p: float = 0.0
    output_scale: float = 1.0
    leaky_slope: float = 0.1
    blacklevel_init: float = 0.5
    crop_shape: tuple | None = None
    aux_inputs: dict = field(default_factory=dict)

    def validate(self):
        for layer in self.layers:
            layer.validate()
        if not 0.0 <= self.input_dropout_p <= 1.0:
            raise TensorError("input_dropout_p must lie in [0, 1]")
        self.output_shape()

    def output_shape(self):
        """Compose layer shape rules from the seed; returns (extents, channels)."""
        extents = tuple(self.seed_shape)
        channels = self.seed_channels
        for layer in self.layers:
            if layer.kind in UPSAMPLE_KINDS:
                extents = tuple(2 * e for e in extents)
            else:
                channels = layer.out_features
                if layer.activation == "exp_plus_tanh":
                    if channels % 2:
                        raise TensorError("exp_plus_tanh head needs an even channel count")
                    channels //= 2
        if self.crop_shape is not None:
            if any(c > e for c, e in zip(self.crop_shape, extents)):
                raise TensorError(f"crop shape {self.crop_shape} exceeds network extent {extents}")
            extents = tuple(self.crop_shape)
        return extents, channels

    def upsample_count(self):
        return sum(1 for l in self.layers if l.kind in UPSAMPLE_KINDS)


# ---------------------------------------------------------------------------
# Constant feature maps
# ---------------------------------------------------------------------------

_COORD_CACHE = {}


def coordinate_maps(extents):
    """One channel per axis with a linear ramp over [-1, 1]; length-1 axes map to 0."""
    extents = tuple(int(e) for e in extents)
    if extents in _COORD_CACHE:
        return _COORD_CACHE[extents]
    maps = []
    for axis, n in enumerate(extents):
        ramp = np.zeros(n) if n == 1 else np.linspace(-1.0, 1.0, n)
        shape = [1] * len(extents)
        shape[axis] = n
        maps.append(np.broadcast_to(ramp.reshape(shape), extents))
    out = np.ascontiguousarray(np.stack(maps, axis=-1))
    _COORD_CACHE[extents] = out
    return out


def inject_coordinates(x):
    """Append per-axis coordinate channels to a channels-last feature map."""
    coords = coordinate_maps(x.shape[:-1])
    return T.concat([x, Tensor(coords)], axis=-1)


_HANN_CACHE = {}


def hann_weights(extents):
    """Separable Hann window over all given axes, broadcastable over channels."""
    extents = tuple(int(e) for e in extents)
    if extents in _HANN_CACHE:
        return _HANN_CACHE[extents]
    w = np.ones(extents)
    for axis, n in enumerate(extents):
        if n < 2:
            raise TensorError(f"hann window needs axis length >= 2, got {n}")
        k = np.arange(n)
        h1 = 0.5 - 0.5 * np.cos(2.0 * np.pi * k / (n - 1))
        shape = [1] * len(extents)
        shape[axis] = n
        w = w * h1.reshape(shape)
    out = w[..., None]
    _HANN_CACHE[extents] = out
    return out


def hann_window(x):
    """Multiply a channels-last feature map by a separable Hann window."""
    return x * Tensor(hann_weights(x.shape[:-1]))


def seed_dropout(x, p, rng):
    """Zero whole pixel positions of the seed independently with probability p."""
    if not 0.0 <= p <= 1.0:
        raise TensorError("dropout probability must lie in [0, 1]")
    if p == 0.0:
        return x
    keep = (rng.random(x.shape[:-1]) >= p).astype(np.float64)
    if p < 1.0:
        keep /= 1.0 - p
    return x * Tensor(keep[..., None])


# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------


class Generator:
    """A NetworkSpec instantiated with learnable seed and convolution weights."""

    def __init__(self, spec: NetworkSpec, rng):
        spec.validate()
        self.spec = spec
        self.seed = Tensor(rng.standard_normal((*spec.seed_shape, spec.seed_channels)),
                           requires_grad=True)
        self.weights = []
        self.biases = []
        self.blacklevel = None
        extents = tuple(spec.seed_shape)
        channels = spec.seed_channels
        for layer in spec.layers:
            if layer.kind in UPSAMPLE_KINDS:
                extents = tuple(2 * e for e in extents)
                continue
            cin = channels
            if layer.inject_coords:
                cin += len(extents)
            if layer.aux_input:
                cin += 1
            fan_in = cin * int(np.prod(layer.filter_size))
            bound = math.sqrt(1.0 / fan_in)
            w = rng.uniform(-bound, bound, (*layer.filter_size, cin, layer.out_features))
            b = rng.uniform(-bound, bound, layer.out_features)
            self.weights.append(Tensor(w, requires_grad=True))
            self.biases.append(Tensor(b, requires_grad=True))
            channels = layer.out_features
            if layer.activation == "exp_plus_tanh":
                channels //= 2
                self.blacklevel = Tensor(np.full(channels, spec.blacklevel_init),
                                         requires_grad=True)

    def parameters(self):
        params = [self.seed] + self.weights + self.biases
        if self.blacklevel is not None:
            params.append(self.blacklevel)
        return params

    def _aux_map(self, name, extents):
        aux = np.asarray(self.spec.aux_inputs[name], dtype=np.float64)
        if aux.shape != tuple(extents):
            aux = _resize_nearest(aux, extents)
        return Tensor(aux[..., None])

    def forward(self, rng=None):
        spec = self.spec
        x = self.seed
        if spec.input_dropout_p > 0.0:
            if rng is None:
                raise TensorError("dropout requires an rng for the per-iteration mask")
            x = seed_dropout(x, spec.input_dropout_p, rng)
        conv_idx = 0
        for layer in spec.layers:
            if layer.kind in UPSAMPLE_KINDS:
                axes = tuple(range(x.ndim - 1))
                op = T.upsample_nearest if layer.kind == "upsample_nearest" else T.upsample_bilinear
                x = op(x, axes)
                continue
            if layer.inject_coords:
                x = inject_coordinates(x)
            if layer.aux_input:
                x = T.concat([x, self._aux_map(layer.aux_input, x.shape[:-1])], axis=-1)
            conv = T.conv2d if layer.kind == "conv2d" else T.conv3d
            x = conv(x, self.weights[conv_idx], self.biases[conv_idx])
            conv_idx += 1
            x = self._activate(x, layer.activation)
            if layer.hann_window:
                x = hann_window(x)
        if spec.crop_shape is not None:
            for axis, extent in enumerate(spec.crop_shape):
                if x.shape[axis] != extent:
                    x = T.narrow(x, axis, 0, extent)
        if spec.output_scale != 1.0:
            x = x * spec.output_scale
        return x

    def _activate(self, x, activation):
        if activation == "linear":
            return x
        if activation == "tanh":
            return T.tanh(x)
        if activation == "leaky_relu":
            return T.leaky_relu(x, slope=self.spec.leaky_slope)
        if activation == "exp":
            return T.exp(x)
        if activation == "exp_plus_tanh":
            n = x.shape[-1] // 2
            raw_exp = T.narrow(x, x.ndim - 1, 0, n)
            raw_tanh = T.narrow(x, x.ndim - 1, n, n)
            background = self.blacklevel * (T.tanh(raw_tanh) * 0.5 + 0.5)
            return T.exp(raw_exp) + background
        raise TensorError(f"unknown activation {activation!r}")


def _resize_nearest(arr, extents):
    idx = tuple(
        np.minimum((np.arange(e) * arr.shape[a] / e).astype(int), arr.shape[a] - 1)
        for a, e in enumerate(extents)
    )
    return arr[np.ix_(*idx)]


def build_network(spec: NetworkSpec, rng_seed):
    """Instantiate a spec into a differentiable generator with fresh weights."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return Generator(spec, rng)


# ---------------------------------------------------------------------------
# Architecture presets
# ---------------------------------------------------------------------------


def _scaled(n, width):
    return max(1, round(n * width))


def factor_net_spec(target_shape, width=1.0, row_mean=None):
    """2-D generator for one factor matrix viewed as an image.

    Five bilinear upsampling stages from a seed of 1/32 the target extent;
    coordinates are injected at every convolution, the second-to-last layer
    additionally sees a broadcast row-average map, and the head is a strictly
    positive exponential. Pixel-wise dropout (p=0.5) is applied to the seed.
    """
    h, w = target_shape
    seed_shape = (max(1, math.ceil(h / 32)), max(1, math.ceil(w / 32)))
    convs = [(32, 4, "tanh"), (64, 4, "tanh"), (64, 4, "tanh"),
             (128, 4, "tanh"), (128, 4, "tanh")]
    layers = []
    for feats, k, act in convs:
        layers.append(LayerSpec("conv2d", _scaled(feats, width), (k, k), act, inject_coords=True))
        layers.append(LayerSpec("upsample_bilinear"))
    layers.append(LayerSpec("conv2d", _scaled(64, width), (3, 3), "leaky_relu",
                            inject_coords=True, aux_input="row_mean" if row_mean is not None else ""))
    layers.append(LayerSpec("conv2d", 1, (3, 3), "exp", inject_coords=True))
    aux = {"row_mean": row_mean} if row_mean is not None else {}
    return NetworkSpec(
        layers=tuple(layers),
        seed_shape=seed_shape,
        seed_channels=_scaled(64, width),
        input_dropout_p=0.5,
        crop_shape=(h, w),
        aux_inputs=aux,
    )


def video_net_spec(t, i, j, channels=3, width=1.0):
    """3-D generator for the hidden video tensor.

    Three nearest-neighbor upsampling stages double time and both spatial
    axes from a seed of extent (t/8, i/8, j/8). Coordinates are injected up
    to the seventh layer. The head splits 2c channels into an exponential
    image plus a learnable blacklevel background gated by tanh, and the
    output is scaled by 1/(i*j).
    """
    for name, v in (("t", t), ("i", i), ("j", j)):
        if v % 8:
            raise TensorError(f"video net needs {name} divisible by 8, got {v}")
    k = (3, 3, 3)
    c64, c32 = _scaled(64, width), _scaled(32, width)
    layers = (
        LayerSpec("conv3d", c64, k, "leaky_relu", inject_coords=True),   # 1
        LayerSpec("upsample_nearest"),                                   # 2
        LayerSpec("conv3d", c64, k, "leaky_relu", inject_coords=True),   # 3
        LayerSpec("conv3d", c64, k, "leaky_relu", inject_coords=True),   # 4
        LayerSpec("upsample_nearest"),                                   # 5
        LayerSpec("conv3d", c64, k, "leaky_relu", inject_coords=True),   # 6
        LayerSpec("conv3d", c64, k, "leaky_relu", inject_coords=True),   # 7
        LayerSpec("conv3d", c64, k, "leaky_relu"),                       # 8
        LayerSpec("upsample_nearest"),                                   # 9
        LayerSpec("conv3d", c64, k, "leaky_relu"),                       # 10
        LayerSpec("conv3d", c32, k, "leaky_relu"),                       # 11
        LayerSpec("conv3d", 2 * channels, k, "exp_plus_tanh"),           # 12
    )
    return NetworkSpec(
        layers=layers,
        seed_shape=(t // 8, i // 8, j // 8),
        seed_channels=4,
        output_scale=1.0 / (i * j),
    )


def mixing_net_spec(i, j, s, channels=3, width=1.0):
    """2-D generator for the singular-vector mixing weights.

    Convolutions act over the hidden-pixel plane only (never across the
    basis dimension). Hann windows damp the three mid-resolution layers,
    and the linear head emits s images per color channel.
    """
    for name, v in (("i", i), ("j", j)):
        if v % 8:
            raise TensorError(f"mixing net needs {name} divisible by 8, got {v}")
    c32, c64 = _scaled(32, width), _scaled(64, width)
    c128, c256 = _scaled(128, width), _scaled(256, width)
    layers = (
        LayerSpec("conv2d", c32, (3, 3), "leaky_relu", inject_coords=True),    # 1
        LayerSpec("upsample_nearest"),                                         # 2
        LayerSpec("conv2d", c64, (3, 3), "leaky_relu", inject_coords=True),    # 4
        LayerSpec("conv2d", c64, (3, 3), "leaky_relu", inject_coords=True),    # 5
        LayerSpec("conv2d", c64, (3, 3), "leaky_relu", inject_coords=True),    # 6
        LayerSpec("upsample_nearest"),                                         # 7
        LayerSpec("conv2d", c64, (3, 3), "leaky_relu", inject_coords=True, hann_window=True),   # 8
        LayerSpec("conv2d", c64, (3, 3), "leaky_relu", inject_coords=True, hann_window=True),   # 9
        LayerSpec("conv2d", c64, (3, 3), "leaky_relu", inject_coords=True, hann_window=True),   # 10
        LayerSpec("upsample_nearest"),                                         # 11
        LayerSpec("conv2d", c128, (3, 3), "leaky_relu"),                       # 12
        LayerSpec("conv2d", c256, (3, 3), "leaky_relu"),                       # 13
        LayerSpec("conv2d", s * channels, (3, 3), "linear"),                   # 14
    )
    return NetworkSpec(
        layers=layers,
        seed_shape=(i // 8, j // 8),
        seed_channels=32,
    )


# ---------------------------------------------------------------------------
# Text-table serialization
# ---------------------------------------------------------------------------


def spec_to_table(spec: NetworkSpec) -> str:
    """Render a spec as the one-layer-per-line table used in config files."""
    lines = [
        "# seed {} channels={} dropout={} scale={!r}".format(
            "x".join(str(e) for e in spec.seed_shape),
            spec.seed_channels, spec.input_dropout_p, spec.output_scale)
    ]
    if spec.crop_shape is not None:
        lines.append("# crop {}".format("x".join(str(e) for e in spec.crop_shape)))
    for idx, layer in enumerate(spec.layers, start=1):
        if layer.kind in UPSAMPLE_KINDS:
            lines.append(f"{idx}  {layer.kind}")
            continue
        flags = []
        if layer.inject_coords:
            flags.append("coords")
        if layer.hann_window:
            flags.append("hann")
        if layer.aux_input:
            flags.append(f"aux:{layer.aux_input}")
        lines.append("{}  {}  {}  {}  {}{}".format(
            idx, layer.kind, layer.out_features,
            "x".join(str(k) for k in layer.filter_size),
            layer.activation, ("  " + " ".join(flags)) if flags else ""))
    return "\n".join(lines) + "\n"


def spec_from_table(text: str) -> NetworkSpec:
    """Parse the table format emitted by spec_to_table."""
    layers = []
    seed_shape = None
    seed_channels = None
    dropout = 0.0
    scale = 1.0
    crop = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if parts and parts[0] == "seed":
                seed_shape = tuple(int(v) for v in parts[1].split("x"))
                for kv in parts[2:]:
                    key, _, val = kv.partition("=")
                    if key == "channels":
                        seed_channels = int(val)
                    elif key == "dropout":
                        dropout = float(val)
                    elif key == "scale":
                        scale = float(val)
            elif parts and parts[0] == "crop":
                crop = tuple(int(v) for v in parts[1].split("x"))
            continue
        fields = line.split()
        kind = fields[1]
        if kind in UPSAMPLE_KINDS:
            layers.append(LayerSpec(kind))
            continue
        flags = fields[5:]
        aux = ""
        for f in flags:
            if f.startswith("aux:"):
                aux = f[4:]
        layers.append(LayerSpec(
            kind, int(fields[2]), tuple(int(k) for k in fields[3].split("x")),
            fields[4], inject_coords="coords" in flags, hann_window="hann" in flags,
            aux_input=aux))
    if seed_shape is None or seed_channels is None:
        raise TensorError("table is missing the '# seed' header line")
    return NetworkSpec(layers=tuple(layers), seed_shape=seed_shape,
                       seed_channels=seed_channels, input_dropout_p=dropout,
                       output_scale=scale, crop_shape=crop)
