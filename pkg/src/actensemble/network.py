"""Network descriptions and the layer stack built from them.

Descriptions use the compact nomenclature ``(32)3c-2p-400f-10f``:

* ``Nf``     dense layer with N units
* ``(K)Sc``  convolution with K filters of size S x S
* ``Sp``     S x S max pooling

Every dense/conv layer except the final classifier is followed by an
activation block: optional batch norm, then either a plain ReLU (``relu``
mode) or an activation ensemble over one of the built-in sets.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from . import activations
from .ensemble import EPS as ENS_EPS, MOMENTUM as ENS_MOMENTUM, EnsembleLayer
from .layers import BatchNorm, Conv2D, Dense, Flatten, MaxPool2D, ReLU

MODES = ("relu", "set1", "set2", "set3")


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class DenseSpec:
    width: int

    def __str__(self):
        return f"{self.width}f"


@dataclass(frozen=True)
class ConvSpec:
    filters: int
    size: int

    def __str__(self):
        return f"({self.filters}){self.size}c"


@dataclass(frozen=True)
class PoolSpec:
    size: int

    def __str__(self):
        return f"{self.size}p"


_TOKEN = re.compile(r"\((?P<filters>\d+)\)(?P<ksize>\d+)c|(?P<width>\d+)f|(?P<pool>\d+)p")


@dataclass
class NetworkSpec:
    layers: list = field(default_factory=list)
    mode: str = "relu"
    bn: bool = True

    def __str__(self):
        return "-".join(str(layer) for layer in self.layers)

    @property
    def ensemble(self) -> bool:
        return self.mode != "relu"


def parse_spec(text: str, mode: str = "relu", bn: bool = True) -> NetworkSpec:
    if mode not in MODES:
        raise SpecError(f"mode must be one of {MODES}, got {mode!r}")
    if not text or not text.strip():
        raise SpecError("empty network description")
    text = text.strip()
    layers, pos = [], 0
    while True:
        m = _TOKEN.match(text, pos)
        if m is None:
            raise SpecError(f"malformed layer token at position {pos}: {text[pos:]!r}")
        if m.group("width") is not None:
            layer = DenseSpec(int(m.group("width")))
        elif m.group("pool") is not None:
            layer = PoolSpec(int(m.group("pool")))
        else:
            layer = ConvSpec(int(m.group("filters")), int(m.group("ksize")))
        if any(v == 0 for v in vars(layer).values()):
            raise SpecError(f"zero-sized layer at position {pos}")
        layers.append(layer)
        pos = m.end()
        if pos == len(text):
            break
        if text[pos] != "-":
            raise SpecError(f"expected '-' at position {pos}, got {text[pos]!r}")
        pos += 1
    if not isinstance(layers[-1], DenseSpec):
        raise SpecError("the final layer must be a dense classifier")
    return NetworkSpec(layers, mode, bn)


class Network:
    """A sequential stack of layers built from a :class:`NetworkSpec`."""

    def __init__(self, spec: NetworkSpec, sample_shape: tuple[int, ...], n_classes: int,
                 seed: int = 0, eta_delta_init: str = "swapped", ens_eps: float = ENS_EPS,
                 ens_momentum: float = ENS_MOMENTUM, padding: str = "same"):
        self.spec = spec
        self.sample_shape = tuple(int(s) for s in sample_shape)
        self.n_classes = int(n_classes)
        if spec.layers[-1].width != self.n_classes:
            raise SpecError(
                f"final layer has {spec.layers[-1].width} units but the data has {n_classes} classes")
        rng = np.random.default_rng(seed)
        act_set = activations.builtin_set(spec.mode) if spec.ensemble else None

        self.layers: list = []
        self.names: list[str] = []
        shape = self.sample_shape
        last = len(spec.layers) - 1

        def add(kind, layer):
            self.names.append(f"{len(self.layers):02d}.{kind}")
            self.layers.append(layer)

        for i, ls in enumerate(spec.layers):
            if isinstance(ls, DenseSpec):
                if len(shape) != 1:
                    add("flatten", Flatten())
                    shape = (int(np.prod(shape)),)
                add("dense", Dense(shape[0], ls.width, rng))
                shape = (ls.width,)
            elif isinstance(ls, ConvSpec):
                if len(shape) != 3:
                    raise SpecError(
                        f"layer {ls} needs image input (C, H, W) but receives shape {shape}")
                conv = Conv2D(shape[0], ls.filters, ls.size, padding, rng)
                add("conv", conv)
                shape = (ls.filters, *conv.output_hw(shape[1], shape[2]))
            else:
                if len(shape) != 3:
                    raise SpecError(f"layer {ls} needs image input but receives shape {shape}")
                add("pool", MaxPool2D(ls.size))
                shape = (shape[0], shape[1] // ls.size, shape[2] // ls.size)
                if shape[1] == 0 or shape[2] == 0:
                    raise SpecError(f"pooling {ls} collapses the feature map")
                continue
            if i == last:
                continue
            if spec.bn:
                add("bn", BatchNorm(shape[0]))
            if act_set is None:
                add("relu", ReLU())
            else:
                add("ensemble", EnsembleLayer(shape[0], act_set, ens_eps, ens_momentum,
                                              eta_delta_init))

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dout: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            if isinstance(layer, EnsembleLayer):
                dout = layer.backward(dout)[0]
            else:
                dout = layer.backward(dout)
        return dout

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.zero_grad()

    def trainables(self):
        """Yield ``(qualified_name, value, grad, is_alpha)``."""
        for name, layer in zip(self.names, self.layers):
            for pname, value, grad in layer.trainables():
                yield f"{name}/{pname}", value, grad, isinstance(layer, EnsembleLayer) and pname == "alpha"

    def ensemble_layers(self) -> list[EnsembleLayer]:
        return [layer for layer in self.layers if isinstance(layer, EnsembleLayer)]

    def weight_parameter_counts(self) -> list[int]:
        """Parameter counts of the dense/conv layers, in order."""
        return [sum(v.size for v in layer.params.values())
                for layer in self.layers if isinstance(layer, (Dense, Conv2D))]

    def arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for name, layer in zip(self.names, self.layers):
            for pname, value, _ in layer.trainables():
                out[f"{name}/{pname}"] = value
            for sname, value in layer.state().items():
                out[f"{name}/{sname}"] = value
        return out

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, layer in zip(self.names, self.layers):
            for pname, value, _ in layer.trainables():
                key = f"{name}/{pname}"
                if arrays[key].shape != value.shape:
                    raise SpecError(f"{key}: checkpoint shape {arrays[key].shape} != {value.shape}")
                value[...] = arrays[key]
            state = layer.state()
            if state:
                layer.load_state({k: arrays[f"{name}/{k}"] for k in state})
