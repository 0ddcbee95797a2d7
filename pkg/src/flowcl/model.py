"""Encoder and head construction over the numgrad ops.

An encoder is a declarative stack of Conv/MaxPool specs. Every Conv means:
kernel width 2, stride 1, bias, batch norm, ReLU. The encoded flow record
enters as a single-channel 1D signal, and a global max pool after the last
layer collapses whatever spatial width remains, so the hidden vector h is
always exactly hidden_dim wide regardless of the input schema's width. The
projection g and the classification heads are single affine maps.

Two presets mirror the reference architecture pair: "smaller-pack"
(hidden 512, context 256) for the 42-feature flow schema and "larger-pack"
(hidden 256, context 128) for the wider one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import numgrad as ng
from .errors import CheckpointError, ConfigError, InvalidShapeError
from .numgrad import Tensor
from .seeding import substream

__all__ = [
    "ClassificationHead",
    "Conv",
    "EncoderBlock",
    "EncoderConfig",
    "MaxPool",
    "PRESETS",
    "ProjectionHead",
    "build_classification_head",
    "build_encoder",
    "config_from_dict",
    "config_to_dict",
    "count_parameters",
    "encode",
    "load_encoder",
    "load_head",
    "preset_config",
    "project",
    "save_encoder",
    "save_head",
]

KERNEL_WIDTH = 2


@dataclass(frozen=True)
class Conv:
    channels: int

    def __post_init__(self):
        if not isinstance(self.channels, int) or self.channels < 1:
            raise ConfigError(f"conv channels must be a positive int, got {self.channels!r}")

    @property
    def display(self) -> str:
        return f"Conv{self.channels}"


@dataclass(frozen=True)
class MaxPool:
    window: int

    def __post_init__(self):
        if not isinstance(self.window, int) or self.window < 2:
            raise ConfigError(f"pool window must be an int >= 2, got {self.window!r}")

    @property
    def display(self) -> str:
        return f"Pool{self.window}"


PRESETS: dict[str, tuple[tuple, int]] = {
    "smaller-pack": (
        (Conv(32), Conv(64), Conv(128), MaxPool(3), Conv(256), MaxPool(2), Conv(512), MaxPool(4)),
        256,
    ),
    "larger-pack": (
        (Conv(8), Conv(16), Conv(32), Conv(64), MaxPool(3), Conv(128), MaxPool(4), Conv(256)),
        128,
    ),
}


@dataclass(frozen=True)
class EncoderConfig:
    layers: tuple
    input_width: int
    context_dim: int
    preset: str = "custom"

    def __post_init__(self):
        if not self.layers or not all(isinstance(s, (Conv, MaxPool)) for s in self.layers):
            raise ConfigError("layers must be a non-empty sequence of Conv/MaxPool specs")
        if not any(isinstance(s, Conv) for s in self.layers):
            raise ConfigError("an encoder needs at least one conv layer")
        if not isinstance(self.input_width, int) or self.input_width < 1:
            raise ConfigError(f"input_width must be a positive int, got {self.input_width!r}")
        if not isinstance(self.context_dim, int) or self.context_dim < 1:
            raise ConfigError(f"context_dim must be a positive int, got {self.context_dim!r}")
        self.validate_width()

    @property
    def hidden_dim(self) -> int:
        return [s for s in self.layers if isinstance(s, Conv)][-1].channels

    def validate_width(self) -> None:
        """Walk the shape algebra; name the first layer the width cannot feed."""
        w = self.input_width
        for spec in self.layers:
            if isinstance(spec, Conv):
                if w < KERNEL_WIDTH:
                    raise InvalidShapeError(
                        f"input_width {self.input_width} is too small: "
                        f"{spec.display} needs width >= {KERNEL_WIDTH}, has {w}")
                w -= KERNEL_WIDTH - 1
            else:
                if w < spec.window:
                    raise InvalidShapeError(
                        f"input_width {self.input_width} is too small: "
                        f"{spec.display} needs width >= {spec.window}, has {w}")
                w //= spec.window


def preset_config(name: str, input_width: int) -> EncoderConfig:
    try:
        layers, context_dim = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown encoder preset {name!r}; "
                          f"choose from {sorted(PRESETS)}") from None
    return EncoderConfig(layers, input_width, context_dim, preset=name)


def config_to_dict(config: EncoderConfig) -> dict:
    layers = [["conv", s.channels] if isinstance(s, Conv) else ["pool", s.window]
              for s in config.layers]
    return {"layers": layers, "input_width": config.input_width,
            "context_dim": config.context_dim, "preset": config.preset}


def config_from_dict(doc: dict) -> EncoderConfig:
    expected = {"layers", "input_width", "context_dim", "preset"}
    if set(doc) != expected:
        raise ConfigError(f"bad encoder config keys: {sorted(set(doc) ^ expected)}")
    specs = []
    for item in doc["layers"]:
        kind, arg = item
        if kind == "conv":
            specs.append(Conv(int(arg)))
        elif kind == "pool":
            specs.append(MaxPool(int(arg)))
        else:
            raise ConfigError(f"unknown layer kind {kind!r}")
    return EncoderConfig(tuple(specs), int(doc["input_width"]),
                         int(doc["context_dim"]), str(doc["preset"]))


@dataclass
class _ConvLayer:
    kernel: Tensor
    bias: Tensor
    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray


@dataclass
class EncoderBlock:
    """e(.): the conv/BN/ReLU/pool stack plus the global pool."""

    config: EncoderConfig
    convs: list = field(default_factory=list)

    @property
    def hidden_dim(self) -> int:
        return self.config.hidden_dim

    def parameters(self) -> Iterator[Tensor]:
        for layer in self.convs:
            yield layer.kernel
            yield layer.bias
            yield layer.gamma
            yield layer.beta


@dataclass
class ProjectionHead:
    """g(.): one affine map hidden_dim -> context_dim, no activation."""

    weight: Tensor
    bias: Tensor

    @property
    def context_dim(self) -> int:
        return self.weight.data.shape[0]

    def parameters(self) -> Iterator[Tensor]:
        yield self.weight
        yield self.bias


@dataclass
class ClassificationHead:
    """Affine map to K class logits; softmax lives inside the loss."""

    weight: Tensor
    bias: Tensor

    @property
    def n_classes(self) -> int:
        return self.weight.data.shape[0]

    @property
    def input_dim(self) -> int:
        return self.weight.data.shape[1]

    def parameters(self) -> Iterator[Tensor]:
        yield self.weight
        yield self.bias

    def logits(self, features) -> Tensor:
        return ng.affine(features, self.weight, self.bias)


def _kaiming_uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _bias_uniform(rng: np.random.Generator, size: int, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=size)


def _affine_params(rng: np.random.Generator, in_dim: int, out_dim: int) -> tuple[Tensor, Tensor]:
    w = Tensor(_kaiming_uniform(rng, (out_dim, in_dim), in_dim), requires_grad=True)
    b = Tensor(_bias_uniform(rng, out_dim, in_dim), requires_grad=True)
    return w, b


def build_encoder(config: EncoderConfig, seed: int) -> tuple[EncoderBlock, ProjectionHead]:
    """Instantiate e and g with Kaiming-uniform weights, BN gamma=1 beta=0.

    All draws come from the "encoder-init" substream of the seed, in layer
    order, so the same (config, seed) always yields the same parameters.
    """
    rng = substream(seed, "encoder-init")
    block = EncoderBlock(config)
    in_channels = 1
    for spec in config.layers:
        if not isinstance(spec, Conv):
            continue
        c = spec.channels
        fan_in = in_channels * KERNEL_WIDTH
        kernel = Tensor(_kaiming_uniform(rng, (c, in_channels, KERNEL_WIDTH), fan_in),
                        requires_grad=True)
        bias = Tensor(_bias_uniform(rng, c, fan_in), requires_grad=True)
        block.convs.append(_ConvLayer(
            kernel=kernel, bias=bias,
            gamma=Tensor(np.ones(c), requires_grad=True),
            beta=Tensor(np.zeros(c), requires_grad=True),
            running_mean=np.zeros(c), running_var=np.ones(c)))
        in_channels = c
    proj_w, proj_b = _affine_params(rng, config.hidden_dim, config.context_dim)
    return block, ProjectionHead(proj_w, proj_b)


def build_classification_head(input_dim: int, n_classes: int, seed: int) -> ClassificationHead:
    if n_classes < 2:
        raise ConfigError(f"a classification head needs >= 2 classes, got {n_classes}")
    rng = substream(seed, "head-init")
    w, b = _affine_params(rng, input_dim, n_classes)
    return ClassificationHead(w, b)


def encode(block: EncoderBlock, x, training: bool = False) -> Tensor:
    """Forward a [batch, width] batch through e to h of shape [batch, hidden].

    Eval mode reads the frozen BN running stats and mutates nothing; train
    mode normalizes by batch statistics and updates the running stats.
    """
    xt = ng.as_tensor(x)
    if xt.data.ndim != 2:
        raise InvalidShapeError(f"expected a [batch, width] input, got shape {xt.data.shape}")
    if xt.data.shape[1] != block.config.input_width:
        raise InvalidShapeError(
            f"input width {xt.data.shape[1]} does not match the encoder's "
            f"configured width {block.config.input_width}")
    out = ng.record_op(Tensor(xt.data.reshape(xt.data.shape[0], 1, xt.data.shape[1])),
                       [xt], lambda g: (g.reshape(xt.data.shape),))
    conv_iter = iter(block.convs)
    for spec in block.config.layers:
        if isinstance(spec, Conv):
            layer = next(conv_iter)
            out = ng.conv1d(out, layer.kernel, layer.bias)
            out = ng.batchnorm1d(out, layer.gamma, layer.beta,
                                 layer.running_mean, layer.running_var, training=training)
            out = ng.relu(out)
        else:
            out = ng.maxpool1d(out, spec.window)
    return ng.global_maxpool1d(out)


def project(head: ProjectionHead, h) -> Tensor:
    return ng.affine(h, head.weight, head.bias)


def count_parameters(*blocks) -> int:
    return sum(int(t.data.size) for block in blocks for t in block.parameters())


def _encoder_arrays(block: EncoderBlock, proj: ProjectionHead) -> dict[str, np.ndarray]:
    arrays: dict[str, np.ndarray] = {}
    for i, layer in enumerate(block.convs):
        arrays[f"kernel{i}"] = layer.kernel.data
        arrays[f"bias{i}"] = layer.bias.data
        arrays[f"gamma{i}"] = layer.gamma.data
        arrays[f"beta{i}"] = layer.beta.data
        arrays[f"rmean{i}"] = layer.running_mean
        arrays[f"rvar{i}"] = layer.running_var
    arrays["proj_w"] = proj.weight.data
    arrays["proj_b"] = proj.bias.data
    return arrays


def save_encoder(path: str, block: EncoderBlock, proj: ProjectionHead,
                 extra_meta: dict | None = None) -> None:
    meta = {"kind": "encoder", "config": config_to_dict(block.config)}
    if extra_meta:
        meta.update(extra_meta)
    ng.save_arrays(path, _encoder_arrays(block, proj), meta=meta)


def load_encoder(path: str) -> tuple[EncoderBlock, ProjectionHead, dict]:
    arrays, meta = ng.load_arrays(path)
    if meta.get("kind") != "encoder":
        raise CheckpointError(f"{path} is not an encoder checkpoint "
                              f"(kind={meta.get('kind')!r})")
    config = config_from_dict(meta["config"])
    block = EncoderBlock(config)
    n_convs = sum(1 for s in config.layers if isinstance(s, Conv))
    try:
        for i in range(n_convs):
            block.convs.append(_ConvLayer(
                kernel=Tensor(arrays[f"kernel{i}"], requires_grad=True),
                bias=Tensor(arrays[f"bias{i}"], requires_grad=True),
                gamma=Tensor(arrays[f"gamma{i}"], requires_grad=True),
                beta=Tensor(arrays[f"beta{i}"], requires_grad=True),
                running_mean=np.array(arrays[f"rmean{i}"], copy=True),
                running_var=np.array(arrays[f"rvar{i}"], copy=True)))
        proj = ProjectionHead(Tensor(arrays["proj_w"], requires_grad=True),
                              Tensor(arrays["proj_b"], requires_grad=True))
    except KeyError as missing:
        raise CheckpointError(f"encoder checkpoint {path} lacks array {missing}") from None
    return block, proj, meta


def save_head(path: str, head: ClassificationHead, extra_meta: dict | None = None) -> None:
    meta = {"kind": "head"}
    if extra_meta:
        meta.update(extra_meta)
    ng.save_arrays(path, {"weight": head.weight.data, "bias": head.bias.data}, meta=meta)


def load_head(path: str) -> tuple[ClassificationHead, dict]:
    arrays, meta = ng.load_arrays(path)
    if meta.get("kind") != "head":
        raise CheckpointError(f"{path} is not a classification-head checkpoint "
                              f"(kind={meta.get('kind')!r})")
    try:
        head = ClassificationHead(Tensor(arrays["weight"], requires_grad=True),
                                  Tensor(arrays["bias"], requires_grad=True))
    except KeyError as missing:
        raise CheckpointError(f"head checkpoint {path} lacks array {missing}") from None
    return head, meta
