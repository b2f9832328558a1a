"""Encoder, generator, and the shared discriminator/classifier trunk.

The four networks are held in a ParameterStore split into five named
partitions: encoder, generator, trunk, d_head, c_head. The discriminator
is trunk + d_head; the classifier is trunk + c_head, so both heads
consume the same trunk computation. Training applies updates partition
by partition, so the partitions are the unit of gradient scoping.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import torch
from torch import nn


class ShapeError(ValueError):
    """An input tensor does not match the configured shapes."""


PARTITIONS = ("encoder", "generator", "trunk", "d_head", "c_head")

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass(frozen=True)
class NetworkConfig:
    num_attributes: int
    image_size: int = 64
    base_channels: int = 16
    num_downsamples: int = 4
    latent_channels: int | None = None
    leaky_slope: float = 0.2
    use_batchnorm: bool = True
    dtype: str = "float32"

    def __post_init__(self):
        if self.num_attributes < 1:
            raise ValueError("num_attributes must be >= 1")
        if self.image_size < 1 or self.base_channels < 1 or self.num_downsamples < 1:
            raise ValueError("image_size, base_channels, num_downsamples must be >= 1")
        if self.image_size % (2 ** self.num_downsamples) != 0:
            raise ValueError(
                f"image_size {self.image_size} not divisible by 2^{self.num_downsamples}"
            )
        if self.dtype not in _DTYPES:
            raise ValueError(f"dtype must be one of {sorted(_DTYPES)}")

    @property
    def torch_dtype(self) -> torch.dtype:
        return _DTYPES[self.dtype]

    @property
    def resolved_latent_channels(self) -> int:
        if self.latent_channels is not None:
            return self.latent_channels
        return self.base_channels * 2 ** (self.num_downsamples - 1)

    @property
    def latent_size(self) -> int:
        return self.image_size // (2 ** self.num_downsamples)


def _down_block(c_in: int, c_out: int, slope: float, norm: bool) -> list[nn.Module]:
    layers: list[nn.Module] = [nn.Conv2d(c_in, c_out, 4, stride=2, padding=1, bias=not norm)]
    if norm:
        layers.append(nn.BatchNorm2d(c_out))
    layers.append(nn.LeakyReLU(slope))
    return layers


def build_encoder(config: NetworkConfig) -> nn.Sequential:
    layers: list[nn.Module] = []
    c_in = 3
    for i in range(config.num_downsamples):
        last = i == config.num_downsamples - 1
        c_out = config.resolved_latent_channels if last else config.base_channels * 2 ** i
        layers.extend(_down_block(c_in, c_out, config.leaky_slope, config.use_batchnorm))
        c_in = c_out
    return nn.Sequential(*layers)


def build_generator(config: NetworkConfig) -> nn.Sequential:
    layers: list[nn.Module] = []
    c_in = config.resolved_latent_channels + config.num_attributes
    hidden = [
        config.base_channels * 2 ** i
        for i in reversed(range(config.num_downsamples - 1))
    ]
    for c_out in hidden:
        layers.append(nn.ConvTranspose2d(c_in, c_out, 4, stride=2, padding=1,
                                         bias=not config.use_batchnorm))
        if config.use_batchnorm:
            layers.append(nn.BatchNorm2d(c_out))
        layers.append(nn.ReLU())
        c_in = c_out
    layers.append(nn.ConvTranspose2d(c_in, 3, 4, stride=2, padding=1, bias=True))
    layers.append(nn.Tanh())
    return nn.Sequential(*layers)


def build_trunk(config: NetworkConfig) -> nn.Sequential:
    # No normalization here: the log-loss discriminator is more stable without it.
    layers: list[nn.Module] = []
    c_in = 3
    for i in range(config.num_downsamples):
        c_out = config.base_channels * 2 ** i
        layers.append(nn.Conv2d(c_in, c_out, 4, stride=2, padding=1, bias=True))
        layers.append(nn.LeakyReLU(config.leaky_slope))
        c_in = c_out
    return nn.Sequential(*layers)


def trunk_flat_dim(config: NetworkConfig) -> int:
    c = config.base_channels * 2 ** (config.num_downsamples - 1)
    return c * config.latent_size ** 2


def build_d_head(config: NetworkConfig) -> nn.Sequential:
    return nn.Sequential(nn.Flatten(), nn.Linear(trunk_flat_dim(config), 1))


def build_c_head(config: NetworkConfig) -> nn.Sequential:
    return nn.Sequential(nn.Flatten(), nn.Linear(trunk_flat_dim(config), config.num_attributes))


@dataclass
class ParameterStore:
    config: NetworkConfig
    encoder: nn.Module
    generator: nn.Module
    trunk: nn.Module
    d_head: nn.Module
    c_head: nn.Module

    def partitions(self) -> dict[str, nn.Module]:
        return {name: getattr(self, name) for name in PARTITIONS}

    def named_parameters(self, partition: str | None = None) -> list[tuple[str, nn.Parameter]]:
        parts = [partition] if partition is not None else list(PARTITIONS)
        out = []
        for part in parts:
            module = getattr(self, part)
            out.extend((f"{part}.{name}", p) for name, p in module.named_parameters())
        return out

    def named_tensors(self) -> list[tuple[str, torch.Tensor]]:
        """All state tensors (parameters and buffers), partition-prefixed."""
        out = []
        for part in PARTITIONS:
            module = getattr(self, part)
            out.extend((f"{part}.{name}", p) for name, p in module.named_parameters())
            out.extend((f"{part}.{name}", b) for name, b in module.named_buffers())
        return out

    def zero_grads(self) -> None:
        for _, p in self.named_parameters():
            p.grad = None

    def set_train(self, train: bool) -> None:
        for module in self.partitions().values():
            module.train(train)

    def partition_snapshot(self, partition: str) -> dict[str, torch.Tensor]:
        return {name: p.detach().clone() for name, p in self.named_parameters(partition)}

    def clone(self) -> "ParameterStore":
        return ParameterStore(
            config=self.config,
            **{name: copy.deepcopy(module) for name, module in self.partitions().items()},
        )


def _layer_fan_in(module: nn.Module) -> int:
    if isinstance(module, nn.Conv2d):
        return module.in_channels * module.kernel_size[0] * module.kernel_size[1]
    if isinstance(module, nn.ConvTranspose2d):
        return module.in_channels * module.kernel_size[0] * module.kernel_size[1]
    if isinstance(module, nn.Linear):
        return module.in_features
    raise TypeError(f"no fan-in rule for {type(module).__name__}")


def init_params(config: NetworkConfig, seed: int) -> ParameterStore:
    """Build all five partitions with seeded fan-in-scaled uniform weights.

    Weights are U(-b, b) with b = sqrt(1/fan_in); biases start at zero;
    batch-norm scales start at one. The same seed reproduces the store
    bitwise.
    """
    store = ParameterStore(
        config=config,
        encoder=build_encoder(config),
        generator=build_generator(config),
        trunk=build_trunk(config),
        d_head=build_d_head(config),
        c_head=build_c_head(config),
    )
    dtype = config.torch_dtype
    gen = torch.Generator().manual_seed(seed)
    for part in PARTITIONS:
        module = getattr(store, part)
        module.to(dtype)
        for layer in module.modules():
            if isinstance(layer, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
                bound = (1.0 / _layer_fan_in(layer)) ** 0.5
                with torch.no_grad():
                    layer.weight.uniform_(-bound, bound, generator=gen)
                    if layer.bias is not None:
                        layer.bias.zero_()
            elif isinstance(layer, nn.BatchNorm2d):
                with torch.no_grad():
                    layer.weight.fill_(1.0)
                    layer.bias.zero_()
                layer.reset_running_stats()
    return store


def _check_images(config: NetworkConfig, x: torch.Tensor) -> None:
    if x.dim() != 4 or x.shape[1] != 3 or x.shape[2] != config.image_size or x.shape[3] != config.image_size:
        raise ShapeError(
            f"expected images of shape (m, 3, {config.image_size}, {config.image_size}), "
            f"got {tuple(x.shape)}"
        )


def encode(store: ParameterStore, x: torch.Tensor, train: bool = False) -> torch.Tensor:
    """E(x): image batch -> latent feature map (m, c_z, h_z, w_z)."""
    _check_images(store.config, x)
    store.encoder.train(train)
    return store.encoder(x)


def broadcast_attributes(attrs: torch.Tensor, height: int, width: int) -> torch.Tensor:
    m, n = attrs.shape
    return attrs.view(m, n, 1, 1).expand(m, n, height, width)


def generate(store: ParameterStore, z: torch.Tensor, attrs: torch.Tensor, train: bool = False) -> torch.Tensor:
    """G(z, attrs): latent + attribute planes -> image batch in (-1, 1)."""
    config = store.config
    if z.dim() != 4 or z.shape[1] != config.resolved_latent_channels:
        raise ShapeError(
            f"expected latent of shape (m, {config.resolved_latent_channels}, "
            f"{config.latent_size}, {config.latent_size}), got {tuple(z.shape)}"
        )
    if attrs.dim() != 2 or attrs.shape[1] != config.num_attributes:
        raise ShapeError(
            f"expected attributes of shape (m, {config.num_attributes}), got {tuple(attrs.shape)}"
        )
    if attrs.shape[0] != z.shape[0]:
        raise ShapeError(f"latent batch {z.shape[0]} != attribute batch {attrs.shape[0]}")
    store.generator.train(train)
    planes = broadcast_attributes(attrs.to(z.dtype), z.shape[2], z.shape[3])
    return store.generator(torch.cat([z, planes], dim=1))


def trunk_features(store: ParameterStore, x: torch.Tensor) -> torch.Tensor:
    """Shared D/C trunk activations for an image batch."""
    _check_images(store.config, x)
    return store.trunk(x)


def discriminate(store: ParameterStore, x: torch.Tensor | None = None,
                 features: torch.Tensor | None = None) -> torch.Tensor:
    """D(x): per-sample realness scores in the open interval (0, 1).

    Pass ``features`` to reuse an existing trunk computation (the trunk
    has no cross-sample coupling, so batching or splitting is exact).
    """
    if features is None:
        features = trunk_features(store, x)
    return torch.sigmoid(store.d_head(features)).squeeze(-1)


def classify(store: ParameterStore, x: torch.Tensor | None = None,
             features: torch.Tensor | None = None) -> torch.Tensor:
    """C(x): per-sample raw attribute logits, shape (m, n)."""
    if features is None:
        features = trunk_features(store, x)
    return store.c_head(features)
