"""First-order optimizers over named parameter partitions.

State is kept per partition as plain named tensors so checkpoints can
serialize it alongside the model weights. Supported update rules: adam
(default) and plain sgd.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch

from .networks import ParameterStore

OPTIMIZERS = ("adam", "sgd")


class NonFiniteGradientError(RuntimeError):
    """A gradient inside the update scope is NaN or infinite."""


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


@dataclass
class PartitionOptState:
    """Adam moments (unused by sgd) and an application counter for one partition."""

    step: int = 0
    exp_avg: dict[str, torch.Tensor] = field(default_factory=dict)
    exp_avg_sq: dict[str, torch.Tensor] = field(default_factory=dict)


def create_opt_states(store: ParameterStore) -> dict[str, PartitionOptState]:
    return {part: PartitionOptState() for part in store.partitions()}


def partition_grad_norm(store: ParameterStore, partition: str) -> float:
    total = 0.0
    for _, p in store.named_parameters(partition):
        if p.grad is not None:
            total += float(p.grad.detach().pow(2).sum())
    return math.sqrt(total)


def apply_partition_update(
    store: ParameterStore,
    partition: str,
    state: PartitionOptState,
    config: OptimizerConfig,
) -> None:
    """Apply one optimizer application to every parameter in the partition.

    Parameters without gradients are left untouched. Raises
    NonFiniteGradientError (before touching anything) if any gradient in
    the partition is non-finite.
    """
    named = [(name, p) for name, p in store.named_parameters(partition) if p.grad is not None]
    for name, p in named:
        if not torch.isfinite(p.grad).all():
            raise NonFiniteGradientError(f"non-finite gradient in {name}")
    if not named:
        return
    state.step += 1
    with torch.no_grad():
        if config.kind == "sgd":
            for _, p in named:
                p.add_(p.grad, alpha=-config.learning_rate)
            return
        bc1 = 1.0 - config.beta1 ** state.step
        bc2 = 1.0 - config.beta2 ** state.step
        for name, p in named:
            if name not in state.exp_avg:
                state.exp_avg[name] = torch.zeros_like(p)
                state.exp_avg_sq[name] = torch.zeros_like(p)
            m = state.exp_avg[name]
            v = state.exp_avg_sq[name]
            m.mul_(config.beta1).add_(p.grad, alpha=1.0 - config.beta1)
            v.mul_(config.beta2).addcmul_(p.grad, p.grad, value=1.0 - config.beta2)
            denom = (v / bc2).sqrt_().add_(config.eps)
            p.addcdiv_(m, denom, value=-config.learning_rate / bc1)
