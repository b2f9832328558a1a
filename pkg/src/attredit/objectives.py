"""Training losses: attribute classification, adversarial, and reconstruction.

All losses are batch means and consume network outputs (logits or
scores), never images, so each one is checkable against plain scalar
arithmetic. Probabilities are clamped to [EPS, 1 - EPS] before any log,
which bounds every loss by |ln EPS| even at saturated scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

EPS = 1e-7

G_LOSS_FORMS = ("saturating", "non_saturating")
FEATURE_EXTRACTORS = ("identity", "random_conv")


@dataclass(frozen=True)
class LossReport:
    adv_d: float
    adv_g: float
    cls_real: float
    cls_edit: float
    rec: float

    def as_dict(self) -> dict[str, float]:
        return {
            "adv_d": self.adv_d,
            "adv_g": self.adv_g,
            "cls_real": self.cls_real,
            "cls_edit": self.cls_edit,
            "rec": self.rec,
        }


def _clamp_prob(p: torch.Tensor) -> torch.Tensor:
    return p.clamp(EPS, 1.0 - EPS)


def classification_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Mean over the batch of the summed per-attribute binary cross-entropy."""
    if logits.dim() != 2:
        raise ValueError(f"logits must be (m, n), got shape {tuple(logits.shape)}")
    if logits.shape != targets.shape:
        raise ValueError(f"logits shape {tuple(logits.shape)} != targets shape {tuple(targets.shape)}")
    if logits.shape[0] == 0:
        raise ValueError("empty batch")
    t = targets.to(logits.dtype)
    if not torch.all((t == 0) | (t == 1)):
        raise ValueError("targets must be binary")
    p = _clamp_prob(torch.sigmoid(logits))
    bce = -(t * torch.log(p) + (1.0 - t) * torch.log(1.0 - p))
    # Sum each row in value-sorted order: the result is then exactly
    # invariant under attribute-column permutations.
    return bce.sort(dim=1).values.sum(dim=1).mean()


def adversarial_d_loss(scores_real: torch.Tensor, scores_fake: torch.Tensor) -> torch.Tensor:
    """-(1/m) sum of log(real score) + log(1 - fake score)."""
    if scores_real.numel() == 0 or scores_fake.numel() == 0:
        raise ValueError("empty batch")
    sr = _clamp_prob(scores_real)
    sf = _clamp_prob(scores_fake)
    return -(torch.log(sr) + torch.log(1.0 - sf)).mean()


def adversarial_g_loss(scores_fake: torch.Tensor, form: str = "saturating") -> torch.Tensor:
    """Generator adversarial loss over fake-sample scores.

    The saturating form is the mean of log(1 - score), minimized by the
    generator; the non-saturating alternative is the mean of -log(score).
    """
    if scores_fake.numel() == 0:
        raise ValueError("empty batch")
    sf = _clamp_prob(scores_fake)
    if form == "saturating":
        return torch.log(1.0 - sf).mean()
    if form == "non_saturating":
        return -torch.log(sf).mean()
    raise ValueError(f"unknown generator loss form {form!r}")


def reconstruction_loss(phi, x_a: torch.Tensor, x_hat: torch.Tensor) -> torch.Tensor:
    """Mean squared feature difference, normalized per feature element."""
    if x_a.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {tuple(x_a.shape)} vs {tuple(x_hat.shape)}")
    fa = phi(x_a)
    fb = phi(x_hat)
    diff = fa - fb
    return diff.pow(2).flatten(1).mean(dim=1).mean()


class IdentityFeatures:
    """Pixel-space features: the default, self-contained reconstruction target."""

    name = "identity"

    def __call__(self, x: torch.Tensor) -> torch.Tensor:
        return x


class RandomConvFeatures:
    """Frozen random convolution stack as a perceptual stand-in.

    Weights are drawn once from the seed and never trained; gradients
    still flow through to the input.
    """

    name = "random_conv"

    def __init__(self, seed: int = 0, channels: tuple[int, ...] = (8, 16), slope: float = 0.2,
                 dtype: torch.dtype = torch.float32):
        gen = torch.Generator().manual_seed(seed)
        layers: list[nn.Module] = []
        c_in = 3
        for c_out in channels:
            conv = nn.Conv2d(c_in, c_out, 3, stride=2, padding=1, bias=False)
            bound = (1.0 / (c_in * 9)) ** 0.5
            with torch.no_grad():
                conv.weight.uniform_(-bound, bound, generator=gen)
            layers.append(conv)
            layers.append(nn.LeakyReLU(slope))
            c_in = c_out
        self.net = nn.Sequential(*layers).to(dtype)
        self.net.eval()
        for p in self.net.parameters():
            p.requires_grad_(False)

    def __call__(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


def make_feature_extractor(kind: str, seed: int = 0, dtype: torch.dtype = torch.float32):
    if kind == "identity":
        return IdentityFeatures()
    if kind == "random_conv":
        return RandomConvFeatures(seed=seed, dtype=dtype)
    raise ValueError(f"unknown feature extractor {kind!r}")
