"""Independent scalar-loop oracles and finite-difference helpers.

The value oracles use only Python floats and ``math``, so they share no
code with the implementations they check.
"""

import math

import torch

EPS = 1e-7


def clamp01(p: float) -> float:
    return min(max(p, EPS), 1.0 - EPS)


def bce_of_logit(logit: float, target: float) -> float:
    p = clamp01(1.0 / (1.0 + math.exp(-logit)))
    return -(target * math.log(p) + (1.0 - target) * math.log(1.0 - p))


def classification_oracle(logit_rows, target_rows) -> float:
    per_sample = []
    for logits, targets in zip(logit_rows, target_rows):
        per_sample.append(sum(bce_of_logit(l, t) for l, t in zip(logits, targets)))
    return sum(per_sample) / len(per_sample)


def adv_d_oracle(scores_real, scores_fake) -> float:
    total = 0.0
    for r, f in zip(scores_real, scores_fake):
        total += math.log(clamp01(r)) + math.log(1.0 - clamp01(f))
    return -total / len(scores_real)


def adv_g_oracle(scores_fake, form: str) -> float:
    if form == "saturating":
        return sum(math.log(1.0 - clamp01(f)) for f in scores_fake) / len(scores_fake)
    if form == "non_saturating":
        return sum(-math.log(clamp01(f)) for f in scores_fake) / len(scores_fake)
    raise ValueError(form)


def reconstruction_oracle(rows_a, rows_b) -> float:
    per_sample = []
    for ra, rb in zip(rows_a, rows_b):
        per_sample.append(sum((a - b) ** 2 for a, b in zip(ra, rb)) / len(ra))
    return sum(per_sample) / len(per_sample)


def leaky(v: float, slope: float) -> float:
    return v if v > 0 else slope * v


def naive_conv2d(x, weight, bias, stride: int, padding: int):
    """Direct 6-loop convolution on nested Python lists; tiny inputs only."""
    c_in = len(x)
    h, w = len(x[0]), len(x[0][0])
    c_out = len(weight)
    kh, kw = len(weight[0][0]), len(weight[0][0][0])
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    out = [[[0.0] * ow for _ in range(oh)] for _ in range(c_out)]
    for co in range(c_out):
        for oy in range(oh):
            for ox in range(ow):
                acc = bias[co] if bias is not None else 0.0
                for ci in range(c_in):
                    for ky in range(kh):
                        for kx in range(kw):
                            iy = oy * stride + ky - padding
                            ix = ox * stride + kx - padding
                            if 0 <= iy < h and 0 <= ix < w:
                                acc += x[ci][iy][ix] * weight[co][ci][ky][kx]
                out[co][oy][ox] = acc
    return out


def rel_err(a: float, b: float, floor: float = 1e-8) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def fd_gradient(loss_fn, tensor: torch.Tensor, flat_index: int, step: float = 1e-5) -> float:
    """Central finite difference of a re-evaluable scalar wrt one tensor entry."""
    flat = tensor.detach().view(-1)
    orig = float(flat[flat_index])
    with torch.no_grad():
        flat[flat_index] = orig + step
    plus = float(loss_fn())
    with torch.no_grad():
        flat[flat_index] = orig - step
    minus = float(loss_fn())
    with torch.no_grad():
        flat[flat_index] = orig
    return (plus - minus) / (2.0 * step)
