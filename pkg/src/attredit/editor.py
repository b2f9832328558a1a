"""Inference-time editing: reconstruction, targeted edits, and sweep grids."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image, ImageDraw

from .data import postprocess_image
from .networks import ParameterStore, classify, encode, generate
from .schema import AttributeSchema, AttributeVector, SchemaError


@dataclass(frozen=True)
class EditRequest:
    image: torch.Tensor
    source: AttributeVector | None = None
    edits: tuple[tuple[str, str], ...] = ()

    def validated(self, schema: AttributeSchema) -> "EditRequest":
        seen: set[str] = set()
        for group_name, value_name in self.edits:
            schema.value_index(group_name, value_name)
            if group_name in seen:
                raise SchemaError(f"group {group_name!r} is edited more than once")
            seen.add(group_name)
        if self.source is not None:
            self.source.validate(schema)
        return self


@dataclass(frozen=True)
class SweepGrid:
    images: tuple[torch.Tensor, ...]
    labels: tuple[str, ...]


def _single(store: ParameterStore, x: torch.Tensor) -> torch.Tensor:
    if x.dim() != 3:
        raise ValueError(f"expected a single (3, H, W) image, got shape {tuple(x.shape)}")
    return x.unsqueeze(0).to(store.config.torch_dtype)


def _regenerate(store: ParameterStore, x: torch.Tensor, attrs: AttributeVector) -> torch.Tensor:
    batch = _single(store, x)
    attr_t = torch.tensor([attrs.values], dtype=batch.dtype)
    with torch.inference_mode():
        z = encode(store, batch, train=False)
        out = generate(store, z, attr_t, train=False)
    return out[0].clone()


def predict_source_attributes(
    store: ParameterStore, x: torch.Tensor, schema: AttributeSchema
) -> AttributeVector:
    """Classifier-predicted attributes: 0.5 threshold, then per-group argmax repair."""
    with torch.inference_mode():
        logits = classify(store, _single(store, x))[0]
    values = [0] * schema.n
    for group in schema.groups:
        group_logits = [float(logits[i]) for i in group.indices]
        positive = [i for i, l in zip(group.indices, group_logits) if l > 0.0]
        if len(positive) == 1:
            chosen = positive[0]
        else:
            chosen = group.indices[int(np.argmax(group_logits))]
        values[chosen] = 1
    return AttributeVector(tuple(values)).validate(schema)


def reconstruct(
    store: ParameterStore,
    x: torch.Tensor,
    a: AttributeVector,
    schema: AttributeSchema | None = None,
) -> torch.Tensor:
    """Regenerate the image under its own attributes, in inference mode."""
    if schema is not None:
        a.validate(schema)
    elif len(a.values) != store.config.num_attributes:
        raise SchemaError(
            f"attribute vector has {len(a.values)} entries, model expects "
            f"{store.config.num_attributes}"
        )
    return _regenerate(store, x, a)


def edit_image(
    store: ParameterStore, request: EditRequest, schema: AttributeSchema
) -> tuple[torch.Tensor, AttributeVector]:
    """Apply the requested group edits and regenerate; returns (image, resolved b)."""
    request.validated(schema)
    source = request.source
    if source is None:
        source = predict_source_attributes(store, request.image, schema)
    source.validate(schema)
    b = source
    for group_name, value_name in request.edits:
        b = b.with_edit(schema, group_name, value_name)
    b.validate(schema)
    return _regenerate(store, request.image, b), b


def attribute_sweep(
    store: ParameterStore, x: torch.Tensor, a: AttributeVector, schema: AttributeSchema
) -> SweepGrid:
    """Original, reconstruction, then one single-value edit per schema value.

    Column order follows the schema's value order exactly; non-edited
    groups stay at the source attributes.
    """
    a.validate(schema)
    images: list[torch.Tensor] = [x.detach().clone(), reconstruct(store, x, a, schema)]
    labels: list[str] = ["original", "reconstruction"]
    for idx in range(schema.n):
        group = schema.group_of_index(idx)
        value_name = schema.names[idx]
        edited, _ = edit_image(
            store,
            EditRequest(image=x, source=a, edits=((group.name, value_name),)),
            schema,
        )
        images.append(edited)
        labels.append(value_name)
    return SweepGrid(images=tuple(images), labels=tuple(labels))


def render_sweep_strip(grid: SweepGrid, label_height: int = 14) -> Image.Image:
    """One horizontal strip image with a label bar under each column."""
    cells = [Image.fromarray(postprocess_image(t)) for t in grid.images]
    width = max(c.width for c in cells)
    height = max(c.height for c in cells)
    strip = Image.new("RGB", (width * len(cells), height + label_height), "white")
    draw = ImageDraw.Draw(strip)
    for col, (cell, label) in enumerate(zip(cells, grid.labels)):
        strip.paste(cell, (col * width, 0))
        draw.text((col * width + 2, height + 1), label[:14], fill="black")
    return strip


def attribute_match_rate(evaluator, items, schema: AttributeSchema) -> float:
    """Fraction of edits the evaluator recognizes in every edited group.

    ``evaluator`` maps a (m, 3, H, W) batch to (m, n) logits. ``items``
    is a non-empty list of (image, target_vector, edited_group_names);
    a hit requires the evaluator's per-group argmax to equal the target
    one-hot in each edited group.
    """
    if not items:
        raise ValueError("empty evaluation set")
    hits = 0
    for image, target, edited_groups in items:
        with torch.inference_mode():
            logits = evaluator(image.unsqueeze(0))[0]
        ok = True
        for group_name in edited_groups:
            group = schema.group_by_name(group_name)
            group_logits = [float(logits[i]) for i in group.indices]
            predicted = group.indices[int(np.argmax(group_logits))]
            target_idx = next(i for i in group.indices if target.values[i] == 1)
            if predicted != target_idx:
                ok = False
                break
        hits += int(ok)
    return hits / len(items)


def reconstruction_pixel_error(store: ParameterStore, pairs, schema: AttributeSchema) -> float:
    """Mean absolute pixel error of reconstructions over (image, attrs) pairs."""
    if not pairs:
        raise ValueError("empty evaluation set")
    total = 0.0
    for image, attrs in pairs:
        recon = reconstruct(store, image, attrs, schema)
        total += float((recon - image.to(recon.dtype)).abs().mean())
    return total / len(pairs)


def save_image_tensor(tensor: torch.Tensor, path: str | Path) -> None:
    Image.fromarray(postprocess_image(tensor)).save(path)
