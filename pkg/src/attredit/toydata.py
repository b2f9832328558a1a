"""Procedural toy garments: centered shirts with color and sleeve-length attributes.

The generated set is deliberately easy: flat-shaded shirts on a light
background, saturated colors, and strongly different long/short sleeve
silhouettes, so a desk-scale run can learn both reconstruction and
attribute edits.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .data import DatasetExample, serialize_manifest
from .schema import AttributeSchema, AttributeVector

TOY_GROUPS = {
    "color": ["red", "green", "blue"],
    "sleeve": ["long", "short"],
}

_BASE_COLORS = {
    "red": (205, 40, 40),
    "green": (40, 185, 40),
    "blue": (45, 70, 210),
}


def toy_schema() -> AttributeSchema:
    return AttributeSchema.from_group_values(TOY_GROUPS)


def draw_toy_garment(
    rng: np.random.Generator, color: str, sleeve: str, size: int = 64
) -> np.ndarray:
    """Render one (size, size, 3) uint8 garment image with jittered geometry."""
    bg = int(rng.integers(192, 216))
    img = np.full((size, size, 3), bg, dtype=np.uint8)

    base = _BASE_COLORS[color]
    fill = np.clip(
        [c + int(rng.integers(-18, 19)) for c in base], 0, 255
    ).astype(np.uint8)

    def px(frac: float) -> int:
        return int(round(frac * size))

    shoulder = 0.20 + float(rng.uniform(-0.02, 0.02))
    torso_half = 0.20 + float(rng.uniform(-0.025, 0.025))
    torso_bottom = 0.80 + float(rng.uniform(-0.03, 0.03))
    sleeve_w = 0.11 + float(rng.uniform(-0.015, 0.015))
    if sleeve == "long":
        sleeve_bottom = torso_bottom - 0.04 + float(rng.uniform(-0.02, 0.02))
    else:
        sleeve_bottom = shoulder + 0.13 + float(rng.uniform(-0.02, 0.02))

    x0, x1 = px(0.5 - torso_half), px(0.5 + torso_half)
    y0, y1 = px(shoulder), px(torso_bottom)
    img[y0:y1, x0:x1] = fill

    sw = max(2, px(sleeve_w))
    sy1 = px(sleeve_bottom)
    img[y0:sy1, max(0, x0 - sw):x0] = fill
    img[y0:sy1, x1:min(size, x1 + sw)] = fill

    # Neck notch back to background.
    nx0, nx1 = px(0.5 - 0.06), px(0.5 + 0.06)
    img[y0:y0 + max(2, px(0.05)), nx0:nx1] = bg
    return img


def generate_toy_dataset(
    out_dir: str | Path,
    count: int = 2000,
    seed: int = 0,
    image_size: int = 64,
) -> tuple[Path, Path, list[DatasetExample]]:
    """Write images/, manifest.csv, and schema.json; returns their paths."""
    out = Path(out_dir)
    images_dir = out / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    schema = toy_schema()
    rng = np.random.default_rng(seed)
    examples: list[DatasetExample] = []
    color_names = TOY_GROUPS["color"]
    sleeve_names = TOY_GROUPS["sleeve"]
    for i in range(count):
        color = color_names[int(rng.integers(len(color_names)))]
        sleeve = sleeve_names[int(rng.integers(len(sleeve_names)))]
        pixels = draw_toy_garment(rng, color, sleeve, image_size)
        rel = f"images/img_{i:05d}.png"
        Image.fromarray(pixels).save(out / rel)
        attrs = AttributeVector.from_group_choices(
            schema, {"color": color, "sleeve": sleeve}
        )
        examples.append(DatasetExample(image_ref=rel, attributes=attrs))
    manifest_path = out / "manifest.csv"
    schema_path = out / "schema.json"
    serialize_manifest(examples, schema, manifest_path)
    schema.save(schema_path)
    return manifest_path, schema_path, examples
