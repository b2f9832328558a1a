"""Dataset manifests, image preprocessing, batching, and target-attribute sampling.

Manifest format: UTF-8 CSV with header ``image,<attr_0>,...,<attr_{n-1}>``
where the attribute column names are the schema's value names in schema
order. Image paths are resolved relative to the manifest's directory
unless absolute.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .schema import AttributeSchema, AttributeVector, SchemaError


class ManifestError(ValueError):
    """A manifest file is missing, malformed, or violates the schema."""


class ImageError(ValueError):
    """An image is undecodable or has the wrong channel layout."""


TARGET_POLICIES = ("batch_permutation", "uniform_per_group")


@dataclass(frozen=True)
class DatasetExample:
    image_ref: str
    attributes: AttributeVector


def parse_manifest(path: str | Path, schema: AttributeSchema) -> list[DatasetExample]:
    """Read a manifest CSV, validating every row against the schema."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"manifest {path} is empty") from None
        expected = ["image", *schema.names]
        if header != expected:
            raise ManifestError(
                f"manifest header {header!r} does not match schema header {expected!r}"
            )
        examples: list[DatasetExample] = []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != schema.n + 1:
                raise ManifestError(
                    f"row {row_no}: expected {schema.n + 1} fields, found {len(row)}"
                )
            values = []
            for field in row[1:]:
                field = field.strip()
                if field not in ("0", "1"):
                    raise ManifestError(
                        f"row {row_no}: attribute value must be 0 or 1, got {field!r}"
                    )
                values.append(int(field))
            vector = AttributeVector(tuple(values))
            try:
                vector.validate(schema)
            except SchemaError as exc:
                raise ManifestError(f"row {row_no}: {exc}") from exc
            examples.append(DatasetExample(image_ref=row[0], attributes=vector))
    if not examples:
        raise ManifestError(f"manifest {path} lists no examples")
    return examples


def serialize_manifest(examples: list[DatasetExample], schema: AttributeSchema, path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", *schema.names])
        for ex in examples:
            writer.writerow([ex.image_ref, *ex.attributes.values])


def attribute_counts(examples: list[DatasetExample], schema: AttributeSchema) -> dict[str, int]:
    counts = dict.fromkeys(schema.names, 0)
    for ex in examples:
        for name, v in zip(schema.names, ex.attributes.values):
            counts[name] += v
    return counts


def load_image(path: str | Path) -> np.ndarray:
    """Decode a PNG/JPEG file to an (H, W, 3) uint8 array."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageError(f"cannot decode image {path}: {exc}") from exc


def preprocess_image(raw: np.ndarray, image_size: int, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Map 8-bit (H, W, 3) pixels to a (3, S, S) tensor in [-1, 1] via v/127.5 - 1."""
    raw = np.asarray(raw)
    if raw.ndim != 3 or raw.shape[2] != 3:
        raise ImageError(f"expected (H, W, 3) pixels, got shape {tuple(raw.shape)}")
    if raw.dtype != np.uint8:
        raise ImageError(f"expected 8-bit pixels, got dtype {raw.dtype}")
    if raw.shape[0] != image_size or raw.shape[1] != image_size:
        resized = Image.fromarray(raw).resize((image_size, image_size), Image.BILINEAR)
        raw = np.asarray(resized, dtype=np.uint8)
    tensor = torch.from_numpy(raw.astype(np.float32) / 127.5 - 1.0)
    return tensor.permute(2, 0, 1).contiguous().to(dtype)


def postprocess_image(tensor: torch.Tensor) -> np.ndarray:
    """Invert preprocess_image: (3, H, W) values in [-1, 1] back to uint8 pixels."""
    if tensor.dim() != 3 or tensor.shape[0] != 3:
        raise ImageError(f"expected a (3, H, W) tensor, got shape {tuple(tensor.shape)}")
    array = tensor.detach().to(torch.float32).permute(1, 2, 0).numpy()
    pixels = np.round((array + 1.0) * 127.5)
    return np.clip(pixels, 0, 255).astype(np.uint8)


def attributes_to_tensor(vectors: list[AttributeVector], dtype: torch.dtype = torch.float32) -> torch.Tensor:
    return torch.tensor([v.values for v in vectors], dtype=dtype)


def tensor_to_attributes(batch: torch.Tensor) -> list[AttributeVector]:
    return [AttributeVector(tuple(int(round(x)) for x in row)) for row in batch.tolist()]


def sample_target_attributes(
    batch_a: list[AttributeVector],
    rng: np.random.Generator,
    policy: str = "batch_permutation",
    schema: AttributeSchema | None = None,
) -> list[AttributeVector]:
    """Draw target attribute vectors for a batch of source vectors.

    ``batch_permutation`` returns a uniformly random permutation of the
    inputs, so the batch's attribute marginal is preserved exactly.
    ``uniform_per_group`` resamples each group's one-hot uniformly and
    requires the schema.
    """
    if not batch_a:
        raise ValueError("batch must be non-empty")
    if schema is not None:
        for vec in batch_a:
            vec.validate(schema)
    if policy == "batch_permutation":
        order = rng.permutation(len(batch_a))
        return [batch_a[i] for i in order]
    if policy == "uniform_per_group":
        if schema is None:
            raise ValueError("uniform_per_group sampling requires the schema")
        out = []
        for _ in batch_a:
            values = [0] * schema.n
            for group in schema.groups:
                values[group.indices[rng.integers(len(group.indices))]] = 1
            out.append(AttributeVector(tuple(values)))
        return out
    raise ValueError(f"unknown target-attribute policy {policy!r}")


class ImageCache:
    """Decoded-image cache keyed by resolved path; datasets are immutable during a run."""

    def __init__(self, root: Path | None = None):
        self.root = Path(root) if root is not None else None
        self._cache: dict[str, np.ndarray] = {}

    def resolve(self, ref: str) -> Path:
        path = Path(ref)
        if not path.is_absolute() and self.root is not None:
            path = self.root / path
        return path

    def get(self, ref: str) -> np.ndarray:
        if ref not in self._cache:
            self._cache[ref] = load_image(self.resolve(ref))
        return self._cache[ref]


@dataclass
class Batch:
    images: torch.Tensor
    attributes: torch.Tensor
    refs: list[str]
    source_vectors: list[AttributeVector]


def epoch_order(num_examples: int, seed: int, epoch: int) -> np.ndarray:
    """Shuffle order for one epoch; a pure function of (seed, epoch)."""
    rng = np.random.default_rng([abs(int(seed)), 7, int(epoch)])
    return rng.permutation(num_examples)


def _materialize(
    examples: list[DatasetExample],
    idx,
    image_size: int,
    cache: ImageCache,
    dtype: torch.dtype,
) -> Batch:
    chosen = [examples[i] for i in idx]
    images = torch.stack(
        [preprocess_image(cache.get(ex.image_ref), image_size, dtype) for ex in chosen]
    )
    vectors = [ex.attributes for ex in chosen]
    return Batch(
        images=images,
        attributes=attributes_to_tensor(vectors, dtype),
        refs=[ex.image_ref for ex in chosen],
        source_vectors=vectors,
    )


def batches_per_epoch(num_examples: int, m: int, drop_last: bool = True) -> int:
    if drop_last:
        return num_examples // m
    return (num_examples + m - 1) // m


def batch_at(
    examples: list[DatasetExample],
    m: int,
    seed: int,
    epoch: int,
    slot: int,
    image_size: int = 64,
    cache: ImageCache | None = None,
    dtype: torch.dtype = torch.float32,
    drop_last: bool = True,
) -> Batch:
    """The batch at (epoch, slot); a pure function of the seed and indices."""
    if not 0 <= slot < batches_per_epoch(len(examples), m, drop_last):
        raise ValueError(f"slot {slot} out of range for epoch of {len(examples)} examples")
    cache = cache if cache is not None else ImageCache()
    order = epoch_order(len(examples), seed, epoch)
    idx = order[slot * m : slot * m + m]
    return _materialize(examples, idx, image_size, cache, dtype)


def make_batches(
    examples: list[DatasetExample],
    m: int,
    seed: int,
    drop_last: bool = True,
    epoch: int = 0,
    image_size: int = 64,
    cache: ImageCache | None = None,
    dtype: torch.dtype = torch.float32,
):
    """Yield shuffled batches of (images, attributes) for one epoch."""
    if m < 1:
        raise ValueError("batch size must be >= 1")
    if drop_last and m > len(examples):
        raise ValueError(f"batch size {m} exceeds dataset size {len(examples)} with drop_last set")
    cache = cache if cache is not None else ImageCache()
    order = epoch_order(len(examples), seed, epoch)
    limit = (len(examples) // m) * m if drop_last else len(examples)
    for start in range(0, limit, m):
        yield _materialize(examples, order[start : start + m], image_size, cache, dtype)
