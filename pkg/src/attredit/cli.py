"""Command-line entry points: dataset tools, training, editing, serving."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np
import torch

from . import __version__
from .data import (
    ImageCache,
    ManifestError,
    attribute_counts,
    load_image,
    parse_manifest,
    preprocess_image,
)
from .editor import (
    EditRequest,
    attribute_match_rate,
    attribute_sweep,
    edit_image,
    predict_source_attributes,
    reconstruction_pixel_error,
    render_sweep_strip,
    save_image_tensor,
)
from .networks import NetworkConfig, classify
from .schema import AttributeSchema, SchemaError
from .service import ServiceConfig, find_run_config, load_model_state, serve
from .toydata import generate_toy_dataset
from .trainer import TrainConfig, fit, load_run_config

LOG_EVERY = 100


@click.group()
@click.version_option(__version__)
def main():
    """Attribute-aware garment image editing workbench."""


@main.group()
def dataset():
    """Dataset manifest utilities."""


@dataset.command("validate")
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--schema", "schema_path", required=True, type=click.Path())
def dataset_validate(manifest_path, schema_path):
    """Validate a manifest against a schema and print per-attribute counts."""
    try:
        schema = AttributeSchema.load(schema_path)
        examples = parse_manifest(manifest_path, schema)
    except (SchemaError, ManifestError) as exc:
        click.echo(f"invalid: {exc}", err=True)
        sys.exit(1)
    click.echo(f"examples: {len(examples)}")
    for group in schema.groups:
        click.echo(f"group {group.name}:")
        counts = attribute_counts(examples, schema)
        for idx in group.indices:
            name = schema.names[idx]
            click.echo(f"  {name}: {counts[name]}")


@main.command("toy-dataset")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--count", default=2000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--image-size", default=64, show_default=True)
def toy_dataset(out_dir, count, seed, image_size):
    """Generate the procedural toy garment dataset."""
    manifest_path, schema_path, examples = generate_toy_dataset(
        out_dir, count=count, seed=seed, image_size=image_size
    )
    click.echo(f"wrote {len(examples)} examples")
    click.echo(f"manifest: {manifest_path}")
    click.echo(f"schema:   {schema_path}")


def _load_train_inputs(config_path, manifest_path, schema_path):
    schema = AttributeSchema.load(schema_path)
    doc = json.loads(Path(config_path).read_text(encoding="utf-8"))
    if "train" not in doc or "network" not in doc:
        raise click.ClickException("config must contain 'train' and 'network' sections")
    network_doc = dict(doc["network"])
    network_doc.setdefault("num_attributes", schema.n)
    try:
        train_cfg = TrainConfig(**doc["train"])
        net_cfg = NetworkConfig(**network_doc)
    except (TypeError, ValueError) as exc:
        raise click.ClickException(f"bad config: {exc}") from exc
    if net_cfg.num_attributes != schema.n:
        raise click.ClickException(
            f"network num_attributes {net_cfg.num_attributes} != schema size {schema.n}"
        )
    examples = parse_manifest(manifest_path, schema)
    return schema, train_cfg, net_cfg, examples


@main.command("train")
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--schema", "schema_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--resume", "resume_path", default=None, type=click.Path())
def train(config_path, manifest_path, schema_path, out_dir, resume_path):
    """Train from a manifest; writes checkpoints, metrics, and a config sidecar."""
    try:
        schema, train_cfg, net_cfg, examples = _load_train_inputs(
            config_path, manifest_path, schema_path
        )
    except (SchemaError, ManifestError) as exc:
        raise click.ClickException(str(exc)) from exc

    def log_fn(sm):
        if sm.step % LOG_EVERY == 0 or sm.aborted:
            flag = " ABORTED" if sm.aborted else ""
            click.echo(
                f"step {sm.step}: adv_d={sm.losses.adv_d:.4f} adv_g={sm.losses.adv_g:.4f} "
                f"cls_real={sm.losses.cls_real:.4f} cls_edit={sm.losses.cls_edit:.4f} "
                f"rec={sm.losses.rec:.5f}{flag}"
            )

    result = fit(
        examples, schema, net_cfg, train_cfg,
        image_root=Path(manifest_path).parent,
        out_dir=out_dir,
        resume=resume_path,
        log_fn=log_fn,
    )
    click.echo(f"finished at step {train_cfg.total_steps}")
    if result.last_checkpoint is not None:
        click.echo(f"checkpoint: {result.last_checkpoint}")


def _prepare_input_image(state, image_path):
    pixels = load_image(image_path)
    return preprocess_image(
        pixels, state.network_config.image_size, state.network_config.torch_dtype
    )


@main.command("edit")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path())
@click.option("--image", "image_path", required=True, type=click.Path())
@click.option("--set", "edits", multiple=True, metavar="GROUP=VALUE")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--schema", "schema_path", default=None, type=click.Path())
def edit(ckpt_path, image_path, edits, out_path, schema_path):
    """Edit one image's attributes and write the result PNG."""
    state = load_model_state(ckpt_path, schema_path)
    tensor = _prepare_input_image(state, image_path)
    parsed = []
    for item in edits:
        group, sep, value = item.partition("=")
        if not sep:
            raise click.ClickException(f"--set expects GROUP=VALUE, got {item!r}")
        parsed.append((group, value))
    source = predict_source_attributes(state.store, tensor, state.schema)
    try:
        edited, b = edit_image(
            state.store,
            EditRequest(image=tensor, source=source, edits=tuple(parsed)),
            state.schema,
        )
    except SchemaError as exc:
        raise click.ClickException(str(exc)) from exc
    save_image_tensor(edited, out_path)
    click.echo(f"source: {list(source.values)}")
    click.echo(f"target: {list(b.values)}")
    click.echo(f"wrote {out_path}")


@main.command("sweep")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path())
@click.option("--image", "image_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--schema", "schema_path", default=None, type=click.Path())
def sweep(ckpt_path, image_path, out_path, schema_path):
    """Write the full attribute sweep as one labeled strip PNG."""
    state = load_model_state(ckpt_path, schema_path)
    tensor = _prepare_input_image(state, image_path)
    source = predict_source_attributes(state.store, tensor, state.schema)
    grid = attribute_sweep(state.store, tensor, source, state.schema)
    render_sweep_strip(grid).save(out_path)
    click.echo(f"wrote {len(grid.images)} columns to {out_path}")


@main.command("eval")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path())
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--evaluator", "evaluator_path", required=True, type=click.Path())
@click.option("--limit", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
def eval_cmd(ckpt_path, manifest_path, evaluator_path, limit, seed):
    """Score single-group edits with an independent evaluator checkpoint."""
    state = load_model_state(ckpt_path)
    eval_state = load_model_state(evaluator_path)
    if eval_state.schema.to_json_dict() != state.schema.to_json_dict():
        raise click.ClickException("evaluator schema differs from model schema")
    schema = state.schema
    examples = parse_manifest(manifest_path, schema)[:limit]
    cache = ImageCache(Path(manifest_path).parent)
    rng = np.random.default_rng(seed)

    items = []
    pairs = []
    for ex in examples:
        tensor = preprocess_image(
            cache.get(ex.image_ref), state.network_config.image_size,
            state.network_config.torch_dtype,
        )
        pairs.append((tensor, ex.attributes))
        for group in schema.groups:
            current = ex.attributes.group_value(schema, group.name)
            options = [v for v in schema.group_values(group.name) if v != current]
            target_value = options[int(rng.integers(len(options)))]
            edited, b = edit_image(
                state.store,
                EditRequest(image=tensor, source=ex.attributes,
                            edits=((group.name, target_value),)),
                schema,
            )
            items.append((edited, b, [group.name]))

    def evaluator(batch: torch.Tensor) -> torch.Tensor:
        return classify(eval_state.store, batch)

    rate = attribute_match_rate(evaluator, items, schema)
    err = reconstruction_pixel_error(state.store, pairs, schema)
    click.echo(f"attribute_match_rate: {rate:.4f}")
    click.echo(f"reconstruction_mae: {err:.4f}")


@main.command("serve")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path())
@click.option("--schema", "schema_path", default=None, type=click.Path())
@click.option("--port", default=8760, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--max-upload-bytes", default=8_388_608, show_default=True)
def serve_cmd(ckpt_path, schema_path, port, host, max_upload_bytes):
    """Serve the edit API over HTTP from one checkpoint."""
    serve(ServiceConfig(
        checkpoint=ckpt_path,
        schema=schema_path,
        host=host,
        port=port,
        max_upload_bytes=max_upload_bytes,
    ))


if __name__ == "__main__":
    main()
