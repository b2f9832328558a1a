"""Local HTTP inference service: schema, edit, and sweep endpoints.

The parameter store is loaded once at startup and never mutated, so
request handling is stateless: identical requests produce identical
payloads. Images travel base64-encoded inside JSON bodies; responses
are always PNG for lossless round-trips.
"""

from __future__ import annotations

import base64
import binascii
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import Body, FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from PIL import Image, UnidentifiedImageError

from .checkpoint import compute_fingerprint, load_checkpoint
from .data import postprocess_image, preprocess_image
from .editor import EditRequest, attribute_sweep, edit_image, predict_source_attributes
from .networks import NetworkConfig, ParameterStore
from .schema import AttributeSchema, AttributeVector, SchemaError
from .trainer import TrainConfig, load_run_config

DEFAULT_MAX_UPLOAD_BYTES = 8_388_608


@dataclass(frozen=True)
class ServiceConfig:
    checkpoint: str
    schema: str | None = None
    host: str = "127.0.0.1"
    port: int = 8760
    max_upload_bytes: int = DEFAULT_MAX_UPLOAD_BYTES
    request_timeout_s: float = 30.0

    def __post_init__(self):
        if not 0 < self.port < 65536:
            raise ValueError(f"invalid port {self.port}")
        if self.max_upload_bytes < 1:
            raise ValueError("max_upload_bytes must be >= 1")


@dataclass
class ModelState:
    store: ParameterStore
    schema: AttributeSchema
    train_config: TrainConfig
    network_config: NetworkConfig
    fingerprint_hex: str
    step: int


class ApiError(Exception):
    def __init__(self, status_code: int, message: str):
        super().__init__(message)
        self.status_code = status_code
        self.message = message


def find_run_config(checkpoint_path: str | Path) -> Path:
    """Locate the config.json written next to a training run's checkpoints."""
    ckpt = Path(checkpoint_path)
    for candidate in (ckpt.parent / "config.json", ckpt.parent.parent / "config.json"):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(
        f"no config.json found beside checkpoint {ckpt}; expected in its directory or parent"
    )


def load_model_state(checkpoint_path: str | Path, schema_path: str | Path | None = None) -> ModelState:
    train_cfg, net_cfg, sidecar_schema = load_run_config(find_run_config(checkpoint_path))
    schema = AttributeSchema.load(schema_path) if schema_path is not None else sidecar_schema
    if schema is None:
        raise ValueError("no schema supplied and the run config does not embed one")
    store, _, step, _ = load_checkpoint(checkpoint_path, train_cfg, net_cfg, schema)
    store.set_train(False)
    fingerprint = compute_fingerprint(train_cfg, net_cfg, schema)
    return ModelState(
        store=store,
        schema=schema,
        train_config=train_cfg,
        network_config=net_cfg,
        fingerprint_hex=fingerprint.hex(),
        step=step,
    )


def _decode_image_field(body: dict, max_upload_bytes: int):
    if not isinstance(body, dict):
        raise ApiError(400, "request body must be a JSON object")
    encoded = body.get("image")
    if not isinstance(encoded, str) or not encoded:
        raise ApiError(400, "missing or malformed 'image' field (base64 string required)")
    if len(encoded) > (max_upload_bytes * 4) // 3 + 8:
        raise ApiError(413, f"image exceeds the {max_upload_bytes}-byte upload limit")
    try:
        raw = base64.b64decode(encoded, validate=True)
    except (binascii.Error, ValueError):
        raise ApiError(400, "'image' field is not valid base64") from None
    if len(raw) > max_upload_bytes:
        raise ApiError(413, f"image exceeds the {max_upload_bytes}-byte upload limit")
    try:
        with Image.open(io.BytesIO(raw)) as img:
            pixels = np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError):
        raise ApiError(422, "image bytes could not be decoded as PNG or JPEG") from None
    return pixels


def _encode_png(tensor) -> str:
    buf = io.BytesIO()
    Image.fromarray(postprocess_image(tensor)).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _parse_edits(body: dict, schema: AttributeSchema) -> tuple[tuple[str, str], ...]:
    raw = body.get("edits", [])
    if not isinstance(raw, list):
        raise ApiError(400, "'edits' must be a list of {group, value} objects")
    edits = []
    for entry in raw:
        if not isinstance(entry, dict) or "group" not in entry or "value" not in entry:
            raise ApiError(400, "each edit must be an object with 'group' and 'value'")
        group, value = entry["group"], entry["value"]
        try:
            schema.value_index(group, value)
        except SchemaError as exc:
            raise ApiError(400, str(exc)) from None
        edits.append((group, value))
    return tuple(edits)


def _parse_source(body: dict, schema: AttributeSchema) -> AttributeVector | None:
    raw = body.get("source_attributes")
    if raw is None:
        return None
    if not isinstance(raw, list):
        raise ApiError(400, "'source_attributes' must be a list of 0/1 values")
    try:
        vector = AttributeVector(tuple(int(v) for v in raw))
        vector.validate(schema)
    except (SchemaError, TypeError, ValueError) as exc:
        raise ApiError(400, f"invalid source_attributes: {exc}") from None
    return vector


def create_app(model: ModelState | None, max_upload_bytes: int = DEFAULT_MAX_UPLOAD_BYTES) -> FastAPI:
    """Build the service app. ``model`` may arrive later via app.state.model."""
    app = FastAPI(title="attredit edit service")
    app.state.model = model
    app.state.max_upload_bytes = max_upload_bytes

    @app.exception_handler(ApiError)
    async def api_error_handler(_request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status_code, content={"detail": exc.message})

    @app.exception_handler(RequestValidationError)
    async def validation_handler(_request: Request, _exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": "malformed request body"})

    def require_model() -> ModelState:
        state = app.state.model
        if state is None:
            raise ApiError(503, "model is not loaded yet")
        return state

    @app.get("/api/health")
    def health():
        require_model()
        return {"status": "ok"}

    @app.get("/api/schema")
    def schema_endpoint():
        state = require_model()
        schema = state.schema
        return {
            "names": list(schema.names),
            "groups": [
                {"name": g.name, "values": [schema.names[i] for i in g.indices]}
                for g in schema.groups
            ],
            "image_size": state.network_config.image_size,
            "checkpoint_fingerprint": state.fingerprint_hex,
            "checkpoint_step": state.step,
        }

    @app.post("/api/edit")
    def edit_endpoint(body: dict = Body(...)):
        state = require_model()
        pixels = _decode_image_field(body, app.state.max_upload_bytes)
        edits = _parse_edits(body, state.schema)
        source = _parse_source(body, state.schema)
        tensor = preprocess_image(pixels, state.network_config.image_size,
                                  state.network_config.torch_dtype)
        if source is None:
            source = predict_source_attributes(state.store, tensor, state.schema)
        request = EditRequest(image=tensor, source=source, edits=edits)
        edited, b = edit_image(state.store, request, state.schema)
        return {
            "image": _encode_png(edited),
            "resolved_source": list(source.values),
            "resolved_target": list(b.values),
        }

    @app.post("/api/sweep")
    def sweep_endpoint(body: dict = Body(...)):
        state = require_model()
        pixels = _decode_image_field(body, app.state.max_upload_bytes)
        tensor = preprocess_image(pixels, state.network_config.image_size,
                                  state.network_config.torch_dtype)
        source = _parse_source(body, state.schema)
        if source is None:
            source = predict_source_attributes(state.store, tensor, state.schema)
        grid = attribute_sweep(state.store, tensor, source, state.schema)
        return {
            "columns": [
                {"label": label, "image": _encode_png(image)}
                for label, image in zip(grid.labels, grid.images)
            ]
        }

    return app


def serve(config: ServiceConfig) -> None:
    import uvicorn

    model = load_model_state(config.checkpoint, config.schema)
    app = create_app(model, config.max_upload_bytes)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
