"""The training loop: three differently-scoped parameter updates per step.

Each step runs, in order:

  1. ``dc``   — update {trunk, d_head, c_head} on the discriminator
                adversarial loss plus lambda2 times the classification
                loss of the reconstruction.
  2. ``eg``   — update {encoder, generator} on the generator adversarial
                loss plus lambda1 times the reconstruction loss, using
                the just-updated discriminator.
  3. ``edit`` — update on lambda3 times the classification loss of the
                attribute-edited sample. Scope is {generator} in
                ``fashion_attgan`` mode (the edit error stops at the
                generator, leaving the encoder free of it) and
                {encoder, generator} in ``attgan`` mode.

Updates are applied partition by partition, so parameters outside a
sub-step's scope are bitwise untouched by it. All randomness (batch
order, target-attribute draws) is derived from (seed, step) counters,
which makes runs replayable and checkpoints exactly resumable.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import checkpoint as ckpt
from .data import (
    DatasetExample,
    Batch,
    ImageCache,
    attributes_to_tensor,
    batch_at,
    batches_per_epoch,
    sample_target_attributes,
    TARGET_POLICIES,
)
from .networks import (
    NetworkConfig,
    PARTITIONS,
    ParameterStore,
    classify,
    discriminate,
    encode,
    generate,
    init_params,
    trunk_features,
)
from .objectives import (
    G_LOSS_FORMS,
    FEATURE_EXTRACTORS,
    LossReport,
    adversarial_d_loss,
    adversarial_g_loss,
    classification_loss,
    make_feature_extractor,
    reconstruction_loss,
)
from .optim import (
    NonFiniteGradientError,
    OptimizerConfig,
    PartitionOptState,
    apply_partition_update,
    create_opt_states,
    partition_grad_norm,
)
from .schema import AttributeSchema

SCOPING_MODES = ("fashion_attgan", "attgan")

DC_SCOPE = ("trunk", "d_head", "c_head")
EG_SCOPE = ("encoder", "generator")

MAX_CONSECUTIVE_ABORTS = 5


class NonFiniteLossError(RuntimeError):
    """A sub-step loss evaluated to NaN or infinity."""


@dataclass(frozen=True)
class TrainConfig:
    lambda1: float = 100.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    batch_size: int = 32
    total_steps: int = 5000
    seed: int = 0
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    optimizer: str = "adam"
    scoping_mode: str = "fashion_attgan"
    g_loss_form: str = "saturating"
    attr_policy: str = "batch_permutation"
    feature_extractor: str = "identity"
    checkpoint_interval: int = 1000

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("lambda weights must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.total_steps < 0:
            raise ValueError("total_steps must be >= 0")
        if self.scoping_mode not in SCOPING_MODES:
            raise ValueError(f"scoping_mode must be one of {SCOPING_MODES}")
        if self.g_loss_form not in G_LOSS_FORMS:
            raise ValueError(f"g_loss_form must be one of {G_LOSS_FORMS}")
        if self.attr_policy not in TARGET_POLICIES:
            raise ValueError(f"attr_policy must be one of {TARGET_POLICIES}")
        if self.feature_extractor not in FEATURE_EXTRACTORS:
            raise ValueError(f"feature_extractor must be one of {FEATURE_EXTRACTORS}")

    def optimizer_config(self) -> OptimizerConfig:
        return OptimizerConfig(
            kind=self.optimizer,
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
        )

    def edit_scope(self) -> tuple[str, ...]:
        if self.scoping_mode == "fashion_attgan":
            return ("generator",)
        return ("encoder", "generator")


@dataclass
class StepMetrics:
    step: int
    losses: LossReport
    grad_norms: dict[str, float]
    wall_time: float
    aborted: bool = False
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "step": self.step,
            **self.losses.as_dict(),
            "grad_norms": self.grad_norms,
            "wall_time": self.wall_time,
            "aborted": self.aborted,
            "note": self.note,
        }


def step_rng(seed: int, step: int) -> np.random.Generator:
    """Target-attribute RNG for one step; a pure function of (seed, step)."""
    return np.random.default_rng([abs(int(seed)), 11, int(step)])


def _check_finite(loss: torch.Tensor, label: str) -> None:
    if not torch.isfinite(loss):
        raise NonFiniteLossError(f"{label} loss is non-finite")


def scoped_update(
    store: ParameterStore,
    loss: torch.Tensor,
    scope,
    opt_states: dict[str, PartitionOptState],
    opt_config: OptimizerConfig,
    retain_graph: bool = False,
) -> dict[str, float]:
    """Backpropagate ``loss`` and apply the optimizer inside ``scope`` only.

    Gradients are computed for every parameter the loss graph reaches,
    but applied solely to the named partitions; everything else keeps
    its exact bit pattern. Returns the per-partition gradient norms of
    the scope. Raises NonFiniteGradientError before applying anything if
    a scoped gradient is NaN or infinite.
    """
    scope = tuple(scope)
    unknown = set(scope) - set(PARTITIONS)
    if unknown:
        raise ValueError(f"unknown partitions in scope: {sorted(unknown)}")
    ordered = [p for p in PARTITIONS if p in scope]
    if not ordered:
        raise ValueError("empty update scope")
    store.zero_grads()
    loss.backward(retain_graph=retain_graph)
    for part in ordered:
        for name, p in store.named_parameters(part):
            if p.grad is not None and not torch.isfinite(p.grad).all():
                raise NonFiniteGradientError(f"non-finite gradient in {name}")
    norms = {part: partition_grad_norm(store, part) for part in ordered}
    for part in ordered:
        apply_partition_update(store, part, opt_states[part], opt_config)
    return norms


def substep_dc(store, batch_x, a_t, b_t, config, opt_states):
    """Sub-step 1: adversarial + reconstruction-classification update of D/C."""
    with torch.no_grad():
        z = encode(store, batch_x, train=True)
        x_hat_a = generate(store, z, a_t, train=True)
        x_hat_b = generate(store, z, b_t, train=True)
    # One trunk pass for all three inputs; exact because the trunk has no
    # cross-sample coupling.
    m = batch_x.shape[0]
    features = trunk_features(store, torch.cat([batch_x, x_hat_b, x_hat_a], dim=0))
    scores = discriminate(store, features=features[: 2 * m])
    adv_d = adversarial_d_loss(scores[:m], scores[m:])
    cls_real = classification_loss(classify(store, features=features[2 * m :]), a_t)
    loss = adv_d + config.lambda2 * cls_real
    _check_finite(loss, "d/c")
    norms = scoped_update(store, loss, DC_SCOPE, opt_states, config.optimizer_config())
    return float(adv_d.detach()), float(cls_real.detach()), norms


def substep_eg(store, phi, batch_x, a_t, b_t, config, opt_states):
    """Sub-step 2: adversarial + reconstruction update of E/G."""
    z = encode(store, batch_x, train=True)
    x_hat_a = generate(store, z, a_t, train=True)
    x_hat_b = generate(store, z, b_t, train=True)
    adv_g = adversarial_g_loss(discriminate(store, x_hat_b), config.g_loss_form)
    rec = reconstruction_loss(phi, batch_x, x_hat_a)
    loss = adv_g + config.lambda1 * rec
    _check_finite(loss, "e/g")
    norms = scoped_update(store, loss, EG_SCOPE, opt_states, config.optimizer_config())
    return float(adv_g.detach()), float(rec.detach()), norms


def substep_edit(store, batch_x, b_t, config, opt_states):
    """Sub-step 3: edit-classification update, routed per scoping_mode."""
    scope = config.edit_scope()
    if "encoder" in scope:
        z = encode(store, batch_x, train=True)
    else:
        with torch.no_grad():
            z = encode(store, batch_x, train=True)
    x_hat_b = generate(store, z, b_t, train=True)
    cls_edit = classification_loss(classify(store, x_hat_b), b_t)
    loss = config.lambda3 * cls_edit
    _check_finite(loss, "edit")
    norms = scoped_update(store, loss, scope, opt_states, config.optimizer_config())
    return float(cls_edit.detach()), norms


def train_step(
    store: ParameterStore,
    batch: Batch,
    schema: AttributeSchema,
    config: TrainConfig,
    opt_states: dict[str, PartitionOptState],
    phi,
    step_index: int,
    edit_update_enabled: bool = True,
) -> StepMetrics:
    """One full training iteration: the three scoped sub-steps in order.

    A non-finite loss or scoped gradient aborts the step: remaining
    sub-steps are skipped and the metrics carry ``aborted=True``.
    """
    t0 = time.perf_counter()
    x = batch.images
    a_t = batch.attributes
    rng = step_rng(config.seed, step_index)
    b_vecs = sample_target_attributes(batch.source_vectors, rng, config.attr_policy, schema)
    b_t = attributes_to_tensor(b_vecs, x.dtype)

    adv_d = adv_g = cls_real = cls_edit = rec = 0.0
    grad_norms: dict[str, float] = {}
    aborted = False
    note = ""
    try:
        adv_d, cls_real, norms = substep_dc(store, x, a_t, b_t, config, opt_states)
        grad_norms.update({f"dc/{k}": v for k, v in norms.items()})
        adv_g, rec, norms = substep_eg(store, phi, x, a_t, b_t, config, opt_states)
        grad_norms.update({f"eg/{k}": v for k, v in norms.items()})
        if edit_update_enabled:
            cls_edit, norms = substep_edit(store, x, b_t, config, opt_states)
            grad_norms.update({f"edit/{k}": v for k, v in norms.items()})
    except (NonFiniteLossError, NonFiniteGradientError) as exc:
        aborted = True
        note = str(exc)

    losses = LossReport(adv_d=adv_d, adv_g=adv_g, cls_real=cls_real,
                        cls_edit=cls_edit, rec=rec)
    return StepMetrics(
        step=step_index,
        losses=losses,
        grad_norms=grad_norms,
        wall_time=time.perf_counter() - t0,
        aborted=aborted,
        note=note,
    )


@dataclass
class FitResult:
    store: ParameterStore
    opt_states: dict[str, PartitionOptState]
    metrics: list[StepMetrics]
    last_checkpoint: Path | None = None


def fit(
    examples: list[DatasetExample],
    schema: AttributeSchema,
    network_config: NetworkConfig,
    train_config: TrainConfig,
    image_root: str | Path | None = None,
    out_dir: str | Path | None = None,
    resume: str | Path | None = None,
    edit_update_enabled: bool = True,
    log_fn=None,
) -> FitResult:
    """Run the full training loop over shuffled batches of the dataset."""
    if not examples:
        raise ValueError("dataset is empty")
    m = train_config.batch_size
    spe = batches_per_epoch(len(examples), m, drop_last=True)
    if spe == 0:
        raise ValueError(f"batch size {m} exceeds dataset size {len(examples)}")

    fingerprint = ckpt.compute_fingerprint(train_config, network_config, schema)
    if resume is not None:
        store, opt_states, start_step, _ = ckpt.load_checkpoint(
            resume, train_config, network_config, schema
        )
    else:
        store = init_params(network_config, train_config.seed)
        opt_states = create_opt_states(store)
        start_step = 0

    phi = make_feature_extractor(
        train_config.feature_extractor,
        seed=train_config.seed,
        dtype=network_config.torch_dtype,
    )
    cache = ImageCache(Path(image_root) if image_root is not None else None)

    out_path = Path(out_dir) if out_dir is not None else None
    ckpt_dir = None
    metrics_fh = None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
        ckpt_dir = out_path / "checkpoints"
        ckpt_dir.mkdir(exist_ok=True)
        save_run_config(out_path / "config.json", train_config, network_config, schema)
        metrics_fh = (out_path / "metrics.jsonl").open(
            "a" if resume is not None else "w", encoding="utf-8"
        )

    metrics: list[StepMetrics] = []
    last_ckpt: Path | None = Path(resume) if resume is not None else None
    consecutive_aborts = 0
    try:
        for step in range(start_step, train_config.total_steps):
            epoch, slot = divmod(step, spe)
            batch = batch_at(
                examples, m, train_config.seed, epoch, slot,
                image_size=network_config.image_size,
                cache=cache, dtype=network_config.torch_dtype,
            )
            sm = train_step(
                store, batch, schema, train_config, opt_states, phi, step,
                edit_update_enabled=edit_update_enabled,
            )
            metrics.append(sm)
            if metrics_fh is not None:
                metrics_fh.write(json.dumps(sm.as_dict()) + "\n")
                metrics_fh.flush()
            if log_fn is not None:
                log_fn(sm)
            if sm.aborted:
                consecutive_aborts += 1
                if consecutive_aborts >= MAX_CONSECUTIVE_ABORTS:
                    raise RuntimeError(
                        f"{MAX_CONSECUTIVE_ABORTS} consecutive aborted steps; last: {sm.note}"
                    )
            else:
                consecutive_aborts = 0
            done = step + 1
            if ckpt_dir is not None and train_config.checkpoint_interval > 0 and (
                done % train_config.checkpoint_interval == 0 or done == train_config.total_steps
            ):
                last_ckpt = ckpt_dir / f"step_{done:07d}.fagn"
                ckpt.save_checkpoint(
                    store, opt_states, done, last_ckpt, fingerprint,
                    rng_info={"seed": train_config.seed, "step": done},
                )
    finally:
        if metrics_fh is not None:
            metrics_fh.close()
    return FitResult(store=store, opt_states=opt_states, metrics=metrics, last_checkpoint=last_ckpt)


def fit_classifier(
    examples: list[DatasetExample],
    schema: AttributeSchema,
    network_config: NetworkConfig,
    steps: int = 1500,
    batch_size: int = 32,
    seed: int = 0,
    learning_rate: float = 2e-4,
    image_root: str | Path | None = None,
) -> ParameterStore:
    """Train an attribute classifier (trunk + c_head) on real labeled images.

    Used as an independent evaluator for edit scoring; only the trunk
    and classifier head are ever updated.
    """
    if not examples:
        raise ValueError("dataset is empty")
    spe = batches_per_epoch(len(examples), batch_size, drop_last=True)
    if spe == 0:
        raise ValueError(f"batch size {batch_size} exceeds dataset size {len(examples)}")
    store = init_params(network_config, seed)
    opt_states = create_opt_states(store)
    opt_cfg = OptimizerConfig(kind="adam", learning_rate=learning_rate, beta1=0.5, beta2=0.999)
    cache = ImageCache(Path(image_root) if image_root is not None else None)
    for step in range(steps):
        epoch, slot = divmod(step, spe)
        batch = batch_at(
            examples, batch_size, seed, epoch, slot,
            image_size=network_config.image_size,
            cache=cache, dtype=network_config.torch_dtype,
        )
        loss = classification_loss(classify(store, batch.images), batch.attributes)
        _check_finite(loss, "classifier")
        scoped_update(store, loss, ("trunk", "c_head"), opt_states, opt_cfg)
    return store


def save_run_config(
    path: str | Path,
    train_config: TrainConfig,
    network_config: NetworkConfig,
    schema: AttributeSchema | None = None,
) -> None:
    doc = {"train": asdict(train_config), "network": asdict(network_config)}
    if schema is not None:
        doc["schema"] = schema.to_json_dict()
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_run_config(path: str | Path) -> tuple[TrainConfig, NetworkConfig, AttributeSchema | None]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if "train" not in doc or "network" not in doc:
        raise ValueError(f"run config {path} must contain 'train' and 'network' sections")
    train = TrainConfig(**doc["train"])
    network = NetworkConfig(**doc["network"])
    schema = AttributeSchema.from_json_dict(doc["schema"]) if "schema" in doc else None
    return train, network, schema
