"""Two-stage training: self-supervised reconstruction, weight inheritance,
then adversarial refinement with the attribute-aware discriminator.

Stage 1 reconstructs the original image from its own (augmented) edge map and
the attribute-masked image, minimizing pixel L1 w.r.t. generator parameters
only. Stage 2 re-targets the generator at edges from a different-type record
and alternates discriminator / generator updates; the discriminator is frozen
during generator updates.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from garmentgan import autodiff as ad
from garmentgan.autodiff import Tensor
from garmentgan.data import AnnotationRecord, DatasetManifest, encode_onehot, load_image_rgb, sample_batch
from garmentgan.errors import CorruptCheckpoint, DataEmpty, NonFiniteLoss, SingleClassDataset, StageMismatch
from garmentgan.layers import ParamGroup, rng_for
from garmentgan.losses import (
    PerceptualExtractor,
    discriminator_loss,
    generator_loss,
    recon_loss,
)
from garmentgan.networks import (
    DiscriminatorParams,
    GeneratorParams,
    MultiGroupAdam,
    NetConfig,
    discriminate_t,
    forward_edit_t,
    init_discriminator,
    init_generator,
)
from garmentgan.preprocess import (
    EdgeMap,
    GeoRanges,
    attribute_region,
    edge_network_input,
    extract_edges,
    geo_transfer,
    mask_out,
    normalize,
    resize_bilinear,
    sample_geo_params,
    to_unit,
    warp_normalized,
)

CHECKPOINT_FORMAT_VERSION = 1
LOSS_COLUMNS = ("step", "stage", "recon", "vgg", "att", "cnt", "adv_g", "adv_d")
METRICS_TAIL = 50


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 2e-4
    batch_size: int = 8
    recon_iters: int = 300
    adv_iters: int = 500
    optimizer_betas: tuple = (0.5, 0.999)
    lambda_att: float = 0.1
    lambda_perceptual: float = 2.5
    image_size: int = 64
    base_channels: int = 64
    n_downsample: int = 2
    n_res_blocks: int = 4
    disc_base_channels: int = 64
    disc_layers: int = 3
    edge_backend: str = "deterministic_gradient"
    hed_weights: str | None = None
    edge_input_mode: str = "region_crop"
    margin_frac: float = 0.10
    geo_rotation: tuple = (-10.0, 10.0)
    geo_translation_frac: float = 0.05
    geo_scale: tuple = (0.9, 1.1)
    geo_in_adversarial: bool = False
    perceptual_backend: str = "seeded_random_conv"
    perceptual_layer: str = "block3"
    perceptual_seed: int = 2024
    vgg_weights: str | None = None
    skip_recon_stage: bool = False
    rgb_instead_of_edge: bool = False
    inherit_image_encoder: bool = True
    seed: int = 0
    checkpoint_dir: str | None = None
    log_every: int = 50

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lambda_att < 0 or self.lambda_perceptual < 0:
            raise ValueError("loss weights must be >= 0")
        if self.recon_iters < 0 or self.adv_iters < 0:
            raise ValueError("iteration counts must be >= 0")

    @classmethod
    def desk_scale(cls, **overrides) -> "TrainConfig":
        """Small preset that trains on CPU in minutes.

        lambda_perceptual is calibrated down for the seeded random-conv
        extractor, whose features act closer to a pixel loss than pretrained
        VGG features; the adversarial stage is kept short since it refines,
        not builds, the edge-following behavior inherited from stage 1.
        """
        base = dict(
            base_channels=16,
            n_res_blocks=2,
            disc_base_channels=32,
            disc_layers=3,
            recon_iters=300,
            adv_iters=150,
            lambda_perceptual=0.25,
        )
        base.update(overrides)
        return cls(**base)

    def net_config(self, class_count: int) -> NetConfig:
        return NetConfig(
            image_size=self.image_size,
            base_channels=self.base_channels,
            n_downsample=self.n_downsample,
            n_res_blocks=self.n_res_blocks,
            edge_channels=3 if self.rgb_instead_of_edge else 1,
            disc_base_channels=self.disc_base_channels,
            disc_layers=self.disc_layers,
            class_count=class_count,
        )

    def geo_ranges(self) -> GeoRanges:
        t = self.geo_translation_frac * self.image_size
        return GeoRanges(rotation=tuple(self.geo_rotation), translation=(-t, t), scale=tuple(self.geo_scale))

    def extractor(self) -> PerceptualExtractor:
        return PerceptualExtractor(
            backend=self.perceptual_backend,
            layer_spec=self.perceptual_layer,
            seed=self.perceptual_seed,
            weights_path=self.vgg_weights,
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["optimizer_betas"] = list(self.optimizer_betas)
        d["geo_rotation"] = list(self.geo_rotation)
        d["geo_scale"] = list(self.geo_scale)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        for k in ("optimizer_betas", "geo_rotation", "geo_scale"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class Checkpoint:
    generator: GeneratorParams
    discriminator: DiscriminatorParams | None
    stage: str  # "recon" | "adversarial"
    step: int
    config_hash: str
    train_config: dict
    attribute_kind: str = "collar"
    data_provenance: str = "real"
    metrics_tail: list = field(default_factory=list)

    def __post_init__(self):
        if self.stage not in ("recon", "adversarial"):
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.stage == "recon" and self.discriminator is not None:
            raise ValueError("recon-stage checkpoints carry no discriminator")


# --- per-record preparation -----------------------------------------------------


@dataclass(frozen=True)
class PreparedRecord:
    record: AnnotationRecord
    image: np.ndarray  # (S, S, 3) uint8
    norm: np.ndarray  # (3, S, S) float32
    region: "object"
    edge_input: np.ndarray  # (1, S, S) float32 (crop-resized per config)
    rgb_input: np.ndarray  # (3, S, S) float32 (ablation path)
    onehot: np.ndarray


def _resize_image_uint8(img: np.ndarray, size: int) -> np.ndarray:
    if img.shape[0] == size and img.shape[1] == size:
        return img
    out = np.stack([resize_bilinear(img[:, :, c].astype(np.float64), size, size) for c in range(3)], axis=2)
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


def prepare_record(record: AnnotationRecord, config: TrainConfig, class_count: int) -> PreparedRecord:
    """Resize to the model resolution and derive every network input once."""
    size = config.image_size
    img = load_image_rgb(record.image_path)
    w, h = record.image_size
    if (h, w) != (size, size):
        img = _resize_image_uint8(img, size)
        sx, sy = size / w, size / h
        record = dataclasses.replace(
            record,
            landmarks={k: (x * sx, y * sy) for k, (x, y) in record.landmarks.items()},
            image_size=(size, size),
        )
    margin = max(1, round(config.margin_frac * size))
    region = attribute_region(record, margin)
    norm = normalize(img)
    edge_full = extract_edges(to_unit(img), backend=config.edge_backend, hed_weights=config.hed_weights)
    edge_input = edge_network_input(edge_full, region, size, mode=config.edge_input_mode)
    rgb_crop = np.stack(
        [resize_bilinear(norm[c, region.y0 : region.y1, region.x0 : region.x1].astype(np.float64), size, size) for c in range(3)]
    ).astype(np.float32)
    return PreparedRecord(
        record=record,
        image=img,
        norm=norm,
        region=region,
        edge_input=edge_input,
        rgb_input=rgb_crop,
        onehot=encode_onehot(record.type_id, class_count),
    )


def prepare_dataset(manifest: DatasetManifest, config: TrainConfig) -> list[PreparedRecord]:
    if len(manifest) == 0:
        raise DataEmpty("manifest has no records")
    return [prepare_record(rec, config, manifest.class_count) for rec in manifest.records]


def _attribute_input(prep: PreparedRecord, config: TrainConfig, geo) -> np.ndarray:
    """Edge-encoder input for one record: edge crop or rgb crop, optionally warped."""
    if config.rgb_instead_of_edge:
        if geo is not None:
            return warp_normalized(prep.rgb_input, geo, fill=0.0)
        return prep.rgb_input
    if geo is not None:
        warped = geo_transfer(EdgeMap(prep.edge_input[0]), geo)
        return warped.grid[None]
    return prep.edge_input


def _masked_pixels(prep: PreparedRecord) -> np.ndarray:
    return mask_out(prep.norm, prep.region, fill=0.0).pixels


def _dump_diagnostics(config: TrainConfig, stage: str, step: int, bundle_values: dict, gen: GeneratorParams, disc) -> None:
    if not config.checkpoint_dir:
        return
    path = Path(config.checkpoint_dir)
    path.mkdir(parents=True, exist_ok=True)
    dump = {
        "stage": stage,
        "step": step,
        "losses": bundle_values,
        "generator_finite": gen.all_finite(),
        "discriminator_finite": disc.all_finite() if disc is not None else None,
    }
    (path / f"nonfinite_step{step}.json").write_text(json.dumps(dump, indent=2))


# --- stage 1: reconstruction ----------------------------------------------------


def train_reconstruction(
    config: TrainConfig,
    data: DatasetManifest,
    log_rows: list | None = None,
    progress=None,
) -> Checkpoint:
    prepared = prepare_dataset(data, config)
    n = len(prepared)
    net_cfg = config.net_config(data.class_count)
    gen = init_generator(net_cfg, config.seed)
    opt = MultiGroupAdam(gen.groups(), config.learning_rate, config.optimizer_betas)
    rng_batch = rng_for(config.seed, "recon/batch")
    rng_geo = rng_for(config.seed, "recon/geo")
    ranges = config.geo_ranges()
    index_of = {id(r): i for i, r in enumerate(data.records)}
    rows = log_rows if log_rows is not None else []

    for step in range(1, config.recon_iters + 1):
        picks = sample_batch(data, min(config.batch_size, n), rng_batch)
        batch = [prepared[index_of[id(r)]] for r in picks]
        masked = np.stack([_masked_pixels(p) for p in batch])
        edges = np.stack([_attribute_input(p, config, sample_geo_params(rng_geo, ranges)) for p in batch])
        originals = np.stack([p.norm for p in batch])
        _, _, composed = forward_edit_t(gen, Tensor(masked), Tensor(edges))
        loss = recon_loss(composed, Tensor(originals))
        value = float(loss.data)
        if not np.isfinite(value):
            _dump_diagnostics(config, "recon", step, {"recon": value}, gen, None)
            raise NonFiniteLoss(step, f"reconstruction loss {value} at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        opt.zero_grad()
        rows.append({"step": step, "stage": "recon", "recon": value})
        if progress and (step % config.log_every == 0 or step == 1):
            progress(f"recon step {step}/{config.recon_iters} L_R={value:.4f}")

    return Checkpoint(
        generator=gen,
        discriminator=None,
        stage="recon",
        step=config.recon_iters,
        config_hash=config.config_hash(),
        train_config=config.to_dict(),
        attribute_kind=data.attribute_kind,
        data_provenance=data.provenance,
        metrics_tail=rows[-METRICS_TAIL:],
    )


# --- weight inheritance -----------------------------------------------------------


def inherit_weights(recon: Checkpoint, config: TrainConfig) -> tuple[GeneratorParams, DiscriminatorParams]:
    """Value-copy generator weights from the reconstruction stage; fresh discriminator."""
    if recon.stage != "recon":
        raise StageMismatch(f"expected a recon-stage checkpoint, got {recon.stage!r}")
    gen = recon.generator.copy()
    if not config.inherit_image_encoder:
        fresh = init_generator(recon.generator.config, config.seed)
        rng = rng_for(config.seed, "adv/image_encoder_fresh")
        scratch = ParamGroup()
        for name, t in fresh.image_encoder.items():
            scratch[name] = Tensor(rng.normal(0.0, 0.02, size=t.data.shape).astype(t.data.dtype), requires_grad=True)
            if name.endswith((".b", ".beta")):
                scratch[name] = Tensor(np.zeros_like(t.data), requires_grad=True)
            if name.endswith(".gamma"):
                scratch[name] = Tensor(np.ones_like(t.data), requires_grad=True)
        gen.image_encoder = scratch
    disc = init_discriminator(recon.generator.config, config.seed)
    return gen, disc


# --- stage 2: adversarial -----------------------------------------------------------


def _target_pools(prepared: list[PreparedRecord]) -> dict[int, list[int]]:
    by_type: dict[int, list[int]] = {}
    for i, p in enumerate(prepared):
        by_type.setdefault(p.record.type_id, []).append(i)
    return by_type


def _draw_target(ref_type: int, by_type: dict[int, list[int]], rng: np.random.Generator) -> int:
    candidates = [i for t, idxs in by_type.items() if t != ref_type for i in idxs]
    return candidates[int(rng.integers(0, len(candidates)))]


def train_adversarial(
    config: TrainConfig,
    data: DatasetManifest,
    init: tuple[GeneratorParams, DiscriminatorParams] | None = None,
    log_rows: list | None = None,
    progress=None,
) -> Checkpoint:
    prepared = prepare_dataset(data, config)
    n = len(prepared)
    by_type = _target_pools(prepared)
    if len(by_type) < 2:
        raise SingleClassDataset(f"adversarial stage needs >= 2 attribute types, found {sorted(by_type)}")
    net_cfg = config.net_config(data.class_count)
    if init is None:
        gen = init_generator(net_cfg, config.seed)
        disc = init_discriminator(net_cfg, config.seed)
    else:
        gen, disc = init
    extractor = config.extractor()
    opt_g = MultiGroupAdam(gen.groups(), config.learning_rate, config.optimizer_betas)
    opt_d = MultiGroupAdam(disc.groups(), config.learning_rate, config.optimizer_betas)
    rng_batch = rng_for(config.seed, "adv/batch")
    rng_target = rng_for(config.seed, "adv/target")
    rng_geo = rng_for(config.seed, "adv/geo")
    ranges = config.geo_ranges()
    index_of = {id(r): i for i, r in enumerate(data.records)}
    rows = log_rows if log_rows is not None else []

    for step in range(1, config.adv_iters + 1):
        picks = sample_batch(data, min(config.batch_size, n), rng_batch)
        refs = [prepared[index_of[id(r)]] for r in picks]
        tgts = [prepared[_draw_target(p.record.type_id, by_type, rng_target)] for p in refs]
        geo = (lambda: sample_geo_params(rng_geo, ranges)) if config.geo_in_adversarial else (lambda: None)
        masked = np.stack([_masked_pixels(p) for p in refs])
        edges = np.stack([_attribute_input(t, config, geo()) for t in tgts])
        originals = np.stack([p.norm for p in refs])
        targets = np.stack([t.norm for t in tgts])
        v_o = np.stack([p.onehot for p in refs])
        v_t = np.stack([t.onehot for t in tgts])

        # discriminator update (Eq. 8): fake branch detached
        _, _, fake = forward_edit_t(gen, Tensor(masked), Tensor(edges))
        fake_detached = Tensor(fake.data)
        d_fake = discriminate_t(disc, fake_detached)
        d_real = discriminate_t(disc, Tensor(originals))
        d_bundle = discriminator_loss(d_fake, d_real, v_o)
        if not d_bundle.is_finite():
            _dump_diagnostics(config, "adversarial", step, d_bundle.components, gen, disc)
            raise NonFiniteLoss(step, f"discriminator loss non-finite at step {step}")
        opt_d.zero_grad()
        opt_g.zero_grad()
        d_bundle.total.backward()
        opt_d.step()
        opt_d.zero_grad()
        opt_g.zero_grad()

        # generator update (Eq. 7): discriminator frozen
        _, _, edited = forward_edit_t(gen, Tensor(masked), Tensor(edges))
        g_fake = discriminate_t(disc, edited)
        g_target = discriminate_t(disc, Tensor(targets))
        g_bundle = generator_loss(
            g_fake,
            g_target,
            edited,
            v_t,
            Tensor(originals),
            extractor,
            lambda_att=config.lambda_att,
            lambda_perceptual=config.lambda_perceptual,
        )
        if not g_bundle.is_finite():
            _dump_diagnostics(config, "adversarial", step, g_bundle.components, gen, disc)
            raise NonFiniteLoss(step, f"generator loss non-finite at step {step}")
        opt_g.zero_grad()
        opt_d.zero_grad()
        g_bundle.total.backward()
        opt_g.step()
        opt_g.zero_grad()
        opt_d.zero_grad()

        rows.append(
            {
                "step": step,
                "stage": "adversarial",
                "adv_d": d_bundle.components["adv_d"],
                "att": g_bundle.components["att"],
                "cnt": g_bundle.components["cnt"],
                "vgg": g_bundle.components["vgg"],
                "adv_g": g_bundle.components["adv_g"],
            }
        )
        if progress and (step % config.log_every == 0 or step == 1):
            progress(
                f"adv step {step}/{config.adv_iters} "
                f"D={d_bundle.value:.4f} G={g_bundle.value:.4f}"
            )

    return Checkpoint(
        generator=gen,
        discriminator=disc,
        stage="adversarial",
        step=config.adv_iters,
        config_hash=config.config_hash(),
        train_config=config.to_dict(),
        attribute_kind=data.attribute_kind,
        data_provenance=data.provenance,
        metrics_tail=rows[-METRICS_TAIL:],
    )


# --- full pipeline -------------------------------------------------------------------


def run_full(config: TrainConfig, data: DatasetManifest, progress=None) -> tuple[Checkpoint | None, Checkpoint]:
    """Both stages honoring ablation flags; writes checkpoints and losses.csv."""
    rows: list[dict] = []
    recon_ckpt = None
    init = None
    if not config.skip_recon_stage:
        recon_ckpt = train_reconstruction(config, data, log_rows=rows, progress=progress)
        init = inherit_weights(recon_ckpt, config)
    adv_ckpt = train_adversarial(config, data, init=init, log_rows=rows, progress=progress)
    if config.checkpoint_dir:
        out = Path(config.checkpoint_dir)
        out.mkdir(parents=True, exist_ok=True)
        if recon_ckpt is not None:
            save_checkpoint(recon_ckpt, out / "recon")
        save_checkpoint(adv_ckpt, out / "adversarial")
        write_loss_csv(rows, out / "losses.csv")
    return recon_ckpt, adv_ckpt


def write_loss_csv(rows: list[dict], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOSS_COLUMNS, restval="")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


# --- checkpoint persistence -------------------------------------------------------------


def _save_group(group: ParamGroup, path: Path) -> None:
    np.savez(path, **{k: t.data for k, t in group.items()})


def _load_group(path: Path, expected_shapes: dict | None = None) -> ParamGroup:
    if not path.exists():
        raise CorruptCheckpoint(f"missing tensor file {path}")
    blobs = np.load(path)
    group = ParamGroup()
    for k in blobs.files:
        group[k] = Tensor(blobs[k], requires_grad=True)
    if expected_shapes is not None:
        for k, shape in expected_shapes.items():
            if k not in group:
                raise CorruptCheckpoint(f"{path} lacks tensor {k!r}")
            if list(group[k].data.shape) != list(shape):
                raise CorruptCheckpoint(f"{path}: tensor {k!r} has shape {group[k].data.shape}, expected {shape}")
    return group


def save_checkpoint(ckpt: Checkpoint, directory: str | Path) -> None:
    """Atomic write: stage into a temp dir, then rename into place."""
    directory = Path(directory)
    tmp = directory.parent / f".{directory.name}.tmp-{os.getpid()}"
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    groups = {
        "image_encoder": ckpt.generator.image_encoder,
        "edge_encoder": ckpt.generator.edge_encoder,
        "decoder": ckpt.generator.decoder,
    }
    if ckpt.discriminator is not None:
        groups.update(
            disc_trunk=ckpt.discriminator.trunk,
            disc_realness=ckpt.discriminator.realness_head,
            disc_attribute=ckpt.discriminator.attribute_head,
        )
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "stage": ckpt.stage,
        "step": ckpt.step,
        "config_hash": ckpt.config_hash,
        "train_config": ckpt.train_config,
        "net_config": ckpt.generator.config.to_dict(),
        "attribute_kind": ckpt.attribute_kind,
        "data_provenance": ckpt.data_provenance,
        "metrics_tail": ckpt.metrics_tail,
        "has_discriminator": ckpt.discriminator is not None,
        "tensors": {gname: {k: list(t.data.shape) for k, t in g.items()} for gname, g in groups.items()},
    }
    (tmp / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    _save_group(ckpt.generator.image_encoder, tmp / "image_encoder.npz")
    _save_group(ckpt.generator.edge_encoder, tmp / "edge_encoder.npz")
    _save_group(ckpt.generator.decoder, tmp / "decoder.npz")
    if ckpt.discriminator is not None:
        _save_group(ckpt.discriminator.trunk, tmp / "disc_trunk.npz")
        _save_group(ckpt.discriminator.realness_head, tmp / "disc_realness.npz")
        _save_group(ckpt.discriminator.attribute_head, tmp / "disc_attribute.npz")
    if directory.exists():
        shutil.rmtree(directory)
    os.rename(tmp, directory)


def load_checkpoint(directory: str | Path) -> Checkpoint:
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise CorruptCheckpoint(f"{directory} has no meta.json")
    meta = json.loads(meta_path.read_text())
    try:
        config = TrainConfig.from_dict(meta["train_config"])
    except (TypeError, KeyError) as e:
        raise CorruptCheckpoint(f"unreadable train_config: {e}") from e
    if config.config_hash() != meta.get("config_hash"):
        raise CorruptCheckpoint(
            f"config hash mismatch: stored {meta.get('config_hash')!r} vs recomputed {config.config_hash()!r}"
        )
    net_cfg = NetConfig.from_dict(meta["net_config"])
    shapes = meta.get("tensors", {})
    gen = GeneratorParams(
        image_encoder=_load_group(directory / "image_encoder.npz", shapes.get("image_encoder")),
        edge_encoder=_load_group(directory / "edge_encoder.npz", shapes.get("edge_encoder")),
        decoder=_load_group(directory / "decoder.npz", shapes.get("decoder")),
        config=net_cfg,
    )
    disc = None
    if meta.get("has_discriminator"):
        disc = DiscriminatorParams(
            trunk=_load_group(directory / "disc_trunk.npz", shapes.get("disc_trunk")),
            realness_head=_load_group(directory / "disc_realness.npz", shapes.get("disc_realness")),
            attribute_head=_load_group(directory / "disc_attribute.npz", shapes.get("disc_attribute")),
            config=net_cfg,
        )
    return Checkpoint(
        generator=gen,
        discriminator=disc,
        stage=meta["stage"],
        step=int(meta["step"]),
        config_hash=meta["config_hash"],
        train_config=meta["train_config"],
        attribute_kind=meta.get("attribute_kind", "collar"),
        data_provenance=meta.get("data_provenance", "real"),
        metrics_tail=meta.get("metrics_tail", []),
    )
