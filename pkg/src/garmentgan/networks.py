"""Generator-side networks and the attribute-aware discriminator.

Everything is a pure function of (params, inputs). The generator is an
image encoder + edge encoder whose latents are channel-concatenated, then a
decoder whose shared transpose-conv trunk feeds two heads: a single-channel
sigmoid attention mask and a three-channel tanh color image. The final
output blends the color image into the masked input through the mask.

The discriminator shares one conv trunk between a least-squares realness
head and a per-class sigmoid attribute head.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from garmentgan import autodiff as ad
from garmentgan.autodiff import Tensor
from garmentgan.errors import ShapeMismatch
from garmentgan.layers import Adam, Conv, ParamGroup, ResBlock, apply_stack, init_stack, rng_for
from garmentgan.preprocess import EdgeMap, MaskedImage


@dataclass(frozen=True)
class NetConfig:
    image_size: int = 64
    base_channels: int = 64
    n_downsample: int = 2
    n_res_blocks: int = 4
    edge_channels: int = 1  # 3 under the rgb-input ablation
    disc_base_channels: int = 64
    disc_layers: int = 3
    class_count: int = 12

    @property
    def latent_channels(self) -> int:
        return self.base_channels * (2**self.n_downsample)

    @property
    def latent_size(self) -> int:
        return self.image_size // (2**self.n_downsample)

    def to_dict(self) -> dict:
        return {
            "image_size": self.image_size,
            "base_channels": self.base_channels,
            "n_downsample": self.n_downsample,
            "n_res_blocks": self.n_res_blocks,
            "edge_channels": self.edge_channels,
            "disc_base_channels": self.disc_base_channels,
            "disc_layers": self.disc_layers,
            "class_count": self.class_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        return cls(**d)


@dataclass
class GeneratorParams:
    image_encoder: ParamGroup
    edge_encoder: ParamGroup
    decoder: ParamGroup
    config: NetConfig

    def groups(self) -> dict[str, ParamGroup]:
        return {"image_encoder": self.image_encoder, "edge_encoder": self.edge_encoder, "decoder": self.decoder}

    def copy(self) -> "GeneratorParams":
        return GeneratorParams(self.image_encoder.copy(), self.edge_encoder.copy(), self.decoder.copy(), self.config)

    def all_finite(self) -> bool:
        return all(g.all_finite() for g in self.groups().values())

    def zero_grads(self) -> None:
        for g in self.groups().values():
            g.zero_grads()

    def equals(self, other: "GeneratorParams") -> bool:
        return all(self.groups()[k].equals(other.groups()[k]) for k in self.groups())


@dataclass
class DiscriminatorParams:
    trunk: ParamGroup
    realness_head: ParamGroup
    attribute_head: ParamGroup
    config: NetConfig

    def groups(self) -> dict[str, ParamGroup]:
        return {"trunk": self.trunk, "realness_head": self.realness_head, "attribute_head": self.attribute_head}

    def copy(self) -> "DiscriminatorParams":
        return DiscriminatorParams(self.trunk.copy(), self.realness_head.copy(), self.attribute_head.copy(), self.config)

    def all_finite(self) -> bool:
        return all(g.all_finite() for g in self.groups().values())

    def zero_grads(self) -> None:
        for g in self.groups().values():
            g.zero_grads()

    def equals(self, other: "DiscriminatorParams") -> bool:
        return all(self.groups()[k].equals(other.groups()[k]) for k in self.groups())


@dataclass(frozen=True)
class GeneratorOutput:
    mask: np.ndarray  # (H, W) in (0, 1)
    color: np.ndarray  # (3, H, W) in [-1, 1]
    composed: np.ndarray  # (3, H, W) in [-1, 1]


@dataclass(frozen=True)
class DiscriminatorOutput:
    realness: "Tensor | np.ndarray"  # (N,) raw least-squares scores
    attribute_probs: "Tensor | np.ndarray"  # (N, class_count) in (0, 1)
    features: list  # trunk activation stack, shallow to deep


# --- stack specs -------------------------------------------------------------------


def _encoder_specs(prefix: str, in_ch: int, cfg: NetConfig) -> list:
    specs = [Conv(f"{prefix}.stem", in_ch, cfg.base_channels, 3, 1, 1, norm=True, act="relu")]
    ch = cfg.base_channels
    for i in range(cfg.n_downsample):
        specs.append(Conv(f"{prefix}.down{i}", ch, ch * 2, 4, 2, 1, norm=True, act="relu"))
        ch *= 2
    for i in range(cfg.n_res_blocks):
        specs.append(ResBlock(f"{prefix}.res{i}", ch))
    return specs


def _decoder_trunk_specs(cfg: NetConfig) -> list:
    lat = cfg.latent_channels
    specs = [Conv("dec.fuse", 2 * lat, lat, 3, 1, 1, norm=True, act="relu")]
    ch = lat
    for i in range(cfg.n_downsample):
        specs.append(Conv(f"dec.up{i}", ch, ch // 2, 4, 2, 1, norm=True, act="relu", transpose=True))
        ch //= 2
    return specs


def _decoder_head_specs(cfg: NetConfig) -> tuple[Conv, Conv]:
    ch = cfg.latent_channels // (2**cfg.n_downsample)
    return (
        Conv("dec.mask_head", ch, 1, 3, 1, 1),
        Conv("dec.color_head", ch, 3, 3, 1, 1),
    )


def _disc_trunk_specs(cfg: NetConfig) -> list:
    specs = [Conv("disc.conv0", 3, cfg.disc_base_channels, 4, 2, 1, act="lrelu")]
    ch = cfg.disc_base_channels
    for i in range(1, cfg.disc_layers):
        nxt = min(ch * 2, 8 * cfg.disc_base_channels)
        specs.append(Conv(f"disc.conv{i}", ch, nxt, 4, 2, 1, act="lrelu"))
        ch = nxt
    return specs


def _disc_trunk_out_channels(cfg: NetConfig) -> int:
    ch = cfg.disc_base_channels
    for _ in range(1, cfg.disc_layers):
        ch = min(ch * 2, 8 * cfg.disc_base_channels)
    return ch


# --- initialization -----------------------------------------------------------------


def init_generator(cfg: NetConfig, seed: int, dtype=np.float32) -> GeneratorParams:
    image_encoder = init_stack(_encoder_specs("img", 3, cfg), rng_for(seed, "gen/image_encoder"), dtype)
    edge_encoder = init_stack(_encoder_specs("edge", cfg.edge_channels, cfg), rng_for(seed, "gen/edge_encoder"), dtype)
    decoder = init_stack(_decoder_trunk_specs(cfg) + list(_decoder_head_specs(cfg)), rng_for(seed, "gen/decoder"), dtype)
    return GeneratorParams(image_encoder, edge_encoder, decoder, cfg)


def init_discriminator(cfg: NetConfig, seed: int, dtype=np.float32) -> DiscriminatorParams:
    trunk = init_stack(_disc_trunk_specs(cfg), rng_for(seed, "disc/trunk"), dtype)
    ch = _disc_trunk_out_channels(cfg)
    realness = init_stack([Conv("disc.real", ch, 1, 4, 1, 1)], rng_for(seed, "disc/realness"), dtype)
    rng_att = rng_for(seed, "disc/attribute")
    attribute = ParamGroup()
    attribute["disc.att.w"] = Tensor(rng_att.normal(0.0, 0.02, size=(ch, cfg.class_count)).astype(dtype), requires_grad=True)
    attribute["disc.att.b"] = Tensor(np.zeros(cfg.class_count, dtype=dtype), requires_grad=True)
    return DiscriminatorParams(trunk, realness, attribute, cfg)


# --- input coercion -----------------------------------------------------------------


def _as_batch(x, channels: int, size: int, what: str) -> Tensor:
    if isinstance(x, MaskedImage):
        x = x.pixels
    elif isinstance(x, EdgeMap):
        x = x.grid[None]
    if isinstance(x, Tensor):
        t = x
    else:
        t = Tensor(np.asarray(x))
    data = t.data
    if data.ndim == 2 and channels == 1:
        data = data[None]
        t = Tensor(data, requires_grad=t.requires_grad)
    if t.data.ndim == 3:
        t = ad.reshape(t, (1,) + t.data.shape)
    if t.data.ndim != 4 or t.data.shape[1] != channels or t.data.shape[2] != size or t.data.shape[3] != size:
        raise ShapeMismatch(f"{what}: expected (N, {channels}, {size}, {size}), got {np.asarray(x).shape if not isinstance(x, Tensor) else x.data.shape}")
    return t


# --- generator ops -----------------------------------------------------------------


def encode_image(params: GeneratorParams, masked) -> Tensor:
    """Image-encoder latent, shape (N, latent_channels, s, s)."""
    cfg = params.config
    x = _as_batch(masked, 3, cfg.image_size, "encode_image")
    return apply_stack(_encoder_specs("img", 3, cfg), params.image_encoder, x)


def encode_edge(params: GeneratorParams, edge) -> Tensor:
    """Edge-encoder latent, same shape as the image latent."""
    cfg = params.config
    x = _as_batch(edge, cfg.edge_channels, cfg.image_size, "encode_edge")
    return apply_stack(_encoder_specs("edge", cfg.edge_channels, cfg), params.edge_encoder, x)


def decode(params: GeneratorParams, fused: Tensor) -> tuple[Tensor, Tensor]:
    """Decode fused latents into (mask, color): sigmoid 1-channel, tanh 3-channel."""
    cfg = params.config
    if isinstance(fused, np.ndarray):
        fused = Tensor(fused)
    expect = 2 * cfg.latent_channels
    if fused.data.ndim != 4 or fused.data.shape[1] != expect:
        raise ShapeMismatch(f"decode: expected (N, {expect}, s, s) fused latents, got {fused.data.shape}")
    trunk = apply_stack(_decoder_trunk_specs(cfg), params.decoder, fused)
    mask_spec, color_spec = _decoder_head_specs(cfg)
    mask = ad.sigmoid(apply_stack([mask_spec], params.decoder, trunk))
    color = ad.tanh(apply_stack([color_spec], params.decoder, trunk))
    return mask, color


def masked_blend(mask, color, masked):
    """Per-pixel convex blend: out = mask * color + (1 - mask) * base.

    Accepts Tensors (training) or arrays (eval); the mask broadcasts across
    the color channels. Where mask == 0 the base pixels pass through
    bit-for-bit; where mask == 1 the color image passes through.
    """
    if isinstance(masked, MaskedImage):
        masked = masked.pixels
    tensor_mode = any(isinstance(v, Tensor) for v in (mask, color, masked))
    if tensor_mode:
        m = mask if isinstance(mask, Tensor) else Tensor(np.asarray(mask))
        c = color if isinstance(color, Tensor) else Tensor(np.asarray(color))
        b = masked if isinstance(masked, Tensor) else Tensor(np.asarray(masked))
        _check_blend_shapes(m.data.shape, c.data.shape, b.data.shape)
        return ad.add(ad.mul(m, c), ad.mul(ad.add(1.0, ad.mul(m, -1.0)), b))
    m, c, b = np.asarray(mask), np.asarray(color), np.asarray(masked)
    if m.ndim == 2:
        m = m[None]
    _check_blend_shapes(m.shape, c.shape, b.shape)
    return m * c + (1.0 - m) * b


def _check_blend_shapes(ms, cs, bs):
    if cs != bs:
        raise ShapeMismatch(f"blend: color {cs} vs base {bs}")
    if ms[-2:] != cs[-2:]:
        raise ShapeMismatch(f"blend: mask spatial {ms} vs color {cs}")


def forward_edit_t(params: GeneratorParams, masked, edge) -> tuple[Tensor, Tensor, Tensor]:
    """Tensor-path forward: encode both inputs, concat, decode, blend."""
    img_lat = encode_image(params, masked)
    edge_lat = encode_edge(params, edge)
    fused = ad.concat([img_lat, edge_lat], axis=1)
    mask, color = decode(params, fused)
    base = _as_batch(masked, 3, params.config.image_size, "forward_edit")
    composed = masked_blend(mask, color, base)
    return mask, color, composed


def forward_edit(params: GeneratorParams, masked, edge) -> GeneratorOutput:
    """Single-image eval forward; returns arrays."""
    mask, color, composed = forward_edit_t(params, masked, edge)
    return GeneratorOutput(mask=mask.data[0, 0], color=color.data[0], composed=composed.data[0])


# --- discriminator ops ---------------------------------------------------------------


def discriminate_t(params: DiscriminatorParams, images) -> DiscriminatorOutput:
    """Tensor-path discriminator forward over a batch in [-1, 1]."""
    cfg = params.config
    x = _as_batch(images, 3, cfg.image_size, "discriminate")
    features: list[Tensor] = []
    trunk_out = apply_stack(_disc_trunk_specs(cfg), params.trunk, x, collect=features)
    real_map = apply_stack([Conv("disc.real", _disc_trunk_out_channels(cfg), 1, 4, 1, 1)], params.realness_head, trunk_out)
    realness = ad.reshape(ad.mean(real_map, axis=(1, 2, 3)), (-1,))
    pooled = ad.mean(trunk_out, axis=(2, 3))  # (N, C)
    logits = ad.add(ad.matmul(pooled, params.attribute_head["disc.att.w"]), params.attribute_head["disc.att.b"])
    probs = ad.sigmoid(logits)
    return DiscriminatorOutput(realness=realness, attribute_probs=probs, features=features)


def discriminate(params: DiscriminatorParams, images) -> DiscriminatorOutput:
    """Eval forward; returns arrays."""
    out = discriminate_t(params, images)
    return DiscriminatorOutput(
        realness=out.realness.data,
        attribute_probs=out.attribute_probs.data,
        features=[f.data for f in out.features],
    )


# --- optimizer helpers ----------------------------------------------------------------


class MultiGroupAdam:
    """One Adam per ParamGroup, stepped together (one network's optimizer)."""

    def __init__(self, groups: dict[str, ParamGroup], lr: float, betas=(0.5, 0.999)):
        self._opts = {name: Adam(g, lr, betas) for name, g in groups.items()}

    def step(self) -> None:
        for opt in self._opts.values():
            opt.step()

    def zero_grad(self) -> None:
        for opt in self._opts.values():
            opt.zero_grad()
