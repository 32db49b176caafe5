"""Training objectives.

Six named components: recon (pixel L1), vgg (perceptual feature L1), att
(per-class sigmoid cross-entropy), cnt (discriminator-feature L1), adv_g and
adv_d (least-squares adversarial terms). L1 norms are mean-reduced so the
loss weights stay resolution-independent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from garmentgan import autodiff as ad
from garmentgan.autodiff import Tensor
from garmentgan.errors import ExtractorUnavailable, ShapeMismatch
from garmentgan.layers import ParamGroup, rng_for
from garmentgan.networks import DiscriminatorOutput, DiscriminatorParams, discriminate_t

PROB_EPS = 1e-7  # clamp inside logs

DEFAULT_LAMBDA_ATT = 0.1
DEFAULT_LAMBDA_PERCEPTUAL = 2.5


def _as_t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _same_shape(a: Tensor, b: Tensor, what: str) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeMismatch(f"{what}: {a.data.shape} vs {b.data.shape}")


@dataclass
class LossBundle:
    """A loss total plus its named components (raw values) and weights."""

    total: Tensor
    components: dict[str, float]
    weights: dict[str, float] = field(default_factory=dict)

    @property
    def value(self) -> float:
        return float(self.total.data)

    def weighted_sum(self) -> float:
        return sum(self.weights.get(k, 1.0) * v for k, v in self.components.items())

    def is_finite(self) -> bool:
        return np.isfinite(self.value) and all(np.isfinite(v) for v in self.components.values())


# --- pixel reconstruction ----------------------------------------------------------


def recon_loss(reconstructed, original) -> Tensor:
    """Mean absolute error over all pixels and channels."""
    a, b = _as_t(reconstructed), _as_t(original)
    _same_shape(a, b, "recon_loss")
    return ad.mean(ad.absolute(a - b))


# --- perceptual --------------------------------------------------------------------


@dataclass
class PerceptualExtractor:
    """Frozen feature extractor: seeded random conv stack or file-loaded VGG19.

    seeded_random_conv builds three conv+relu blocks with 2x2 average pooling
    between them from a fixed seed; layer_spec picks the tap point. The
    pretrained_vgg19 backend loads conv weights from an npz (keys conv{i}.w /
    conv{i}.b in VGG19 order) and taps after the named relu, pooling with 2x2
    max pools at the standard positions.
    """

    backend: str = "seeded_random_conv"
    layer_spec: str = "block3"
    seed: int = 2024
    weights_path: "str | Path | None" = None
    _params: ParamGroup | None = field(default=None, repr=False)

    BLOCK_CHANNELS = (16, 32, 64)
    VGG_LAYERS = (2, 2, 4, 4, 4)  # convs per vgg19 block
    VGG_CHANNELS = (64, 128, 256, 512, 512)

    def __post_init__(self):
        if self.backend == "seeded_random_conv":
            if self.layer_spec not in ("block1", "block2", "block3"):
                raise ValueError(f"unknown layer_spec {self.layer_spec!r}")
            rng = rng_for(self.seed, "perceptual/random_conv")
            params = ParamGroup()
            cin = 3
            for i, cout in enumerate(self.BLOCK_CHANNELS):
                w = rng.normal(0.0, np.sqrt(2.0 / (cin * 9)), size=(cout, cin, 3, 3))
                params[f"block{i + 1}.w"] = Tensor(w.astype(np.float32))
                params[f"block{i + 1}.b"] = Tensor(np.zeros(cout, dtype=np.float32))
                cin = cout
            self._params = params
        elif self.backend == "pretrained_vgg19":
            if self.weights_path is None or not Path(self.weights_path).exists():
                raise ExtractorUnavailable(f"pretrained_vgg19 needs a weights npz, got {self.weights_path!r}")
            blobs = np.load(self.weights_path)
            params = ParamGroup()
            for key in blobs.files:
                params[key] = Tensor(np.asarray(blobs[key]))
            self._params = params
        else:
            raise ValueError(f"unknown perceptual backend {self.backend!r}")

    def features(self, images) -> Tensor:
        x = _as_t(images)
        if x.data.ndim == 3:
            x = ad.reshape(x, (1,) + x.data.shape)
        if self.backend == "seeded_random_conv":
            stop = int(self.layer_spec[-1])
            for i in range(1, stop + 1):
                w = self._params[f"block{i}.w"]
                b = self._params[f"block{i}.b"]
                if w.data.dtype != x.data.dtype:
                    w = Tensor(w.data.astype(x.data.dtype))
                    b = Tensor(b.data.astype(x.data.dtype))
                x = ad.relu(ad.conv2d(x, w, b, stride=1, pad=1))
                if i < stop:
                    x = ad.avg_pool2x2(x)
            return x
        return self._vgg_features(x)

    def _vgg_features(self, x: Tensor) -> Tensor:
        # layer_spec like "relu3_2": tap after that conv's relu
        want_block = int(self.layer_spec[4])
        want_conv = int(self.layer_spec[6])
        idx = 0
        for b, n_convs in enumerate(self.VGG_LAYERS, start=1):
            for c in range(1, n_convs + 1):
                if f"conv{idx}.w" not in self._params:
                    raise ExtractorUnavailable(f"weights npz lacks conv{idx}.w")
                x = ad.relu(ad.conv2d(x, self._params[f"conv{idx}.w"], self._params[f"conv{idx}.b"], stride=1, pad=1))
                idx += 1
                if b == want_block and c == want_conv:
                    return x
            x = ad.max_pool2x2(x)
        raise ValueError(f"layer_spec {self.layer_spec!r} beyond vgg19 depth")


def perceptual_loss(extractor: PerceptualExtractor, edited, original) -> Tensor:
    """Mean absolute difference of frozen extractor features."""
    a, b = _as_t(edited), _as_t(original)
    _same_shape(a, b, "perceptual_loss")
    fa = extractor.features(a)
    fb = extractor.features(b).detach()
    return ad.mean(ad.absolute(fa - fb))


# --- attribute cross-entropy ----------------------------------------------------------


def attribute_loss(probs, target_onehot) -> Tensor:
    """Per-class binary cross-entropy, summed over classes, averaged over batch."""
    p = _as_t(probs)
    v = _as_t(target_onehot)
    if p.data.ndim == 1:
        p = ad.reshape(p, (1, -1))
    if v.data.ndim == 1:
        v = ad.reshape(v, (1, -1))
    if p.data.shape != v.data.shape:
        raise ShapeMismatch(f"attribute_loss: probs {p.data.shape} vs target {v.data.shape}")
    pc = ad.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    per_class = ad.mul(v, ad.log(pc)) + ad.mul(1.0 - v, ad.log(1.0 - pc))
    per_sample = ad.total_sum(per_class, axis=1)
    return ad.mul(ad.mean(per_sample), -1.0)


# --- discriminator-feature content loss ------------------------------------------------


def content_loss(d_params: DiscriminatorParams, edited, target_image) -> Tensor:
    """Mean absolute distance between conv-trunk features of target and edited.

    The target branch is detached: gradients flow only into `edited`.
    """
    fe = discriminate_t(d_params, edited).features[-1]
    ft = discriminate_t(d_params, target_image).features[-1].detach()
    return ad.mean(ad.absolute(fe - ft))


def content_loss_from_outputs(d_out_edited: DiscriminatorOutput, d_out_target: DiscriminatorOutput) -> Tensor:
    fe = d_out_edited.features[-1]
    ft = d_out_target.features[-1]
    if isinstance(ft, Tensor):
        ft = ft.detach()
    return ad.mean(ad.absolute(_as_t(fe) - _as_t(ft)))


# --- adversarial bundles ----------------------------------------------------------------


def generator_loss(
    d_out_fake: DiscriminatorOutput,
    d_out_target: DiscriminatorOutput,
    edited,
    target_onehot,
    original,
    extractor: PerceptualExtractor,
    lambda_att: float = DEFAULT_LAMBDA_ATT,
    lambda_perceptual: float = DEFAULT_LAMBDA_PERCEPTUAL,
) -> LossBundle:
    """Full generator objective:

    total = mean((1 - D(fake))^2) + cnt + lambda_att * att(fake, target onehot)
            + lambda_perceptual * vgg(fake, original)
    """
    realness = _as_t(d_out_fake.realness)
    adv = ad.mean(ad.pow_scalar(1.0 - realness, 2.0))
    cnt = content_loss_from_outputs(d_out_fake, d_out_target)
    att = attribute_loss(d_out_fake.attribute_probs, target_onehot)
    vgg = perceptual_loss(extractor, edited, original)
    total = adv + cnt + ad.mul(att, float(lambda_att)) + ad.mul(vgg, float(lambda_perceptual))
    components = {
        "adv_g": float(adv.data),
        "cnt": float(cnt.data),
        "att": float(att.data),
        "vgg": float(vgg.data),
    }
    weights = {"adv_g": 1.0, "cnt": 1.0, "att": float(lambda_att), "vgg": float(lambda_perceptual)}
    return LossBundle(total=total, components=components, weights=weights)


def discriminator_loss(
    d_out_fake: DiscriminatorOutput,
    d_out_real: DiscriminatorOutput,
    real_onehot,
) -> LossBundle:
    """Full discriminator objective:

    total = 0.5 * [mean(D(fake)^2) + mean((D(real) - 1)^2)] + att(real, real onehot)

    The fake branch must be detached by the caller (no generator gradient).
    """
    fake = _as_t(d_out_fake.realness)
    real = _as_t(d_out_real.realness)
    adv = ad.mul(ad.mean(ad.pow_scalar(fake, 2.0)) + ad.mean(ad.pow_scalar(real - 1.0, 2.0)), 0.5)
    att = attribute_loss(d_out_real.attribute_probs, real_onehot)
    total = adv + att
    components = {"adv_d": float(adv.data), "att": float(att.data)}
    weights = {"adv_d": 1.0, "att": 1.0}
    return LossBundle(total=total, components=components, weights=weights)
