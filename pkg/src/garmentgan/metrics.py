"""Evaluation: SSIM / PSNR / classification error, full-set evaluation, and the
leave-one-type-out protocol.

SSIM follows the standard single-scale formulation (11x11 Gaussian window,
sigma 1.5, K1=0.01, K2=0.03, 8-bit dynamic range), averaged over channels.
PSNR uses the 255 peak convention; identical images report inf, capped at
100 dB when aggregated into reports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from garmentgan import autodiff as ad
from garmentgan.autodiff import Tensor
from garmentgan.data import DatasetManifest, collar_notch_mask, load_image_rgb, torso_frame
from garmentgan.errors import ClassifierUnavailable, InsufficientClasses, ShapeMismatch
from garmentgan.layers import Adam, Conv, ParamGroup, apply_stack, init_stack, rng_for
from garmentgan.networks import forward_edit_t
from garmentgan.preprocess import denormalize
from garmentgan.training import Checkpoint, TrainConfig, prepare_dataset, run_full

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
PSNR_CAP_DB = 100.0


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


_SSIM_KERNEL = _gaussian_window()


def _ssim_channel_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-window SSIM map over valid 11x11 Gaussian windows."""
    wa = sliding_window_view(a, (SSIM_WINDOW, SSIM_WINDOW))
    wb = sliding_window_view(b, (SSIM_WINDOW, SSIM_WINDOW))
    k = _SSIM_KERNEL
    mu_a = np.tensordot(wa, k, axes=([2, 3], [0, 1]))
    mu_b = np.tensordot(wb, k, axes=([2, 3], [0, 1]))
    ea2 = np.tensordot(wa * wa, k, axes=([2, 3], [0, 1]))
    eb2 = np.tensordot(wb * wb, k, axes=([2, 3], [0, 1]))
    eab = np.tensordot(wa * wb, k, axes=([2, 3], [0, 1]))
    var_a = ea2 - mu_a**2
    var_b = eb2 - mu_b**2
    cov = eab - mu_a * mu_b
    c1 = (SSIM_K1 * 255.0) ** 2
    c2 = (SSIM_K2 * 255.0) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return num / den


def _ssim_channel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean(_ssim_channel_map(a, b)))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean SSIM between two images in 8-bit range; channel-averaged."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"ssim: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        return _ssim_channel(a, b)
    if a.ndim != 3:
        raise ShapeMismatch(f"ssim expects (H, W) or (H, W, C), got {a.shape}")
    return float(np.mean([_ssim_channel(a[:, :, c], b[:, :, c]) for c in range(a.shape[2])]))


def ssim_outside_region(a: np.ndarray, b: np.ndarray, region) -> float:
    """Mean SSIM over windows that do not overlap the region box at all.

    region has inclusive-exclusive pixel bounds (x0, y0, x1, y1); a window
    anchored at (i, j) spans i..i+10 x j..j+10.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"ssim: {a.shape} vs {b.shape}")
    h, w = a.shape[:2]
    n_i, n_j = h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1
    ii, jj = np.mgrid[0:n_i, 0:n_j]
    overlaps = (ii <= region.y1 - 1) & (ii + SSIM_WINDOW - 1 >= region.y0) & (jj <= region.x1 - 1) & (jj + SSIM_WINDOW - 1 >= region.x0)
    keep = ~overlaps
    if not keep.any():
        raise ValueError("region covers every SSIM window")
    channels = [a[..., c] for c in range(a.shape[2])] if a.ndim == 3 else [a]
    channels_b = [b[..., c] for c in range(b.shape[2])] if b.ndim == 3 else [b]
    vals = [float(np.mean(_ssim_channel_map(ca, cb)[keep])) for ca, cb in zip(channels, channels_b)]
    return float(np.mean(vals))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10 * log10(255^2 / MSE); inf for identical inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"psnr: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(255.0**2 / mse)


# --- attribute classifiers ----------------------------------------------------------


class OracleCollarClassifier:
    """Geometric classifier for synthetic garments.

    Re-derives the collar shape by comparing the background-revealed notch
    region against each class's canonical cutout mask; valid only for images
    drawn by (or edited from) the synthetic generator at the same size.
    """

    backend = "synthetic_oracle"

    def __init__(self, class_count: int, image_size: int):
        self.class_count = class_count
        self.image_size = image_size
        frame = torso_frame(image_size)
        templates = np.stack([collar_notch_mask(k, image_size) for k in range(class_count)])
        ys, xs = np.nonzero(templates.any(axis=0))
        pad = max(2, image_size // 32)
        self._y0 = max(frame["y_neck"], ys.min() - pad)
        self._y1 = min(image_size, ys.max() + 1 + pad)
        self._x0 = max(0, xs.min() - pad)
        self._x1 = min(image_size, xs.max() + 1 + pad)
        self._templates = templates[:, self._y0 : self._y1, self._x0 : self._x1].astype(np.float64)
        self._frame = frame

    def _notch_map(self, image: np.ndarray) -> np.ndarray:
        img = image.astype(np.float64)
        s = self.image_size
        c = 6
        corners = np.concatenate(
            [
                img[:c, :c].reshape(-1, 3),
                img[:c, -c:].reshape(-1, 3),
                img[-c:, :c].reshape(-1, 3),
                img[-c:, -c:].reshape(-1, 3),
            ]
        )
        bg = np.median(corners, axis=0)
        # torso color from rows safely below the deepest canonical notch
        y_torso = min(self._y1 + 2, s - 4)
        patch = img[y_torso : min(y_torso + 6, s), int(0.35 * s) : int(0.65 * s)].reshape(-1, 3)
        torso = np.median(patch, axis=0)
        window = img[self._y0 : self._y1, self._x0 : self._x1]
        d_bg = np.linalg.norm(window - bg, axis=2)
        d_torso = np.linalg.norm(window - torso, axis=2)
        return (d_bg < d_torso).astype(np.float64)

    def predict(self, images: np.ndarray) -> np.ndarray:
        """images: (N, H, W, 3) uint8 -> (N,) class indices."""
        images = np.asarray(images)
        if images.ndim == 3:
            images = images[None]
        out = np.empty(len(images), dtype=np.int64)
        for i, img in enumerate(images):
            if img.shape[0] != self.image_size or img.shape[1] != self.image_size:
                raise ShapeMismatch(f"oracle expects {self.image_size}px images, got {img.shape}")
            notch = self._notch_map(img)
            scores = np.mean(np.abs(self._templates - notch[None]), axis=(1, 2))
            out[i] = int(np.argmin(scores))
        return out


class TrainedCnnClassifier:
    """Small supervised convnet attribute classifier with a fixed recipe."""

    backend = "trained_cnn"

    SPECS_NAME = "clf"

    def __init__(self, params: ParamGroup, class_count: int, image_size: int, base_channels: int = 16):
        self.params = params
        self.class_count = class_count
        self.image_size = image_size
        self.base_channels = base_channels

    @classmethod
    def _specs(cls, base: int) -> list:
        return [
            Conv("clf.conv0", 3, base, 4, 2, 1, act="lrelu"),
            Conv("clf.conv1", base, base * 2, 4, 2, 1, act="lrelu"),
            Conv("clf.conv2", base * 2, base * 4, 4, 2, 1, act="lrelu"),
        ]

    def _logits(self, images_norm: np.ndarray) -> Tensor:
        x = Tensor(images_norm)
        feat = apply_stack(self._specs(self.base_channels), self.params, x)
        pooled = ad.mean(feat, axis=(2, 3))
        return ad.add(ad.matmul(pooled, self.params["clf.head.w"]), self.params["clf.head.b"])

    def predict(self, images: np.ndarray) -> np.ndarray:
        """images: (N, H, W, 3) uint8 -> (N,) argmax class indices."""
        images = np.asarray(images)
        if images.ndim == 3:
            images = images[None]
        norm = np.stack([(img.astype(np.float32) / 127.5 - 1.0).transpose(2, 0, 1) for img in images])
        return np.argmax(self._logits(norm).data, axis=1)

    def save(self, path: str | Path) -> None:
        arrays = {k: t.data for k, t in self.params.items()}
        arrays["__meta__"] = np.array([self.class_count, self.image_size, self.base_channels], dtype=np.int64)
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "TrainedCnnClassifier":
        path = Path(path)
        if not path.exists():
            raise ClassifierUnavailable(f"classifier file {path} not found")
        blobs = np.load(path)
        meta = blobs["__meta__"]
        params = ParamGroup()
        for k in blobs.files:
            if k != "__meta__":
                params[k] = Tensor(blobs[k], requires_grad=True)
        return cls(params, class_count=int(meta[0]), image_size=int(meta[1]), base_channels=int(meta[2]))


def train_attribute_classifier(
    manifest: DatasetManifest,
    image_size: int = 64,
    iters: int = 300,
    batch_size: int = 16,
    lr: float = 1e-3,
    seed: int = 0,
    base_channels: int = 16,
) -> TrainedCnnClassifier:
    """Fixed supervised recipe: lrelu conv stack + GAP + linear, sigmoid BCE."""
    from garmentgan.losses import attribute_loss

    rng_init = rng_for(seed, "classifier/init")
    params = init_stack(TrainedCnnClassifier._specs(base_channels), rng_init, np.float32)
    head_rng = rng_for(seed, "classifier/head")
    params["clf.head.w"] = Tensor(
        head_rng.normal(0.0, 0.02, size=(base_channels * 4, manifest.class_count)).astype(np.float32), requires_grad=True
    )
    params["clf.head.b"] = Tensor(np.zeros(manifest.class_count, dtype=np.float32), requires_grad=True)
    clf = TrainedCnnClassifier(params, manifest.class_count, image_size, base_channels)

    images = []
    onehots = []
    for rec in manifest.records:
        img = load_image_rgb(rec.image_path)
        images.append((img.astype(np.float32) / 127.5 - 1.0).transpose(2, 0, 1))
        v = np.zeros(manifest.class_count, dtype=np.float32)
        v[rec.type_id] = 1.0
        onehots.append(v)
    images = np.stack(images)
    onehots = np.stack(onehots)

    opt = Adam(params, lr, betas=(0.9, 0.999))
    rng_batch = rng_for(seed, "classifier/batch")
    n = len(images)
    for _ in range(iters):
        idx = rng_batch.choice(n, size=min(batch_size, n), replace=False)
        logits = clf._logits(images[idx])
        loss = attribute_loss(ad.sigmoid(logits), onehots[idx])
        params.zero_grads()
        loss.backward()
        opt.step()
        params.zero_grads()
    return clf


def classification_error(edited_images: np.ndarray, requested: np.ndarray, classifier) -> float:
    """Percent of edited images whose classified type differs from the request."""
    if classifier is None:
        raise ClassifierUnavailable("no attribute classifier provided")
    requested = np.asarray(requested)
    preds = classifier.predict(edited_images)
    if preds.shape != requested.shape:
        raise ShapeMismatch(f"classifier returned {preds.shape}, requested {requested.shape}")
    wrong = int(np.sum(preds != requested))
    return 100.0 * wrong / len(requested)


# --- reports -------------------------------------------------------------------------


@dataclass
class MetricsReport:
    per_pair: dict  # "src->tgt" -> {"ce", "ssim", "psnr", "n"}
    aggregate: dict  # {"ce", "ssim", "psnr"}
    n_samples: int
    checkpoint_ref: str

    def to_dict(self) -> dict:
        return {
            "per_pair": self.per_pair,
            "aggregate": self.aggregate,
            "n_samples": self.n_samples,
            "checkpoint_ref": self.checkpoint_ref,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def _cap_psnr(v: float) -> float:
    return min(v, PSNR_CAP_DB)


def _evaluate_items(ckpt: Checkpoint, items, config: TrainConfig, classifier) -> MetricsReport:
    """items: list of (reference PreparedRecord, target PreparedRecord)."""
    from garmentgan.training import _attribute_input, _masked_pixels

    rows = []
    for ref, tgt in items:
        masked = _masked_pixels(ref)
        edge = _attribute_input(tgt, config, None)
        _, _, composed = forward_edit_t(ckpt.generator, Tensor(masked[None]), Tensor(edge[None]))
        edited = denormalize(composed.data[0])
        rows.append(
            {
                "src": ref.record.type_id,
                "tgt": tgt.record.type_id,
                "edited": edited,
                "ssim": ssim(edited, ref.image),
                "psnr": psnr(edited, ref.image),
            }
        )

    edited_stack = np.stack([r["edited"] for r in rows])
    requested = np.array([r["tgt"] for r in rows])
    preds = classifier.predict(edited_stack)
    for r, p in zip(rows, preds):
        r["correct"] = bool(p == r["tgt"])

    per_pair: dict[str, dict] = {}
    for r in rows:
        key = f"{r['src']}->{r['tgt']}"
        bucket = per_pair.setdefault(key, {"n": 0, "wrong": 0, "ssim_sum": 0.0, "psnr_sum": 0.0})
        bucket["n"] += 1
        bucket["wrong"] += 0 if r["correct"] else 1
        bucket["ssim_sum"] += r["ssim"]
        bucket["psnr_sum"] += _cap_psnr(r["psnr"])
    pair_out = {
        key: {
            "ce": 100.0 * b["wrong"] / b["n"],
            "ssim": b["ssim_sum"] / b["n"],
            "psnr": b["psnr_sum"] / b["n"],
            "n": b["n"],
        }
        for key, b in per_pair.items()
    }
    n = len(rows)
    aggregate = {
        "ce": 100.0 * sum(b["wrong"] for b in per_pair.values()) / n,
        "ssim": sum(b["ssim_sum"] for b in per_pair.values()) / n,
        "psnr": sum(b["psnr_sum"] for b in per_pair.values()) / n,
    }
    return MetricsReport(
        per_pair=pair_out,
        aggregate=aggregate,
        n_samples=n,
        checkpoint_ref=f"{ckpt.stage}@{ckpt.step}:{ckpt.config_hash}",
    )


def evaluate(ckpt: Checkpoint, test: DatasetManifest, classifier, seed: int = 0) -> MetricsReport:
    """Edit every test reference toward a random different-type target; score."""
    if len(test) == 0:
        raise InsufficientClasses("test manifest is empty")
    config = TrainConfig.from_dict(ckpt.train_config)
    prepared = prepare_dataset(test, config)
    by_type: dict[int, list[int]] = {}
    for i, p in enumerate(prepared):
        by_type.setdefault(p.record.type_id, []).append(i)
    if len(by_type) < 2:
        raise InsufficientClasses(f"need >= 2 types to draw targets, found {sorted(by_type)}")
    rng = rng_for(seed, "eval/targets")
    items = []
    for p in prepared:
        candidates = [i for t, idxs in by_type.items() if t != p.record.type_id for i in idxs]
        items.append((p, prepared[candidates[int(rng.integers(0, len(candidates)))]]))
    return _evaluate_items(ckpt, items, config, classifier)


def one_out_protocol(
    config: TrainConfig,
    data: DatasetManifest,
    held_type: int,
    classifier,
    train_fraction: float = 0.8,
) -> dict:
    """Train with and without one type; compare held-type-targeted edits."""
    from garmentgan.data import filter_types, split_dataset

    present = data.present_types()
    if held_type not in present:
        raise InsufficientClasses(f"held type {held_type} absent from data (types {present})")
    if len(present) - 1 < 2:
        raise InsufficientClasses(f"need >= 2 types besides {held_type}, found {present}")

    train, test = split_dataset(data, train_fraction, seed=config.seed)
    one_out_train = filter_types(train, held_type)
    if not any(r.type_id == held_type for r in test.records):
        raise InsufficientClasses(f"test split has no held-type {held_type} records to target")

    _, full_ckpt = run_full(config, train)
    _, oneout_ckpt = run_full(config, one_out_train)

    prepared = prepare_dataset(test, config)
    held_idx = [i for i, p in enumerate(prepared) if p.record.type_id == held_type]
    refs = [p for p in prepared if p.record.type_id != held_type]
    rng = rng_for(config.seed, "oneout/targets")
    items = [(ref, prepared[held_idx[int(rng.integers(0, len(held_idx)))]]) for ref in refs]

    return {
        "full": _evaluate_items(full_ckpt, items, config, classifier),
        "one_out": _evaluate_items(oneout_ckpt, items, config, classifier),
        "held_type": held_type,
    }
