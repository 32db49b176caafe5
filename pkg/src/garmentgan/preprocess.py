"""Preprocessing: edge maps, attribute-region masking, geometric augmentation.

Pixel conventions: 8-bit images are (H, W, 3) uint8; normalized images are
(3, H, W) float32 in [-1, 1]; edge maps are (H, W) float32 in [0, 1].
All functions are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from garmentgan.data import AnnotationRecord
from garmentgan.errors import MissingBackendWeights, MissingLandmark, ShapeMismatch

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T
EDGE_THRESHOLD = 0.25  # on gradient magnitude normalized to [0, 1]

REQUIRED_LANDMARKS = {
    "collar": ("collar_left", "collar_right"),
    "sleeve": ("shoulder_left", "shoulder_right", "sleeve_end_left", "sleeve_end_right"),
}


@dataclass(frozen=True)
class EdgeMap:
    grid: np.ndarray  # (H, W) float32 in [0, 1]

    def __post_init__(self):
        g = self.grid
        if g.ndim != 2:
            raise ShapeMismatch(f"edge map must be 2-D, got {g.shape}")


@dataclass(frozen=True)
class RegionBox:
    x0: int
    y0: int
    x1: int
    y1: int  # inclusive-exclusive bounds

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate region {self}")
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError(f"negative region origin {self}")

    def clipped(self, width: int, height: int) -> "RegionBox":
        return RegionBox(max(0, self.x0), max(0, self.y0), min(width, self.x1), min(height, self.y1))

    def validate_for(self, width: int, height: int) -> None:
        if self.x1 > width or self.y1 > height:
            raise ValueError(f"region {self} exceeds {width}x{height}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0


@dataclass(frozen=True)
class MaskedImage:
    pixels: np.ndarray  # (3, H, W) float32 in [-1, 1]
    region: RegionBox


@dataclass(frozen=True)
class GeoParams:
    rotation: float  # degrees
    translation: tuple[float, float]  # (dx, dy) pixels
    scale: float


@dataclass(frozen=True)
class GeoRanges:
    rotation: tuple[float, float] = (-10.0, 10.0)
    translation: tuple[float, float] = (-3.2, 3.2)  # pixels (5% of a 64 side)
    scale: tuple[float, float] = (0.9, 1.1)

    def __post_init__(self):
        for lo, hi in (self.rotation, self.translation, self.scale):
            if lo > hi:
                raise ValueError(f"malformed range ({lo}, {hi})")

    @classmethod
    def for_image_size(cls, size: int, translation_frac: float = 0.05) -> "GeoRanges":
        t = translation_frac * size
        return cls(translation=(-t, t))


# --- normalization ---------------------------------------------------------------


def normalize(image: np.ndarray) -> np.ndarray:
    """(H, W, 3) uint8 -> (3, H, W) float32 in [-1, 1]."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeMismatch(f"expected (H, W, 3) image, got {image.shape}")
    x = image.astype(np.float32) / 127.5 - 1.0
    return np.ascontiguousarray(x.transpose(2, 0, 1))


def denormalize(pixels: np.ndarray) -> np.ndarray:
    """(3, H, W) float32 in [-1, 1] -> (H, W, 3) uint8."""
    if pixels.ndim != 3 or pixels.shape[0] != 3:
        raise ShapeMismatch(f"expected (3, H, W) array, got {pixels.shape}")
    x = (np.asarray(pixels, dtype=np.float32) + 1.0) * 127.5
    return np.clip(np.round(x), 0, 255).astype(np.uint8).transpose(1, 2, 0)


def to_unit(image: np.ndarray) -> np.ndarray:
    """(H, W, 3) uint8 -> (H, W, 3) float64 in [0, 1]."""
    return image.astype(np.float64) / 255.0


# --- edge extraction ---------------------------------------------------------------


def _replicate_pad1(a: np.ndarray) -> np.ndarray:
    return np.pad(a, 1, mode="edge")


def _conv3x3_same(a: np.ndarray, k: np.ndarray) -> np.ndarray:
    p = _replicate_pad1(a)
    h, w = a.shape
    out = np.zeros_like(a)
    for i in range(3):
        for j in range(3):
            out += k[i, j] * p[i : i + h, j : j + w]
    return out


def extract_edges(
    image: np.ndarray,
    backend: str = "deterministic_gradient",
    hed_weights: str | Path | None = None,
) -> EdgeMap:
    """Edge map from an image in [0, 1] per channel, shape (H, W, 3).

    deterministic_gradient: Sobel magnitude + fixed threshold, binary output,
    bit-reproducible. hed_pretrained: runs a conv pipeline loaded from an npz
    weights file (keys layer{i}.w / layer{i}.b, 3x3 stride-1 convs with ReLU,
    then fuse.w / fuse.b 1x1 + sigmoid).
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeMismatch(f"expected (H, W, 3) image in [0,1], got {image.shape}")
    if backend == "deterministic_gradient":
        lum = 0.299 * image[:, :, 0] + 0.587 * image[:, :, 1] + 0.114 * image[:, :, 2]
        gx = _conv3x3_same(lum, SOBEL_X)
        gy = _conv3x3_same(lum, SOBEL_Y)
        mag = np.hypot(gx, gy) / 4.0  # max |sobel| response for unit range is 4
        grid = (mag >= EDGE_THRESHOLD).astype(np.float32)
        return EdgeMap(grid)
    if backend == "hed_pretrained":
        if hed_weights is None or not Path(hed_weights).exists():
            raise MissingBackendWeights(f"hed_pretrained requires a weights file, got {hed_weights!r}")
        return _hed_forward(image, Path(hed_weights))
    raise ValueError(f"unknown edge backend {backend!r}")


def _hed_forward(image: np.ndarray, weights_path: Path) -> EdgeMap:
    from garmentgan import autodiff as ad

    blobs = np.load(weights_path)
    x = ad.Tensor(image.transpose(2, 0, 1)[None].astype(np.float32))
    i = 0
    while f"layer{i}.w" in blobs:
        x = ad.relu(ad.conv2d(x, ad.Tensor(blobs[f"layer{i}.w"]), ad.Tensor(blobs[f"layer{i}.b"]), stride=1, pad=1))
        i += 1
    if "fuse.w" not in blobs:
        raise MissingBackendWeights(f"{weights_path} lacks fuse.w")
    x = ad.sigmoid(ad.conv2d(x, ad.Tensor(blobs["fuse.w"]), ad.Tensor(blobs["fuse.b"]), stride=1, pad=0))
    return EdgeMap(np.clip(x.data[0, 0], 0.0, 1.0).astype(np.float32))


# --- attribute region / masking ------------------------------------------------------


def attribute_region(record: AnnotationRecord, margin: int) -> RegionBox:
    """Axis-aligned bounds of the attribute landmarks, expanded and clipped."""
    required = REQUIRED_LANDMARKS[record.attribute_kind]
    missing = [name for name in required if name not in record.landmarks]
    if missing:
        raise MissingLandmark(f"{record.attribute_kind} record lacks {missing}")
    xs = [record.landmarks[n][0] for n in required]
    ys = [record.landmarks[n][1] for n in required]
    width, height = record.image_size
    x0 = max(0, int(math.floor(min(xs))) - margin)
    y0 = max(0, int(math.floor(min(ys))) - margin)
    x1 = min(width, int(math.ceil(max(xs))) + margin)
    y1 = min(height, int(math.ceil(max(ys))) + margin)
    if x1 <= x0:
        x1 = x0 + 1
    if y1 <= y0:
        y1 = y0 + 1
    return RegionBox(x0, y0, x1, y1)


def mask_out(image: np.ndarray, region: RegionBox, fill: float = 0.0) -> MaskedImage:
    """Fill the region with a constant; pixels outside stay bit-identical."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise ShapeMismatch(f"expected (3, H, W) normalized image, got {image.shape}")
    h, w = image.shape[1], image.shape[2]
    region.validate_for(w, h)
    out = image.copy()
    out[:, region.y0 : region.y1, region.x0 : region.x1] = np.asarray(fill, dtype=image.dtype)
    return MaskedImage(out, region)


# --- geometric transforms -------------------------------------------------------------


def _bilinear_sample(grid: np.ndarray, src_x: np.ndarray, src_y: np.ndarray, fill: float = 0.0) -> np.ndarray:
    """Sample grid at fractional coordinates; out-of-frame reads the fill value."""
    h, w = grid.shape
    x0 = np.floor(src_x).astype(np.int64)
    y0 = np.floor(src_y).astype(np.int64)
    fx = src_x - x0
    fy = src_y - y0

    def at(yy, xx):
        inside = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
        v = np.full(xx.shape, fill, dtype=np.float64)
        v[inside] = grid[yy[inside], xx[inside]]
        return v

    v00 = at(y0, x0)
    v01 = at(y0, x0 + 1)
    v10 = at(y0 + 1, x0)
    v11 = at(y0 + 1, x0 + 1)
    top = v00 * (1.0 - fx) + v01 * fx
    bot = v10 * (1.0 - fx) + v11 * fx
    return top * (1.0 - fy) + bot * fy


def geo_transfer(edge: EdgeMap, params: GeoParams) -> EdgeMap:
    """Scale about center, rotate about center, then translate; bilinear, zero fill."""
    grid = edge.grid.astype(np.float64)
    h, w = grid.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    # invert: p_src = S^-1 R^-1 (p_dst - c - t) + c
    theta = math.radians(params.rotation)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    dx, dy = params.translation
    qx = xs - cx - dx
    qy = ys - cy - dy
    rx = cos_t * qx + sin_t * qy  # R^-1 = R(-theta)
    ry = -sin_t * qx + cos_t * qy
    src_x = rx / params.scale + cx
    src_y = ry / params.scale + cy
    out = _bilinear_sample(grid, src_x, src_y, fill=0.0)
    return EdgeMap(np.clip(out, 0.0, 1.0).astype(np.float32))


def warp_normalized(pixels: np.ndarray, params: GeoParams, fill: float = 0.0) -> np.ndarray:
    """geo_transfer analog for (C, H, W) normalized images (rgb-input ablation)."""
    h, w = pixels.shape[1], pixels.shape[2]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    theta = math.radians(params.rotation)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    dx, dy = params.translation
    qx = xs - cx - dx
    qy = ys - cy - dy
    src_x = (cos_t * qx + sin_t * qy) / params.scale + cx
    src_y = (-sin_t * qx + cos_t * qy) / params.scale + cy
    out = np.empty_like(pixels, dtype=np.float64)
    for c in range(pixels.shape[0]):
        out[c] = _bilinear_sample(pixels[c].astype(np.float64), src_x, src_y, fill=fill)
    return np.clip(out, -1.0, 1.0).astype(np.float32)


def sample_geo_params(rng: np.random.Generator, ranges: GeoRanges) -> GeoParams:
    """Uniform draw within the configured ranges; reproducible per rng state."""
    rot = float(rng.uniform(*ranges.rotation))
    tx = float(rng.uniform(*ranges.translation))
    ty = float(rng.uniform(*ranges.translation))
    scale = float(rng.uniform(*ranges.scale))
    return GeoParams(rotation=rot, translation=(tx, ty), scale=scale)


def identity_geo() -> GeoParams:
    return GeoParams(rotation=0.0, translation=(0.0, 0.0), scale=1.0)


# --- resizing / crops -------------------------------------------------------------------


def resize_bilinear(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a 2-D map (align_corners=False convention)."""
    h, w = grid.shape
    ys, xs = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    src_x = (xs + 0.5) * (w / out_w) - 0.5
    src_y = (ys + 0.5) * (h / out_h) - 0.5
    # clamp so border pixels replicate instead of bleeding fill
    src_x = np.clip(src_x, 0.0, w - 1.0)
    src_y = np.clip(src_y, 0.0, h - 1.0)
    return _bilinear_sample(grid.astype(np.float64), src_x, src_y)


def crop_resize(grid: np.ndarray, region: RegionBox, out_size: int) -> np.ndarray:
    """Crop a 2-D map to the region and resize the crop to out_size x out_size."""
    region.validate_for(grid.shape[1], grid.shape[0])
    crop = grid[region.y0 : region.y1, region.x0 : region.x1]
    return resize_bilinear(crop, out_size, out_size)


def edge_network_input(edge: EdgeMap, region: RegionBox, out_size: int, mode: str = "region_crop") -> np.ndarray:
    """Edge-encoder input: the attribute-region crop (default) or the full map."""
    if mode == "region_crop":
        return crop_resize(edge.grid, region, out_size).astype(np.float32)[None]
    if mode == "full":
        if edge.grid.shape != (out_size, out_size):
            return resize_bilinear(edge.grid, out_size, out_size).astype(np.float32)[None]
        return edge.grid.astype(np.float32)[None]
    raise ValueError(f"unknown edge input mode {mode!r}")
