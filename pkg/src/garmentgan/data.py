"""Dataset loading, synthetic garment generation, splits, and batch sampling.

Manifest format: JSONL, one record per line:
  {"image": "<relative path>", "attribute": {"kind": "collar"|"sleeve",
   "type_id": int, "type_name": str}, "landmarks": {"collar_left": [x, y], ...}}
Images are 3-channel 8-bit PNG. A `synthetic_spec.json` sidecar next to the
manifest marks synthetic provenance and records the generator inputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from garmentgan.errors import (
    BatchLargerThanDataset,
    DegenerateSplit,
    EmptyManifest,
    LandmarkOutOfBounds,
    MissingFile,
    SchemaViolation,
    UnwritableOutputDir,
)

COLLAR_CLASS_COUNT = 12
SLEEVE_CLASS_COUNT = 2

LANDMARK_NAMES = (
    "collar_left",
    "collar_right",
    "shoulder_left",
    "shoulder_right",
    "sleeve_end_left",
    "sleeve_end_right",
)

COLLAR_TYPE_NAMES = (
    "crew",
    "vee",
    "square",
    "lapel",
    "scoop",
    "boat",
    "keyhole",
    "deep-vee",
    "bib",
    "high-round",
    "sweetheart",
    "asym",
)

BG_COLOR = (231, 231, 235)
OUTLINE_COLOR = (38, 38, 44)


@dataclass(frozen=True)
class AnnotationRecord:
    image_path: Path
    attribute_kind: str  # "collar" | "sleeve"
    type_id: int
    type_name: str
    landmarks: dict[str, tuple[float, float]]
    image_size: tuple[int, int]  # (width, height)


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[AnnotationRecord, ...]
    attribute_kind: str
    class_count: int
    provenance: str  # "real" | "synthetic"
    seed: int | None = None
    root: Path | None = None

    def __len__(self) -> int:
        return len(self.records)

    def type_ids(self) -> np.ndarray:
        return np.array([r.type_id for r in self.records], dtype=np.int64)

    def present_types(self) -> list[int]:
        return sorted({r.type_id for r in self.records})


@dataclass(frozen=True)
class SyntheticSpec:
    image_size: int = 64
    n_images: int = 64
    n_collar_shapes: int = 3
    palette_size: int = 6


def encode_onehot(type_id: int, class_count: int) -> np.ndarray:
    """One-hot vector for a class index."""
    if not 0 <= type_id < class_count:
        raise ValueError(f"type_id {type_id} outside 0..{class_count - 1}")
    v = np.zeros(class_count, dtype=np.float32)
    v[type_id] = 1.0
    return v


def class_count_for(kind: str) -> int:
    return COLLAR_CLASS_COUNT if kind == "collar" else SLEEVE_CLASS_COUNT


# --- manifest IO ---------------------------------------------------------------


def load_image_rgb(path: Path, strict: bool = True) -> np.ndarray:
    """Decode an image to (H, W, 3) uint8. strict rejects non-3-channel files."""
    if not Path(path).exists():
        raise MissingFile(str(path))
    with Image.open(path) as im:
        if strict and im.mode != "RGB":
            raise SchemaViolation(0, "image", f"{path} is mode {im.mode}, expected RGB")
        return np.asarray(im.convert("RGB"))


def _parse_record(obj: dict, lineno: int, manifest_dir: Path) -> AnnotationRecord:
    if not isinstance(obj, dict):
        raise SchemaViolation(lineno, "record", "not a JSON object")
    image_rel = obj.get("image")
    if not isinstance(image_rel, str) or not image_rel:
        raise SchemaViolation(lineno, "image", "missing or not a string")
    attr = obj.get("attribute")
    if not isinstance(attr, dict):
        raise SchemaViolation(lineno, "attribute", "missing or not an object")
    kind = attr.get("kind")
    if kind not in ("collar", "sleeve"):
        raise SchemaViolation(lineno, "attribute.kind", f"got {kind!r}")
    type_id = attr.get("type_id")
    if not isinstance(type_id, int) or isinstance(type_id, bool):
        raise SchemaViolation(lineno, "attribute.type_id", "missing or not an integer")
    bound = class_count_for(kind)
    if not 0 <= type_id < bound:
        raise SchemaViolation(lineno, "attribute.type_id", f"{type_id} outside 0..{bound - 1} for {kind}")
    type_name = attr.get("type_name")
    if not isinstance(type_name, str):
        raise SchemaViolation(lineno, "attribute.type_name", "missing or not a string")
    raw_marks = obj.get("landmarks")
    if not isinstance(raw_marks, dict) or not raw_marks:
        raise SchemaViolation(lineno, "landmarks", "missing or empty")

    image_path = (manifest_dir / image_rel).resolve()
    if not image_path.exists():
        raise MissingFile(f"line {lineno}: image {image_path}")
    with Image.open(image_path) as im:
        if im.mode != "RGB":
            raise SchemaViolation(lineno, "image", f"{image_rel} is mode {im.mode}, expected RGB")
        width, height = im.size

    landmarks: dict[str, tuple[float, float]] = {}
    for name, xy in raw_marks.items():
        if name not in LANDMARK_NAMES:
            raise SchemaViolation(lineno, f"landmarks.{name}", "unknown landmark name")
        if not (isinstance(xy, (list, tuple)) and len(xy) == 2 and all(isinstance(v, (int, float)) for v in xy)):
            raise SchemaViolation(lineno, f"landmarks.{name}", "expected [x, y]")
        x, y = float(xy[0]), float(xy[1])
        if not (0 <= x < width and 0 <= y < height):
            raise LandmarkOutOfBounds(f"line {lineno}: {name}=({x}, {y}) outside {width}x{height}")
        landmarks[name] = (x, y)

    return AnnotationRecord(
        image_path=image_path,
        attribute_kind=kind,
        type_id=type_id,
        type_name=type_name,
        landmarks=landmarks,
        image_size=(width, height),
    )


def load_manifest(path: str | Path) -> DatasetManifest:
    """Load and validate a JSONL manifest. Invalid records raise, never drop."""
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    manifest_dir = path.parent
    records: list[AnnotationRecord] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaViolation(lineno, "json", str(e)) from e
            records.append(_parse_record(obj, lineno, manifest_dir))

    kind = records[0].attribute_kind if records else "collar"
    for lineno, rec in enumerate(records, start=1):
        if rec.attribute_kind != kind:
            raise SchemaViolation(lineno, "attribute.kind", f"mixed kinds {rec.attribute_kind!r} vs {kind!r}")

    provenance = "real"
    seed = None
    class_count = class_count_for(kind)
    sidecar = manifest_dir / "synthetic_spec.json"
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        provenance = "synthetic"
        seed = meta.get("seed")
        class_count = int(meta.get("n_collar_shapes", class_count))
    for lineno, rec in enumerate(records, start=1):
        if rec.type_id >= class_count:
            raise SchemaViolation(lineno, "attribute.type_id", f"{rec.type_id} outside declared class count {class_count}")

    return DatasetManifest(
        records=tuple(records),
        attribute_kind=kind,
        class_count=class_count,
        provenance=provenance,
        seed=seed,
        root=manifest_dir,
    )


# --- split / sampling ------------------------------------------------------------


def split_dataset(manifest: DatasetManifest, train_fraction: float, seed: int) -> tuple[DatasetManifest, DatasetManifest]:
    """Deterministic disjoint train/test split; floor on the train side."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(manifest.records)
    if n == 0:
        raise EmptyManifest("cannot split an empty manifest")
    n_train = math.floor(n * train_fraction)
    if n_train == 0 or n_train == n:
        raise DegenerateSplit(f"split {n_train}/{n - n_train} of {n} records leaves one side empty")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])

    def subset(idx) -> DatasetManifest:
        return DatasetManifest(
            records=tuple(manifest.records[i] for i in idx),
            attribute_kind=manifest.attribute_kind,
            class_count=manifest.class_count,
            provenance=manifest.provenance,
            seed=manifest.seed,
            root=manifest.root,
        )

    return subset(train_idx), subset(test_idx)


def filter_types(manifest: DatasetManifest, drop_type: int) -> DatasetManifest:
    """Manifest without records of one type (leave-one-out protocol)."""
    kept = tuple(r for r in manifest.records if r.type_id != drop_type)
    return DatasetManifest(
        records=kept,
        attribute_kind=manifest.attribute_kind,
        class_count=manifest.class_count,
        provenance=manifest.provenance,
        seed=manifest.seed,
        root=manifest.root,
    )


def sample_batch(manifest: DatasetManifest, batch_size: int, rng: np.random.Generator) -> list[AnnotationRecord]:
    """Uniform sample without replacement, reproducible per rng state."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    n = len(manifest.records)
    if batch_size > n:
        raise BatchLargerThanDataset(f"batch {batch_size} > dataset {n}")
    idx = rng.choice(n, size=batch_size, replace=False)
    return [manifest.records[i] for i in idx]


# --- synthetic geometry ------------------------------------------------------------
# The notch geometry is canonical per (type_id, image size): the generator draws
# with it and the oracle classifier re-derives it, so stored labels are sound by
# construction.


def _grid(size: int) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0:size, 0:size]
    return xs.astype(np.float64), ys.astype(np.float64)


def torso_frame(size: int) -> dict[str, int]:
    """Canonical torso frame: neckline row and horizontal extent."""
    return {
        "y_neck": round(0.22 * size),
        "x_left": round(0.17 * size),
        "x_right": round(0.83 * size),
        "y_bottom": round(0.95 * size),
        "bevel": round(0.06 * size),
    }


def collar_notch_mask(type_id: int, size: int) -> np.ndarray:
    """Boolean mask of the class's collar cutout (True = background shows)."""
    if not 0 <= type_id < COLLAR_CLASS_COUNT:
        raise ValueError(f"collar type_id {type_id} outside 0..{COLLAR_CLASS_COUNT - 1}")
    xs, ys = _grid(size)
    frame = torso_frame(size)
    y0 = frame["y_neck"]
    cx = size / 2.0
    w = 0.30 * size  # canonical notch width
    d = 0.16 * size  # canonical notch depth
    below = ys >= y0

    def ellipse(cx_, w_, d_):
        return below & (((xs - cx_) / (w_ / 2.0)) ** 2 + ((ys - y0) / d_) ** 2 <= 1.0)

    def vee(w_, d_):
        # triangle (cx-w_/2, y0), (cx+w_/2, y0), (cx, y0+d_)
        t = np.clip((ys - y0) / d_, 0.0, 1.0)
        half = (w_ / 2.0) * (1.0 - t)
        return below & (ys <= y0 + d_) & (np.abs(xs - cx) <= half)

    def box(w_, d_):
        return below & (ys < y0 + d_) & (np.abs(xs - cx) <= w_ / 2.0)

    if type_id == 0:  # crew: round notch
        return ellipse(cx, w, d)
    if type_id == 1:  # vee
        return vee(w, d * 1.15)
    if type_id == 2:  # square
        return box(w, d)
    if type_id == 3:  # lapel: wide deep wedge
        return vee(w * 1.55, d * 1.45)
    if type_id == 4:  # scoop: wide shallow curve
        return ellipse(cx, w * 1.5, d * 0.62)
    if type_id == 5:  # boat: very wide, very shallow slab
        return box(w * 1.8, d * 0.3)
    if type_id == 6:  # keyhole: small round + slit
        slit = below & (ys < y0 + d * 1.8) & (np.abs(xs - cx) <= 0.035 * size)
        return ellipse(cx, w * 0.8, d * 0.7) | slit
    if type_id == 7:  # deep vee
        return vee(w, d * 1.9)
    if type_id == 8:  # bib: deep square
        return box(w * 0.75, d * 1.6)
    if type_id == 9:  # high round: small notch
        return ellipse(cx, w * 0.66, d * 0.5)
    if type_id == 10:  # sweetheart: two lobes
        return ellipse(cx - w / 4.0, w * 0.62, d * 0.95) | ellipse(cx + w / 4.0, w * 0.62, d * 0.95)
    # asym: diagonal cut from left corner down to the right
    t = np.clip((xs - (cx - w / 2.0)) / w, 0.0, 1.0)
    return below & (xs >= cx - w / 2.0) & (xs <= cx + w / 2.0) & (ys <= y0 + d * 1.25 * t)


def collar_landmarks(type_id: int, size: int) -> dict[str, tuple[float, float]]:
    # class-independent placement spanning the whole collar zone (left at the
    # neckline, right at the zone's lower-right corner): their bounding box
    # covers the deepest cutout, and a class-specific box would leak the
    # label through the masked region's extent
    frame = torso_frame(size)
    y0 = float(frame["y_neck"])
    cx = size / 2.0
    half = 0.29 * size
    return {
        "collar_left": (cx - half, y0),
        "collar_right": (cx + half, y0 + 0.32 * size),
        "shoulder_left": (float(frame["x_left"]), y0),
        "shoulder_right": (float(frame["x_right"] - 1), y0),
    }


def _erode_once(mask: np.ndarray) -> np.ndarray:
    h, w = mask.shape
    p = np.pad(mask, 1, constant_values=False)
    out = np.ones_like(mask)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            out &= p[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
    return out


def palette_colors(palette_size: int) -> np.ndarray:
    """Evenly-spaced flat garment colors, distinct from the background."""
    import colorsys

    colors = []
    for i in range(palette_size):
        hue = i / palette_size
        r, g, b = colorsys.hsv_to_rgb(hue, 0.58, 0.62)
        colors.append((round(r * 255), round(g * 255), round(b * 255)))
    return np.array(colors, dtype=np.uint8)


def draw_garment(size: int, type_id: int, color: np.ndarray, jitter: tuple[int, int, int] = (0, 0, 0)) -> np.ndarray:
    """Rasterize one garment: flat torso, beveled shoulders, collar cutout, 2-px outline."""
    frame = torso_frame(size)
    dxl, dxr, dyb = jitter
    xs, ys = _grid(size)
    xl, xr = frame["x_left"] + dxl, frame["x_right"] + dxr
    yb = frame["y_bottom"] + dyb
    y0, bev = frame["y_neck"], frame["bevel"]
    torso = (xs >= xl) & (xs < xr) & (ys >= y0) & (ys < yb)
    torso &= (xs - xl) + (ys - y0) >= bev  # beveled left shoulder corner
    torso &= (xr - 1 - xs) + (ys - y0) >= bev  # beveled right shoulder corner
    garment = torso & ~collar_notch_mask(type_id, size)
    outline = garment & ~_erode_once(_erode_once(garment))

    img = np.empty((size, size, 3), dtype=np.uint8)
    img[:, :] = BG_COLOR
    img[garment] = color
    img[outline] = OUTLINE_COLOR
    return img


def generate_synthetic(spec: SyntheticSpec, seed: int, out_dir: str | Path) -> DatasetManifest:
    """Write a deterministic synthetic collar dataset and return its manifest."""
    if spec.n_collar_shapes > COLLAR_CLASS_COUNT:
        raise ValueError(f"n_collar_shapes {spec.n_collar_shapes} > {COLLAR_CLASS_COUNT}")
    if spec.image_size < 32:
        raise ValueError(f"image_size {spec.image_size} < 32")
    out_dir = Path(out_dir)
    try:
        (out_dir / "images").mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write_probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as e:
        raise UnwritableOutputDir(f"{out_dir}: {e}") from e

    rng = np.random.default_rng(seed)
    palette = palette_colors(spec.palette_size)
    lines = []
    for i in range(spec.n_images):
        type_id = i % spec.n_collar_shapes  # round-robin guarantees class coverage
        color = palette[int(rng.integers(0, len(palette)))]
        jitter = tuple(int(v) for v in rng.integers(-2, 3, size=3))
        img = draw_garment(spec.image_size, type_id, color, jitter)
        rel = f"images/img_{i:05d}.png"
        Image.fromarray(img).save(out_dir / rel)
        marks = collar_landmarks(type_id, spec.image_size)
        lines.append(
            json.dumps(
                {
                    "image": rel,
                    "attribute": {"kind": "collar", "type_id": type_id, "type_name": COLLAR_TYPE_NAMES[type_id]},
                    "landmarks": {k: [v[0], v[1]] for k, v in marks.items()},
                },
                sort_keys=True,
            )
        )

    (out_dir / "manifest.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    sidecar = {
        "image_size": spec.image_size,
        "n_images": spec.n_images,
        "n_collar_shapes": spec.n_collar_shapes,
        "palette_size": spec.palette_size,
        "seed": seed,
        "generator_version": 1,
    }
    (out_dir / "synthetic_spec.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return load_manifest(out_dir / "manifest.jsonl")
