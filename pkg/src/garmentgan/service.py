"""HTTP service wrapping a frozen adversarial checkpoint for interactive edits.

Endpoints:
  POST /v1/edit    multipart: reference (file), target XOR edge (file),
                   options (JSON string) -> EditResult JSON, images base64
  GET  /v1/health  {status, checkpoint_hash, uptime_s}
  GET  /v1/model   {stage, image_size, attribute_kind, class_count, config_hash}

Error bodies are {"code", "message"}; 400 IMAGE_DECODE / ATTRIBUTE_SOURCE,
422 REGION_BOUNDS, 503 MODEL_NOT_LOADED. Requests run over read-only
parameters behind a bounded worker semaphore.
"""

from __future__ import annotations

import base64
import io
import json
import threading
import time
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from PIL import Image, UnidentifiedImageError
from starlette.datastructures import UploadFile

from garmentgan.errors import GarmentGanError
from garmentgan.networks import forward_edit_t
from garmentgan.preprocess import (
    RegionBox,
    denormalize,
    edge_network_input,
    extract_edges,
    mask_out,
    normalize,
    resize_bilinear,
    to_unit,
)
from garmentgan.training import Checkpoint, TrainConfig, load_checkpoint

DEFAULT_MAX_WORKERS = 2


@dataclass(frozen=True)
class EditOutputs:
    edited: np.ndarray  # (S, S, 3) uint8
    mask_preview: np.ndarray  # (S, S) uint8
    edge_preview: np.ndarray  # (S, S) uint8


class EditPipeline:
    """Deterministic edit path over a frozen checkpoint."""

    def __init__(self, ckpt: Checkpoint):
        self.ckpt = ckpt
        self.config = TrainConfig.from_dict(ckpt.train_config)
        self.size = ckpt.generator.config.image_size

    def default_region(self) -> RegionBox:
        # landmark-free serving default: top-center 40% box (collar area)
        s = self.size
        return RegionBox(round(0.30 * s), round(0.10 * s), round(0.70 * s), round(0.50 * s))

    def _resize_rgb(self, img: np.ndarray) -> np.ndarray:
        if img.shape[:2] == (self.size, self.size):
            return img
        out = np.stack(
            [resize_bilinear(img[:, :, c].astype(np.float64), self.size, self.size) for c in range(3)],
            axis=2,
        )
        return np.clip(np.round(out), 0, 255).astype(np.uint8)

    def _scale_region(self, region: tuple, src_shape: tuple) -> RegionBox:
        h, w = src_shape[:2]
        x0, y0, x1, y1 = region
        if not (x0 < x1 and y0 < y1):
            raise RegionBoundsError(f"degenerate region {region}")
        sx, sy = self.size / w, self.size / h
        try:
            box = RegionBox(int(np.floor(x0 * sx)), int(np.floor(y0 * sy)), int(np.ceil(x1 * sx)), int(np.ceil(y1 * sy)))
        except ValueError as e:
            raise RegionBoundsError(str(e)) from e
        if box.x1 > self.size or box.y1 > self.size or x0 < 0 or y0 < 0:
            raise RegionBoundsError(f"region {region} outside reference bounds {w}x{h}")
        return box

    def edit(
        self,
        reference: np.ndarray,
        target_image: np.ndarray | None = None,
        edge_map: np.ndarray | None = None,
        region: tuple | None = None,
        edge_backend: str | None = None,
        force_mask_zero: bool = False,
    ) -> EditOutputs:
        if (target_image is None) == (edge_map is None):
            raise AttributeSourceError("provide exactly one of target_image or edge_map")
        ref = self._resize_rgb(reference)
        box = self._scale_region(region, reference.shape) if region else self.default_region()
        norm = normalize(ref)
        masked = mask_out(norm, box, fill=0.0)

        if edge_map is not None:
            grid = edge_map.astype(np.float64)
            if grid.max() > 1.0:
                grid = grid / 255.0
            if grid.shape != (self.size, self.size):
                grid = resize_bilinear(grid, self.size, self.size)
            edge_input = np.clip(grid, 0.0, 1.0).astype(np.float32)[None]
        else:
            tgt = self._resize_rgb(target_image)
            backend = edge_backend or self.config.edge_backend
            full = extract_edges(to_unit(tgt), backend=backend, hed_weights=self.config.hed_weights)
            edge_input = edge_network_input(full, box, self.size, mode=self.config.edge_input_mode)

        mask_t, color_t, composed_t = forward_edit_t(self.ckpt.generator, masked.pixels[None], edge_input[None])
        if force_mask_zero:
            composed = masked.pixels
            mask = np.zeros((self.size, self.size), dtype=np.float32)
        else:
            composed = composed_t.data[0]
            mask = mask_t.data[0, 0]
        return EditOutputs(
            edited=denormalize(composed),
            mask_preview=np.clip(np.round(mask * 255.0), 0, 255).astype(np.uint8),
            edge_preview=np.clip(np.round(edge_input[0] * 255.0), 0, 255).astype(np.uint8),
        )


class AttributeSourceError(GarmentGanError):
    pass


class RegionBoundsError(GarmentGanError):
    pass


class ModelState:
    """Frozen model plus serving bookkeeping."""

    def __init__(self, ckpt: Checkpoint, max_workers: int = DEFAULT_MAX_WORKERS):
        self.pipeline = EditPipeline(ckpt)
        self.checkpoint_hash = ckpt.config_hash
        self.stage = ckpt.stage
        self.attribute_kind = ckpt.attribute_kind
        self.class_count = ckpt.generator.config.class_count
        self.image_size = ckpt.generator.config.image_size
        self.started = time.monotonic()
        self.semaphore = threading.Semaphore(max_workers)
        self.classifier = None
        if ckpt.data_provenance == "synthetic" and ckpt.attribute_kind == "collar":
            from garmentgan.metrics import OracleCollarClassifier

            self.classifier = OracleCollarClassifier(class_count=self.class_count, image_size=self.image_size)
        for group in ckpt.generator.groups().values():
            for t in group.tensors():
                t.data.flags.writeable = False

    def predict_type(self, edited: np.ndarray):
        if self.classifier is None:
            return None
        from garmentgan.data import COLLAR_TYPE_NAMES

        type_id = int(self.classifier.predict(edited[None])[0])
        return {"type_id": type_id, "type_name": COLLAR_TYPE_NAMES[type_id]}


def load_model_state(ckpt_dir: str, max_workers: int = DEFAULT_MAX_WORKERS) -> ModelState:
    ckpt = load_checkpoint(ckpt_dir)
    if ckpt.stage != "adversarial":
        raise GarmentGanError(f"serving requires an adversarial-stage checkpoint, got {ckpt.stage!r}")
    return ModelState(ckpt, max_workers)


def _png_bytes(arr: np.ndarray, mode: str = "RGB") -> bytes:
    buf = io.BytesIO()
    Image.fromarray(arr, mode=mode).save(buf, format="PNG")
    return buf.getvalue()


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def create_app(state: ModelState | None = None) -> FastAPI:
    """FastAPI app; state=None serves the 'loading' health state."""
    import os

    app = FastAPI(title="garment edit service", version="1")
    app.state.model = state
    app.add_middleware(
        CORSMiddleware,
        allow_origins=[os.environ.get("TAILOR_UI_ORIGIN", "*")],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def error(status: int, code: str, message: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"code": code, "message": message})

    def decode_rgb(data: bytes, what: str) -> np.ndarray:
        try:
            with Image.open(io.BytesIO(data)) as im:
                return np.asarray(im.convert("RGB"))
        except (UnidentifiedImageError, OSError, ValueError) as e:
            raise ImageDecodeError(f"{what}: {e}") from e

    def decode_gray(data: bytes, what: str) -> np.ndarray:
        try:
            with Image.open(io.BytesIO(data)) as im:
                return np.asarray(im.convert("L"))
        except (UnidentifiedImageError, OSError, ValueError) as e:
            raise ImageDecodeError(f"{what}: {e}") from e

    @app.post("/v1/edit")
    async def edit(request: Request):
        model: ModelState | None = app.state.model
        if model is None:
            return error(503, "MODEL_NOT_LOADED", "no checkpoint loaded")
        form = await request.form()
        reference = form.get("reference")
        target = form.get("target")
        edge = form.get("edge")
        options_raw = form.get("options")
        if not isinstance(reference, UploadFile):
            return error(400, "ATTRIBUTE_SOURCE", "multipart field 'reference' is required")
        has_target = isinstance(target, UploadFile)
        has_edge = isinstance(edge, UploadFile)
        if has_target == has_edge:
            return error(400, "ATTRIBUTE_SOURCE", "provide exactly one of 'target' or 'edge'")
        options = {}
        if options_raw:
            try:
                options = json.loads(options_raw if isinstance(options_raw, str) else await options_raw.read())
            except (json.JSONDecodeError, TypeError):
                return error(400, "OPTIONS_DECODE", "options must be a JSON object")

        t0 = time.perf_counter()
        try:
            ref_arr = decode_rgb(await reference.read(), "reference")
            tgt_arr = decode_rgb(await target.read(), "target") if has_target else None
            edge_arr = decode_gray(await edge.read(), "edge") if has_edge else None
        except ImageDecodeError as e:
            return error(400, "IMAGE_DECODE", str(e))

        region = options.get("region")
        if region is not None and (not isinstance(region, (list, tuple)) or len(region) != 4):
            return error(422, "REGION_BOUNDS", "region must be [x0, y0, x1, y1]")
        try:
            with model.semaphore:
                out = model.pipeline.edit(
                    ref_arr,
                    target_image=tgt_arr,
                    edge_map=edge_arr,
                    region=tuple(region) if region is not None else None,
                    edge_backend=options.get("edge_backend"),
                    force_mask_zero=bool(options.get("force_mask_zero", False)),
                )
        except RegionBoundsError as e:
            return error(422, "REGION_BOUNDS", str(e))
        except AttributeSourceError as e:
            return error(400, "ATTRIBUTE_SOURCE", str(e))
        except GarmentGanError as e:
            return error(400, "EDIT_FAILED", str(e))

        body = {
            "edited_image": _b64(_png_bytes(out.edited)),
            "predicted_type": model.predict_type(out.edited),
            "latency_ms": round((time.perf_counter() - t0) * 1000.0, 3),
        }
        if options.get("return_mask", True):
            body["mask_preview"] = _b64(_png_bytes(out.mask_preview, mode="L"))
        if options.get("return_edge", True):
            body["edge_preview"] = _b64(_png_bytes(out.edge_preview, mode="L"))
        return JSONResponse(content=body)

    @app.get("/v1/health")
    def health():
        model: ModelState | None = app.state.model
        if model is None:
            return {"status": "loading", "checkpoint_hash": "", "uptime_s": 0.0}
        return {
            "status": "ready",
            "checkpoint_hash": model.checkpoint_hash,
            "uptime_s": round(time.monotonic() - model.started, 3),
        }

    @app.get("/v1/model")
    def model_info():
        model: ModelState | None = app.state.model
        if model is None:
            return JSONResponse(status_code=503, content={"code": "MODEL_NOT_LOADED", "message": "no checkpoint loaded"})
        return {
            "stage": model.stage,
            "image_size": model.image_size,
            "attribute_kind": model.attribute_kind,
            "class_count": model.class_count,
            "config_hash": model.checkpoint_hash,
        }

    return app


class ImageDecodeError(GarmentGanError):
    pass
