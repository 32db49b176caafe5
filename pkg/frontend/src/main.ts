/**
 * DOM glue: renders SessionState, translates UI gestures into events, and
 * drives the edit client. All behavior lives in the pure modules; this file
 * only wires them to the page.
 */

import { b64ToBytes, EditServiceClient, ServiceError, sha256Hex } from "./api.js";
import type { Rect } from "./region.js";
import { SketchBuffer } from "./sketch.js";
import { canSubmit, initialState, reduce, SessionEvent, SessionState } from "./state.js";

const SERVICE_URL = new URLSearchParams(location.search).get("service") ?? "http://127.0.0.1:8020";
const SKETCH_SIZE = 256;

let state: SessionState = initialState(SERVICE_URL);
const client = new EditServiceClient(SERVICE_URL);
const sketch = new SketchBuffer(SKETCH_SIZE, SKETCH_SIZE);
let referenceBlob: Blob | null = null;
let attributeBlob: Blob | null = null;
let attributeIsEdge = false;

function dispatch(event: SessionEvent): void {
  state = reduce(state, event);
  render();
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function fileToHandle(file: File, kind: "image" | "edge") {
  const dataUrl: string = await new Promise((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () => resolve(String(reader.result));
    reader.onerror = () => reject(reader.error);
    reader.readAsDataURL(file);
  });
  return { id: `${file.name}-${file.size}`, name: file.name, dataUrl, kind };
}

function imageSize(dataUrl: string): Promise<{ width: number; height: number }> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve({ width: img.naturalWidth, height: img.naturalHeight });
    img.onerror = reject;
    img.src = dataUrl;
  });
}

async function onReferenceUpload(file: File): Promise<void> {
  const handle = await fileToHandle(file, "image");
  const size = await imageSize(handle.dataUrl);
  referenceBlob = file;
  dispatch({ type: "reference_picked", image: handle, width: size.width, height: size.height });
}

// --- built-in gallery: flat-color garments with distinct collar cutouts ------

const GALLERY_SIZE = 64;
const GALLERY_SPECS: { name: string; color: string; collar: "round" | "vee" | "square" }[] = [
  { name: "round red", color: "#a84545", collar: "round" },
  { name: "vee teal", color: "#3f8f8a", collar: "vee" },
  { name: "square plum", color: "#7a4f8f", collar: "square" },
  { name: "round olive", color: "#7f8f3f", collar: "round" },
  { name: "vee navy", color: "#3f5a8f", collar: "vee" },
  { name: "square rust", color: "#a86a33", collar: "square" },
];

function drawGallerySample(spec: (typeof GALLERY_SPECS)[number]): string {
  const s = GALLERY_SIZE;
  const canvas = document.createElement("canvas");
  canvas.width = s;
  canvas.height = s;
  const ctx = canvas.getContext("2d")!;
  ctx.fillStyle = "#e7e7eb";
  ctx.fillRect(0, 0, s, s);
  ctx.fillStyle = spec.color;
  ctx.strokeStyle = "#26262c";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.rect(0.17 * s, 0.22 * s, 0.66 * s, 0.73 * s);
  ctx.fill();
  ctx.stroke();
  ctx.fillStyle = "#e7e7eb";
  ctx.beginPath();
  const cx = s / 2;
  const y0 = 0.22 * s;
  if (spec.collar === "round") {
    ctx.ellipse(cx, y0, 0.15 * s, 0.16 * s, 0, 0, Math.PI);
  } else if (spec.collar === "vee") {
    ctx.moveTo(cx - 0.15 * s, y0);
    ctx.lineTo(cx + 0.15 * s, y0);
    ctx.lineTo(cx, y0 + 0.18 * s);
    ctx.closePath();
  } else {
    ctx.rect(cx - 0.15 * s, y0, 0.3 * s, 0.16 * s);
  }
  ctx.fill();
  ctx.stroke();
  return canvas.toDataURL("image/png");
}

async function dataUrlToBlob(dataUrl: string): Promise<Blob> {
  return (await fetch(dataUrl)).blob();
}

function setupGallery(): void {
  const pane = el<HTMLDivElement>("gallery");
  for (const spec of GALLERY_SPECS) {
    const dataUrl = drawGallerySample(spec);
    const cell = document.createElement("div");
    cell.className = "history-cell";
    const img = document.createElement("img");
    img.src = dataUrl;
    img.title = spec.name;
    const asRef = document.createElement("button");
    asRef.textContent = "reference";
    asRef.addEventListener("click", () => {
      void dataUrlToBlob(dataUrl).then((blob) => {
        referenceBlob = blob;
        dispatch({
          type: "reference_picked",
          image: { id: `gallery-${spec.name}`, name: spec.name, dataUrl, kind: "image" },
          width: GALLERY_SIZE,
          height: GALLERY_SIZE,
        });
      });
    });
    const asAttr = document.createElement("button");
    asAttr.textContent = "attribute";
    asAttr.addEventListener("click", () => {
      void dataUrlToBlob(dataUrl).then((blob) => {
        attributeBlob = blob;
        attributeIsEdge = false;
        dispatch({
          type: "attribute_picked",
          source: { id: `gallery-${spec.name}`, name: spec.name, dataUrl, kind: "image" },
        });
      });
    });
    cell.append(img, asRef, asAttr);
    pane.append(cell);
  }
}

async function onAttributeUpload(file: File): Promise<void> {
  const handle = await fileToHandle(file, "image");
  attributeBlob = file;
  attributeIsEdge = false;
  dispatch({ type: "attribute_picked", source: handle });
}

function useSketchAsAttribute(): void {
  const png = sketch.toPng();
  attributeBlob = new Blob([png.slice().buffer], { type: "image/png" });
  attributeIsEdge = true;
  const b64 = btoa(String.fromCharCode(...png));
  dispatch({
    type: "attribute_picked",
    source: { id: `sketch-${Date.now()}`, name: "sketch", dataUrl: `data:image/png;base64,${b64}`, kind: "edge" },
  });
}

async function submit(): Promise<void> {
  if (!canSubmit(state) || !referenceBlob || !attributeBlob) return;
  dispatch({ type: "edit_submitted" });
  try {
    const result = await client.edit({
      reference: referenceBlob,
      target: attributeIsEdge ? undefined : attributeBlob,
      edge: attributeIsEdge ? attributeBlob : undefined,
      options: { region: state.region },
    });
    const bytes = b64ToBytes(result.editedPngB64);
    dispatch({
      type: "edit_succeeded",
      entry: {
        id: `edit-${state.history.length + 1}`,
        editedPngB64: result.editedPngB64,
        maskPngB64: result.maskPngB64,
        edgePngB64: result.edgePngB64,
        latencyMs: result.latencyMs,
        thumbnailHash: await sha256Hex(bytes),
      },
    });
  } catch (err) {
    if (err instanceof ServiceError) {
      dispatch({ type: "edit_failed", code: err.code, message: err.message });
    } else {
      dispatch({ type: "edit_failed", code: "NETWORK", message: String(err) });
    }
  }
}

async function forkHistory(index: number): Promise<void> {
  const entry = state.history[index];
  if (!entry) return;
  const bytes = b64ToBytes(entry.editedPngB64);
  referenceBlob = new Blob([bytes.slice().buffer], { type: "image/png" });
  const size = await imageSize(`data:image/png;base64,${entry.editedPngB64}`);
  dispatch({ type: "history_forked", index, width: size.width, height: size.height });
}

// --- region drag on the reference preview ---------------------------------

let dragStart: { x: number; y: number } | null = null;

function setupRegionDrag(): void {
  const overlay = el<HTMLDivElement>("reference-pane");
  const toImageCoords = (ev: MouseEvent): { x: number; y: number } | null => {
    const img = el<HTMLImageElement>("reference-img");
    if (!img.naturalWidth || !state.referenceSize) return null;
    const bounds = img.getBoundingClientRect();
    const sx = state.referenceSize.width / bounds.width;
    const sy = state.referenceSize.height / bounds.height;
    return { x: (ev.clientX - bounds.left) * sx, y: (ev.clientY - bounds.top) * sy };
  };
  overlay.addEventListener("mousedown", (ev) => {
    dragStart = toImageCoords(ev);
  });
  overlay.addEventListener("mouseup", (ev) => {
    const end = toImageCoords(ev);
    if (dragStart && end) {
      const rect: Rect = { x0: dragStart.x, y0: dragStart.y, x1: end.x, y1: end.y };
      dispatch({ type: "region_adjusted", rect });
    }
    dragStart = null;
  });
}

// --- sketch canvas ----------------------------------------------------------

function setupSketch(): void {
  const canvas = el<HTMLCanvasElement>("sketch-canvas");
  canvas.width = SKETCH_SIZE;
  canvas.height = SKETCH_SIZE;
  const ctx = canvas.getContext("2d")!;
  let last: { x: number; y: number } | null = null;
  const paint = () => {
    const img = ctx.createImageData(SKETCH_SIZE, SKETCH_SIZE);
    for (let i = 0; i < sketch.pixels.length; i++) {
      const v = sketch.pixels[i];
      img.data[i * 4] = v;
      img.data[i * 4 + 1] = v;
      img.data[i * 4 + 2] = v;
      img.data[i * 4 + 3] = 255;
    }
    ctx.putImageData(img, 0, 0);
  };
  const coords = (ev: MouseEvent) => {
    const bounds = canvas.getBoundingClientRect();
    return {
      x: ((ev.clientX - bounds.left) / bounds.width) * SKETCH_SIZE,
      y: ((ev.clientY - bounds.top) / bounds.height) * SKETCH_SIZE,
    };
  };
  canvas.addEventListener("mousedown", (ev) => (last = coords(ev)));
  canvas.addEventListener("mousemove", (ev) => {
    if (!last) return;
    const next = coords(ev);
    sketch.stroke(last.x, last.y, next.x, next.y, 2);
    last = next;
    paint();
  });
  canvas.addEventListener("mouseup", () => (last = null));
  el<HTMLButtonElement>("sketch-clear").addEventListener("click", () => {
    sketch.clear();
    paint();
  });
  el<HTMLButtonElement>("sketch-use").addEventListener("click", useSketchAsAttribute);
  paint();
}

// --- rendering ----------------------------------------------------------------

function render(): void {
  const refImg = el<HTMLImageElement>("reference-img");
  refImg.src = state.reference?.dataUrl ?? "";
  el<HTMLSpanElement>("region-label").textContent = state.region
    ? `region (${state.region.x0}, ${state.region.y0}) - (${state.region.x1}, ${state.region.y1})`
    : "region: service default (top-center)";
  const attrImg = el<HTMLImageElement>("attribute-img");
  attrImg.src = state.attributeSource?.dataUrl ?? "";

  const submitBtn = el<HTMLButtonElement>("submit-btn");
  submitBtn.disabled = !canSubmit(state);
  submitBtn.textContent = state.pending ? "editing..." : "submit edit";

  const banner = el<HTMLDivElement>("banner");
  banner.hidden = state.banner === null;
  banner.textContent = state.banner ? `${state.banner.code}: ${state.banner.message}` : "";

  const historyPane = el<HTMLDivElement>("history");
  historyPane.replaceChildren(
    ...state.history.map((entry, index) => {
      const cell = document.createElement("div");
      cell.className = "history-cell";
      const img = document.createElement("img");
      img.src = `data:image/png;base64,${entry.editedPngB64}`;
      img.title = `${entry.id} (${entry.latencyMs.toFixed(1)} ms)`;
      img.addEventListener("click", () => dispatch({ type: "compare_selected", indices: [index] }));
      const fork = document.createElement("button");
      fork.textContent = "fork as reference";
      fork.addEventListener("click", () => void forkHistory(index));
      cell.append(img, fork);
      return cell;
    }),
  );

  const compare = el<HTMLDivElement>("compare");
  compare.replaceChildren(
    ...state.compare.flatMap((index) => {
      const entry = state.history[index];
      if (!entry) return [];
      return [entry.editedPngB64, entry.maskPngB64, entry.edgePngB64]
        .filter((b64): b64 is string => b64 !== null)
        .map((b64) => {
          const img = document.createElement("img");
          img.src = `data:image/png;base64,${b64}`;
          return img;
        });
    }),
  );
}

function setup(): void {
  el<HTMLInputElement>("reference-upload").addEventListener("change", (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (file) void onReferenceUpload(file);
  });
  el<HTMLInputElement>("attribute-upload").addEventListener("change", (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0];
    if (file) void onAttributeUpload(file);
  });
  el<HTMLButtonElement>("submit-btn").addEventListener("click", () => void submit());
  el<HTMLDivElement>("banner").addEventListener("click", () => dispatch({ type: "banner_dismissed" }));
  setupRegionDrag();
  setupSketch();
  setupGallery();
  void client
    .health()
    .then((h) => (el<HTMLSpanElement>("service-state").textContent = `${h.status} @ ${SERVICE_URL} (${h.checkpointHash.slice(0, 8)})`))
    .catch(() => (el<HTMLSpanElement>("service-state").textContent = `unreachable @ ${SERVICE_URL}`));
  render();
}

document.addEventListener("DOMContentLoaded", setup);
