/**
 * DOM glue: renders SessionState, translates UI gestures into events, and
 * drives the edit client. All behavior lives in the pure modules; this file
 * only wires them to the page.
 */
import { b64ToBytes, EditServiceClient, ServiceError, sha256Hex } from "./api.js";
import { SketchBuffer } from "./sketch.js";
import { canSubmit, initialState, reduce } from "./state.js";
const SERVICE_URL = new URLSearchParams(location.search).get("service") ?? "http://127.0.0.1:8020";
const SKETCH_SIZE = 256;
let state = initialState(SERVICE_URL);
const client = new EditServiceClient(SERVICE_URL);
const sketch = new SketchBuffer(SKETCH_SIZE, SKETCH_SIZE);
let referenceBlob = null;
let attributeBlob = null;
let attributeIsEdge = false;
function dispatch(event) {
    state = reduce(state, event);
    render();
}
function el(id) {
    const node = document.getElementById(id);
    if (!node)
        throw new Error(`missing element #${id}`);
    return node;
}
async function fileToHandle(file, kind) {
    const dataUrl = await new Promise((resolve, reject) => {
        const reader = new FileReader();
        reader.onload = () => resolve(String(reader.result));
        reader.onerror = () => reject(reader.error);
        reader.readAsDataURL(file);
    });
    return { id: `${file.name}-${file.size}`, name: file.name, dataUrl, kind };
}
function imageSize(dataUrl) {
    return new Promise((resolve, reject) => {
        const img = new Image();
        img.onload = () => resolve({ width: img.naturalWidth, height: img.naturalHeight });
        img.onerror = reject;
        img.src = dataUrl;
    });
}
async function onReferenceUpload(file) {
    const handle = await fileToHandle(file, "image");
    const size = await imageSize(handle.dataUrl);
    referenceBlob = file;
    dispatch({ type: "reference_picked", image: handle, width: size.width, height: size.height });
}
async function onAttributeUpload(file) {
    const handle = await fileToHandle(file, "image");
    attributeBlob = file;
    attributeIsEdge = false;
    dispatch({ type: "attribute_picked", source: handle });
}
function useSketchAsAttribute() {
    const png = sketch.toPng();
    attributeBlob = new Blob([png.slice().buffer], { type: "image/png" });
    attributeIsEdge = true;
    const b64 = btoa(String.fromCharCode(...png));
    dispatch({
        type: "attribute_picked",
        source: { id: `sketch-${Date.now()}`, name: "sketch", dataUrl: `data:image/png;base64,${b64}`, kind: "edge" },
    });
}
async function submit() {
    if (!canSubmit(state) || !referenceBlob || !attributeBlob)
        return;
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
    }
    catch (err) {
        if (err instanceof ServiceError) {
            dispatch({ type: "edit_failed", code: err.code, message: err.message });
        }
        else {
            dispatch({ type: "edit_failed", code: "NETWORK", message: String(err) });
        }
    }
}
async function forkHistory(index) {
    const entry = state.history[index];
    if (!entry)
        return;
    const bytes = b64ToBytes(entry.editedPngB64);
    referenceBlob = new Blob([bytes.slice().buffer], { type: "image/png" });
    const size = await imageSize(`data:image/png;base64,${entry.editedPngB64}`);
    dispatch({ type: "history_forked", index, width: size.width, height: size.height });
}
// --- region drag on the reference preview ---------------------------------
let dragStart = null;
function setupRegionDrag() {
    const overlay = el("reference-pane");
    const toImageCoords = (ev) => {
        const img = el("reference-img");
        if (!img.naturalWidth || !state.referenceSize)
            return null;
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
            const rect = { x0: dragStart.x, y0: dragStart.y, x1: end.x, y1: end.y };
            dispatch({ type: "region_adjusted", rect });
        }
        dragStart = null;
    });
}
// --- sketch canvas ----------------------------------------------------------
function setupSketch() {
    const canvas = el("sketch-canvas");
    canvas.width = SKETCH_SIZE;
    canvas.height = SKETCH_SIZE;
    const ctx = canvas.getContext("2d");
    let last = null;
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
    const coords = (ev) => {
        const bounds = canvas.getBoundingClientRect();
        return {
            x: ((ev.clientX - bounds.left) / bounds.width) * SKETCH_SIZE,
            y: ((ev.clientY - bounds.top) / bounds.height) * SKETCH_SIZE,
        };
    };
    canvas.addEventListener("mousedown", (ev) => (last = coords(ev)));
    canvas.addEventListener("mousemove", (ev) => {
        if (!last)
            return;
        const next = coords(ev);
        sketch.stroke(last.x, last.y, next.x, next.y, 2);
        last = next;
        paint();
    });
    canvas.addEventListener("mouseup", () => (last = null));
    el("sketch-clear").addEventListener("click", () => {
        sketch.clear();
        paint();
    });
    el("sketch-use").addEventListener("click", useSketchAsAttribute);
    paint();
}
// --- rendering ----------------------------------------------------------------
function render() {
    const refImg = el("reference-img");
    refImg.src = state.reference?.dataUrl ?? "";
    el("region-label").textContent = state.region
        ? `region (${state.region.x0}, ${state.region.y0}) - (${state.region.x1}, ${state.region.y1})`
        : "region: service default (top-center)";
    const attrImg = el("attribute-img");
    attrImg.src = state.attributeSource?.dataUrl ?? "";
    const submitBtn = el("submit-btn");
    submitBtn.disabled = !canSubmit(state);
    submitBtn.textContent = state.pending ? "editing..." : "submit edit";
    const banner = el("banner");
    banner.hidden = state.banner === null;
    banner.textContent = state.banner ? `${state.banner.code}: ${state.banner.message}` : "";
    const historyPane = el("history");
    historyPane.replaceChildren(...state.history.map((entry, index) => {
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
    }));
    const compare = el("compare");
    compare.replaceChildren(...state.compare.flatMap((index) => {
        const entry = state.history[index];
        if (!entry)
            return [];
        return [entry.editedPngB64, entry.maskPngB64, entry.edgePngB64]
            .filter((b64) => b64 !== null)
            .map((b64) => {
            const img = document.createElement("img");
            img.src = `data:image/png;base64,${b64}`;
            return img;
        });
    }));
}
function setup() {
    el("reference-upload").addEventListener("change", (ev) => {
        const file = ev.target.files?.[0];
        if (file)
            void onReferenceUpload(file);
    });
    el("attribute-upload").addEventListener("change", (ev) => {
        const file = ev.target.files?.[0];
        if (file)
            void onAttributeUpload(file);
    });
    el("submit-btn").addEventListener("click", () => void submit());
    el("banner").addEventListener("click", () => dispatch({ type: "banner_dismissed" }));
    setupRegionDrag();
    setupSketch();
    void client
        .health()
        .then((h) => (el("service-state").textContent = `${h.status} @ ${SERVICE_URL} (${h.checkpointHash.slice(0, 8)})`))
        .catch(() => (el("service-state").textContent = `unreachable @ ${SERVICE_URL}`));
    render();
}
document.addEventListener("DOMContentLoaded", setup);
