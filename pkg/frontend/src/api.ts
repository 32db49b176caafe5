/**
 * Client for the edit service's /v1 API. The fetch implementation is
 * injectable so tests can run against a mocked transport.
 */

import type { Rect } from "./region.js";

export interface EditOptions {
  region?: Rect | null;
  returnMask?: boolean;
  returnEdge?: boolean;
}

export interface EditResult {
  editedPngB64: string;
  maskPngB64: string | null;
  edgePngB64: string | null;
  latencyMs: number;
}

export interface HealthInfo {
  status: string;
  checkpointHash: string;
  uptimeS: number;
}

export class ServiceError extends Error {
  readonly code: string;
  readonly status: number;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.code = code;
    this.status = status;
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export interface EditUpload {
  reference: Blob;
  /** exactly one of target (garment photo) or edge (sketch/edge map) */
  target?: Blob;
  edge?: Blob;
  options?: EditOptions;
}

async function parseError(resp: Response): Promise<ServiceError> {
  let code = "HTTP_" + resp.status;
  let message = resp.statusText;
  try {
    const body = (await resp.json()) as { code?: string; message?: string };
    if (body.code) code = body.code;
    if (body.message) message = body.message;
  } catch {
    // non-JSON error body: keep the status fallback
  }
  return new ServiceError(resp.status, code, message);
}

export class EditServiceClient {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(serviceUrl: string, fetchImpl?: FetchLike) {
    this.base = serviceUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  async health(): Promise<HealthInfo> {
    const resp = await this.fetchImpl(`${this.base}/v1/health`);
    if (!resp.ok) throw await parseError(resp);
    const body = (await resp.json()) as { status: string; checkpoint_hash: string; uptime_s: number };
    return { status: body.status, checkpointHash: body.checkpoint_hash, uptimeS: body.uptime_s };
  }

  async edit(upload: EditUpload): Promise<EditResult> {
    if ((upload.target === undefined) === (upload.edge === undefined)) {
      throw new ServiceError(0, "ATTRIBUTE_SOURCE", "provide exactly one of target or edge");
    }
    const form = new FormData();
    form.append("reference", upload.reference, "reference.png");
    if (upload.target) form.append("target", upload.target, "target.png");
    if (upload.edge) form.append("edge", upload.edge, "edge.png");
    const options: Record<string, unknown> = {
      return_mask: upload.options?.returnMask ?? true,
      return_edge: upload.options?.returnEdge ?? true,
    };
    if (upload.options?.region) {
      const r = upload.options.region;
      options.region = [r.x0, r.y0, r.x1, r.y1];
    }
    form.append("options", JSON.stringify(options));
    const resp = await this.fetchImpl(`${this.base}/v1/edit`, { method: "POST", body: form });
    if (!resp.ok) throw await parseError(resp);
    const body = (await resp.json()) as {
      edited_image: string;
      mask_preview?: string;
      edge_preview?: string;
      latency_ms: number;
    };
    return {
      editedPngB64: body.edited_image,
      maskPngB64: body.mask_preview ?? null,
      edgePngB64: body.edge_preview ?? null,
      latencyMs: body.latency_ms,
    };
  }
}

/** sha-256 hex digest of raw bytes (thumbnail identity for history entries). */
export async function sha256Hex(bytes: Uint8Array): Promise<string> {
  const digest = await crypto.subtle.digest("SHA-256", bytes.slice().buffer);
  return Array.from(new Uint8Array(digest))
    .map((b) => b.toString(16).padStart(2, "0"))
    .join("");
}

export function b64ToBytes(b64: string): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  return new Uint8Array(Buffer.from(b64, "base64"));
}
