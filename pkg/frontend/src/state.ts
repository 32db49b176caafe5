/**
 * Session state and the pure reducer driving the design loop:
 * pick a reference, pick an attribute source (image or sketch), drag the
 * edit region, submit, inspect results, fork a result as the next reference.
 *
 * The reducer never mutates its input; replaying an event log from the same
 * initial state always reproduces the same session.
 */

import { clampRect, Rect } from "./region.js";

export interface ImageHandle {
  id: string;
  name: string;
  /** data: URL for display; blobs for upload are reconstructed by the caller */
  dataUrl: string;
  kind: "image" | "edge";
}

export interface HistoryEntry {
  id: string;
  editedPngB64: string;
  maskPngB64: string | null;
  edgePngB64: string | null;
  latencyMs: number;
  /** sha-256 hex of the edited PNG bytes (thumbnail identity) */
  thumbnailHash: string;
}

export interface SessionState {
  serviceUrl: string;
  reference: ImageHandle | null;
  referenceSize: { width: number; height: number } | null;
  attributeSource: ImageHandle | null;
  region: Rect | null;
  history: readonly HistoryEntry[];
  pending: boolean;
  banner: { code: string; message: string } | null;
  compare: readonly number[];
}

export type SessionEvent =
  | { type: "reference_picked"; image: ImageHandle; width: number; height: number }
  | { type: "attribute_picked"; source: ImageHandle }
  | { type: "region_adjusted"; rect: Rect }
  | { type: "edit_submitted" }
  | { type: "edit_succeeded"; entry: HistoryEntry }
  | { type: "edit_failed"; code: string; message: string }
  | { type: "banner_dismissed" }
  | { type: "history_forked"; index: number; width: number; height: number }
  | { type: "compare_selected"; indices: readonly number[] };

export function initialState(serviceUrl: string): SessionState {
  return {
    serviceUrl,
    reference: null,
    referenceSize: null,
    attributeSource: null,
    region: null,
    history: [],
    pending: false,
    banner: null,
    compare: [],
  };
}

export function canSubmit(state: SessionState): boolean {
  return !state.pending && state.reference !== null && state.attributeSource !== null;
}

export function reduce(state: SessionState, event: SessionEvent): SessionState {
  switch (event.type) {
    case "reference_picked":
      return {
        ...state,
        reference: event.image,
        referenceSize: { width: event.width, height: event.height },
        // stale region from a previous reference no longer applies
        region: null,
      };
    case "attribute_picked":
      return { ...state, attributeSource: event.source };
    case "region_adjusted": {
      if (!state.referenceSize) return state;
      const rect = clampRect(event.rect, state.referenceSize.width, state.referenceSize.height);
      return rect ? { ...state, region: rect } : state;
    }
    case "edit_submitted":
      if (!canSubmit(state)) return state; // at most one in-flight request
      return { ...state, pending: true, banner: null };
    case "edit_succeeded":
      if (!state.pending) return state;
      return { ...state, pending: false, history: [...state.history, event.entry] };
    case "edit_failed":
      if (!state.pending) return state;
      return { ...state, pending: false, banner: { code: event.code, message: event.message } };
    case "banner_dismissed":
      return { ...state, banner: null };
    case "history_forked": {
      const entry = state.history[event.index];
      if (!entry) return state;
      const image: ImageHandle = {
        id: `fork-${entry.id}`,
        name: `edit ${event.index + 1}`,
        dataUrl: `data:image/png;base64,${entry.editedPngB64}`,
        kind: "image",
      };
      return {
        ...state,
        reference: image,
        referenceSize: { width: event.width, height: event.height },
        region: null,
      };
    }
    case "compare_selected": {
      const valid = event.indices.filter((i) => i >= 0 && i < state.history.length);
      return { ...state, compare: [...valid] };
    }
  }
}

export function replay(events: readonly SessionEvent[], start: SessionState): SessionState {
  let state = start;
  for (const event of events) state = reduce(state, event);
  return state;
}
