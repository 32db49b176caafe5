/** Edit-region rectangle handling: normalization and clamping to image bounds. */
/**
 * Normalize corner order and clamp into [0, width] x [0, height].
 * Returns null when the clamped rectangle would be empty.
 */
export function clampRect(rect, width, height) {
    const x0 = Math.max(0, Math.min(rect.x0, rect.x1));
    const y0 = Math.max(0, Math.min(rect.y0, rect.y1));
    const x1 = Math.min(width, Math.max(rect.x0, rect.x1));
    const y1 = Math.min(height, Math.max(rect.y0, rect.y1));
    const fx0 = Math.floor(x0);
    const fy0 = Math.floor(y0);
    const fx1 = Math.ceil(x1);
    const fy1 = Math.ceil(y1);
    if (fx1 - fx0 < 1 || fy1 - fy0 < 1)
        return null;
    return { x0: fx0, y0: fy0, x1: fx1, y1: fy1 };
}
