/**
 * Single-channel sketch buffer: designers draw collar proposals that exist in
 * no dataset, and the buffer exports straight to the service's raw-edge path.
 * DOM-free so the drawing logic is testable; main.ts mirrors it onto a canvas.
 */
import { encodeGrayPng } from "./png.js";
export class SketchBuffer {
    constructor(width, height) {
        this.width = width;
        this.height = height;
        this.pixels = new Uint8Array(width * height);
    }
    clear() {
        this.pixels.fill(0);
    }
    stampDot(cx, cy, radius, value = 255) {
        const r2 = radius * radius;
        const x0 = Math.max(0, Math.floor(cx - radius));
        const x1 = Math.min(this.width - 1, Math.ceil(cx + radius));
        const y0 = Math.max(0, Math.floor(cy - radius));
        const y1 = Math.min(this.height - 1, Math.ceil(cy + radius));
        for (let y = y0; y <= y1; y++) {
            for (let x = x0; x <= x1; x++) {
                const dx = x - cx;
                const dy = y - cy;
                if (dx * dx + dy * dy <= r2)
                    this.pixels[y * this.width + x] = value;
            }
        }
    }
    /** Brush stroke: dots stamped densely along the segment. */
    stroke(xa, ya, xb, yb, radius = 1.5) {
        const steps = Math.max(1, Math.ceil(Math.hypot(xb - xa, yb - ya)));
        for (let i = 0; i <= steps; i++) {
            const t = i / steps;
            this.stampDot(xa + (xb - xa) * t, ya + (yb - ya) * t, radius);
        }
    }
    litCount() {
        let n = 0;
        for (const v of this.pixels)
            if (v > 0)
                n++;
        return n;
    }
    /** Export as an 8-bit grayscale PNG (the service's `edge` upload format). */
    toPng() {
        return encodeGrayPng(this.width, this.height, this.pixels);
    }
}
