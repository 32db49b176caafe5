/**
 * Writes a deterministic sketch-export fixture used by both test suites:
 * the frontend validates its structure, and the service test suite uploads
 * it to /v1/edit to prove the export is accepted end to end.
 *
 * Run from frontend/: npm run build && node dist-scripts/make_fixture.js
 */
import { mkdirSync, writeFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { SketchBuffer } from "../src/sketch.js";
const here = dirname(fileURLToPath(import.meta.url));
const sketch = new SketchBuffer(64, 64);
// a vee-collar-like proposal: two strokes meeting at a point
sketch.stroke(18, 14, 32, 34, 1.6);
sketch.stroke(46, 14, 32, 34, 1.6);
sketch.stroke(18, 14, 46, 14, 1.2);
const png = sketch.toPng();
for (const target of [join(here, "..", "..", "fixtures"), join(here, "..", "..", "..", "tests", "fixtures")]) {
    mkdirSync(target, { recursive: true });
    writeFileSync(join(target, "sketch_edge.png"), png);
    console.log(`wrote ${join(target, "sketch_edge.png")} (${png.length} bytes)`);
}
