/**
 * Minimal 8-bit grayscale (color type 0) PNG encoder.
 *
 * Canvas APIs only export RGBA PNGs, but the edit service's sketch path
 * expects a single-channel edge map, so the sketch buffer is encoded here
 * directly: filter-0 scanlines inside a zlib stream of stored (uncompressed)
 * deflate blocks. Output is deterministic for identical input.
 */
const PNG_SIGNATURE = new Uint8Array([137, 80, 78, 71, 13, 10, 26, 10]);
const CRC_TABLE = (() => {
    const table = new Uint32Array(256);
    for (let n = 0; n < 256; n++) {
        let c = n;
        for (let k = 0; k < 8; k++)
            c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
        table[n] = c >>> 0;
    }
    return table;
})();
export function crc32(bytes) {
    let crc = 0xffffffff;
    for (let i = 0; i < bytes.length; i++)
        crc = CRC_TABLE[(crc ^ bytes[i]) & 0xff] ^ (crc >>> 8);
    return (crc ^ 0xffffffff) >>> 0;
}
export function adler32(bytes) {
    let a = 1;
    let b = 0;
    for (let i = 0; i < bytes.length; i++) {
        a = (a + bytes[i]) % 65521;
        b = (b + a) % 65521;
    }
    return ((b << 16) | a) >>> 0;
}
function u32(value) {
    return new Uint8Array([(value >>> 24) & 0xff, (value >>> 16) & 0xff, (value >>> 8) & 0xff, value & 0xff]);
}
function chunk(type, data) {
    const typeBytes = new TextEncoder().encode(type);
    const body = new Uint8Array(typeBytes.length + data.length);
    body.set(typeBytes, 0);
    body.set(data, typeBytes.length);
    const out = new Uint8Array(4 + body.length + 4);
    out.set(u32(data.length), 0);
    out.set(body, 4);
    out.set(u32(crc32(body)), 4 + body.length);
    return out;
}
/** zlib stream around stored deflate blocks (max 65535 bytes per block). */
export function zlibStored(raw) {
    const blocks = [new Uint8Array([0x78, 0x01])];
    const maxLen = 0xffff;
    for (let off = 0; off < raw.length || off === 0; off += maxLen) {
        const len = Math.min(maxLen, raw.length - off);
        const final = off + len >= raw.length ? 1 : 0;
        const header = new Uint8Array([final, len & 0xff, (len >>> 8) & 0xff, ~len & 0xff, (~len >>> 8) & 0xff]);
        const block = new Uint8Array(header.length + len);
        block.set(header, 0);
        block.set(raw.subarray(off, off + len), header.length);
        blocks.push(block);
        if (raw.length === 0)
            break;
    }
    blocks.push(u32(adler32(raw)));
    const total = blocks.reduce((n, b) => n + b.length, 0);
    const out = new Uint8Array(total);
    let pos = 0;
    for (const b of blocks) {
        out.set(b, pos);
        pos += b.length;
    }
    return out;
}
/** Encode a single-channel image (row-major, length width*height) as PNG. */
export function encodeGrayPng(width, height, pixels) {
    if (pixels.length !== width * height) {
        throw new Error(`pixel buffer ${pixels.length} does not match ${width}x${height}`);
    }
    const ihdr = new Uint8Array(13);
    ihdr.set(u32(width), 0);
    ihdr.set(u32(height), 4);
    ihdr[8] = 8; // bit depth
    ihdr[9] = 0; // color type: grayscale
    ihdr[10] = 0; // compression
    ihdr[11] = 0; // filter method
    ihdr[12] = 0; // interlace
    // filter byte 0 before each scanline
    const raw = new Uint8Array(height * (width + 1));
    for (let y = 0; y < height; y++) {
        raw[y * (width + 1)] = 0;
        raw.set(pixels.subarray(y * width, (y + 1) * width), y * (width + 1) + 1);
    }
    const parts = [PNG_SIGNATURE, chunk("IHDR", ihdr), chunk("IDAT", zlibStored(raw)), chunk("IEND", new Uint8Array(0))];
    const total = parts.reduce((n, p) => n + p.length, 0);
    const out = new Uint8Array(total);
    let pos = 0;
    for (const p of parts) {
        out.set(p, pos);
        pos += p.length;
    }
    return out;
}
