/** Decoder for the binary layout point stream.
 *
 * Wire format: "SPWP" magic, u32 LE out_dim, u64 LE count, then
 * count*out_dim float32 LE coordinates in row-major order.
 */

export interface PointCloud {
  outDim: number;
  count: number;
  /** Row-major coordinates, count*outDim entries. */
  coords: Float32Array;
}

const MAGIC = 0x53505750; // "SPWP" big-endian read of the 4 ASCII bytes

export function decodeSpwp(buffer: ArrayBuffer): PointCloud {
  if (buffer.byteLength < 16) {
    throw new Error(`SPWP stream too short: ${buffer.byteLength} bytes`);
  }
  const view = new DataView(buffer);
  if (view.getUint32(0, false) !== MAGIC) {
    throw new Error("bad SPWP magic");
  }
  const outDim = view.getUint32(4, true);
  const countLo = view.getUint32(8, true);
  const countHi = view.getUint32(12, true);
  if (countHi !== 0) {
    throw new Error("point count exceeds what this viewer addresses");
  }
  const count = countLo;
  const expected = 16 + count * outDim * 4;
  if (buffer.byteLength !== expected) {
    throw new Error(`SPWP stream is ${buffer.byteLength} bytes, expected ${expected}`);
  }
  // Copy out of the (possibly unaligned) body into a fresh typed array.
  const coords = new Float32Array(count * outDim);
  for (let i = 0; i < coords.length; i++) {
    coords[i] = view.getFloat32(16 + i * 4, true);
  }
  return { outDim, count, coords };
}
