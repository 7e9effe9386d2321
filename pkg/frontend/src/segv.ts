/**
 * Encoder/decoder for the SEGV binary container (little-endian):
 *
 *   magic "SEGV" | version u16 = 1 | kind u8 (0 labels, 1 mask, 2 likelihood)
 *   | ndim u8 | dims ndim*u32 | num_classes u16 | spacing ndim*f32 | payload
 *
 * Labels and masks are one u8 per site, likelihoods one f32 per (class, site)
 * pair, class-major; sites are row-major with the last axis fastest.
 */

const MAGIC = 0x56474553; // "SEGV" read as LE u32
const VERSION = 1;

export const KIND_LABELS = 0;
export const KIND_MASK = 1;
export const KIND_LIKELIHOOD = 2;

export class SegvError extends Error {}

export function siteCount(dims: readonly number[]): number {
  return dims.reduce((a, b) => a * b, 1);
}

function header(
  kind: number,
  dims: readonly number[],
  numClasses: number,
  spacing?: readonly number[],
): Uint8Array {
  const ndim = dims.length;
  if (ndim !== 2 && ndim !== 3) {
    throw new SegvError(`grids must be 2D or 3D, got ${ndim} axes`);
  }
  const buf = new ArrayBuffer(4 + 2 + 1 + 1 + 4 * ndim + 2 + 4 * ndim);
  const view = new DataView(buf);
  let off = 0;
  view.setUint32(off, MAGIC, true); off += 4;
  view.setUint16(off, VERSION, true); off += 2;
  view.setUint8(off, kind); off += 1;
  view.setUint8(off, ndim); off += 1;
  for (const d of dims) {
    if (!Number.isInteger(d) || d < 1) throw new SegvError(`bad extent ${d}`);
    view.setUint32(off, d, true); off += 4;
  }
  view.setUint16(off, numClasses, true); off += 2;
  for (let i = 0; i < ndim; i++) {
    view.setFloat32(off, spacing ? spacing[i] : 1.0, true); off += 4;
  }
  return new Uint8Array(buf);
}

export function encodeLabels(
  labels: Uint8Array,
  dims: readonly number[],
  numClasses: number,
  spacing?: readonly number[],
): Uint8Array {
  if (labels.length !== siteCount(dims)) {
    throw new SegvError(
      `label buffer holds ${labels.length} sites, dims ${dims.join("x")} require ${siteCount(dims)}`,
    );
  }
  for (let i = 0; i < labels.length; i++) {
    if (labels[i] >= numClasses) {
      throw new SegvError(`label ${labels[i]} at site ${i} out of range for num_classes=${numClasses}`);
    }
  }
  const head = header(KIND_LABELS, dims, numClasses, spacing);
  const out = new Uint8Array(head.length + labels.length);
  out.set(head, 0);
  out.set(labels, head.length);
  return out;
}

export function encodeLikelihood(
  values: Float32Array,
  dims: readonly number[],
  numClasses: number,
): Uint8Array {
  const expect = siteCount(dims) * numClasses;
  if (values.length !== expect) {
    throw new SegvError(
      `likelihood buffer holds ${values.length} values, ` +
      `${numClasses} classes over ${dims.join("x")} require ${expect}`,
    );
  }
  for (let i = 0; i < values.length; i++) {
    if (!Number.isFinite(values[i])) {
      throw new SegvError(`non-finite likelihood value at index ${i}`);
    }
  }
  const head = header(KIND_LIKELIHOOD, dims, numClasses);
  const out = new Uint8Array(head.length + 4 * values.length);
  out.set(head, 0);
  // f32 payload is little-endian; typed-array bytes match on LE hosts
  const payload = new Uint8Array(values.buffer, values.byteOffset, 4 * values.length);
  out.set(payload, head.length);
  return out;
}

export interface DecodedGrid {
  kind: number;
  dims: number[];
  numClasses: number;
  spacing: number[];
  payload: Uint8Array;
}

export function decode(bytes: Uint8Array): DecodedGrid {
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const need = (n: number, off: number, what: string) => {
    if (off + n > bytes.length) {
      throw new SegvError(`truncated while reading ${what} at offset ${off}`);
    }
  };
  need(4, 0, "magic");
  if (view.getUint32(0, true) !== MAGIC) throw new SegvError("bad magic at offset 0");
  need(2, 4, "version");
  if (view.getUint16(4, true) !== VERSION) throw new SegvError("unsupported version at offset 4");
  need(2, 6, "kind/ndim");
  const kind = view.getUint8(6);
  const ndim = view.getUint8(7);
  if (ndim !== 2 && ndim !== 3) throw new SegvError(`bad ndim ${ndim} at offset 7`);
  let off = 8;
  const dims: number[] = [];
  for (let i = 0; i < ndim; i++) {
    need(4, off, "dims");
    dims.push(view.getUint32(off, true));
    off += 4;
  }
  need(2, off, "num_classes");
  const numClasses = view.getUint16(off, true);
  off += 2;
  const spacing: number[] = [];
  for (let i = 0; i < ndim; i++) {
    need(4, off, "spacing");
    spacing.push(view.getFloat32(off, true));
    off += 4;
  }
  return { kind, dims, numClasses, spacing, payload: bytes.subarray(off) };
}

export function decodeMask(bytes: Uint8Array): { bits: Uint8Array; dims: number[] } {
  const grid = decode(bytes);
  if (grid.kind !== KIND_MASK) {
    throw new SegvError(`expected a mask file, found kind ${grid.kind}`);
  }
  const n = siteCount(grid.dims);
  if (grid.payload.length !== n) {
    throw new SegvError(`mask payload holds ${grid.payload.length} bytes, expected ${n}`);
  }
  return { bits: Uint8Array.from(grid.payload), dims: grid.dims };
}

export function decodeLikelihood(bytes: Uint8Array): {
  values: Float32Array;
  dims: number[];
  numClasses: number;
} {
  const grid = decode(bytes);
  if (grid.kind !== KIND_LIKELIHOOD) {
    throw new SegvError(`expected a likelihood file, found kind ${grid.kind}`);
  }
  const n = siteCount(grid.dims) * grid.numClasses;
  if (grid.payload.length !== 4 * n) {
    throw new SegvError(`likelihood payload holds ${grid.payload.length} bytes, expected ${4 * n}`);
  }
  // copy out of the file buffer so callers own an aligned, detached array
  const values = new Float32Array(n);
  values.set(new Float32Array(grid.payload.slice().buffer));
  return { values, dims: grid.dims, numClasses: grid.numClasses };
}
