/**
 * Minimal reader for Level 5 MAT-files (the format scipy.io.savemat and
 * MATLAB's `save -v5`/-v6/-v7 emit), covering what hyperspectral archives
 * need: little-endian files holding real numeric N-D arrays.
 *
 * Unsupported on purpose: big-endian files, compressed (miCOMPRESSED)
 * elements, cells/structs/sparse/complex arrays. Errors carry the byte
 * offset of the offending element.
 */

const MI = {
  INT8: 1,
  UINT8: 2,
  INT16: 3,
  UINT16: 4,
  INT32: 5,
  UINT32: 6,
  SINGLE: 7,
  DOUBLE: 9,
  INT64: 12,
  UINT64: 13,
  MATRIX: 14,
  COMPRESSED: 15,
  UTF8: 16,
} as const;

const MX_NUMERIC_CLASSES = new Set([6, 7, 8, 9, 10, 11, 12, 13, 14, 15]);

export class MatFormatError extends Error {}

export interface MatArray {
  name: string;
  /** MATLAB dims, e.g. [H, W, B]; data is column-major (Fortran order). */
  dims: number[];
  /** Values widened to float64, still in column-major order. */
  data: Float64Array;
}

interface Element {
  type: number;
  bytes: Uint8Array;
  offset: number;
}

function readElement(view: DataView, offset: number): { el: Element; next: number } {
  if (offset + 8 > view.byteLength) {
    throw new MatFormatError(`truncated element tag at byte ${offset}`);
  }
  const raw = view.getUint32(offset, true);
  const small = raw >>> 16;
  if (small !== 0) {
    // small data element: length in the upper half, data inside the tag
    const type = raw & 0xffff;
    const bytes = new Uint8Array(view.buffer, view.byteOffset + offset + 4, small);
    return { el: { type, bytes, offset }, next: offset + 8 };
  }
  const type = raw;
  const len = view.getUint32(offset + 4, true);
  if (offset + 8 + len > view.byteLength) {
    throw new MatFormatError(`element of ${len} bytes overruns file at byte ${offset}`);
  }
  const bytes = new Uint8Array(view.buffer, view.byteOffset + offset + 8, len);
  const padded = (len + 7) & ~7;
  return { el: { type, bytes, offset }, next: offset + 8 + padded };
}

function numericToFloat64(el: Element): Float64Array {
  const { type, bytes } = el;
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const read: Record<number, [number, (i: number) => number]> = {
    [MI.INT8]: [1, (i) => view.getInt8(i)],
    [MI.UINT8]: [1, (i) => view.getUint8(i)],
    [MI.INT16]: [2, (i) => view.getInt16(i, true)],
    [MI.UINT16]: [2, (i) => view.getUint16(i, true)],
    [MI.INT32]: [4, (i) => view.getInt32(i, true)],
    [MI.UINT32]: [4, (i) => view.getUint32(i, true)],
    [MI.SINGLE]: [4, (i) => view.getFloat32(i, true)],
    [MI.DOUBLE]: [8, (i) => view.getFloat64(i, true)],
    [MI.INT64]: [8, (i) => Number(view.getBigInt64(i, true))],
    [MI.UINT64]: [8, (i) => Number(view.getBigUint64(i, true))],
  };
  const entry = read[type];
  if (!entry) {
    throw new MatFormatError(`unsupported numeric element type ${type} at byte ${el.offset}`);
  }
  const [width, get] = entry;
  const n = Math.floor(bytes.byteLength / width);
  const out = new Float64Array(n);
  for (let i = 0; i < n; i++) out[i] = get(i * width);
  return out;
}

function parseMatrix(el: Element): MatArray {
  const view = new DataView(el.bytes.buffer, el.bytes.byteOffset, el.bytes.byteLength);
  let at = 0;

  const flagsEl = readElement(view, at);
  if (flagsEl.el.type !== MI.UINT32 || flagsEl.el.bytes.byteLength < 8) {
    throw new MatFormatError(`malformed array flags at byte ${el.offset}`);
  }
  const flagsView = new DataView(
    flagsEl.el.bytes.buffer, flagsEl.el.bytes.byteOffset, flagsEl.el.bytes.byteLength);
  const flags = flagsView.getUint32(0, true);
  const klass = flags & 0xff;
  const complex = (flags & 0x0800) !== 0;
  at = flagsEl.next;

  const dimsEl = readElement(view, at);
  if (dimsEl.el.type !== MI.INT32) {
    throw new MatFormatError(`malformed dimensions element at byte ${el.offset + at}`);
  }
  const dims = Array.from(numericToFloat64(dimsEl.el), Number);
  at = dimsEl.next;

  const nameEl = readElement(view, at);
  if (nameEl.el.type !== MI.INT8) {
    throw new MatFormatError(`malformed array name element at byte ${el.offset + at}`);
  }
  const name = new TextDecoder().decode(nameEl.el.bytes);
  at = nameEl.next;

  if (!MX_NUMERIC_CLASSES.has(klass)) {
    throw new MatFormatError(
      `variable '${name}' has unsupported array class ${klass} (need a numeric array)`);
  }
  if (complex) {
    throw new MatFormatError(`variable '${name}' is complex; only real arrays are supported`);
  }

  const realEl = readElement(view, at);
  const data = numericToFloat64(realEl.el);
  const count = dims.reduce((a, b) => a * b, 1);
  if (data.length !== count) {
    throw new MatFormatError(
      `variable '${name}': ${data.length} values for dims [${dims}] at byte ${el.offset}`);
  }
  return { name, dims, data };
}

/** Parse every top-level numeric array in a little-endian MAT 5 file. */
export function parseMat(buffer: Uint8Array): Map<string, MatArray> {
  if (buffer.byteLength < 128) {
    throw new MatFormatError(`file too short for a MAT 5 header (${buffer.byteLength} bytes)`);
  }
  const view = new DataView(buffer.buffer, buffer.byteOffset, buffer.byteLength);
  const version = view.getUint16(124, true);
  const endian = view.getUint16(126, true);
  if (endian === 0x494d) {
    throw new MatFormatError("big-endian MAT file; convert it on the MATLAB side first");
  }
  if (endian !== 0x4d49 || version !== 0x0100) {
    throw new MatFormatError(
      `not a MAT 5 file (version 0x${version.toString(16)}, endian 0x${endian.toString(16)}) at byte 124`);
  }

  const out = new Map<string, MatArray>();
  let at = 128;
  while (at < buffer.byteLength) {
    const { el, next } = readElement(view, at);
    if (el.type === MI.COMPRESSED) {
      throw new MatFormatError(
        `compressed element at byte ${at}; re-save the archive without compression ` +
        "(scipy: do_compression=False, MATLAB: save -v6)");
    }
    if (el.type === MI.MATRIX) {
      const arr = parseMatrix(el);
      out.set(arr.name, arr);
    }
    at = next;
  }
  return out;
}

/** Column-major element access for a 3D MATLAB array. */
export function at3(arr: MatArray, y: number, x: number, b: number): number {
  const [h, w] = arr.dims;
  return arr.data[y + x * h + b * h * w];
}

/** Column-major element access for a 2D MATLAB array. */
export function at2(arr: MatArray, y: number, x: number): number {
  const [h] = arr.dims;
  return arr.data[y + x * h];
}
