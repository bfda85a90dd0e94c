/** MAT 5 reader against hand-built bytes and real scipy-written fixtures. */

import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { MatFormatError, at2, at3, parseMat } from "../src/mat.js";

const FIXTURES = new URL("../fixtures/in/", import.meta.url).pathname;

/** Build a minimal little-endian MAT 5 file holding one double array. */
function handMadeMat(name: string, dims: number[], values: number[]): Uint8Array {
  const count = values.length;
  const nameBytes = Buffer.from(name, "ascii");
  const namePadded = (nameBytes.length + 7) & ~7;
  const dimsBytes = 4 * dims.length;
  const dimsPadded = (dimsBytes + 7) & ~7;
  const matrixLen = 16 + (8 + dimsPadded) + (8 + namePadded) + (8 + 8 * count);
  const buf = Buffer.alloc(128 + 8 + matrixLen);
  buf.write("hand-made MAT 5 fixture", 0, "ascii");
  buf.writeUInt16LE(0x0100, 124);
  buf.writeUInt16LE(0x4d49, 126); // "IM"
  let at = 128;
  buf.writeUInt32LE(14, at); buf.writeUInt32LE(matrixLen, at + 4); at += 8; // miMATRIX
  buf.writeUInt32LE(6, at); buf.writeUInt32LE(8, at + 4); at += 8; // flags: miUINT32 x 2
  buf.writeUInt32LE(6, at); at += 8; // mxDOUBLE_CLASS, no flags
  buf.writeUInt32LE(5, at); buf.writeUInt32LE(dimsBytes, at + 4); at += 8; // dims: miINT32
  for (const d of dims) { buf.writeInt32LE(d, at); at += 4; }
  at += dimsPadded - dimsBytes;
  buf.writeUInt32LE(1, at); buf.writeUInt32LE(nameBytes.length, at + 4); at += 8; // name: miINT8
  nameBytes.copy(buf, at); at += namePadded;
  buf.writeUInt32LE(9, at); buf.writeUInt32LE(8 * count, at + 4); at += 8; // real: miDOUBLE
  for (const v of values) { buf.writeDoubleLE(v, at); at += 8; }
  return new Uint8Array(buf);
}

describe("parseMat", () => {
  it("reads a hand-built double matrix (independent byte oracle)", () => {
    // column-major values for dims [2, 3]: logical [[1,2,3],[4,5,6]]
    const blob = handMadeMat("m", [2, 3], [1, 4, 2, 5, 3, 6]);
    const arrays = parseMat(blob);
    const m = arrays.get("m")!;
    expect(m.dims).toEqual([2, 3]);
    expect(at2(m, 0, 0)).toBe(1);
    expect(at2(m, 0, 2)).toBe(3);
    expect(at2(m, 1, 1)).toBe(5);
  });

  it("reads the scipy-written tiny cube with row-major spot values", () => {
    const arrays = parseMat(new Uint8Array(readFileSync(FIXTURES + "tiny_cube.mat")));
    const cube = arrays.get("tiny_cube")!;
    expect(cube.dims).toEqual([3, 3, 4]);
    // numpy arange values: cube[y, x, b] = (y*3 + x)*4 + b, except [0,0,0] = 0.5
    expect(at3(cube, 0, 0, 0)).toBe(0.5);
    expect(at3(cube, 0, 0, 1)).toBe(1);
    expect(at3(cube, 2, 2, 3)).toBe(35);
    expect(at3(cube, 1, 2, 0)).toBe(20);
  });

  it("reads a float32 cube and uint8/double labels", () => {
    const spots = JSON.parse(readFileSync(FIXTURES + "bands220_spots.json", "utf-8")).spots;
    const arrays = parseMat(new Uint8Array(readFileSync(FIXTURES + "bands220.mat")));
    const cube = arrays.get("data_220")!;
    expect(cube.dims).toEqual([4, 5, 220]);
    for (const s of spots) {
      expect(at3(cube, s.y, s.x, s.b)).toBeCloseTo(s.value, 6);
    }
    const gt = parseMat(new Uint8Array(readFileSync(FIXTURES + "tiny_gt.mat"))).get("tiny_gt")!;
    expect(at2(gt, 0, 1)).toBe(1);
    expect(at2(gt, 2, 2)).toBe(0);
  });

  it("rejects truncated files with an offset", () => {
    const blob = handMadeMat("m", [2, 2], [1, 2, 3, 4]);
    expect(() => parseMat(blob.slice(0, 140))).toThrow(MatFormatError);
    expect(() => parseMat(blob.slice(0, 140))).toThrow(/byte/);
  });

  it("rejects compressed elements with guidance", () => {
    const blob = Buffer.from(handMadeMat("m", [1, 1], [1]));
    blob.writeUInt32LE(15, 128); // miCOMPRESSED
    expect(() => parseMat(new Uint8Array(blob))).toThrow(/compressed/);
  });

  it("rejects non-MAT files", () => {
    expect(() => parseMat(new Uint8Array(200))).toThrow(MatFormatError);
  });
});
