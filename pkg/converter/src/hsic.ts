/**
 * The HSIC binary container (little-endian):
 *   magic "HSIC", version u16 = 1, H u32, W u32, B u32,
 *   dtype u8 (0 = float32 LE), reserved u8,
 *   payload H*W*B float32, pixel-major band-fastest ((y*W + x)*B + b),
 *   K u16, H*W labels u16, K class names (u16 length + UTF-8 each).
 */

export class HsicFormatError extends Error {}

export interface HsicCube {
  height: number;
  width: number;
  bands: number;
  /** row-major [y][x][b] as stored in the payload */
  data: Float32Array;
  labels: Uint16Array;
  classes: number;
  classNames: string[];
}

export function writeHsic(cube: HsicCube): Buffer {
  const { height, width, bands, data, labels, classes, classNames } = cube;
  if (data.length !== height * width * bands) {
    throw new HsicFormatError(
      `payload has ${data.length} samples, expected ${height * width * bands}`);
  }
  if (labels.length !== height * width) {
    throw new HsicFormatError(`labels have ${labels.length} entries, expected ${height * width}`);
  }
  if (classNames.length !== classes) {
    throw new HsicFormatError(`${classNames.length} class names for ${classes} classes`);
  }
  const nameBlobs = classNames.map((n) => Buffer.from(n, "utf-8"));
  const nameBytes = nameBlobs.reduce((a, b) => a + 2 + b.byteLength, 0);
  const total = 4 + 2 + 12 + 2 + 4 * data.length + 2 + 2 * labels.length + nameBytes;
  const buf = Buffer.alloc(total);
  let at = 0;
  buf.write("HSIC", at, "ascii"); at += 4;
  buf.writeUInt16LE(1, at); at += 2;
  buf.writeUInt32LE(height, at); at += 4;
  buf.writeUInt32LE(width, at); at += 4;
  buf.writeUInt32LE(bands, at); at += 4;
  buf.writeUInt8(0, at); at += 1;
  buf.writeUInt8(0, at); at += 1;
  for (let i = 0; i < data.length; i++) {
    buf.writeFloatLE(data[i], at); at += 4;
  }
  buf.writeUInt16LE(classes, at); at += 2;
  for (let i = 0; i < labels.length; i++) {
    buf.writeUInt16LE(labels[i], at); at += 2;
  }
  for (const blob of nameBlobs) {
    buf.writeUInt16LE(blob.byteLength, at); at += 2;
    blob.copy(buf, at); at += blob.byteLength;
  }
  return buf;
}

export function readHsic(buf: Buffer): HsicCube {
  let at = 0;
  const need = (n: number, what: string) => {
    if (at + n > buf.byteLength) {
      throw new HsicFormatError(`truncated HSIC file: ${what} at byte ${at}`);
    }
  };
  need(4, "magic");
  if (buf.toString("ascii", 0, 4) !== "HSIC") {
    throw new HsicFormatError("bad HSIC magic at byte 0");
  }
  at = 4;
  need(2, "version");
  const version = buf.readUInt16LE(at); at += 2;
  if (version !== 1) throw new HsicFormatError(`unsupported HSIC version ${version} at byte 4`);
  need(12, "extents");
  const height = buf.readUInt32LE(at); at += 4;
  const width = buf.readUInt32LE(at); at += 4;
  const bands = buf.readUInt32LE(at); at += 4;
  need(2, "dtype");
  const dtype = buf.readUInt8(at); at += 2; // dtype + reserved
  if (dtype !== 0) throw new HsicFormatError(`unsupported dtype code ${dtype} at byte 18`);
  const count = height * width * bands;
  need(4 * count, "payload");
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) data[i] = buf.readFloatLE(at + 4 * i);
  at += 4 * count;
  need(2, "class count");
  const classes = buf.readUInt16LE(at); at += 2;
  need(2 * height * width, "labels");
  const labels = new Uint16Array(height * width);
  for (let i = 0; i < labels.length; i++) labels[i] = buf.readUInt16LE(at + 2 * i);
  at += 2 * labels.length;
  const classNames: string[] = [];
  for (let i = 0; i < classes; i++) {
    need(2, `name ${i} length`);
    const len = buf.readUInt16LE(at); at += 2;
    need(len, `name ${i}`);
    classNames.push(buf.toString("utf-8", at, at + len)); at += len;
  }
  return { height, width, bands, data, labels, classes, classNames };
}
