/**
 * Conversion from MATLAB-style archives (a cube variable and a ground-truth
 * variable, possibly in separate files) into the HSIC container, with
 * explicit band filtering.
 */

import { readFileSync, writeFileSync } from "node:fs";

import { STANDARD_DROP_LISTS } from "./bands.js";
import { HsicCube, writeHsic } from "./hsic.js";
import { MatArray, at2, at3, parseMat } from "./mat.js";

export class ConversionError extends Error {}

export interface ConversionSpec {
  /** path to the MAT file holding the radiance cube */
  cube_path: string;
  cube_variable: string;
  /** path to the MAT file holding per-pixel labels (0 = unlabeled) */
  label_path: string;
  label_variable: string;
  /** 0-based band indices to keep, in output order (exclusive with drop_bands) */
  keep_bands?: number[] | null;
  /** 0-based band indices to remove (exclusive with keep_bands); a string
   * names one of the documented community-standard lists */
  drop_bands?: number[] | string | null;
  output: string;
  class_names?: string[] | null;
}

export function loadSpec(path: string): ConversionSpec {
  let doc: unknown;
  try {
    doc = JSON.parse(readFileSync(path, "utf-8"));
  } catch (e) {
    throw new ConversionError(`spec file ${path} is not valid JSON: ${e}`);
  }
  if (typeof doc !== "object" || doc === null) {
    throw new ConversionError("spec must be a JSON object");
  }
  const raw = doc as Record<string, unknown>;
  for (const key of ["cube_path", "cube_variable", "label_path", "label_variable", "output"]) {
    if (typeof raw[key] !== "string") {
      throw new ConversionError(`spec is missing the required string field '${key}'`);
    }
  }
  return raw as unknown as ConversionSpec;
}

function findVariable(path: string, name: string): MatArray {
  const archive = parseMat(new Uint8Array(readFileSync(path)));
  const arr = archive.get(name);
  if (!arr) {
    const have = [...archive.keys()].join(", ") || "(none)";
    throw new ConversionError(`variable '${name}' not found in ${path}; archive holds: ${have}`);
  }
  return arr;
}

function resolveBands(spec: ConversionSpec, totalBands: number): number[] {
  const keep = spec.keep_bands ?? null;
  let drop = spec.drop_bands ?? null;
  if (keep !== null && drop !== null) {
    throw new ConversionError("give keep_bands or drop_bands, not both");
  }
  if (typeof drop === "string") {
    const named = STANDARD_DROP_LISTS[drop];
    if (!named) {
      throw new ConversionError(
        `unknown standard drop list '${drop}'; known: ${Object.keys(STANDARD_DROP_LISTS).join(", ")}`);
    }
    drop = named;
  }
  const validate = (idx: number[], what: string) => {
    for (const b of idx) {
      if (!Number.isInteger(b) || b < 0 || b >= totalBands) {
        throw new ConversionError(`${what} index ${b} outside [0, ${totalBands})`);
      }
    }
  };
  if (keep !== null) {
    validate(keep, "keep_bands");
    if (keep.length === 0) throw new ConversionError("keep_bands must not be empty");
    return keep;
  }
  if (drop !== null) {
    validate(drop, "drop_bands");
    const dropped = new Set(drop);
    const kept = [];
    for (let b = 0; b < totalBands; b++) if (!dropped.has(b)) kept.push(b);
    if (kept.length === 0) throw new ConversionError("drop_bands removes every band");
    return kept;
  }
  return Array.from({ length: totalBands }, (_, b) => b);
}

export interface ConversionSummary {
  height: number;
  width: number;
  bandsIn: number;
  bandsOut: number;
  classes: number;
  labeled: number;
}

export function convert(spec: ConversionSpec): ConversionSummary {
  const cubeArr = findVariable(spec.cube_path, spec.cube_variable);
  if (cubeArr.dims.length !== 3) {
    throw new ConversionError(
      `cube variable '${spec.cube_variable}' must be 3-D, got dims [${cubeArr.dims}]`);
  }
  const [h, w, bIn] = cubeArr.dims;

  const labelArr = findVariable(spec.label_path, spec.label_variable);
  if (labelArr.dims.length !== 2 || labelArr.dims[0] !== h || labelArr.dims[1] !== w) {
    throw new ConversionError(
      `label variable '${spec.label_variable}' dims [${labelArr.dims}] do not match cube [${h}, ${w}]`);
  }

  const kept = resolveBands(spec, bIn);
  const data = new Float32Array(h * w * kept.length);
  let at = 0;
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      for (const b of kept) {
        data[at++] = Math.fround(at3(cubeArr, y, x, b));
      }
    }
  }

  const labels = new Uint16Array(h * w);
  let maxLabel = 0;
  let labeled = 0;
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      const v = at2(labelArr, y, x);
      if (!Number.isInteger(v) || v < 0 || v > 0xffff) {
        throw new ConversionError(`label at (${y}, ${x}) is not a small non-negative integer: ${v}`);
      }
      labels[y * w + x] = v;
      if (v > maxLabel) maxLabel = v;
      if (v > 0) labeled += 1;
    }
  }

  const classes = spec.class_names?.length ?? maxLabel;
  if (classes < maxLabel) {
    throw new ConversionError(`${classes} class names but labels reach ${maxLabel}`);
  }
  const classNames = spec.class_names ?? Array.from({ length: classes }, () => "");
  const cube: HsicCube = {
    height: h, width: w, bands: kept.length, data, labels,
    classes, classNames,
  };
  writeFileSync(spec.output, writeHsic(cube));
  return { height: h, width: w, bandsIn: bIn, bandsOut: kept.length, classes, labeled };
}
