/** Summaries of HSIC files: extents, band count, labeled-class histogram. */

import { readFileSync } from "node:fs";

import { readHsic } from "./hsic.js";

export interface InspectSummary {
  height: number;
  width: number;
  bands: number;
  classes: number;
  /** class id (1-based) -> pixel count; unlabeled pixels excluded */
  histogram: Record<number, number>;
  unlabeled: number;
  classNames: string[];
}

export function inspect(path: string): InspectSummary {
  const cube = readHsic(readFileSync(path));
  const histogram: Record<number, number> = {};
  let unlabeled = 0;
  for (const v of cube.labels) {
    if (v === 0) {
      unlabeled += 1;
    } else {
      histogram[v] = (histogram[v] ?? 0) + 1;
    }
  }
  return {
    height: cube.height,
    width: cube.width,
    bands: cube.bands,
    classes: cube.classes,
    histogram,
    unlabeled,
    classNames: cube.classNames,
  };
}
