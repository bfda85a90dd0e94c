/**
 * Community-standard band exclusion lists for the common archives.
 *
 * Provenance: these indices are the de-facto lists circulated with the
 * public archives (water-absorption and low-SNR channels), NOT values this
 * project derives; they are provided as a convenience and must be named
 * explicitly in a conversion spec to take effect. Indices are 0-based into
 * the raw archive band axis.
 */

function range(lo: number, hi: number): number[] {
  const out: number[] = [];
  for (let i = lo; i <= hi; i++) out.push(i);
  return out;
}

export const STANDARD_DROP_LISTS: Record<string, number[]> = {
  // 220 -> 200 bands: [104-108], [150-163], 220 in the usual 1-based
  // numbering, i.e. 0-based 103-107, 149-162, 219.
  "indian_pines_220": [...range(103, 107), ...range(149, 162), 219],
};
