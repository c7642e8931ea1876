/**
 * Client-side palette for the diff overlay only. The authoritative rendering
 * is always the service's map.png / diff.png; this ramp exists so the
 * overlay can be alpha-blended over the base map with a zero-centred
 * diverging scale.
 */

export type Rgb = [number, number, number];
type Stop = [number, number, number, number]; // position, r, g, b

const DIVERGING: Stop[] = [
  [0.0, 33, 102, 172],
  [0.25, 146, 197, 222],
  [0.5, 247, 247, 247],
  [0.75, 244, 165, 130],
  [1.0, 178, 24, 43],
];

export function divergingColor(t: number): Rgb {
  const x = Math.max(0, Math.min(1, t));
  for (let i = 1; i < DIVERGING.length; i++) {
    const [p1, r1, g1, b1] = DIVERGING[i];
    const [p0, r0, g0, b0] = DIVERGING[i - 1];
    if (x <= p1) {
      const f = p1 === p0 ? 0 : (x - p0) / (p1 - p0);
      return [
        Math.round(r0 + f * (r1 - r0)),
        Math.round(g0 + f * (g1 - g0)),
        Math.round(b0 + f * (b1 - b0)),
      ];
    }
  }
  const last = DIVERGING[DIVERGING.length - 1];
  return [last[1], last[2], last[3]];
}

/** Map a temperature delta to a color on a scale symmetric about zero. */
export function deltaColor(delta: number, limit: number): Rgb {
  const l = Math.max(limit, 1e-9);
  return divergingColor((delta + l) / (2 * l));
}
