/**
 * Vertical profile series: parsing and red/blue segmentation.
 *
 * A segment is a maximal run of consecutive points sharing inside_bbox;
 * segmentation boundaries sit exactly where the flag flips. Values are used
 * verbatim from the service (no resampling or smoothing).
 */

import type { ProfilePoint } from "./types.js";

export interface ProfileSegment {
  inside: boolean;
  points: ProfilePoint[];
}

export function segmentProfile(points: ProfilePoint[]): ProfileSegment[] {
  const segments: ProfileSegment[] = [];
  let current: ProfileSegment | null = null;
  for (const point of points) {
    if (current === null || current.inside !== point.inside_bbox) {
      current = { inside: point.inside_bbox, points: [] };
      segments.push(current);
    }
    current.points.push(point);
  }
  return segments;
}

/** Parse the service's profile.csv (row,value_celsius,inside_bbox). */
export function parseProfileCsv(text: string): ProfilePoint[] {
  const lines = text.trim().split("\n");
  if (lines.length === 0 || !lines[0].startsWith("row,")) {
    throw new Error("not a profile CSV");
  }
  const points: ProfilePoint[] = [];
  for (const line of lines.slice(1)) {
    if (!line) continue;
    const [row, value, inside] = line.split(",");
    points.push({
      row: parseInt(row, 10),
      value_celsius: value === "" ? null : parseFloat(value),
      inside_bbox: inside === "true",
    });
  }
  return points;
}

export function validateProfile(points: ProfilePoint[]): void {
  for (let i = 1; i < points.length; i++) {
    if (points[i].row <= points[i - 1].row) {
      throw new Error(`profile rows not strictly increasing at index ${i}`);
    }
  }
}

/** Y-axis range padded 5% beyond the data extent. */
export function paddedRange(points: ProfilePoint[]): { min: number; max: number } {
  const values = points
    .map((p) => p.value_celsius)
    .filter((v): v is number => v !== null);
  if (values.length === 0) return { min: 0, max: 1 };
  let min = Math.min(...values);
  let max = Math.max(...values);
  if (min === max) {
    min -= 0.5;
    max += 0.5;
  }
  const pad = (max - min) * 0.05;
  return { min: min - pad, max: max + pad };
}
