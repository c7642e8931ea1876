/**
 * Profile chart: x = row index (top of the scene at the left), y = degC.
 * Segments inside the modified bbox draw red, the rest blue; color flips
 * exactly at the inside_bbox boundaries. The data model (scales + polyline
 * segments) is computed separately from canvas drawing so tests can assert
 * on exact pixel-space coordinates without a DOM.
 */

import type { ProfilePoint } from "./types.js";
import { paddedRange, segmentProfile } from "./profile.js";

export const COLOR_INSIDE = "#d62728";
export const COLOR_OUTSIDE = "#1f77b4";

export interface ChartLayout {
  width: number;
  height: number;
  marginLeft: number;
  marginBottom: number;
  marginTop: number;
  marginRight: number;
}

export const DEFAULT_LAYOUT: ChartLayout = {
  width: 640,
  height: 220,
  marginLeft: 48,
  marginBottom: 28,
  marginTop: 8,
  marginRight: 8,
};

export interface ChartSegment {
  color: string;
  inside: boolean;
  /** pixel-space polyline; null y values break the line */
  points: { x: number; y: number | null; row: number; value: number | null }[];
}

export interface ChartModel {
  segments: ChartSegment[];
  yMin: number;
  yMax: number;
  xOf(row: number): number;
  yOf(value: number): number;
}

export function buildChartModel(
  points: ProfilePoint[],
  layout: ChartLayout = DEFAULT_LAYOUT,
): ChartModel {
  if (points.length === 0) throw new Error("empty profile");
  const { min: yMin, max: yMax } = paddedRange(points);
  const rowMin = points[0].row;
  const rowMax = points[points.length - 1].row;
  const plotW = layout.width - layout.marginLeft - layout.marginRight;
  const plotH = layout.height - layout.marginTop - layout.marginBottom;
  const xOf = (row: number) =>
    layout.marginLeft + (rowMax === rowMin ? 0 : ((row - rowMin) / (rowMax - rowMin)) * plotW);
  const yOf = (value: number) =>
    layout.marginTop + (1 - (value - yMin) / (yMax - yMin)) * plotH;

  const segments: ChartSegment[] = segmentProfile(points).map((seg) => ({
    inside: seg.inside,
    color: seg.inside ? COLOR_INSIDE : COLOR_OUTSIDE,
    points: seg.points.map((p) => ({
      x: xOf(p.row),
      y: p.value_celsius === null ? null : yOf(p.value_celsius),
      row: p.row,
      value: p.value_celsius,
    })),
  }));
  return { segments, yMin, yMax, xOf, yOf };
}

/** Draw onto a 2d context; connects adjacent segments so the line is continuous. */
export function drawProfileChart(
  ctx: CanvasRenderingContext2D,
  points: ProfilePoint[],
  layout: ChartLayout = DEFAULT_LAYOUT,
): ChartModel {
  const model = buildChartModel(points, layout);
  ctx.clearRect(0, 0, layout.width, layout.height);

  ctx.strokeStyle = "#888";
  ctx.lineWidth = 1;
  ctx.strokeRect(
    layout.marginLeft,
    layout.marginTop,
    layout.width - layout.marginLeft - layout.marginRight,
    layout.height - layout.marginTop - layout.marginBottom,
  );

  let previous: { x: number; y: number | null } | null = null;
  for (const segment of model.segments) {
    ctx.strokeStyle = segment.color;
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    let started = false;
    if (previous && previous.y !== null && segment.points.length > 0) {
      ctx.moveTo(previous.x, previous.y);
      started = true;
    }
    for (const p of segment.points) {
      if (p.y === null) {
        started = false;
        continue;
      }
      if (!started) {
        ctx.moveTo(p.x, p.y);
        started = true;
      } else {
        ctx.lineTo(p.x, p.y);
      }
    }
    ctx.stroke();
    const last = segment.points[segment.points.length - 1];
    previous = last ? { x: last.x, y: last.y } : previous;
  }

  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  ctx.fillText(`${model.yMax.toFixed(1)} °C`, 4, layout.marginTop + 10);
  ctx.fillText(`${model.yMin.toFixed(1)} °C`, 4, layout.height - layout.marginBottom);
  ctx.fillText("row →", layout.width - 44, layout.height - 8);
  return model;
}
