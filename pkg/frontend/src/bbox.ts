/**
 * Screen <-> grid coordinate math for the rectangle selection tool.
 *
 * The view transform is pan + uniform zoom: screenX = (col * zoom) + offsetX,
 * screenY = (row * zoom) + offsetY. Grid coordinates are pixel indices of the
 * scene raster (row 0 at the top).
 */

import type { BboxJson } from "./types.js";

export interface ViewTransform {
  zoom: number;
  offsetX: number;
  offsetY: number;
}

export interface Point {
  x: number;
  y: number;
}

export function screenToGrid(p: Point, view: ViewTransform): { row: number; col: number } {
  return {
    col: Math.floor((p.x - view.offsetX) / view.zoom),
    row: Math.floor((p.y - view.offsetY) / view.zoom),
  };
}

export function gridToScreen(row: number, col: number, view: ViewTransform): Point {
  return {
    x: col * view.zoom + view.offsetX,
    y: row * view.zoom + view.offsetY,
  };
}

const clamp = (v: number, lo: number, hi: number) => Math.min(Math.max(v, lo), hi);

/**
 * Convert a mouse drag to a normalized, clamped grid bbox.
 * Returns null for a zero-area drag (start and end inside the same pixel).
 */
export function bboxFromDrag(
  start: Point,
  end: Point,
  view: ViewTransform,
  sceneDims: { height: number; width: number },
): BboxJson | null {
  const a = screenToGrid(start, view);
  const b = screenToGrid(end, view);
  if (a.row === b.row && a.col === b.col) return null;
  const bbox: BboxJson = {
    row0: clamp(Math.min(a.row, b.row), 0, sceneDims.height - 1),
    row1: clamp(Math.max(a.row, b.row), 0, sceneDims.height - 1),
    col0: clamp(Math.min(a.col, b.col), 0, sceneDims.width - 1),
    col1: clamp(Math.max(a.col, b.col), 0, sceneDims.width - 1),
  };
  return bbox;
}

/** Bbox corners in screen space (for drawing the red rectangle overlay). */
export function bboxToScreenRect(bbox: BboxJson, view: ViewTransform) {
  const tl = gridToScreen(bbox.row0, bbox.col0, view);
  const br = gridToScreen(bbox.row1 + 1, bbox.col1 + 1, view);
  return { x: tl.x, y: tl.y, w: br.x - tl.x, h: br.y - tl.y };
}

/** Center column sampled by the vertical profile (matches the service rule). */
export function profileColumn(bbox: BboxJson): number {
  const width = bbox.col1 - bbox.col0 + 1;
  return bbox.col0 + Math.floor(width / 2);
}
