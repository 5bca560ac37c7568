/**
 * Box math between display space and image-intrinsic pixel space.
 * All boxes are [x0, y0, x1, y1], inclusive-exclusive, integer image pixels.
 */

import type { Box } from "./schemas.js";

export interface DragGesture {
  startX: number;
  startY: number;
  endX: number;
  endY: number;
}

/** Drags shorter than this (in display px, per axis span) are ignored. */
export const MIN_DRAG_PX = 3;

const clamp = (v: number, lo: number, hi: number) => Math.min(hi, Math.max(lo, v));

/**
 * Convert a drag in display coordinates to an image-intrinsic pixel box.
 * `scale` is displayed-size / intrinsic-size; the same factor applies to both
 * axes (images render aspect-preserving). Returns null for degenerate drags.
 */
export function dragToImageBox(
  drag: DragGesture,
  scale: number,
  imageWidth: number,
  imageHeight: number,
): Box | null {
  const dx0 = Math.min(drag.startX, drag.endX);
  const dx1 = Math.max(drag.startX, drag.endX);
  const dy0 = Math.min(drag.startY, drag.endY);
  const dy1 = Math.max(drag.startY, drag.endY);
  if (dx1 - dx0 < MIN_DRAG_PX || dy1 - dy0 < MIN_DRAG_PX) {
    return null;
  }
  const x0 = clamp(Math.round(dx0 / scale), 0, imageWidth);
  const y0 = clamp(Math.round(dy0 / scale), 0, imageHeight);
  const x1 = clamp(Math.round(dx1 / scale), 0, imageWidth);
  const y1 = clamp(Math.round(dy1 / scale), 0, imageHeight);
  if (x1 <= x0 || y1 <= y0) {
    return null;
  }
  return [x0, y0, x1, y1];
}

/** Image-intrinsic box to display coordinates for drawing overlays. */
export function imageBoxToDisplay(box: Box, scale: number): DragGesture {
  return {
    startX: box[0] * scale,
    startY: box[1] * scale,
    endX: box[2] * scale,
    endY: box[3] * scale,
  };
}

/**
 * Round-tripping a box through display space must be the identity; the server
 * echo of a submitted box then trivially equals what the client computed.
 */
export function roundTripBox(
  box: Box,
  scale: number,
  imageWidth: number,
  imageHeight: number,
): Box | null {
  const display = imageBoxToDisplay(box, scale);
  return dragToImageBox(display, scale, imageWidth, imageHeight);
}
