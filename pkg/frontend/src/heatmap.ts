// Cost-frame colorization: 64x64 byte grid -> RGBA pixels, blue (cheap)
// through yellow to red (expensive), with the active mask drawn as an
// outline layer.

import { CostMapFrame } from './protocol.js';

export interface RgbaImage {
  width: number;
  height: number;
  data: Uint8ClampedArray; // RGBA
}

export function colorizeCost(frame: CostMapFrame, alpha = 140): RgbaImage {
  const [h, w] = frame.shape;
  const data = new Uint8ClampedArray(w * h * 4);
  for (let i = 0; i < w * h; i++) {
    const v = frame.cost[i] / 255;
    // simple blue->yellow->red ramp
    const r = Math.min(255, Math.round(510 * v));
    const g = Math.round(v < 0.5 ? 510 * v : 510 * (1 - v));
    const b = Math.max(0, Math.round(255 - 510 * v));
    const o = i * 4;
    data[o] = r;
    data[o + 1] = g;
    data[o + 2] = b;
    data[o + 3] = alpha;
  }
  return { width: w, height: h, data };
}

/** Cells on the mask boundary (a masked cell with at least one unmasked
 * 4-neighbor), used to draw the tube outline. */
export function maskOutline(frame: CostMapFrame): boolean[] {
  const [h, w] = frame.shape;
  const outline = new Array<boolean>(w * h).fill(false);
  const at = (x: number, y: number) =>
    x >= 0 && x < w && y >= 0 && y < h ? frame.mask[y * w + x] !== 0 : false;
  for (let y = 0; y < h; y++) {
    for (let x = 0; x < w; x++) {
      if (!at(x, y)) continue;
      if (!at(x - 1, y) || !at(x + 1, y) || !at(x, y - 1) || !at(x, y + 1)) {
        outline[y * w + x] = true;
      }
    }
  }
  return outline;
}
