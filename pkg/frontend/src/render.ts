// Scene building is pure (and unit-tested); drawScene is the only code that
// touches a canvas context.

import { maskOutline } from './heatmap.js';
import { ViewState, stalenessMs } from './store.js';

export type SceneOp =
  | { op: 'clear' }
  | { op: 'heatmap' }
  | { op: 'rect'; x: number; y: number; w: number; h: number; color: string; label?: string }
  | { op: 'outline_cell'; x: number; y: number; w: number; h: number }
  | { op: 'polyline'; points: [number, number][]; color: string }
  | { op: 'disc'; x: number; y: number; r: number; color: string }
  | { op: 'ring'; x: number; y: number; r: number; color: string }
  | { op: 'badge'; text: string; tone: 'info' | 'warn' | 'end' };

export const STALE_AFTER_MS = 1000;

/** World-space draw list for the current view; never extrapolates state. */
export function buildScene(view: ViewState, nowMs: number): SceneOp[] {
  const ops: SceneOp[] = [{ op: 'clear' }];
  const s = view.session;
  if (!s) return ops;

  if (view.overlays.heatmap && view.frame) ops.push({ op: 'heatmap' });

  if (view.overlays.mask && view.frame) {
    const [fh, fw] = view.frame.shape;
    const cw = s.world[0] / fw;
    const ch = s.world[1] / fh;
    const outline = maskOutline(view.frame);
    for (let y = 0; y < fh; y++) {
      for (let x = 0; x < fw; x++) {
        if (outline[y * fw + x]) {
          ops.push({ op: 'outline_cell', x: x * cw, y: y * ch, w: cw, h: ch });
        }
      }
    }
  }

  if (view.overlays.objects) {
    for (const o of s.objects) {
      const [x0, y0, x1, y1] = o.footprint;
      ops.push({ op: 'rect', x: x0, y: y0, w: x1 - x0, h: y1 - y0,
                 color: o.color, label: o.name });
    }
  }

  ops.push({ op: 'ring', x: s.goal[0], y: s.goal[1], r: 20, color: '#2ecc71' });

  if (view.latest) {
    if (view.overlays.trajectory && view.latest.trajectoryTail.length > 1) {
      ops.push({ op: 'polyline', points: view.latest.trajectoryTail, color: '#9b59b6' });
    }
    ops.push({ op: 'disc', x: view.latest.q[0], y: view.latest.q[1],
               r: s.robotRadius, color: '#ecf0f1' });
  } else {
    // no state received yet: show the start, clearly marked, not a guess
    ops.push({ op: 'disc', x: s.start[0], y: s.start[1], r: s.robotRadius,
               color: '#7f8c8d' });
  }

  const stale = stalenessMs(view, nowMs);
  if (stale !== null && stale > STALE_AFTER_MS) {
    ops.push({ op: 'badge', text: `stale ${(stale / 1000).toFixed(1)}s`, tone: 'warn' });
  }
  if (view.episodeEnd) {
    ops.push({ op: 'badge', text: `episode ${view.episodeEnd.status} after ${view.episodeEnd.ticks} ticks`, tone: 'end' });
  }
  return ops;
}

export function drawScene(
  ctx: CanvasRenderingContext2D,
  view: ViewState,
  ops: SceneOp[],
  heatmapCanvas: HTMLCanvasElement | null,
): void {
  const s = view.session;
  if (!s) return;
  const sx = ctx.canvas.width / s.world[0];
  const sy = ctx.canvas.height / s.world[1];
  for (const op of ops) {
    switch (op.op) {
      case 'clear':
        ctx.fillStyle = '#10151c';
        ctx.fillRect(0, 0, ctx.canvas.width, ctx.canvas.height);
        break;
      case 'heatmap':
        if (heatmapCanvas) {
          ctx.imageSmoothingEnabled = false;
          ctx.drawImage(heatmapCanvas, 0, 0, ctx.canvas.width, ctx.canvas.height);
        }
        break;
      case 'rect':
        ctx.fillStyle = op.color;
        ctx.globalAlpha = 0.85;
        ctx.fillRect(op.x * sx, op.y * sy, op.w * sx, op.h * sy);
        ctx.globalAlpha = 1.0;
        if (op.label) {
          ctx.fillStyle = '#10151c';
          ctx.font = '12px sans-serif';
          ctx.fillText(op.label, op.x * sx + 4, op.y * sy + 14);
        }
        break;
      case 'outline_cell':
        ctx.strokeStyle = 'rgba(255,255,255,0.8)';
        ctx.lineWidth = 1;
        ctx.strokeRect(op.x * sx, op.y * sy, op.w * sx, op.h * sy);
        break;
      case 'polyline':
        ctx.strokeStyle = op.color;
        ctx.lineWidth = 2;
        ctx.beginPath();
        op.points.forEach(([x, y], i) =>
          i === 0 ? ctx.moveTo(x * sx, y * sy) : ctx.lineTo(x * sx, y * sy));
        ctx.stroke();
        break;
      case 'disc':
        ctx.fillStyle = op.color;
        ctx.beginPath();
        ctx.arc(op.x * sx, op.y * sy, Math.max(op.r * sx, 3), 0, Math.PI * 2);
        ctx.fill();
        break;
      case 'ring':
        ctx.strokeStyle = op.color;
        ctx.lineWidth = 2;
        ctx.beginPath();
        ctx.arc(op.x * sx, op.y * sy, op.r * sx, 0, Math.PI * 2);
        ctx.stroke();
        break;
      case 'badge': {
        ctx.font = '14px sans-serif';
        const width = ctx.measureText(op.text).width + 16;
        ctx.fillStyle = op.tone === 'warn' ? '#e67e22' : '#2c3e50';
        ctx.fillRect(8, 8, width, 24);
        ctx.fillStyle = '#ecf0f1';
        ctx.fillText(op.text, 16, 25);
        break;
      }
    }
  }
}
