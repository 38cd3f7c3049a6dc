// Console wiring: one store, one socket, one canvas. URL parameters pick the
// server and scene: ?host=127.0.0.1:8750&env=3&session=<id to resume>

import { createClient } from './client.js';
import { colorizeCost } from './heatmap.js';
import { buildScene, drawScene } from './render.js';
import {
  ViewState,
  addPendingCorrection,
  applyMessage,
  auditTicks,
  initialState,
  setConnection,
  toggleOverlay,
} from './store.js';

const params = new URLSearchParams(location.search);
const host = params.get('host') ?? '127.0.0.1:8750';
const envSeed = Number(params.get('env') ?? '3');
const resumeSession = params.get('session');

let view: ViewState = initialState();
let corrCounter = 0;

const canvas = document.getElementById('scene') as HTMLCanvasElement;
const ctx = canvas.getContext('2d')!;
const heatCanvas = document.createElement('canvas');
const input = document.getElementById('correction') as HTMLInputElement;
const sendBtn = document.getElementById('send') as HTMLButtonElement;
const resetBtn = document.getElementById('reset') as HTMLButtonElement;
const historyEl = document.getElementById('history') as HTMLUListElement;
const statusEl = document.getElementById('status') as HTMLDivElement;
const constraintsEl = document.getElementById('constraints') as HTMLDivElement;

const client = createClient(`ws://${host}/ws`, {
  onOpen() {
    view = setConnection(view, 'connected');
    if (resumeSession !== null) {
      client.send({ kind: 'hello', payload: { session_id: resumeSession } });
    } else {
      client.send({ kind: 'create_session', payload: { env_seed: envSeed, planner_seed: 1 } });
    }
  },
  onClose() {
    view = setConnection(view, 'disconnected');
    renderSidebar();
  },
  onMessage(msg) {
    view = applyMessage(view, msg, performance.now());
    if (msg.kind === 'cost_map_frame' && view.frame) {
      const img = colorizeCost(view.frame);
      heatCanvas.width = img.width;
      heatCanvas.height = img.height;
      const pixels = new Uint8ClampedArray(img.data);
      heatCanvas.getContext('2d')!.putImageData(
        new ImageData(pixels, img.width, img.height), 0, 0);
    }
    renderSidebar();
  },
});

function submit(): void {
  const text = input.value.trim();
  const sid = view.sessionId;
  if (!text || sid === null || !client.isOpen()) return;
  const corrId = `c${++corrCounter}`;
  view = addPendingCorrection(view, corrId, text);
  client.send({ kind: 'submit_correction', session_id: sid,
                payload: { text, corr_id: corrId } });
  input.value = '';
  renderSidebar();
}

sendBtn.addEventListener('click', submit);
input.addEventListener('keydown', (e) => {
  if (e.key === 'Enter') submit();
});
resetBtn.addEventListener('click', () => {
  if (view.sessionId) client.send({ kind: 'reset', session_id: view.sessionId, payload: {} });
});

for (const key of ['heatmap', 'mask', 'trajectory', 'objects'] as const) {
  const el = document.getElementById(`toggle-${key}`) as HTMLInputElement;
  el.checked = view.overlays[key];
  el.addEventListener('change', () => {
    view = toggleOverlay(view, key);
  });
}

function renderSidebar(): void {
  const connected = view.connection === 'connected';
  input.disabled = !connected || !view.sessionId;
  sendBtn.disabled = input.disabled;
  const audit = auditTicks(view);
  statusEl.textContent = [
    `conn: ${view.connection}`,
    view.sessionId ? `session: ${view.sessionId.slice(0, 8)}` : 'no session',
    view.latest ? `tick ${view.latest.tick} (${view.latest.status})` : 'waiting',
    `stream: ${audit.count} states, gaps ${audit.gaps}`,
  ].join('  |  ');
  constraintsEl.textContent = view.latest
    ? `constraints: ${view.latest.constraints}` +
      (view.latest.languageGoalActive ? '  |  language goal active' : '') +
      (view.latest.taskCostActive ? '  |  task cost active' : '')
    : '';
  historyEl.replaceChildren(
    ...view.corrections.map((c) => {
      const li = document.createElement('li');
      const badge = c.status === 'pending' ? '…'
        : c.status === 'constraint' ? 'CONSTRAINT'
        : c.status === 'goal' ? 'GOAL'
        : `ERROR: ${c.error}`;
      li.textContent = `${c.text} — ${badge}`;
      li.className = c.status;
      return li;
    }),
  );
}

function frame(): void {
  const ops = buildScene(view, performance.now());
  drawScene(ctx, view, ops, view.overlays.heatmap ? heatCanvas : null);
  requestAnimationFrame(frame);
}

client.connect();
view = setConnection(view, 'connecting');
renderSidebar();
requestAnimationFrame(frame);
