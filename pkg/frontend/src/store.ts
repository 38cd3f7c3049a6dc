// Single state store. Every render reads from here, and the only writers are
// server messages and explicit user actions: the console never simulates or
// extrapolates robot state on its own.

import {
  CostMapFrame,
  SessionInfo,
  SessionState,
  WireMessage,
  parseCostMapFrame,
  parseSessionInfo,
  parseSessionState,
} from './protocol.js';

export type ConnectionStatus = 'disconnected' | 'connecting' | 'connected';

export interface CorrectionEntry {
  corrId: string;
  text: string;
  status: 'pending' | 'constraint' | 'goal' | 'error';
  error?: string;
  appliedTick?: number;
  resolvedOrder?: number;
}

export interface OverlayToggles {
  heatmap: boolean;
  mask: boolean;
  trajectory: boolean;
  objects: boolean;
}

export interface EpisodeEnd {
  status: string;
  ticks: number;
  finalDistance: number;
}

export interface ViewState {
  connection: ConnectionStatus;
  serverRateHz: number | null;
  sessionId: string | null;
  session: SessionInfo | null;
  latest: SessionState | null;
  lastStateAtMs: number | null;
  frame: CostMapFrame | null;
  corrections: CorrectionEntry[];
  tickAudit: number[];
  episodeEnd: EpisodeEnd | null;
  overlays: OverlayToggles;
  resolvedCount: number;
  protocolErrors: string[];
}

export function initialState(): ViewState {
  return {
    connection: 'disconnected',
    serverRateHz: null,
    sessionId: null,
    session: null,
    latest: null,
    lastStateAtMs: null,
    frame: null,
    corrections: [],
    tickAudit: [],
    episodeEnd: null,
    overlays: { heatmap: true, mask: true, trajectory: true, objects: true },
    resolvedCount: 0,
    protocolErrors: [],
  };
}

const AUDIT_LIMIT = 2000;

export function applyMessage(state: ViewState, msg: WireMessage, nowMs: number): ViewState {
  switch (msg.kind) {
    case 'hello': {
      const rate = msg.payload.rate_hz;
      return { ...state, serverRateHz: typeof rate === 'number' ? rate : null };
    }
    case 'create_session':
      return {
        ...state,
        sessionId: msg.session_id ?? null,
        session: parseSessionInfo(msg.payload),
        latest: null,
        frame: null,
        tickAudit: [],
        episodeEnd: null,
      };
    case 'session_state': {
      const latest = parseSessionState(msg.payload);
      const tickAudit = state.tickAudit.length >= AUDIT_LIMIT
        ? [...state.tickAudit.slice(-AUDIT_LIMIT / 2), latest.tick]
        : [...state.tickAudit, latest.tick];
      return { ...state, latest, lastStateAtMs: nowMs, tickAudit };
    }
    case 'cost_map_frame':
      return { ...state, frame: parseCostMapFrame(msg.payload) };
    case 'correction_ack': {
      const corrId = String(msg.payload.corr_id ?? '');
      const classification = String(msg.payload.classification ?? '');
      const applied = Number(msg.payload.applied_tick);
      return resolveCorrection(state, corrId, (e) => ({
        ...e,
        status: classification === 'constraint' ? 'constraint' : 'goal',
        appliedTick: Number.isFinite(applied) ? applied : undefined,
      }));
    }
    case 'correction_error': {
      const corrId = String(msg.payload.corr_id ?? '');
      const error = String(msg.payload.error ?? 'unknown error');
      if (!corrId) {
        return { ...state, protocolErrors: [...state.protocolErrors, error] };
      }
      return resolveCorrection(state, corrId, (e) => ({ ...e, status: 'error', error }));
    }
    case 'episode_end':
      return {
        ...state,
        episodeEnd: {
          status: String(msg.payload.status),
          ticks: Number(msg.payload.ticks),
          finalDistance: Number(msg.payload.final_distance),
        },
      };
    default:
      return state;
  }
}

function resolveCorrection(
  state: ViewState,
  corrId: string,
  update: (e: CorrectionEntry) => CorrectionEntry,
): ViewState {
  const order = state.resolvedCount;
  let found = false;
  const corrections = state.corrections.map((e) => {
    if (e.corrId !== corrId || e.status !== 'pending') return e;
    found = true;
    return { ...update(e), resolvedOrder: order };
  });
  return found
    ? { ...state, corrections, resolvedCount: order + 1 }
    : state;
}

export function addPendingCorrection(state: ViewState, corrId: string, text: string): ViewState {
  return {
    ...state,
    corrections: [...state.corrections, { corrId, text, status: 'pending' }],
  };
}

export function setConnection(state: ViewState, connection: ConnectionStatus): ViewState {
  return { ...state, connection };
}

export function toggleOverlay(state: ViewState, key: keyof OverlayToggles): ViewState {
  return { ...state, overlays: { ...state.overlays, [key]: !state.overlays[key] } };
}

/** Milliseconds since the last server state, for the staleness badge. */
export function stalenessMs(state: ViewState, nowMs: number): number | null {
  return state.lastStateAtMs === null ? null : nowMs - state.lastStateAtMs;
}

export interface TickAuditReport {
  count: number;
  strictlyIncreasing: boolean;
  gaps: number;
}

/** Audit of received tick stamps: rendering never invents interpolated ticks,
 * so the stream itself must be strictly increasing and gap-free. */
export function auditTicks(state: ViewState): TickAuditReport {
  const t = state.tickAudit;
  let increasing = true;
  let gaps = 0;
  for (let i = 1; i < t.length; i++) {
    if (t[i] <= t[i - 1]) increasing = false;
    if (t[i] !== t[i - 1] + 1) gaps++;
  }
  return { count: t.length, strictlyIncreasing: increasing, gaps };
}
