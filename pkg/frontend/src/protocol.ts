// Wire protocol: one JSON message per websocket text frame.
// Mirrors the server schema; unknown extra fields are ignored so newer
// servers keep working with this client.

export const MESSAGE_KINDS = [
  'hello',
  'create_session',
  'session_state',
  'submit_correction',
  'correction_ack',
  'correction_error',
  'cost_map_frame',
  'episode_end',
  'reset',
] as const;

export type MessageKind = (typeof MESSAGE_KINDS)[number];

export interface WireMessage {
  kind: MessageKind;
  session_id?: string;
  payload: Record<string, unknown>;
}

export interface SessionInfo {
  envSeed: number;
  envId: string;
  world: [number, number];
  gridResolution: number;
  robotRadius: number;
  objects: { name: string; color: string; footprint: [number, number, number, number] }[];
  start: [number, number];
  goal: [number, number];
  maxSteps: number;
}

export interface SessionState {
  tick: number;
  q: [number, number];
  qdot: [number, number];
  status: 'running' | 'success' | 'failure';
  trajectoryTail: [number, number][];
  constraints: number;
  languageGoalActive: boolean;
  taskCostActive: boolean;
}

export interface CostMapFrame {
  tick: number;
  shape: [number, number];
  cost: Uint8Array;
  mask: Uint8Array;
  costMin: number;
  costMax: number;
}

export class DecodeError extends Error {}

export function decodeMessage(raw: string): WireMessage {
  let body: unknown;
  try {
    body = JSON.parse(raw);
  } catch (e) {
    throw new DecodeError(`malformed frame: ${String(e)}`);
  }
  if (typeof body !== 'object' || body === null || !('kind' in body)) {
    throw new DecodeError('frame has no kind');
  }
  const kind = (body as { kind: unknown }).kind;
  if (typeof kind !== 'string' || !(MESSAGE_KINDS as readonly string[]).includes(kind)) {
    throw new DecodeError(`unknown message kind ${String(kind)}`);
  }
  const sessionId = (body as { session_id?: unknown }).session_id;
  const payload = (body as { payload?: unknown }).payload ?? {};
  if (typeof payload !== 'object' || payload === null) {
    throw new DecodeError('payload must be an object');
  }
  return {
    kind: kind as MessageKind,
    session_id: typeof sessionId === 'string' ? sessionId : undefined,
    payload: payload as Record<string, unknown>,
  };
}

export function encodeMessage(msg: WireMessage): string {
  const body: Record<string, unknown> = { kind: msg.kind, payload: msg.payload };
  if (msg.session_id !== undefined) body.session_id = msg.session_id;
  return JSON.stringify(body);
}

function asPair(v: unknown): [number, number] {
  const a = v as [number, number];
  return [Number(a[0]), Number(a[1])];
}

export function parseSessionInfo(payload: Record<string, unknown>): SessionInfo {
  return {
    envSeed: Number(payload.env_seed),
    envId: String(payload.env_id),
    world: asPair(payload.world),
    gridResolution: Number(payload.grid_resolution),
    robotRadius: Number(payload.robot_radius),
    objects: (payload.objects as SessionInfo['objects']) ?? [],
    start: asPair(payload.start),
    goal: asPair(payload.goal),
    maxSteps: Number(payload.max_steps),
  };
}

export function parseSessionState(payload: Record<string, unknown>): SessionState {
  return {
    tick: Number(payload.tick),
    q: asPair(payload.q),
    qdot: asPair(payload.qdot),
    status: payload.status as SessionState['status'],
    trajectoryTail: ((payload.trajectory_tail as [number, number][]) ?? []).map(asPair),
    constraints: Number(payload.constraints),
    languageGoalActive: Boolean(payload.language_goal_active),
    taskCostActive: Boolean(payload.task_cost_active),
  };
}

export function decodeBase64(b64: string): Uint8Array {
  if (typeof atob === 'function') {
    const bin = atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  // Node (tests)
  return new Uint8Array(Buffer.from(b64, 'base64'));
}

export function parseCostMapFrame(payload: Record<string, unknown>): CostMapFrame {
  const shape = asPair(payload.shape);
  return {
    tick: Number(payload.tick),
    shape,
    cost: decodeBase64(String(payload.cost_b64)),
    mask: decodeBase64(String(payload.mask_b64)),
    costMin: Number(payload.cost_min),
    costMax: Number(payload.cost_max),
  };
}
