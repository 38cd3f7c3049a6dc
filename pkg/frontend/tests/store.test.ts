import { describe, expect, it } from 'vitest';

import { WireMessage } from '../src/protocol.js';
import {
  addPendingCorrection,
  applyMessage,
  auditTicks,
  initialState,
  stalenessMs,
} from '../src/store.js';
import { buildScene } from '../src/render.js';

function sessionMsg(): WireMessage {
  return {
    kind: 'create_session',
    session_id: 'sess-1',
    payload: {
      env_seed: 3, env_id: 'env-3', world: [2048, 2048], grid_resolution: 256,
      robot_radius: 10,
      objects: [{ name: 'spam can', color: '#123456', footprint: [100, 100, 300, 260] }],
      start: [50, 70], goal: [1800, 1700], max_steps: 500,
    },
  };
}

function stateMsg(tick: number, q: [number, number]): WireMessage {
  return {
    kind: 'session_state',
    session_id: 'sess-1',
    payload: {
      tick, q, qdot: [0, 0], status: 'running', trajectory_tail: [q],
      constraints: 0, language_goal_active: false, task_cost_active: true,
    },
  };
}

describe('view state store', () => {
  it('tracks session and latest state from server pushes only', () => {
    let v = initialState();
    v = applyMessage(v, sessionMsg(), 0);
    expect(v.sessionId).toBe('sess-1');
    expect(v.latest).toBeNull();
    v = applyMessage(v, stateMsg(1, [60, 80]), 100);
    expect(v.latest?.q).toEqual([60, 80]);
    expect(stalenessMs(v, 400)).toBe(300);
  });

  it('never renders a robot position without a server state', () => {
    let v = initialState();
    v = applyMessage(v, sessionMsg(), 0);
    const sceneBefore = buildScene(v, 0);
    const discBefore = sceneBefore.find((op) => op.op === 'disc');
    // before any state the disc sits at the announced start, not a prediction
    expect(discBefore).toMatchObject({ x: 50, y: 70 });
    v = applyMessage(v, stateMsg(5, [444, 555]), 0);
    const disc = buildScene(v, 0).find((op) => op.op === 'disc');
    expect(disc).toMatchObject({ x: 444, y: 555 });
  });

  it('keeps correction history in server ack order', () => {
    let v = initialState();
    v = applyMessage(v, sessionMsg(), 0);
    v = addPendingCorrection(v, 'c1', 'go slower');
    v = addPendingCorrection(v, 'c2', 'go above the spam can');
    // server resolves c2 first
    v = applyMessage(v, { kind: 'correction_ack', session_id: 'sess-1',
      payload: { corr_id: 'c2', classification: 'goal', applied_tick: 4 } }, 0);
    v = applyMessage(v, { kind: 'correction_ack', session_id: 'sess-1',
      payload: { corr_id: 'c1', classification: 'constraint', applied_tick: 5 } }, 0);
    const byId = Object.fromEntries(v.corrections.map((c) => [c.corrId, c]));
    expect(byId.c2.resolvedOrder).toBe(0);
    expect(byId.c1.resolvedOrder).toBe(1);
    expect(byId.c1.status).toBe('constraint');
    expect(byId.c2.status).toBe('goal');
  });

  it('records correction errors without touching other entries', () => {
    let v = initialState();
    v = addPendingCorrection(v, 'c1', 'flurb the wug');
    v = applyMessage(v, { kind: 'correction_error',
      payload: { corr_id: 'c1', error: 'no relation trigger' } }, 0);
    expect(v.corrections[0].status).toBe('error');
    expect(v.corrections[0].error).toContain('relation');
  });

  it('audits tick stamps for strict increase and gaps', () => {
    let v = initialState();
    v = applyMessage(v, sessionMsg(), 0);
    for (const t of [1, 2, 3, 4]) v = applyMessage(v, stateMsg(t, [0, 0]), t * 100);
    expect(auditTicks(v)).toEqual({ count: 4, strictlyIncreasing: true, gaps: 0 });
    v = applyMessage(v, stateMsg(6, [0, 0]), 700);
    const audit = auditTicks(v);
    expect(audit.strictlyIncreasing).toBe(true);
    expect(audit.gaps).toBe(1);
  });

  it('shows a staleness badge instead of extrapolating', () => {
    let v = initialState();
    v = applyMessage(v, sessionMsg(), 0);
    v = applyMessage(v, stateMsg(1, [60, 80]), 0);
    const ops = buildScene(v, 5000);
    const badge = ops.find((op) => op.op === 'badge');
    expect(badge).toBeDefined();
    const disc = ops.find((op) => op.op === 'disc');
    expect(disc).toMatchObject({ x: 60, y: 80 }); // last known, unchanged
  });

  it('surfaces episode end as a banner op', () => {
    let v = initialState();
    v = applyMessage(v, sessionMsg(), 0);
    v = applyMessage(v, { kind: 'episode_end', session_id: 'sess-1',
      payload: { status: 'success', ticks: 88, final_distance: 9.5 } }, 0);
    const badge = buildScene(v, 0).filter((op) => op.op === 'badge').pop();
    expect(badge && 'text' in badge && badge.text).toContain('success');
  });
});
