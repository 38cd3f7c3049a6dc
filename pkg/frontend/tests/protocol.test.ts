import { describe, expect, it } from 'vitest';

import {
  DecodeError,
  MESSAGE_KINDS,
  decodeBase64,
  decodeMessage,
  encodeMessage,
  parseCostMapFrame,
  parseSessionState,
} from '../src/protocol.js';

describe('wire protocol', () => {
  it('round-trips every message kind', () => {
    for (const kind of MESSAGE_KINDS) {
      const msg = { kind, session_id: 's1', payload: { a: 1, b: [1, 2] } };
      const out = decodeMessage(encodeMessage(msg));
      expect(out.kind).toBe(kind);
      expect(out.session_id).toBe('s1');
      expect(out.payload).toEqual(msg.payload);
    }
  });

  it('ignores unknown extra fields (forward compatibility)', () => {
    const raw = JSON.stringify({ kind: 'hello', payload: {}, from_the_future: true });
    expect(decodeMessage(raw).kind).toBe('hello');
  });

  it('rejects malformed frames', () => {
    expect(() => decodeMessage('{oops')).toThrow(DecodeError);
    expect(() => decodeMessage(JSON.stringify({ payload: {} }))).toThrow(DecodeError);
    expect(() => decodeMessage(JSON.stringify({ kind: 'nope', payload: {} })))
      .toThrow(DecodeError);
  });

  it('parses session state payloads', () => {
    const state = parseSessionState({
      tick: 3, q: [10.5, 20.5], qdot: [1, 2], status: 'running',
      trajectory_tail: [[0, 0], [10.5, 20.5]], constraints: 2,
      language_goal_active: true, task_cost_active: false,
    });
    expect(state.tick).toBe(3);
    expect(state.q).toEqual([10.5, 20.5]);
    expect(state.trajectoryTail).toHaveLength(2);
    expect(state.languageGoalActive).toBe(true);
  });

  it('decodes base64 cost frames', () => {
    const bytes = new Uint8Array([0, 128, 255, 7]);
    const b64 = Buffer.from(bytes).toString('base64');
    expect(Array.from(decodeBase64(b64))).toEqual([0, 128, 255, 7]);
    const frame = parseCostMapFrame({
      tick: 1, shape: [2, 2], cost_b64: b64, mask_b64: b64,
      cost_min: 0, cost_max: 9000,
    });
    expect(frame.shape).toEqual([2, 2]);
    expect(frame.cost[2]).toBe(255);
    expect(frame.costMax).toBe(9000);
  });
});
