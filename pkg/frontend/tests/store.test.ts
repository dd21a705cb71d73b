import { describe, expect, it, vi } from 'vitest';

import type { ApiClient } from '../src/api.js';
import { ConsoleStore } from '../src/store.js';
import type { AnomalyEvent } from '../src/types.js';

function event(id: number, overrides: Partial<AnomalyEvent> = {}): AnomalyEvent {
  return {
    event_id: id,
    rule_id: 'token_replay',
    attack_class: 'token_replay',
    severity: 'high',
    first_seen: '2024-05-01T00:00:00.000Z',
    last_seen: '2024-05-01T00:00:10.000Z',
    entities: { token: null, username: 'carol', session_id: null, source_ips: [], user_agents: [] },
    evidence: [[0, 'line']],
    dedup_key: `token_replay|user:carol|${id}`,
    status: 'new',
    ...overrides,
  };
}

function storeWith(api: Partial<ApiClient> = {}): ConsoleStore {
  return new ConsoleStore(api as ApiClient);
}

describe('ConsoleStore rows', () => {
  it('orders by last_seen desc then event_id desc (listing oracle order)', () => {
    const store = storeWith();
    store.applyEvent(event(1, { last_seen: '2024-05-01T00:00:05.000Z' }));
    store.applyEvent(event(2, { last_seen: '2024-05-01T00:00:09.000Z' }));
    store.applyEvent(event(3, { last_seen: '2024-05-01T00:00:09.000Z' }));
    const ids = store.rows().map((r) => r.event_id);
    expect(ids).toEqual([3, 2, 1]);
  });

  it('dedups by event id: re-delivery replaces the row', () => {
    const store = storeWith();
    store.applyEvent(event(1));
    store.applyEvent(event(1, { last_seen: '2024-05-01T00:00:20.000Z', status: 'acknowledged' }));
    expect(store.size()).toBe(1);
    expect(store.rows()[0]?.status).toBe('acknowledged');
    expect(store.rows()[0]?.last_seen).toBe('2024-05-01T00:00:20.000Z');
  });

  it('notifies subscribers on every applied event', () => {
    const store = storeWith();
    const seen: number[] = [];
    store.subscribe(() => seen.push(store.size()));
    store.applyEvent(event(1));
    store.applyEvent(event(2));
    expect(seen).toEqual([1, 2]);
  });
});

describe('optimistic triage', () => {
  it('applies the target status immediately, then reconciles', async () => {
    let resolveCall: (value: AnomalyEvent) => void = () => undefined;
    const api = {
      triage: vi.fn(
        () => new Promise<AnomalyEvent>((resolve) => (resolveCall = resolve)),
      ),
    };
    const store = storeWith(api);
    store.applyEvent(event(1));

    const done = store.triage(1, 'acknowledge', 'op1');
    expect(store.row(1)?.status).toBe('acknowledged'); // optimistic
    resolveCall(event(1, { status: 'acknowledged' }));
    await done;
    expect(store.row(1)?.status).toBe('acknowledged'); // server-confirmed
    expect(api.triage).toHaveBeenCalledWith(1, 'acknowledge', 'op1', undefined);
  });

  it('rolls back when the server rejects', async () => {
    const api = { triage: vi.fn(() => Promise.reject(new Error('conflict'))) };
    const store = storeWith(api);
    store.applyEvent(event(1));
    await expect(store.triage(1, 'dismiss', 'op1')).rejects.toThrow('conflict');
    expect(store.row(1)?.status).toBe('new'); // rolled back
  });

  it('stream delivery wins over stale optimism', () => {
    const store = storeWith();
    store.applyEvent(event(1));
    // a concurrent operator dismissed it server-side
    store.applyEvent(event(1, { status: 'dismissed' }));
    expect(store.row(1)?.status).toBe('dismissed');
  });
});

describe('initial load', () => {
  it('seeds rows from the paged listing', async () => {
    const api = {
      listAnomalies: vi.fn(() =>
        Promise.resolve({ events: [event(5), event(6)], page: 1, page_size: 500, total: 2 }),
      ),
    };
    const store = storeWith(api);
    await store.loadInitial();
    expect(store.size()).toBe(2);
    expect(store.maxEventId()).toBe(6);
  });
});
