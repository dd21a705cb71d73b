// View model for the live anomaly table. The store is the single place
// client state lives: stream frames and API responses flow in, sorted rows
// flow out. Rows dedup by event id; triage is optimistic with server
// reconciliation.

import type { ApiClient } from './api.js';
import type { AnomalyEvent, EventStatus, TriageAction } from './types.js';
import { consumeStream } from './stream.js';

export type Listener = () => void;

function rowOrder(a: AnomalyEvent, b: AnomalyEvent): number {
  if (a.last_seen !== b.last_seen) return a.last_seen < b.last_seen ? 1 : -1;
  return b.event_id - a.event_id;
}

export class ConsoleStore {
  private events = new Map<number, AnomalyEvent>();
  private pending = new Map<number, EventStatus>(); // optimistic statuses
  private listeners = new Set<Listener>();
  private abort: AbortController | null = null;
  lastError: string | null = null;

  constructor(private readonly api: ApiClient) {}

  subscribe(listener: Listener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  /** Server event arrived (stream or fetch); server state always wins. */
  applyEvent(event: AnomalyEvent): void {
    this.events.set(event.event_id, event);
    const optimistic = this.pending.get(event.event_id);
    if (optimistic !== undefined && event.status !== 'new') {
      this.pending.delete(event.event_id); // reconciled
    }
    this.notify();
  }

  /** Rows for the table: newest activity first, optimistic status applied. */
  rows(): AnomalyEvent[] {
    const sorted = [...this.events.values()].sort(rowOrder);
    return sorted.map((event) => {
      const optimistic = this.pending.get(event.event_id);
      return optimistic ? { ...event, status: optimistic } : event;
    });
  }

  row(eventId: number): AnomalyEvent | undefined {
    const event = this.events.get(eventId);
    if (!event) return undefined;
    const optimistic = this.pending.get(eventId);
    return optimistic ? { ...event, status: optimistic } : event;
  }

  size(): number {
    return this.events.size;
  }

  maxEventId(): number {
    let max = 0;
    for (const id of this.events.keys()) if (id > max) max = id;
    return max;
  }

  /** Seed the table from the paged listing (initial load / reload). */
  async loadInitial(): Promise<void> {
    const page = await this.api.listAnomalies({ page_size: 500 });
    for (const event of page.events) this.events.set(event.event_id, event);
    this.notify();
  }

  /** One stream connection; new events appear without manual refresh. */
  startStream(onError?: (error: unknown) => void): void {
    if (this.abort) return;
    this.abort = new AbortController();
    void consumeStream({
      url: this.api.streamUrl(0),
      signal: this.abort.signal,
      onFrame: (frame) => {
        try {
          this.applyEvent(JSON.parse(frame.data) as AnomalyEvent);
        } catch {
          // a malformed frame must not kill the table
        }
      },
      onError: (error) => {
        this.lastError = String(error);
        this.notify();
        onError?.(error);
      },
    });
  }

  stopStream(): void {
    this.abort?.abort();
    this.abort = null;
  }

  /** Optimistic triage: row updates now, the server response reconciles. */
  async triage(eventId: number, action: TriageAction, actor: string, note?: string): Promise<void> {
    const target: Record<TriageAction, EventStatus> = {
      acknowledge: 'acknowledged',
      dismiss: 'dismissed',
      mark_benign: 'benign',
    };
    this.pending.set(eventId, target[action]);
    this.notify();
    try {
      const updated = await this.api.triage(eventId, action, actor, note);
      this.pending.delete(eventId);
      this.applyEvent(updated);
    } catch (error) {
      this.pending.delete(eventId); // roll back; server said no
      this.lastError = String(error);
      this.notify();
      throw error;
    }
  }
}
