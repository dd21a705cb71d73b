// Thin fetch client for the situational API. Every console action maps to
// exactly one documented endpoint; the console never mutates state any
// other way.

import type {
  AnomalyDetail,
  AnomalyEvent,
  AnomalyPage,
  Projection,
  Rule,
  RunHandle,
  ScenarioInfo,
  Situation,
  TriageAction,
} from './types.js';

export interface ApiConfig {
  baseUrl: string;
  token: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(private readonly config: ApiConfig) {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {
      Authorization: `Bearer ${this.config.token}`,
    };
    if (body !== undefined) headers['Content-Type'] = 'application/json';
    const resp = await fetch(`${this.config.baseUrl}${path}`, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await resp.text();
    const payload = text ? JSON.parse(text) : null;
    if (!resp.ok) {
      throw new ApiError(resp.status, payload?.code ?? 'error', payload?.message ?? resp.statusText);
    }
    return payload as T;
  }

  listAnomalies(params: Record<string, string | number> = {}): Promise<AnomalyPage> {
    const query = new URLSearchParams(
      Object.entries(params).map(([k, v]) => [k, String(v)]),
    ).toString();
    return this.call('GET', `/anomalies${query ? `?${query}` : ''}`);
  }

  getAnomaly(eventId: number): Promise<AnomalyDetail> {
    return this.call('GET', `/anomalies/${eventId}`);
  }

  triage(eventId: number, action: TriageAction, actor: string, note?: string): Promise<AnomalyEvent> {
    return this.call('POST', `/anomalies/${eventId}/triage`, { action, actor, note });
  }

  getSituation(): Promise<Situation> {
    return this.call('GET', '/situation');
  }

  getProjection(eventId: number): Promise<Projection> {
    return this.call('GET', `/projection/${eventId}`);
  }

  listRules(): Promise<Rule[]> {
    return this.call('GET', '/rules');
  }

  patchRule(ruleId: string, patch: Partial<Pick<Rule, 'threshold' | 'window_seconds' | 'enabled'>>): Promise<Rule> {
    return this.call('PATCH', `/rules/${ruleId}`, patch);
  }

  listScenarios(): Promise<ScenarioInfo[]> {
    return this.call('GET', '/scenarios');
  }

  launchDrill(name: string, seed: number): Promise<RunHandle> {
    return this.call('POST', `/scenarios/${name}:run`, { seed });
  }

  runStatus(runId: string): Promise<RunHandle> {
    return this.call('GET', `/scenarios/runs/${runId}`);
  }

  streamUrl(sinceEventId: number): string {
    const params = new URLSearchParams({
      since: String(sinceEventId),
      token: this.config.token,
    });
    return `${this.config.baseUrl}/events/stream?${params}`;
  }
}
