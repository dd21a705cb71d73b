// JSON shapes served by the situational API.

export interface Entities {
  token: string | null;
  username: string | null;
  session_id: string | null;
  source_ips: string[];
  user_agents: string[];
}

export type EventStatus = 'new' | 'acknowledged' | 'dismissed' | 'benign';

export interface AnomalyEvent {
  event_id: number;
  rule_id: string;
  attack_class: string;
  severity: 'low' | 'medium' | 'high';
  first_seen: string;
  last_seen: string;
  entities: Entities;
  evidence: [number, string][]; // [log byte offset, verbatim line]
  dedup_key: string;
  status: EventStatus;
}

export interface AnomalyDetail extends AnomalyEvent {
  projection: Projection | null;
}

export interface Projection {
  compromised_principals: string[];
  reachable_systems: string[];
  zones: string[];
  severity_uplift: string | null;
}

export interface Rule {
  rule_id: string;
  attack_class: string;
  description: string;
  threshold: number;
  window_seconds: number;
  severity: string;
  enabled: boolean;
}

export interface Situation {
  events: {
    total: number;
    by_class: Record<string, number>;
    by_severity: Record<string, number>;
    by_status: Record<string, number>;
  };
  counters: Record<string, number>;
  malformed_lines: number;
  last_offset: number;
}

export interface AnomalyPage {
  events: AnomalyEvent[];
  page: number;
  page_size: number;
  total: number;
}

export interface ScenarioInfo {
  name: string;
  description: string;
}

export interface RunHandle {
  run_id: string;
  status: 'running' | 'done' | 'error';
  report?: { request_count: number; log_span: [number, number] };
  error?: string;
}

export type TriageAction = 'acknowledge' | 'dismiss' | 'mark_benign';
