// DOM rendering. Pure functions of store state; all mutations go through
// the ApiClient/ConsoleStore, never directly to the server.

import type { ApiClient } from './api.js';
import type { ConsoleStore } from './store.js';
import type { AnomalyDetail, Rule, ScenarioInfo } from './types.js';

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderTable(
  container: HTMLElement,
  store: ConsoleStore,
  onSelect: (eventId: number) => void,
): void {
  container.replaceChildren();
  const rows = store.rows();
  if (rows.length === 0) {
    container.append(el('p', { class: 'empty' }, 'No anomalies yet. The table updates live.'));
    return;
  }
  const table = el('table', { class: 'anomalies' });
  const head = el('tr');
  for (const title of ['id', 'class', 'severity', 'status', 'entities', 'first seen', 'last seen', '']) {
    head.append(el('th', {}, title));
  }
  table.append(head);
  for (const row of rows) {
    const tr = el('tr', { class: `sev-${row.severity} status-${row.status}` });
    const entities = [
      row.entities.username ?? '',
      ...row.entities.source_ips,
    ].filter(Boolean).join(' ');
    tr.append(el('td', {}, String(row.event_id)));
    tr.append(el('td', {}, row.attack_class));
    tr.append(el('td', {}, row.severity));
    tr.append(el('td', {}, row.status));
    tr.append(el('td', {}, entities));
    tr.append(el('td', {}, row.first_seen));
    tr.append(el('td', {}, row.last_seen));
    const open = el('button', {}, 'open');
    open.addEventListener('click', () => onSelect(row.event_id));
    const actions = el('td');
    actions.append(open);
    tr.append(actions);
    table.append(tr);
  }
  container.append(table);
}

export function renderDetail(
  container: HTMLElement,
  detail: AnomalyDetail,
  store: ConsoleStore,
  actor: string,
): void {
  container.replaceChildren();
  container.append(el('h3', {}, `#${detail.event_id} ${detail.attack_class} (${detail.severity})`));
  container.append(el('p', {}, `status: ${detail.status} | rule: ${detail.rule_id} | key: ${detail.dedup_key}`));

  const triage = el('div', { class: 'triage' });
  for (const action of ['acknowledge', 'dismiss', 'mark_benign'] as const) {
    const button = el('button', {}, action.replace('_', ' '));
    button.disabled = detail.status !== 'new';
    button.addEventListener('click', () => {
      void store.triage(detail.event_id, action, actor);
    });
    triage.append(button);
  }
  container.append(triage);

  if (detail.projection) {
    const p = detail.projection;
    const block = el('div', { class: 'projection' });
    block.append(el('h4', {}, 'blast radius'));
    block.append(el('p', {}, `principals: ${p.compromised_principals.join(', ')}`));
    block.append(el('p', {}, `systems: ${p.reachable_systems.join(', ') || 'none'}`));
    block.append(el('p', {}, `zones: ${p.zones.join(', ') || 'none'}`));
    if (p.severity_uplift) block.append(el('p', { class: 'uplift' }, `uplift: ${p.severity_uplift}`));
    container.append(block);
  }

  const evidence = el('div', { class: 'evidence' });
  evidence.append(el('h4', {}, `evidence (${detail.evidence.length} lines)`));
  for (const [offset, line] of detail.evidence) {
    // verbatim log line, monospace; only display tokenization, no re-parsing
    const pre = el('pre', { class: 'logline' });
    pre.textContent = `@${offset}  ${line}`;
    evidence.append(pre);
  }
  container.append(evidence);
}

export function renderRules(container: HTMLElement, rules: Rule[], api: ApiClient, refresh: () => void): void {
  container.replaceChildren();
  const table = el('table', { class: 'rules' });
  const head = el('tr');
  for (const title of ['rule', 'class', 'threshold', 'window (s)', 'enabled', '']) {
    head.append(el('th', {}, title));
  }
  table.append(head);
  for (const rule of rules) {
    const tr = el('tr');
    tr.append(el('td', {}, rule.rule_id));
    tr.append(el('td', {}, rule.attack_class));
    const threshold = el('input', { type: 'number', min: '1', value: String(rule.threshold) });
    const window = el('input', { type: 'number', min: '1', value: String(rule.window_seconds) });
    const enabled = el('input', { type: 'checkbox' });
    enabled.checked = rule.enabled;
    const save = el('button', {}, 'apply');
    save.addEventListener('click', () => {
      void api
        .patchRule(rule.rule_id, {
          threshold: Number(threshold.value),
          window_seconds: Number(window.value),
          enabled: enabled.checked,
        })
        .then(refresh);
    });
    for (const input of [threshold, window, enabled]) {
      const td = el('td');
      td.append(input);
      tr.append(td);
    }
    const td = el('td');
    td.append(save);
    tr.append(td);
    table.append(tr);
  }
  container.append(table);
}

export function renderDrillPanel(
  container: HTMLElement,
  scenarios: ScenarioInfo[],
  api: ApiClient,
  onStatus: (text: string) => void,
): void {
  container.replaceChildren();
  const select = el('select');
  for (const s of scenarios) {
    select.append(el('option', { value: s.name }, `${s.name} — ${s.description}`));
  }
  const seed = el('input', { type: 'number', value: '42' });
  const launch = el('button', {}, 'launch drill');
  launch.addEventListener('click', () => {
    const name = select.value;
    onStatus(`launching ${name}...`);
    void api
      .launchDrill(name, Number(seed.value))
      .then(async (handle) => {
        for (;;) {
          const status = await api.runStatus(handle.run_id);
          if (status.status !== 'running') {
            onStatus(
              status.status === 'done'
                ? `${name} done: ${status.report?.request_count} requests`
                : `${name} failed: ${status.error}`,
            );
            return;
          }
          await new Promise((resolve) => setTimeout(resolve, 250));
        }
      })
      .catch((error) => onStatus(`drill rejected: ${error}`));
  });
  container.append(select, seed, launch);
}
