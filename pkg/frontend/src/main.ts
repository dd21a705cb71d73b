// Bootstrap: config from query/localStorage, one stream, periodic summary.

import { ApiClient } from './api.js';
import { ConsoleStore } from './store.js';
import { renderDetail, renderDrillPanel, renderRules, renderTable } from './view.js';

function config() {
  const params = new URLSearchParams(window.location.search);
  const baseUrl = params.get('api') ?? localStorage.getItem('idsentinel.api') ?? window.location.origin;
  const token = params.get('token') ?? localStorage.getItem('idsentinel.token') ?? '';
  localStorage.setItem('idsentinel.api', baseUrl);
  if (token) localStorage.setItem('idsentinel.token', token);
  return { baseUrl, token };
}

async function boot(): Promise<void> {
  const api = new ApiClient(config());
  const store = new ConsoleStore(api);
  const actor = 'console-operator';

  const tableHost = document.getElementById('table')!;
  const detailHost = document.getElementById('detail')!;
  const rulesHost = document.getElementById('rules')!;
  const drillHost = document.getElementById('drill')!;
  const summaryHost = document.getElementById('summary')!;
  const statusHost = document.getElementById('status')!;

  const openDetail = (eventId: number) => {
    void api.getAnomaly(eventId).then((detail) => renderDetail(detailHost, detail, store, actor));
  };

  store.subscribe(() => renderTable(tableHost, store, openDetail));

  const refreshRules = () => {
    void api.listRules().then((rules) => renderRules(rulesHost, rules, api, refreshRules));
  };
  refreshRules();

  void api.listScenarios().then((scenarios) =>
    renderDrillPanel(drillHost, scenarios, api, (text) => {
      statusHost.textContent = text;
    }),
  );

  const refreshSummary = () => {
    void api
      .getSituation()
      .then((situation) => {
        const classes = Object.entries(situation.events.by_class)
          .map(([cls, count]) => `${cls}: ${count}`)
          .join('  ');
        summaryHost.textContent =
          `events: ${situation.events.total}  ${classes}  | parsed: ${situation.counters.lines_parsed}` +
          `  malformed: ${situation.malformed_lines}`;
      })
      .catch(() => {
        summaryHost.textContent = 'situational API unreachable';
      });
  };
  refreshSummary();
  setInterval(refreshSummary, 3000);

  await store.loadInitial();
  store.startStream();
}

void boot();
