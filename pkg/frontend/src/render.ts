// HTML renderers: pure string builders over UiState, testable without a DOM.

import {
  DiffLine,
  LsChip,
  RoundPpa,
  UiState,
  diffLines,
  ppaHistory,
  roleLabel,
} from "./model.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

const STATUS_CLASS: Record<string, string> = {
  pending: "task-pending",
  generating: "task-generating",
  done: "task-done",
  failed: "task-failed",
};

export function renderBanner(state: UiState): string {
  const parts: string[] = [];
  if (state.banner !== null) {
    parts.push(`<div class="banner error">${escapeHtml(state.banner)} <button id="retry">retry</button></div>`);
  }
  if (state.stale) {
    parts.push(`<div class="banner stale">showing stale data</div>`);
  }
  return parts.join("");
}

export function renderTree(state: UiState): string {
  const items = state.session.tasks
    .map((task) => {
      const cls = STATUS_CLASS[task.status] ?? "task-pending";
      const selected = task.module_name === state.selectedModule ? " selected" : "";
      const origin = state.session.provenance[task.module_name];
      const badge = origin ? ` <span class="origin">${escapeHtml(origin)}</span>` : "";
      return (
        `<li class="${cls}${selected}" data-module="${escapeHtml(task.module_name)}">` +
        `<span class="dot"></span>${escapeHtml(task.module_name)}` +
        ` <span class="status">${escapeHtml(task.status)}</span>${badge}</li>`
      );
    })
    .join("");
  return `<ul class="tree">${items}</ul>`;
}

function renderDiff(lines: DiffLine[]): string {
  return lines
    .map((line) => {
      const cls = line.kind === "add" ? "line add" : line.kind === "del" ? "line del" : "line";
      const marker = line.kind === "add" ? "+" : line.kind === "del" ? "-" : " ";
      return `<span class="${cls}">${marker} ${escapeHtml(line.text)}</span>`;
    })
    .join("\n");
}

export function renderSketchPane(state: UiState): string {
  const module = state.selectedModule;
  if (module === null) {
    return `<div class="sketch empty">no module selected</div>`;
  }
  const sketch = state.sketches[module];
  if (sketch === undefined) {
    return `<div class="sketch loading">loading ${escapeHtml(module)}...</div>`;
  }
  const header = `<div class="sketch-head">${escapeHtml(module)} <span class="rev">rev ${sketch.revision}</span></div>`;
  if (sketch.source !== null && sketch.source !== undefined) {
    return `${header}<pre class="sketch source">${escapeHtml(sketch.source)}</pre>`;
  }
  const previous = state.previousSketchText[module];
  if (previous !== undefined && previous !== sketch.text) {
    return `${header}<pre class="sketch diff">${renderDiff(diffLines(previous, sketch.text))}</pre>`;
  }
  return `${header}<pre class="sketch">${escapeHtml(sketch.text)}</pre>`;
}

export function renderLsChips(chips: LsChip[] | null): string {
  if (chips === null) return "";
  const rendered = chips
    .map((chip) => `<span class="chip role-${escapeHtml(chip.role)}">${escapeHtml(chip.text)}/${escapeHtml(roleLabel(chip.role))}</span>`)
    .join(" ");
  return `<div class="ls-tree">${rendered}</div>`;
}

function polyline(values: number[], width: number, height: number): string {
  if (values.length === 0) return "";
  const max = Math.max(...values, 1e-9);
  const step = values.length > 1 ? width / (values.length - 1) : 0;
  const points = values
    .map((v, i) => `${(i * step).toFixed(1)},${(height - (v / max) * (height - 4) - 2).toFixed(1)}`)
    .join(" ");
  return `<polyline fill="none" stroke-width="1.5" points="${points}" />`;
}

export function renderPpaChart(history: RoundPpa[]): string {
  if (history.length === 0) {
    return `<div class="ppa empty">no evaluated rounds yet</div>`;
  }
  const width = 220;
  const height = 64;
  const series: Array<[string, number[]]> = [
    ["power (mW)", history.map((h) => h.power_mw)],
    ["clock (ns)", history.map((h) => h.clock_ns)],
    ["area (um2)", history.map((h) => h.area_um2)],
  ];
  const charts = series
    .map(
      ([label, values]) =>
        `<figure class="ppa-series"><svg viewBox="0 0 ${width} ${height}" width="${width}" height="${height}">` +
        `${polyline(values, width, height)}</svg>` +
        `<figcaption>${escapeHtml(label)}: ${values.map((v) => String(v)).join(" → ")}</figcaption></figure>`,
    )
    .join("");
  return `<div class="ppa"><div class="ppa-label">PPA per round (proxy estimates)</div>${charts}</div>`;
}

export function renderEditBox(state: UiState): string {
  const disabled = state.inputDisabled ? " disabled" : "";
  const error = state.editError !== null ? `<div class="edit-error">${escapeHtml(state.editError)}</div>` : "";
  const hint = state.inputDisabled
    ? `<div class="edit-hint">edits are only accepted while the session awaits approval</div>`
    : "";
  return (
    `<div class="edit-box">` +
    `<input id="command" type="text" placeholder="add an instance MUX_1 of module mux_4 within GPE_4"` +
    ` value="${escapeHtml(state.pendingCommand)}"${disabled} />` +
    `<button id="submit-edit"${disabled}>apply</button>` +
    `<button id="approve"${disabled}>approve & generate</button>` +
    `${error}${hint}${renderLsChips(state.lsTree)}</div>`
  );
}

export function renderApp(state: UiState): string {
  return (
    `${renderBanner(state)}` +
    `<header><h1>${escapeHtml(state.session.design)}</h1>` +
    `<span class="session-status status-${escapeHtml(state.session.status)}">${escapeHtml(state.session.status)}</span>` +
    `<span class="rev">revision ${state.session.revision}</span></header>` +
    `<main><section class="left">${renderTree(state)}${renderPpaChart(ppaHistory(state))}</section>` +
    `<section class="right">${renderEditBox(state)}${renderSketchPane(state)}</section></main>`
  );
}
