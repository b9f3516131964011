// Pure session-state core: the rendered model is a function of the last
// full snapshot plus the ordered events applied since. No fetches, no DOM.

export interface TaskView {
  module_name: string;
  status: string;
}

export interface RoundPpa {
  power_mw: number;
  clock_ns: number;
  area_um2: number;
  passed: boolean;
}

export interface RoundView {
  config: unknown;
  ppa: RoundPpa | null;
  conflicts: string[];
}

export interface TokenUsageView {
  prompt_tokens?: number;
  completion_tokens?: number;
  total_tokens?: number;
}

export interface SessionView {
  id: string;
  mode: string;
  design: string;
  status: string;
  failure_stage: string | null;
  revision: number;
  tasks: TaskView[];
  rounds: RoundView[];
  usage: TokenUsageView;
  provenance: Record<string, string>;
}

export interface SketchView {
  module: string;
  revision: number;
  text: string;
  source: string | null;
  body_state?: string;
}

export interface UiEvent {
  kind: string; // task | revision | round | status
  seq: number;
  module?: string;
  status?: string;
  origin?: string;
  revision?: number;
  round?: RoundView;
}

export interface LsChip {
  text: string;
  role: string;
}

export interface DiffLine {
  kind: "same" | "add" | "del";
  text: string;
}

export interface UiState {
  session: SessionView;
  selectedModule: string | null;
  pendingCommand: string;
  sketches: Record<string, SketchView>;
  previousSketchText: Record<string, string>;
  lastSeq: number;
  lsTree: LsChip[] | null;
  editError: string | null;
  banner: string | null;
  stale: boolean;
  inputDisabled: boolean;
}

export function initialState(session: SessionView): UiState {
  return {
    session,
    selectedModule: session.tasks.length > 0 ? session.tasks[0].module_name : null,
    pendingCommand: "",
    sketches: {},
    previousSketchText: {},
    lastSeq: -1,
    lsTree: null,
    editError: null,
    banner: null,
    stale: false,
    inputDisabled: false,
  };
}

function withSession(state: UiState, session: SessionView): UiState {
  return { ...state, session };
}

// Applies one stream event; duplicates (by seq, or a revision that does not
// advance) are ignored with a console warning so replays stay idempotent.
export function applyEvent(state: UiState, event: UiEvent): UiState {
  if (event.seq <= state.lastSeq) {
    console.warn(`ignoring duplicate event seq=${event.seq}`);
    return state;
  }
  const next = { ...state, lastSeq: event.seq };
  const session = next.session;
  switch (event.kind) {
    case "task": {
      const tasks = session.tasks.map((t) =>
        t.module_name === event.module ? { ...t, status: event.status ?? t.status } : t,
      );
      if (event.module && !tasks.some((t) => t.module_name === event.module)) {
        tasks.push({ module_name: event.module, status: event.status ?? "pending" });
      }
      const provenance =
        event.module && event.origin
          ? { ...session.provenance, [event.module]: event.origin }
          : session.provenance;
      return withSession(next, { ...session, tasks, provenance });
    }
    case "revision": {
      const revision = event.revision ?? session.revision;
      if (revision <= session.revision && session.revision !== 0) {
        console.warn(`ignoring duplicate revision event ${revision}`);
        return state;
      }
      return withSession(next, { ...session, revision });
    }
    case "round": {
      if (!event.round) return next;
      return withSession(next, { ...session, rounds: [...session.rounds, event.round] });
    }
    case "status": {
      return withSession(next, { ...session, status: event.status ?? session.status });
    }
    default:
      return next;
  }
}

export function applyEvents(state: UiState, events: UiEvent[]): UiState {
  let current = state;
  for (const event of events) {
    current = applyEvent(current, event);
  }
  return current;
}

export function selectModule(state: UiState, module: string): UiState {
  return { ...state, selectedModule: module };
}

// Stores a freshly fetched sketch, keeping the previous revision's text so
// the pane can highlight what the latest edit changed.
export function setSketch(state: UiState, sketch: SketchView): UiState {
  const previous = state.sketches[sketch.module];
  const previousText = { ...state.previousSketchText };
  if (previous !== undefined && previous.revision !== sketch.revision) {
    previousText[sketch.module] = previous.text;
  }
  return {
    ...state,
    sketches: { ...state.sketches, [sketch.module]: sketch },
    previousSketchText: previousText,
  };
}

export function ppaHistory(state: UiState): RoundPpa[] {
  return state.session.rounds.flatMap((r) => (r.ppa ? [r.ppa] : []));
}

// Minimal line diff: common prefix/suffix kept, the middle marked del/add.
// Enough to highlight sketch edits, which are line insertions/removals.
export function diffLines(before: string, after: string): DiffLine[] {
  const a = before.length > 0 ? before.split("\n") : [];
  const b = after.length > 0 ? after.split("\n") : [];
  let prefix = 0;
  while (prefix < a.length && prefix < b.length && a[prefix] === b[prefix]) prefix += 1;
  let suffix = 0;
  while (
    suffix < a.length - prefix &&
    suffix < b.length - prefix &&
    a[a.length - 1 - suffix] === b[b.length - 1 - suffix]
  ) {
    suffix += 1;
  }
  const out: DiffLine[] = [];
  for (let i = 0; i < prefix; i += 1) out.push({ kind: "same", text: a[i] });
  for (let i = prefix; i < a.length - suffix; i += 1) out.push({ kind: "del", text: a[i] });
  for (let i = prefix; i < b.length - suffix; i += 1) out.push({ kind: "add", text: b[i] });
  for (let i = b.length - suffix; i < b.length; i += 1) out.push({ kind: "same", text: b[i] });
  return out;
}

const ROLE_LABELS: Record<string, string> = {
  root_verb: "root",
  dobj: "dobj",
  np_modifier: "NP",
  prep: "prep",
  pobj: "pobj",
  det: "det",
  other: "mod",
};

export function roleLabel(role: string): string {
  return ROLE_LABELS[role] ?? role;
}

export function isTerminal(status: string): boolean {
  return status === "succeeded" || status === "failed";
}
